use crate::data::Image;

pub const FLIP_PROBABILITY: f64 = 0.5;
pub const MAX_ROTATION_DEG: f64 = 2.0;

/// One draw of the training-time image jitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augmentation {
    pub flip: bool,
    pub rotation_deg: f64,
}

impl Augmentation {
    pub const NONE: Augmentation = Augmentation { flip: false, rotation_deg: 0.0 };

    pub fn draw(rng: &mut impl rand::Rng) -> Self {
        let flip = rng.random_bool(FLIP_PROBABILITY);
        let rotation_deg = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
        Augmentation { flip, rotation_deg }
    }

    /// Mirrors (negating the steering label) and then rotates; speed and command are untouched.
    pub fn apply(&self, image: &Image, steering_deg: f64) -> (Image, f64) {
        let (img, steer) = if self.flip { (image.flip_horizontal(), -steering_deg) } else { (image.clone(), steering_deg) };
        if self.rotation_deg == 0.0 {
            (img, steer)
        } else {
            (img.rotate(self.rotation_deg), steer)
        }
    }
}

/// Draws an augmentation from `rng` and applies it.
pub fn augment(image: &Image, steering_deg: f64, rng: &mut impl rand::Rng) -> (Image, f64) {
    Augmentation::draw(rng).apply(image, steering_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn flip_negates_and_is_involution() {
        let mut img = Image::filled(4, 6, [0.1, 0.2, 0.3]);
        img.set_pixel(0, 1, [0.9, 0.8, 0.7]);
        let flip = Augmentation { flip: true, rotation_deg: 0.0 };
        let (once, s1) = flip.apply(&img, 5.0);
        assert_eq!(s1, -5.0);
        let (twice, s2) = flip.apply(&once, s1);
        assert_eq!(twice, img);
        assert_eq!(s2.to_bits(), 5.0f64.to_bits());
    }

    #[test]
    fn seeded_stream_repeats() {
        let mut a = rng::seeded(5);
        let mut b = rng::seeded(5);
        let draws_a: alloc::vec::Vec<_> = (0..100).map(|_| Augmentation::draw(&mut a)).collect();
        let draws_b: alloc::vec::Vec<_> = (0..100).map(|_| Augmentation::draw(&mut b)).collect();
        assert_eq!(draws_a, draws_b);
        assert!(draws_a.iter().all(|d| d.rotation_deg.abs() <= MAX_ROTATION_DEG));
        let flips = draws_a.iter().filter(|d| d.flip).count();
        assert!((30..=70).contains(&flips));
    }
}
