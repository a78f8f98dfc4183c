use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Height × width × 3 image with channels in `[0, 1]`, row-major HWC.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * 3 {
            return Err(Error::shape("image", format!("{height}x{width}x3 vs {} values", data.len())));
        }
        Ok(Image { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Image { height, width, data }
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| libm::round(v.clamp(0.0, 1.0) * 255.0) as u8).collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.height, self.width, 3], self.data.clone()).expect("dims checked at construction")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.dims() {
            [h, w, 3] => Self::new(h, w, t.data().to_vec()),
            _ => Err(Error::shape("image", format!("tensor dims {:?} are not HxWx3", t.dims()))),
        }
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                out.set_pixel(r, c, self.pixel(r, self.width - 1 - c));
            }
        }
        out
    }

    /// Rotates about the image center (counter-clockwise for positive angles),
    /// sampling the nearest source pixel and replicating edges.
    pub fn rotate(&self, degrees: f64) -> Image {
        let (s, c) = libm::sincos(degrees.to_radians());
        let cy = (self.height as f64 - 1.0) / 2.0;
        let cx = (self.width as f64 - 1.0) / 2.0;
        let mut out = self.clone();
        for r in 0..self.height {
            for col in 0..self.width {
                let x = col as f64 - cx;
                let y = cy - r as f64;
                // inverse rotation to find the source
                let sx = c * x + s * y;
                let sy = -s * x + c * y;
                let src_c = libm::round(sx + cx).clamp(0.0, self.width as f64 - 1.0) as usize;
                let src_r = libm::round(cy - sy).clamp(0.0, self.height as f64 - 1.0) as usize;
                out.set_pixel(r, col, self.pixel(src_r, src_c));
            }
        }
        out
    }

    /// Bilinear resample with half-pixel centers and clamped borders.
    pub fn resize(&self, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("resize", "output extent must be positive"));
        }
        let coords = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
            let scale = n_in as f64 / n_out as f64;
            (0..n_out)
                .map(|i| {
                    let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, n_in as f64 - 1.0);
                    let lo = libm::floor(src) as usize;
                    let hi = (lo + 1).min(n_in - 1);
                    (lo, hi, src - lo as f64)
                })
                .collect()
        };
        let rows = coords(height, self.height);
        let cols = coords(width, self.width);
        let mut data = Vec::with_capacity(height * width * 3);
        for &(r0, r1, fr) in &rows {
            for &(c0, c1, fc) in &cols {
                let (a, b, c, d) = (self.pixel(r0, c0), self.pixel(r0, c1), self.pixel(r1, c0), self.pixel(r1, c1));
                for k in 0..3 {
                    let top = a[k] + (b[k] - a[k]) * fc;
                    let bottom = c[k] + (d[k] - c[k]) * fc;
                    data.push(top + (bottom - top) * fr);
                }
            }
        }
        Image::new(height, width, data)
    }
}

/// Squeezes any aspect ratio to a `side`×`side` image.
pub fn squeeze_resize(image: &Image, side: usize) -> Result<Image> {
    if image.height < 2 || image.width < 2 {
        return Err(Error::invalid(
            "squeeze_resize",
            format!("degenerate {}x{} input", image.height, image.width),
        ));
    }
    image.resize(side, side)
}

/// Hexcone HSV with hue scaled to `[0, 1)`.
pub fn rgb_to_hsv(image: &Image) -> Result<Image> {
    if let Some(v) = image.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid("rgb_to_hsv", format!("channel value {v} outside [0, 1]")));
    }
    let mut out = image.clone();
    for px in out.data.chunks_exact_mut(3) {
        let hsv = hsv_of([px[0], px[1], px[2]]);
        px.copy_from_slice(&hsv);
    }
    Ok(out)
}

pub fn hsv_to_rgb(image: &Image) -> Image {
    let mut out = image.clone();
    for px in out.data.chunks_exact_mut(3) {
        let rgb = rgb_of([px[0], px[1], px[2]]);
        px.copy_from_slice(&rgb);
    }
    out
}

pub fn hsv_of([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let s = if max > 0.0 { chroma / max } else { 0.0 };
    if chroma == 0.0 {
        return [0.0, s, max];
    }
    let sector = if max == r {
        let h = (g - b) / chroma;
        if h < 0.0 {
            h + 6.0
        } else {
            h
        }
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    let h = sector / 6.0;
    [if h >= 1.0 { h - 1.0 } else { h }, s, max]
}

pub fn rgb_of([h, s, v]: [f64; 3]) -> [f64; 3] {
    let c = v * s;
    let hp = h * 6.0;
    let x = c * (1.0 - libm::fabs(hp % 2.0 - 1.0));
    let m = v - c;
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hsv_reference_colors() {
        assert_eq!(hsv_of([1.0, 0.0, 0.0]), [0.0, 1.0, 1.0]);
        let gray = hsv_of([0.5, 0.5, 0.5]);
        assert_eq!((gray[1], gray[2]), (0.0, 0.5));
        assert!((hsv_of([0.0, 1.0, 0.0])[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((hsv_of([0.0, 0.0, 1.0])[0] - 2.0 / 3.0).abs() < 1e-15);
        let img = Image::new(1, 1, vec![1.2, 0.0, 0.0]).unwrap();
        assert!(rgb_to_hsv(&img).is_err());
    }

    #[test]
    fn hand_bilinear_checker() {
        // 2x4 checker: columns alternate 0/1, rows offset by one
        let mut img = Image::filled(2, 4, [0.0; 3]);
        for r in 0..2 {
            for c in 0..4 {
                let v = ((r + c) % 2) as f64;
                img.set_pixel(r, c, [v; 3]);
            }
        }
        let out = squeeze_resize(&img, 2).unwrap();
        // each output pixel sits halfway between two source columns on a source row
        assert!(out.data().iter().all(|&v| v == 0.5));
        let square = Image::filled(5, 5, [0.3, 0.6, 0.9]);
        let out = squeeze_resize(&square, 3).unwrap();
        assert!(out.data().chunks(3).all(|p| p == [0.3, 0.6, 0.9]));
        assert!(squeeze_resize(&Image::filled(1, 4, [0.0; 3]), 2).is_err());
    }

    #[test]
    fn flip_and_rotate_basics() {
        let mut img = Image::filled(3, 4, [0.0; 3]);
        img.set_pixel(1, 0, [1.0, 0.5, 0.25]);
        let f = img.flip_horizontal();
        assert_eq!(f.pixel(1, 3), [1.0, 0.5, 0.25]);
        assert_eq!(f.flip_horizontal(), img);
        assert_eq!(img.rotate(0.0), img);
        let mut dot = Image::filled(5, 5, [0.0; 3]);
        dot.set_pixel(2, 4, [1.0; 3]);
        // a quarter turn counter-clockwise moves the right-edge pixel to the top
        assert_eq!(dot.rotate(90.0).pixel(0, 2), [1.0; 3]);
    }
}
