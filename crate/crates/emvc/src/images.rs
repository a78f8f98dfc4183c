//! Camera image files: binary PPM (P6) is written; PPM and PNG are read.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use emvc_core::data::Image;

use crate::error::{CliError, Result};

pub fn read_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| CliError::Operational(format!("{}: {e}", path.display())))?.to_rgb8();
    Ok(Image::from_rgb8(img.height() as usize, img.width() as usize, img.as_raw())?)
}

pub fn encode_ppm(image: &Image) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(&image.to_rgb8(), image.width() as u32, image.height() as u32, ExtendedColorType::Rgb8)
        .map_err(|e| CliError::Operational(format!("ppm encode: {e}")))?;
    Ok(buf)
}

pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    std::fs::write(path, encode_ppm(image)?).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let mut img = Image::filled(3, 5, [0.2, 0.4, 0.6]);
        img.set_pixel(1, 4, [1.0, 0.0, 0.5]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ppm");
        write_ppm(&p, &img).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P6"));
        let back = read_image(&p).unwrap();
        assert_eq!(back.to_rgb8(), img.to_rgb8());
    }
}
