//! Binary PPM (P6) and PGM (P5) encoders.

use crate::error::{Error, Result};

fn check(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Infeasible(format!("empty image {width}x{height}")));
    }
    if width * height * channels != len {
        return Err(Error::Infeasible(format!(
            "image buffer of {len} bytes does not match {width}x{height}x{channels}"
        )));
    }
    Ok(())
}

/// Encodes 8-bit RGB pixels, row-major from the top-left corner.
pub fn ppm(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    check(width, height, 3, rgb.len())?;
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    Ok(out)
}

/// Encodes 8-bit grayscale pixels, row-major from the top-left corner.
pub fn pgm(width: usize, height: usize, gray: &[u8]) -> Result<Vec<u8>> {
    check(width, height, 1, gray.len())?;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    Ok(out)
}
