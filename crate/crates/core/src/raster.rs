//! Binary PGM/PPM rasters.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl GrayImage {
    /// Quantizes values in `[0, 1]` (clamped).
    pub fn from_unit(values: &[f32], width: usize, height: usize) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::param("pixel count does not match raster size"));
        }
        let pixels = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Ok(GrayImage { width, height, pixels })
    }

    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode_pgm())
    }
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        RgbImage {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    /// Places `other` to the right of `self`, padding the shorter one with black.
    pub fn beside(&self, other: &RgbImage) -> RgbImage {
        let width = self.width + other.width;
        let height = self.height.max(other.height);
        let mut out = RgbImage::filled(width, height, [0, 0, 0]);
        for (img, x0) in [(self, 0), (other, self.width)] {
            for y in 0..img.height {
                let src = &img.pixels[y * img.width..(y + 1) * img.width];
                out.pixels[y * width + x0..y * width + x0 + img.width].copy_from_slice(src);
            }
        }
        out
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode_ppm())
    }
}

/// Writes `bytes`, creating missing parent directories.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_payload() {
        let img = GrayImage::from_unit(&[0.0, 1.0, 0.5, 2.0], 2, 2).unwrap();
        let bytes = img.encode_pgm();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 255, 128, 255]);
        assert!(GrayImage::from_unit(&[0.0; 3], 2, 2).is_err());
    }

    #[test]
    fn side_by_side_layout() {
        let a = RgbImage::filled(2, 2, [1, 1, 1]);
        let b = RgbImage::filled(1, 3, [9, 9, 9]);
        let c = a.beside(&b);
        assert_eq!((c.width, c.height), (3, 3));
        assert_eq!(c.pixels[2], [9, 9, 9]);
        assert_eq!(c.pixels[6], [0, 0, 0]);
        assert!(c.encode_ppm().starts_with(b"P6\n3 3\n255\n"));
    }
}
