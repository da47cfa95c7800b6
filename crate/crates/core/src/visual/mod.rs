//! Global (GIST) and local (SIFT) visual descriptors on standardized grayscale images.

mod filter;
mod gist;
mod sift;

pub use gist::{gist_descriptor, GaborBank, GIST_BLOCK_GRID};
pub use sift::{
    dense_sift, sparse_sift, DenseSiftConfig, DescriptorLocation, LocalDescriptorSet, SiftConfig,
    DESCRIPTOR_DIM, DESCRIPTOR_FLOOR,
};

use image::imageops::FilterType;
use thiserror::Error;

/// Default side length of standardized images.
pub const DEFAULT_IMAGE_SIZE: usize = 256;

#[derive(Debug, Error)]
pub enum VisualError {
    #[error("record `{source_id}`: cannot decode image: {message}")]
    Decode { source_id: String, message: String },
    #[error("image size {size} is not divisible by {blocks} blocks")]
    BlocksDoNotDivide { size: usize, blocks: usize },
    #[error("gabor bank was built for {bank}px images, got {image}px")]
    BankSizeMismatch { bank: usize, image: usize },
    #[error("patch of {patch}px does not fit a {size}px image")]
    PatchTooLarge { patch: usize, size: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Square grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardImage {
    pub size: usize,
    pub pixels: Vec<f64>,
    pub source_id: String,
}

impl StandardImage {
    pub fn new(size: usize, pixels: Vec<f64>, source_id: impl Into<String>) -> Self {
        assert_eq!(
            pixels.len(),
            size * size,
            "pixel buffer must be size x size"
        );
        Self {
            size,
            pixels,
            source_id: source_id.into(),
        }
    }

    /// Builds an image from a generator `f(x, y)`; values are clamped to `[0, 1]`.
    pub fn from_fn(
        size: usize,
        source_id: impl Into<String>,
        f: impl Fn(usize, usize) -> f64,
    ) -> Self {
        let mut pixels = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(size, pixels, source_id)
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.size + x]
    }

    /// Encodes as an 8-bit grayscale PNG.
    pub fn to_png(&self) -> Vec<u8> {
        let buf: Vec<u8> = self
            .pixels
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.size as u32, self.size as u32, buf)
            .expect("buffer matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory PNG encoding");
        out.into_inner()
    }
}

/// Decodes, converts to luminance and resizes (ignoring aspect ratio) to `size x size`.
pub fn standardize_image(
    bytes: &[u8],
    source_id: &str,
    size: usize,
) -> Result<StandardImage, VisualError> {
    if size == 0 {
        return Err(VisualError::InvalidParameter(
            "image size must be positive".into(),
        ));
    }
    let decoded = image::load_from_memory(bytes).map_err(|e| VisualError::Decode {
        source_id: source_id.to_string(),
        message: e.to_string(),
    })?;
    let gray = decoded.to_luma32f();
    let gray = if gray.width() as usize == size && gray.height() as usize == size {
        gray
    } else {
        image::imageops::resize(&gray, size as u32, size as u32, FilterType::Triangle)
    };
    let pixels = gray
        .into_raw()
        .into_iter()
        .map(|v| (v as f64).clamp(0.0, 1.0))
        .collect();
    Ok(StandardImage::new(size, pixels, source_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode_rgb(w: u32, h: u32) -> Vec<u8> {
        let img = image::RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8])
        });
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn color_image_is_resized_to_gray_square() {
        let img = standardize_image(&encode_rgb(640, 480), "r1", 256).unwrap();
        assert_eq!(img.size, 256);
        assert_eq!(img.pixels.len(), 256 * 256);
        assert!(img.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn standard_size_gray_is_unchanged() {
        let src = StandardImage::from_fn(32, "s", |x, y| ((x * 7 + y * 3) % 256) as f64 / 255.0);
        let back = standardize_image(&src.to_png(), "s", 32).unwrap();
        for (a, b) in src.pixels.iter().zip(&back.pixels) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn truncated_file_names_record() {
        let bytes = encode_rgb(64, 64);
        let err = standardize_image(&bytes[..bytes.len() / 3], "rec-42", 64).unwrap_err();
        assert!(err.to_string().contains("rec-42"), "{err}");
    }
}
