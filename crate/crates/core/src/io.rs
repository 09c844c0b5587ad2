//! 8-bit PNG / PGM / PPM reading and writing.
//!
//! Grayscale inputs are replicated to 3 channels on load. On save, PNG output
//! falls back to single-channel grayscale when all channels agree within one
//! 8-bit step; `.pgm` always writes grayscale and `.ppm` always writes color.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::raster::{RasterImage, CHANNELS};
use crate::{Error, Result};

/// Loads a PNG/PGM/PPM file into a normalized [0,1] image.
pub fn load_image<P: AsRef<Path>>(path: P) -> Result<RasterImage> {
    let dynamic = image::open(path.as_ref())?;
    let rgb = dynamic.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let data = rgb.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    RasterImage::from_data(w, h, data)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn channels_agree(image: &RasterImage) -> bool {
    image.data().chunks_exact(CHANNELS).all(|px| {
        let lo = px.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo <= 1.0 / 255.0
    })
}

fn to_gray_buffer(image: &RasterImage) -> ImageBuffer<Luma<u8>, Vec<u8>> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    ImageBuffer::from_fn(w, h, |x, y| {
        let px = image.pixel(x as usize, y as usize);
        Luma([quantize((px[0] + px[1] + px[2]) / 3.0)])
    })
}

fn to_rgb_buffer(image: &RasterImage) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    ImageBuffer::from_fn(w, h, |x, y| {
        let px = image.pixel(x as usize, y as usize);
        Rgb([quantize(px[0]), quantize(px[1]), quantize(px[2])])
    })
}

/// Saves to PNG/PGM/PPM based on the file extension.
pub fn save_image<P: AsRef<Path>>(image: &RasterImage, path: P) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => DynamicImage::ImageLuma8(to_gray_buffer(image)).save(path)?,
        "ppm" => DynamicImage::ImageRgb8(to_rgb_buffer(image)).save(path)?,
        "png" => {
            if channels_agree(image) {
                DynamicImage::ImageLuma8(to_gray_buffer(image)).save(path)?;
            } else {
                DynamicImage::ImageRgb8(to_rgb_buffer(image)).save(path)?;
            }
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unsupported image extension '{other}' (use png, pgm, or ppm)"
            )))
        }
    }
    Ok(())
}
