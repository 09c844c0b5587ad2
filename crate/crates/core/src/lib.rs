//! Denoising by vector redrawing.
//!
//! A noisy image is reconstructed as a layered vector scene: a blur pyramid
//! isolates structure from noise, coherent color regions are segmented at the
//! coarsest level, and each region is redrawn as a closed cubic Bezier path
//! with a flat fill color. Paths are fitted coarse-to-fine by gradient descent
//! through a differentiable soft rasterizer, against a weighted MSE plus a
//! self-intersection penalty. The optimized scene renders to the denoised
//! raster and serializes to SVG.

pub mod bezier;
pub mod config;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod scale_space;
pub mod segmentation;
pub mod svg;

mod geom;

pub use config::PipelineConfig;
pub use geom::{Color, Point};
pub use pipeline::{add_noise, denoise, phantom, run_benchmark, RunArtifacts};
pub use raster::RasterImage;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation received input that violates its preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A configuration value or file is out of contract.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
