//! Axis-aligned anisotropic Gaussian blur pyramid, coarsest level first.
//!
//! Every level keeps the source resolution; only the blur bandwidth changes.
//! Optional gradient-magnitude and Laplacian terms can be mixed into each
//! level with configurable weights (both default to zero, giving a pure blur
//! pyramid).

use std::path::Path;

use crate::raster::{convolve2d, gradient_magnitude, laplacian, Kernel2D, RasterImage};
use crate::{Error, Result};

/// One smoothed level together with its blur parameters.
#[derive(Clone, Debug)]
pub struct ScaleLevel {
    pub index: usize,
    /// Blur std-dev along x, in pixels.
    pub sigma_x: f64,
    /// Blur std-dev along y, in pixels.
    pub sigma_y: f64,
    pub image: RasterImage,
}

/// Ordered smoothed levels, strongest blur first.
#[derive(Clone, Debug)]
pub struct ScaleSpacePyramid {
    pub levels: Vec<ScaleLevel>,
    pub grad_weight: f64,
    pub lap_weight: f64,
}

impl ScaleSpacePyramid {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Writes every level as `pyramid_t{index}.png` under `dir`.
    pub fn dump<P: AsRef<Path>>(&self, dir: P) -> Result<()> {
        for level in &self.levels {
            let path = dir.as_ref().join(format!("pyramid_t{}.png", level.index));
            crate::io::save_image(&level.image, path)?;
        }
        Ok(())
    }
}

/// Builds a separable axis-aligned Gaussian kernel with per-axis radius
/// `ceil(3 * stddev)`, renormalized to sum 1.
pub fn make_aniso_kernel(sigma_x: f64, sigma_y: f64) -> Result<Kernel2D> {
    if sigma_x <= 0.0 || sigma_y <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "blur std-devs must be positive, got ({sigma_x}, {sigma_y})"
        )));
    }
    let rx = (3.0 * sigma_x).ceil() as usize;
    let ry = (3.0 * sigma_y).ceil() as usize;
    let gauss = |i: isize, s: f64| (-((i * i) as f64) / (2.0 * s * s)).exp();
    let mut weights = Vec::with_capacity((2 * rx + 1) * (2 * ry + 1));
    for dy in -(ry as isize)..=(ry as isize) {
        for dx in -(rx as isize)..=(rx as isize) {
            weights.push(gauss(dx, sigma_x) * gauss(dy, sigma_y));
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Kernel2D::new(rx, ry, weights)
}

fn validate_schedule(schedule: &[(f64, f64)]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidConfig("blur schedule is empty".into()));
    }
    for (sx, sy) in schedule {
        if *sx <= 0.0 || *sy <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "blur schedule entries must be positive, got ({sx}, {sy})"
            )));
        }
    }
    for pair in schedule.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.0 >= a.0 || b.1 >= a.1 {
            return Err(Error::InvalidConfig(format!(
                "blur schedule must be strictly decreasing in both axes: ({}, {}) -> ({}, {})",
                a.0, a.1, b.0, b.1
            )));
        }
    }
    Ok(())
}

fn build_level(
    source: &RasterImage,
    index: usize,
    sigma_x: f64,
    sigma_y: f64,
    grad_weight: f64,
    lap_weight: f64,
) -> Result<ScaleLevel> {
    let kernel = make_aniso_kernel(sigma_x, sigma_y)?;
    let mut image = convolve2d(source, &kernel)?;
    if grad_weight != 0.0 {
        let g = gradient_magnitude(source)?;
        for (v, gv) in image.data_mut().iter_mut().zip(g.data()) {
            *v += grad_weight * gv;
        }
    }
    if lap_weight != 0.0 {
        let l = laplacian(source)?;
        for (v, lv) in image.data_mut().iter_mut().zip(l.data()) {
            *v += lap_weight * lv;
        }
    }
    image.clamp_unit();
    Ok(ScaleLevel { index, sigma_x, sigma_y, image })
}

/// Builds the blur pyramid over `schedule`, strongest blur first. The extra
/// terms (gradient magnitude, Laplacian) are computed from the raw source at
/// every level; the source itself is never mutated.
pub fn build_pyramid(
    source: &RasterImage,
    schedule: &[(f64, f64)],
    grad_weight: f64,
    lap_weight: f64,
) -> Result<ScaleSpacePyramid> {
    validate_schedule(schedule)?;
    if grad_weight < 0.0 || lap_weight < 0.0 {
        return Err(Error::InvalidConfig(
            "gradient/laplacian mix weights must be non-negative".into(),
        ));
    }
    let levels = schedule
        .iter()
        .enumerate()
        .map(|(i, &(sx, sy))| build_level(source, i, sx, sy, grad_weight, lap_weight))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaleSpacePyramid { levels, grad_weight, lap_weight })
}
