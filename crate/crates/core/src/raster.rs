//! Dense 3-channel raster image plus the stencil operators the rest of the
//! crate builds on: 2D correlation, gradient magnitude, and Laplacian, all
//! with reflect-101 border handling.

use crate::{Color, Error, Result};

/// Number of color channels. Grayscale inputs are replicated on load.
pub const CHANNELS: usize = 3;

/// Row-major float image with intensities nominally in [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RasterImage {
    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, color: Color) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        RasterImage { width, height, data }
    }

    /// Image built per pixel from `f(x, y) -> color`.
    pub fn from_fn<F: FnMut(usize, usize) -> Color>(width: usize, height: usize, mut f: F) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RasterImage { width, height, data }
    }

    /// Wraps an existing buffer; `data.len()` must equal `width * height * 3`.
    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * CHANNELS {
            return Err(Error::InvalidInput(format!(
                "buffer length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                CHANNELS
            )));
        }
        Ok(RasterImage { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * CHANNELS + c] = value;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> Color {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, color: Color) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&color);
    }

    pub fn same_dims(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Per-channel mean over all pixels.
    pub fn mean_color(&self) -> Color {
        let mut sums = [0.0; CHANNELS];
        for px in self.data.chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sums[c] += px[c];
            }
        }
        let n = (self.width * self.height) as f64;
        [sums[0] / n, sums[1] / n, sums[2] / n]
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Reflect-101 index: `-1 -> 1`, `n -> n-2` (border pixel not repeated).
#[inline]
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i % period;
    if i < 0 {
        i += period;
    }
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// Dense 2D stencil with odd dimensions `(2*radius_x+1) x (2*radius_y+1)`.
#[derive(Clone, Debug)]
pub struct Kernel2D {
    pub radius_x: usize,
    pub radius_y: usize,
    /// Row-major, rows indexed by dy in `-radius_y..=radius_y`.
    pub weights: Vec<f64>,
}

impl Kernel2D {
    pub fn new(radius_x: usize, radius_y: usize, weights: Vec<f64>) -> Result<Self> {
        let expected = (2 * radius_x + 1) * (2 * radius_y + 1);
        if weights.len() != expected {
            return Err(Error::InvalidInput(format!(
                "kernel weight count {} does not match radii ({}, {})",
                weights.len(),
                radius_x,
                radius_y
            )));
        }
        Ok(Kernel2D { radius_x, radius_y, weights })
    }

    #[inline]
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let w = 2 * self.radius_x + 1;
        let ix = (dx + self.radius_x as isize) as usize;
        let iy = (dy + self.radius_y as isize) as usize;
        self.weights[iy * w + ix]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Per-channel 2D correlation with reflect-101 borders. Output dimensions
/// equal the input's.
pub fn convolve2d(image: &RasterImage, kernel: &Kernel2D) -> Result<RasterImage> {
    let (w, h) = (image.width(), image.height());
    if kernel.radius_x >= w || kernel.radius_y >= h {
        return Err(Error::InvalidInput(format!(
            "kernel radii ({}, {}) exceed image extent {}x{}",
            kernel.radius_x, kernel.radius_y, w, h
        )));
    }
    let rx = kernel.radius_x as isize;
    let ry = kernel.radius_y as isize;
    let mut out = RasterImage::filled(w, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; CHANNELS];
            for dy in -ry..=ry {
                let sy = reflect101(y as isize + dy, h);
                for dx in -rx..=rx {
                    let sx = reflect101(x as isize + dx, w);
                    let wgt = kernel.weight(dx, dy);
                    let px = image.pixel(sx, sy);
                    for c in 0..CHANNELS {
                        acc[c] += wgt * px[c];
                    }
                }
            }
            out.set_pixel(x, y, acc);
        }
    }
    Ok(out)
}

/// Per-channel `sqrt(gx^2 + gy^2)` with central differences in the interior
/// and one-sided differences at borders.
pub fn gradient_magnitude(image: &RasterImage) -> Result<RasterImage> {
    let (w, h) = (image.width(), image.height());
    if w < 2 || h < 2 {
        return Err(Error::InvalidInput(format!(
            "gradient needs at least 2 pixels per axis, got {w}x{h}"
        )));
    }
    let mut out = RasterImage::filled(w, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let mut px = [0.0f64; CHANNELS];
            for c in 0..CHANNELS {
                let gx = if x == 0 {
                    image.get(1, y, c) - image.get(0, y, c)
                } else if x == w - 1 {
                    image.get(w - 1, y, c) - image.get(w - 2, y, c)
                } else {
                    (image.get(x + 1, y, c) - image.get(x - 1, y, c)) * 0.5
                };
                let gy = if y == 0 {
                    image.get(x, 1, c) - image.get(x, 0, c)
                } else if y == h - 1 {
                    image.get(x, h - 1, c) - image.get(x, h - 2, c)
                } else {
                    (image.get(x, y + 1, c) - image.get(x, y - 1, c)) * 0.5
                };
                px[c] = (gx * gx + gy * gy).sqrt();
            }
            out.set_pixel(x, y, px);
        }
    }
    Ok(out)
}

/// Per-channel 5-point Laplacian (-4 center, +1 in each axis direction),
/// reflect-101 at borders.
pub fn laplacian(image: &RasterImage) -> Result<RasterImage> {
    let (w, h) = (image.width(), image.height());
    if w < 3 || h < 3 {
        return Err(Error::InvalidInput(format!(
            "laplacian needs at least 3 pixels per axis, got {w}x{h}"
        )));
    }
    let mut out = RasterImage::filled(w, h, [0.0; 3]);
    for y in 0..h {
        let yn = reflect101(y as isize - 1, h);
        let ys = reflect101(y as isize + 1, h);
        for x in 0..w {
            let xw = reflect101(x as isize - 1, w);
            let xe = reflect101(x as isize + 1, w);
            let mut px = [0.0f64; CHANNELS];
            for c in 0..CHANNELS {
                px[c] = image.get(xw, y, c)
                    + image.get(xe, y, c)
                    + image.get(x, yn, c)
                    + image.get(x, ys, c)
                    - 4.0 * image.get(x, y, c);
            }
            out.set_pixel(x, y, px);
        }
    }
    Ok(out)
}
