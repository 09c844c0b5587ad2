//! PSNR and SSIM on [0,1] normalized images.
//!
//! SSIM uses the standard 11x11 Gaussian window (sigma 1.5) with K1 = 0.01,
//! K2 = 0.03, dynamic range 1, computed over fully-interior windows only and
//! averaged across channels.

use serde::Serialize;

use crate::raster::{RasterImage, CHANNELS};
use crate::{Error, Result};

/// PSNR values are capped here so reports stay finite.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Quality of a denoised output against ground truth, alongside the noisy
/// input's quality for reference.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub noisy_psnr_db: f64,
    pub noisy_ssim: f64,
}

/// Peak signal-to-noise ratio in dB with unit peak, capped at
/// [`PSNR_CAP_DB`] when the MSE drops below 1e-10.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::InvalidInput("psnr dimensions disagree".into()));
    }
    let n = a.data().len() as f64;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse < 1e-10 {
        Ok(PSNR_CAP_DB)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut w = Vec::with_capacity(SSIM_WINDOW);
    for i in -r..=r {
        w.push((-((i * i) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    }
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of a single-channel plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, window: &[f64]) -> (Vec<f64>, usize, usize) {
    let r = window.len() / 2;
    let out_w = w - 2 * r;
    let out_h = h - 2 * r;
    // Horizontal pass.
    let mut tmp = vec![0.0f64; out_w * h];
    for y in 0..h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, wi) in window.iter().enumerate() {
                acc += wi * plane[y * w + x + i];
            }
            tmp[y * out_w + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0f64; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, wi) in window.iter().enumerate() {
                acc += wi * tmp[(y + i) * out_w + x];
            }
            out[y * out_w + x] = acc;
        }
    }
    (out, out_w, out_h)
}

/// Mean local structural similarity, averaged over channels. Requires both
/// image dimensions to be at least the window size.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::InvalidInput("ssim dimensions disagree".into()));
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "ssim needs at least {SSIM_WINDOW} pixels per axis, got {w}x{h}"
        )));
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let window = gaussian_window();

    let mut total = 0.0;
    for c in 0..CHANNELS {
        let pa: Vec<f64> = (0..w * h).map(|i| a.data()[i * CHANNELS + c]).collect();
        let pb: Vec<f64> = (0..w * h).map(|i| b.data()[i * CHANNELS + c]).collect();
        let paa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let pbb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let pab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();

        let (mu_a, ow, oh) = filter_valid(&pa, w, h, &window);
        let (mu_b, _, _) = filter_valid(&pb, w, h, &window);
        let (e_aa, _, _) = filter_valid(&paa, w, h, &window);
        let (e_bb, _, _) = filter_valid(&pbb, w, h, &window);
        let (e_ab, _, _) = filter_valid(&pab, w, h, &window);

        let mut channel_sum = 0.0;
        for i in 0..ow * oh {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            channel_sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += channel_sum / (ow * oh) as f64;
    }
    Ok(total / CHANNELS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct-summation SSIM reference: every window summed term by term.
    /// Deliberately naive and independent of `ssim`'s separable filtering.
    pub(crate) fn ssim_reference(a: &RasterImage, b: &RasterImage) -> f64 {
        let (w, h) = (a.width(), a.height());
        let window = gaussian_window();
        let r = window.len() / 2;
        let c1 = SSIM_K1 * SSIM_K1;
        let c2 = SSIM_K2 * SSIM_K2;
        let mut total = 0.0;
        for c in 0..3 {
            let mut channel_sum = 0.0;
            let mut count = 0usize;
            for cy in r..h - r {
                for cx in r..w - r {
                    let (mut ma, mut mb, mut eaa, mut ebb, mut eab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for dy in 0..window.len() {
                        for dx in 0..window.len() {
                            let wt = window[dy] * window[dx];
                            let va = a.get(cx + dx - r, cy + dy - r, c);
                            let vb = b.get(cx + dx - r, cy + dy - r, c);
                            ma += wt * va;
                            mb += wt * vb;
                            eaa += wt * va * va;
                            ebb += wt * vb * vb;
                            eab += wt * va * vb;
                        }
                    }
                    let va = eaa - ma * ma;
                    let vb = ebb - mb * mb;
                    let cov = eab - ma * mb;
                    channel_sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    count += 1;
                }
            }
            total += channel_sum / count as f64;
        }
        total / 3.0
    }

    #[test]
    fn psnr_capped_on_identical_images() {
        let a = RasterImage::filled(8, 8, [0.7; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_of_uniform_tenth_residual_is_twenty() {
        let a = RasterImage::filled(16, 16, [0.5; 3]);
        let b = RasterImage::filled(16, 16, [0.6; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-6);
    }

    #[test]
    fn psnr_is_symmetric_and_monotone_in_noise() {
        let a = RasterImage::filled(16, 16, [0.5; 3]);
        let mut prev = f64::INFINITY;
        for amp in [0.01, 0.05, 0.1, 0.2] {
            let b = RasterImage::from_fn(16, 16, |x, y| {
                let s = if (x + y) % 2 == 0 { amp } else { -amp };
                [0.5 + s; 3]
            });
            let p = psnr(&a, &b).unwrap();
            assert_eq!(p, psnr(&b, &a).unwrap());
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn psnr_rejects_dimension_mismatch() {
        let a = RasterImage::filled(8, 8, [0.0; 3]);
        let b = RasterImage::filled(8, 9, [0.0; 3]);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn ssim_exactly_one_on_identical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = RasterImage::from_fn(16, 16, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_constants_matches_luminance_term() {
        let a = RasterImage::filled(16, 16, [0.5; 3]);
        let b = RasterImage::filled(16, 16, [0.7; 3]);
        let c1 = 0.01f64 * 0.01;
        let expected = (2.0 * 0.5 * 0.7 + c1) / (0.25 + 0.49 + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn ssim_matches_direct_summation_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = RasterImage::from_fn(16, 16, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
            let b = RasterImage::from_fn(16, 16, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
            let fast = ssim(&a, &b).unwrap();
            let slow = ssim_reference(&a, &b);
            assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
            assert_eq!(fast, ssim(&b, &a).unwrap());
            assert!(fast <= 1.0);
        }
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = RasterImage::filled(10, 16, [0.0; 3]);
        assert!(ssim(&a, &a).is_err());
    }
}
