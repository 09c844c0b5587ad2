//! Region-growing segmentation into coherent color components.
//!
//! Flood fill with 4-connectivity and raster-order seeding: a pixel joins a
//! region when its per-channel mean absolute color difference to the region's
//! running mean stays within tolerance. Deterministic by construction.

use std::collections::VecDeque;
use std::path::Path;

use crate::raster::{RasterImage, CHANNELS};
use crate::{Color, Error, Result};

/// A 4-connected pixel region with its representative color.
#[derive(Clone, Debug)]
pub struct Component {
    pub id: usize,
    /// Full-frame membership bitmap, row-major.
    pub mask: Vec<bool>,
    pub area: usize,
    /// (x_min, y_min, x_max, y_max), inclusive.
    pub bbox: (usize, usize, usize, usize),
    pub mean_color: Color,
    pub source_level: usize,
}

impl Component {
    pub fn contains(&self, x: usize, y: usize, width: usize) -> bool {
        self.mask[y * width + x]
    }
}

/// Mean absolute channel difference between two colors.
#[inline]
fn color_dist(a: Color, b: Color) -> f64 {
    ((a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()) / CHANNELS as f64
}

/// Grows regions over the pixels where `allowed` is true. Seeds are taken in
/// raster order; neighbors are visited up, down, left, right.
fn grow_regions(
    image: &RasterImage,
    allowed: &[bool],
    color_tol: f64,
    min_area: usize,
) -> Vec<Component> {
    let (w, h) = (image.width(), image.height());
    let mut label: Vec<usize> = vec![usize::MAX; w * h];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();

    for seed in 0..w * h {
        if !allowed[seed] || label[seed] != usize::MAX {
            continue;
        }
        let region = components.len();
        let mut sum = image.pixel(seed % w, seed / w);
        let mut count = 1usize;
        label[seed] = region;
        queue.push_back(seed);
        let mut members = vec![seed];

        while let Some(idx) = queue.pop_front() {
            let (x, y) = (idx % w, idx / w);
            let mean = [
                sum[0] / count as f64,
                sum[1] / count as f64,
                sum[2] / count as f64,
            ];
            let neighbors = [
                (y > 0).then(|| idx - w),
                (y + 1 < h).then(|| idx + w),
                (x > 0).then(|| idx - 1),
                (x + 1 < w).then(|| idx + 1),
            ];
            for nb in neighbors.into_iter().flatten() {
                if !allowed[nb] || label[nb] != usize::MAX {
                    continue;
                }
                let color = image.pixel(nb % w, nb / w);
                if color_dist(color, mean) <= color_tol {
                    label[nb] = region;
                    for c in 0..CHANNELS {
                        sum[c] += color[c];
                    }
                    count += 1;
                    members.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        components.push(members);
    }

    let mut out = Vec::new();
    for members in components {
        if members.len() < min_area {
            continue;
        }
        let mut mask = vec![false; w * h];
        let mut bbox = (usize::MAX, usize::MAX, 0usize, 0usize);
        let mut sum = [0.0f64; CHANNELS];
        for &idx in &members {
            mask[idx] = true;
            let (x, y) = (idx % w, idx / w);
            bbox.0 = bbox.0.min(x);
            bbox.1 = bbox.1.min(y);
            bbox.2 = bbox.2.max(x);
            bbox.3 = bbox.3.max(y);
            let px = image.pixel(x, y);
            for c in 0..CHANNELS {
                sum[c] += px[c];
            }
        }
        let n = members.len() as f64;
        out.push(Component {
            id: out.len(),
            mask,
            area: members.len(),
            bbox,
            mean_color: [sum[0] / n, sum[1] / n, sum[2] / n],
            source_level: 0,
        });
    }
    out
}

/// Decomposes an image into color-coherent 4-connected components. Regions
/// smaller than `min_area` are discarded.
pub fn segment_components(
    image: &RasterImage,
    color_tol: f64,
    min_area: usize,
) -> Result<Vec<Component>> {
    if color_tol <= 0.0 {
        return Err(Error::InvalidInput("color tolerance must be positive".into()));
    }
    if min_area == 0 {
        return Err(Error::InvalidInput("min_area must be at least 1".into()));
    }
    let allowed = vec![true; image.width() * image.height()];
    Ok(grow_regions(image, &allowed, color_tol, min_area))
}

/// Mean absolute difference between two images over a component's mask,
/// averaged over pixels and channels.
pub fn component_diff(
    component: &Component,
    redrawn: &RasterImage,
    reference: &RasterImage,
) -> Result<f64> {
    if !redrawn.same_dims(reference) || component.mask.len() != redrawn.width() * redrawn.height() {
        return Err(Error::InvalidInput(
            "component mask and images must share dimensions".into(),
        ));
    }
    if component.area == 0 {
        return Err(Error::InvalidInput("component mask is empty".into()));
    }
    let w = redrawn.width();
    let mut total = 0.0;
    let mut count = 0usize;
    for (idx, inside) in component.mask.iter().enumerate() {
        if !inside {
            continue;
        }
        let (x, y) = (idx % w, idx / w);
        for c in 0..CHANNELS {
            total += (redrawn.get(x, y, c) - reference.get(x, y, c)).abs();
        }
        count += CHANNELS;
    }
    Ok(total / count as f64)
}

/// Component ids ordered for redrawing: largest area first, ties by
/// ascending id.
pub fn schedule_components(components: &[Component]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(components[i].area), components[i].id));
    order.into_iter().map(|i| components[i].id).collect()
}

/// Region-grows color-coherent components restricted to the pixels where
/// `allowed` is true.
pub fn segment_within_mask(
    image: &RasterImage,
    allowed: &[bool],
    color_tol: f64,
    min_area: usize,
) -> Result<Vec<Component>> {
    if allowed.len() != image.width() * image.height() {
        return Err(Error::InvalidInput("mask length does not match image".into()));
    }
    if color_tol <= 0.0 || min_area == 0 {
        return Err(Error::InvalidInput("bad segmentation parameters".into()));
    }
    Ok(grow_regions(image, allowed, color_tol, min_area))
}

/// Segments the under-explained residual between a pyramid level and the
/// current scene render: only pixels whose mean-channel absolute residual
/// exceeds `residual_tol` participate, grouped by color coherence on the
/// level image.
pub fn new_components_at_scale(
    level_image: &RasterImage,
    scene_render: &RasterImage,
    color_tol: f64,
    min_area: usize,
    residual_tol: f64,
) -> Result<Vec<Component>> {
    if !level_image.same_dims(scene_render) {
        return Err(Error::InvalidInput("level and render dimensions differ".into()));
    }
    if color_tol <= 0.0 || residual_tol <= 0.0 {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    if min_area == 0 {
        return Err(Error::InvalidInput("min_area must be at least 1".into()));
    }
    let (w, h) = (level_image.width(), level_image.height());
    let mut allowed = vec![false; w * h];
    for idx in 0..w * h {
        let (x, y) = (idx % w, idx / w);
        let d = color_dist(level_image.pixel(x, y), scene_render.pixel(x, y));
        allowed[idx] = d > residual_tol;
    }
    Ok(grow_regions(level_image, &allowed, color_tol, min_area))
}

/// Writes the component masks as a color-coded label map.
pub fn dump_label_map<P: AsRef<Path>>(
    components: &[Component],
    width: usize,
    height: usize,
    path: P,
) -> Result<()> {
    // Fixed palette cycle; unlabeled pixels stay black.
    const PALETTE: [[f64; 3]; 8] = [
        [0.90, 0.10, 0.10],
        [0.10, 0.70, 0.20],
        [0.15, 0.35, 0.95],
        [0.95, 0.80, 0.10],
        [0.70, 0.20, 0.80],
        [0.10, 0.80, 0.80],
        [0.95, 0.50, 0.15],
        [0.60, 0.60, 0.60],
    ];
    let mut img = RasterImage::filled(width, height, [0.0; 3]);
    for comp in components {
        let color = PALETTE[comp.id % PALETTE.len()];
        for (idx, inside) in comp.mask.iter().enumerate() {
            if *inside {
                img.set_pixel(idx % width, idx / width, color);
            }
        }
    }
    crate::io::save_image(&img, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_image_is_one_component() {
        let img = RasterImage::filled(6, 5, [0.4; 3]);
        let comps = segment_components(&img, 0.05, 1).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].area, 30);
        assert_eq!(comps[0].bbox, (0, 0, 5, 4));
        assert!((comps[0].mean_color[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn split_halves_give_two_components() {
        let img = RasterImage::from_fn(4, 4, |x, _| {
            let v = if x < 2 { 0.2 } else { 0.8 };
            [v, v, v]
        });
        let comps = segment_components(&img, 0.05, 1).unwrap();
        assert_eq!(comps.len(), 2);
        assert!((comps[0].mean_color[0] - 0.2).abs() < 1e-12);
        assert!((comps[1].mean_color[0] - 0.8).abs() < 1e-12);
        assert_eq!(comps[0].area, 8);
        assert_eq!(comps[1].area, 8);
    }

    #[test]
    fn checkerboard_blocks_below_min_area_discarded() {
        // 8x8 grid of 2x2 blocks alternating 0 and 1. Every block is a
        // 4-pixel component; min_area 5 discards them all.
        let img = RasterImage::from_fn(8, 8, |x, y| {
            let v = (((x / 2) + (y / 2)) % 2) as f64;
            [v, v, v]
        });
        let comps = segment_components(&img, 0.05, 5).unwrap();
        assert!(comps.is_empty());
    }

    #[test]
    fn masks_are_disjoint_and_cover_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let img = RasterImage::from_fn(12, 9, |_, _| {
                let v: f64 = rng.gen();
                [v, v, v]
            });
            let comps = segment_components(&img, 0.1, 1).unwrap();
            let mut seen = vec![0usize; 12 * 9];
            for comp in &comps {
                for (idx, inside) in comp.mask.iter().enumerate() {
                    if *inside {
                        seen[idx] += 1;
                    }
                }
            }
            // min_area = 1 discards nothing: exact cover, no overlaps.
            assert!(seen.iter().all(|&n| n == 1));
        }
    }

    #[test]
    fn mean_color_inside_pixel_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let img = RasterImage::from_fn(10, 10, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let comps = segment_components(&img, 0.2, 1).unwrap();
        for comp in &comps {
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for (idx, inside) in comp.mask.iter().enumerate() {
                if *inside {
                    let px = img.pixel(idx % 10, idx / 10);
                    for c in 0..3 {
                        lo[c] = lo[c].min(px[c]);
                        hi[c] = hi[c].max(px[c]);
                    }
                }
            }
            for c in 0..3 {
                assert!(comp.mean_color[c] >= lo[c] - 1e-12);
                assert!(comp.mean_color[c] <= hi[c] + 1e-12);
            }
        }
    }

    #[test]
    fn segmentation_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = RasterImage::from_fn(16, 16, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        let a = segment_components(&img, 0.08, 2).unwrap();
        let b = segment_components(&img, 0.08, 2).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mask, y.mask);
            assert_eq!(x.mean_color, y.mean_color);
        }
    }

    #[test]
    fn diff_zero_on_identical_region() {
        let img = RasterImage::filled(5, 5, [0.3; 3]);
        let comps = segment_components(&img, 0.05, 1).unwrap();
        let d = component_diff(&comps[0], &img, &img).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn diff_measures_constant_offset() {
        let reference = RasterImage::filled(5, 5, [0.3; 3]);
        let mut redrawn = reference.clone();
        for v in redrawn.data_mut() {
            *v += 0.07;
        }
        let comps = segment_components(&reference, 0.05, 1).unwrap();
        let d = component_diff(&comps[0], &redrawn, &reference).unwrap();
        assert!((d - 0.07).abs() < 1e-12);
        // Acceptance threshold semantics: 0.07 passes a 0.1 gate, 0.15 fails.
        assert!(d < 0.1);
        for v in redrawn.data_mut() {
            *v += 0.08;
        }
        let d = component_diff(&comps[0], &redrawn, &reference).unwrap();
        assert!(d > 0.1);
    }

    #[test]
    fn diff_rejects_empty_mask() {
        let img = RasterImage::filled(4, 4, [0.0; 3]);
        let empty = Component {
            id: 0,
            mask: vec![false; 16],
            area: 0,
            bbox: (0, 0, 0, 0),
            mean_color: [0.0; 3],
            source_level: 0,
        };
        assert!(component_diff(&empty, &img, &img).is_err());
    }

    fn fake_component(id: usize, area: usize) -> Component {
        Component {
            id,
            mask: vec![true; area],
            area,
            bbox: (0, 0, 0, 0),
            mean_color: [0.0; 3],
            source_level: 0,
        }
    }

    #[test]
    fn schedule_sorts_by_area_then_id() {
        let comps = vec![
            fake_component(1, 10),
            fake_component(2, 40),
            fake_component(3, 40),
        ];
        assert_eq!(schedule_components(&comps), vec![2, 3, 1]);
        assert_eq!(schedule_components(&comps[..1]), vec![1]);
        assert_eq!(schedule_components(&[]), Vec::<usize>::new());
    }

    #[test]
    fn no_residual_gives_no_new_components() {
        let img = RasterImage::filled(8, 8, [0.6; 3]);
        let comps = new_components_at_scale(&img, &img, 0.05, 1, 0.05).unwrap();
        assert!(comps.is_empty());
    }

    #[test]
    fn unexplained_square_found_as_one_component() {
        let render = RasterImage::filled(32, 32, [0.2; 3]);
        let level = RasterImage::from_fn(32, 32, |x, y| {
            let v = if (6..26).contains(&x) && (6..26).contains(&y) {
                0.8
            } else {
                0.2
            };
            [v, v, v]
        });
        let comps = new_components_at_scale(&level, &render, 0.05, 16, 0.05).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].area, 400);
        assert_eq!(comps[0].bbox, (6, 6, 25, 25));
    }

    #[test]
    fn isolated_residual_pixels_filtered_by_area() {
        let render = RasterImage::filled(16, 16, [0.5; 3]);
        let mut level = render.clone();
        level.set_pixel(2, 2, [1.0; 3]);
        level.set_pixel(12, 9, [0.0; 3]);
        let comps = new_components_at_scale(&level, &render, 0.05, 5, 0.05).unwrap();
        assert!(comps.is_empty());
    }
}
