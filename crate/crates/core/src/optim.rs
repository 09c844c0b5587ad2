//! Loss terms, the pixel-wise weight map, and the per-scale Adam driver.
//!
//! The self-intersection penalty follows the control-point constraint: for
//! each cubic segment with polygon edges `e1, e2, e3`, the turn direction of
//! `e1 x e2` must agree with the normalized twist `e1 x e3`; disagreement is
//! penalized linearly. Point and color parameters are updated with separate
//! learning rates.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bezier::{ClosedBezierPath, VectorScene};
use crate::geom::Point;
use crate::raster::{RasterImage, CHANNELS};
use crate::render::evaluate_for_optimizer;
use crate::{Error, Result};

/// Smallest weight any pixel can carry; keeps well-fit regions in the loss.
pub const WEIGHT_FLOOR: f64 = 0.1;

/// Per-pixel nonnegative loss weights with mean exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl WeightMap {
    pub fn uniform(width: usize, height: usize) -> Self {
        WeightMap { width, height, data: vec![1.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Weighted mean square error over pixels and channels; the weight of a pixel
/// is broadcast across its channels.
pub fn weighted_mse(a: &RasterImage, b: &RasterImage, weights: &WeightMap) -> Result<f64> {
    if !a.same_dims(b) || a.width() != weights.width || a.height() != weights.height {
        return Err(Error::InvalidInput("weighted_mse dimensions disagree".into()));
    }
    let mut sum = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let w = weights.at(x, y);
            for c in 0..CHANNELS {
                let r = a.get(x, y, c) - b.get(x, y, c);
                sum += w * r * r;
            }
        }
    }
    Ok(sum / (a.width() * a.height() * CHANNELS) as f64)
}

/// Sign with `sign(0) = 0`, unlike `f64::signum`.
#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

const DEGENERATE_EDGE: f64 = 1e-9;

/// Per-segment ingredients of the self-intersection penalty.
/// Returns (d1, d2, n1, n3, e1, e3) or None for degenerate edges.
fn xing_terms(p0: Point, p1: Point, p2: Point, p3: Point) -> (f64, f64, f64, f64, Point, Point) {
    let e1 = p1 - p0;
    let e2 = p2 - p1;
    let e3 = p3 - p2;
    let d1 = 0.5 * (1.0 + sign(e1.cross(e2)));
    let n1 = e1.norm();
    let n3 = e3.norm();
    let d2 = if n1 < DEGENERATE_EDGE || n3 < DEGENERATE_EDGE {
        0.0
    } else {
        e1.cross(e3) / (n1 * n3)
    };
    (d1, d2, n1, n3, e1, e3)
}

/// Self-intersection penalty of a closed path: sum over cubic segments of
/// `d1 * max(0, -d2) + (1 - d1) * max(0, d2)`.
pub fn xing_loss(path: &ClosedBezierPath) -> f64 {
    let mut total = 0.0;
    for seg in path.segments() {
        let (d1, d2, _, _, _, _) = xing_terms(seg.p0, seg.p1, seg.p2, seg.p3);
        total += d1 * (-d2).max(0.0) + (1.0 - d1) * d2.max(0.0);
    }
    total
}

/// Gradients of `xing_loss` with respect to the path's anchors and controls.
/// The turn indicator `d1` is piecewise constant and treated as such.
pub(crate) fn xing_gradients(path: &ClosedBezierPath) -> (Vec<Point>, Vec<(Point, Point)>) {
    let k = path.num_segments();
    let mut anchors = vec![Point::ZERO; k];
    let mut controls = vec![(Point::ZERO, Point::ZERO); k];
    for i in 0..k {
        let seg = path.segment(i);
        let (d1, d2, n1, n3, e1, e3) = xing_terms(seg.p0, seg.p1, seg.p2, seg.p3);
        if n1 < DEGENERATE_EDGE || n3 < DEGENERATE_EDGE {
            continue;
        }
        let dp_dd2 = if d2 > 0.0 {
            1.0 - d1
        } else if d2 < 0.0 {
            -d1
        } else {
            0.0
        };
        if dp_dd2 == 0.0 {
            continue;
        }
        let inv = 1.0 / (n1 * n3);
        let g_e1 = Point::new(e3.y, -e3.x) * inv - e1 * (d2 / (n1 * n1));
        let g_e3 = Point::new(-e1.y, e1.x) * inv - e3 * (d2 / (n3 * n3));
        let g_e1 = g_e1 * dp_dd2;
        let g_e3 = g_e3 * dp_dd2;
        // e1 = p1 - p0, e3 = p3 - p2.
        anchors[i] += -g_e1;
        controls[i].0 += g_e1;
        controls[i].1 += -g_e3;
        anchors[(i + 1) % k] += g_e3;
    }
    (anchors, controls)
}

/// Rebuilds the weight map from the per-pixel squared residual between a
/// render and its target. Weights are proportional to the residual, floored
/// at [`WEIGHT_FLOOR`], and scaled so the mean is exactly one.
pub fn update_weight_map(rendered: &RasterImage, target: &RasterImage) -> Result<WeightMap> {
    if !rendered.same_dims(target) {
        return Err(Error::InvalidInput("weight update dimensions disagree".into()));
    }
    let (w, h) = (rendered.width(), rendered.height());
    let mut raw = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for c in 0..CHANNELS {
                let r = rendered.get(x, y, c) - target.get(x, y, c);
                s += r * r;
            }
            raw[y * w + x] = s / CHANNELS as f64;
        }
    }
    let mean_raw = raw.iter().sum::<f64>() / raw.len() as f64;
    if mean_raw <= 1e-12 {
        return Ok(WeightMap::uniform(w, h));
    }
    for v in &mut raw {
        *v /= mean_raw;
    }
    // Solve for the scale c such that mean(max(floor, c * raw)) = 1; flooring
    // alone would push the mean above one.
    let mean_at = |c: f64| -> f64 {
        raw.iter().map(|&v| (c * v).max(WEIGHT_FLOOR)).sum::<f64>() / raw.len() as f64
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    debug_assert!(mean_at(1.0) >= 1.0 - 1e-12);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = hi;
    let data: Vec<f64> = raw.iter().map(|&v| (c * v).max(WEIGHT_FLOOR)).collect();
    Ok(WeightMap { width: w, height: h, data })
}

/// Settings for one gradient-descent run at a single scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimConfig {
    /// Learning rate for control points, in pixel units.
    pub point_lr: f64,
    /// Learning rate for fill and background colors.
    pub color_lr: f64,
    /// Weight of the self-intersection penalty.
    pub xing_weight: f64,
    /// Gradient steps per scale level.
    pub steps: usize,
    /// Rasterizer softness in pixels.
    pub softness: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            point_lr: 1.0,
            color_lr: 0.01,
            xing_weight: 0.01,
            steps: 300,
            softness: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.point_lr < 0.0 || self.color_lr < 0.0 {
            return Err(Error::InvalidConfig("learning rates must be non-negative".into()));
        }
        if self.xing_weight < 0.0 {
            return Err(Error::InvalidConfig("xing weight must be non-negative".into()));
        }
        if self.softness <= 0.0 {
            return Err(Error::InvalidConfig("softness must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidConfig("adam betas must lie in [0, 1)".into()));
        }
        if self.adam_epsilon <= 0.0 {
            return Err(Error::InvalidConfig("adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Loss components recorded at the start of each optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossSample {
    pub mse: f64,
    pub xing: f64,
    pub total: f64,
}

/// Parameter class, used to pick the learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    PointCoord,
    ColorChannel,
}

/// Flat parameter layout of a scene: per path all anchor coordinates, then
/// all control coordinates, then the fill color; the background color last.
pub fn param_layout(scene: &VectorScene) -> Vec<(ParamKind, usize)> {
    let mut layout = Vec::new();
    for (p, path) in scene.paths.iter().enumerate() {
        let k = path.num_segments();
        layout.extend(std::iter::repeat((ParamKind::PointCoord, p)).take(k * 2 + k * 4));
        layout.extend(std::iter::repeat((ParamKind::ColorChannel, p)).take(CHANNELS));
    }
    layout.extend(std::iter::repeat((ParamKind::ColorChannel, usize::MAX)).take(CHANNELS));
    layout
}

/// Packs scene parameters into a flat vector matching [`param_layout`].
pub fn pack_params(scene: &VectorScene) -> Vec<f64> {
    let mut out = Vec::new();
    for path in &scene.paths {
        for a in path.anchors() {
            out.push(a.x);
            out.push(a.y);
        }
        for (c1, c2) in path.controls() {
            out.push(c1.x);
            out.push(c1.y);
            out.push(c2.x);
            out.push(c2.y);
        }
        out.extend_from_slice(&path.fill_color);
    }
    out.extend_from_slice(&scene.background_color);
    out
}

/// Writes a flat parameter vector back into the scene.
pub fn unpack_params(scene: &mut VectorScene, params: &[f64]) {
    let mut it = params.iter();
    let mut next = || *it.next().expect("parameter vector too short");
    for path in &mut scene.paths {
        let k = path.num_segments();
        for i in 0..k {
            path.anchors_mut()[i] = Point::new(next(), next());
        }
        for i in 0..k {
            path.controls_mut()[i] = (Point::new(next(), next()), Point::new(next(), next()));
        }
        for c in 0..CHANNELS {
            path.fill_color[c] = next();
        }
    }
    for c in 0..CHANNELS {
        scene.background_color[c] = next();
    }
    assert!(it.next().is_none(), "parameter vector too long");
}

/// Packs loss gradients into the same flat layout as [`pack_params`].
pub fn pack_gradients(grads: &crate::render::SceneGradients) -> Vec<f64> {
    let mut out = Vec::new();
    for path in &grads.paths {
        for a in &path.anchors {
            out.push(a.x);
            out.push(a.y);
        }
        for (c1, c2) in &path.controls {
            out.push(c1.x);
            out.push(c1.y);
            out.push(c2.x);
            out.push(c2.y);
        }
        out.extend_from_slice(&path.fill_color);
    }
    out.extend_from_slice(&grads.background);
    out
}

/// Runs `cfg.steps` Adam iterations of the scene against `target`. Colors
/// are clamped to [0,1] after every step; path closure is structural. The
/// returned trace holds the loss at the start of each step.
pub fn optimize_scale(
    scene: &VectorScene,
    target: &RasterImage,
    weights: &WeightMap,
    cfg: &OptimConfig,
) -> Result<(VectorScene, Vec<LossSample>)> {
    let trainable = vec![true; scene.paths.len()];
    optimize_scale_masked(scene, target, weights, cfg, &trainable)
}

/// [`optimize_scale`] with per-path freezing: paths whose flag is false keep
/// their geometry and color but still render and contribute to the loss.
pub fn optimize_scale_masked(
    scene: &VectorScene,
    target: &RasterImage,
    weights: &WeightMap,
    cfg: &OptimConfig,
    trainable: &[bool],
) -> Result<(VectorScene, Vec<LossSample>)> {
    cfg.validate()?;
    if trainable.len() != scene.paths.len() {
        return Err(Error::InvalidInput("trainable mask length mismatch".into()));
    }
    let mut scene = scene.clone();
    let layout = param_layout(&scene);
    let mut params = pack_params(&scene);
    let mut m = vec![0.0f64; params.len()];
    let mut v = vec![0.0f64; params.len()];
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 1..=cfg.steps {
        let (_, mse, xing, grads) =
            evaluate_for_optimizer(&scene, target, weights, cfg.xing_weight, cfg.softness)?;
        trace.push(LossSample { mse, xing, total: mse + cfg.xing_weight * xing });
        let g = pack_gradients(&grads);

        let bias1 = 1.0 - cfg.adam_beta1.powi(step as i32);
        let bias2 = 1.0 - cfg.adam_beta2.powi(step as i32);
        for i in 0..params.len() {
            let (kind, path_idx) = layout[i];
            if path_idx != usize::MAX && !trainable[path_idx] {
                continue;
            }
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            let lr = match kind {
                ParamKind::PointCoord => cfg.point_lr,
                ParamKind::ColorChannel => cfg.color_lr,
            };
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
            if kind == ParamKind::ColorChannel {
                params[i] = params[i].clamp(0.0, 1.0);
            }
        }
        unpack_params(&mut scene, &params);
        debug_assert!(scene.paths.iter().all(|p| {
            p.fill_color.iter().all(|c| (0.0..=1.0).contains(c))
                && p.anchors().iter().all(|a| a.is_finite())
        }));
    }
    Ok((scene, trace))
}

/// Writes a loss trace as CSV with columns `iteration,mse,xing,total`.
pub fn write_loss_trace_csv<P: AsRef<Path>>(path: P, trace: &[LossSample]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "iteration,mse,xing,total")?;
    for (i, s) in trace.iter().enumerate() {
        writeln!(file, "{},{},{},{}", i, s.mse, s.xing, s.total)?;
    }
    Ok(())
}
