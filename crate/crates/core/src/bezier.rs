//! Closed cubic Bezier path geometry: evaluation, initialization from
//! segmented components, subdivision refinement, flattening, and signed
//! distance.
//!
//! A closed path stores one anchor per segment plus two free control points;
//! segment `i` runs from `anchors[i]` to `anchors[(i+1) % k]`. Sharing the
//! anchors makes a closure violation unrepresentable.

use crate::segmentation::Component;
use crate::{Color, Error, Point, Result};

/// Four control points of one cubic segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicSegment {
    pub p0: Point,
    pub p1: Point,
    pub p2: Point,
    pub p3: Point,
}

impl CubicSegment {
    pub fn new(p0: Point, p1: Point, p2: Point, p3: Point) -> Self {
        CubicSegment { p0, p1, p2, p3 }
    }

    pub fn chord_length(&self) -> f64 {
        (self.p3 - self.p0).norm()
    }
}

/// Degree-3 Bernstein basis at `t`.
#[inline]
pub fn bernstein3(t: f64) -> [f64; 4] {
    let u = 1.0 - t;
    [u * u * u, 3.0 * t * u * u, 3.0 * t * t * u, t * t * t]
}

/// Evaluates a cubic segment at `t` in [0,1].
pub fn eval_cubic(segment: &CubicSegment, t: f64) -> Result<Point> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("curve parameter {t} outside [0,1]")));
    }
    let w = bernstein3(t);
    Ok(segment.p0 * w[0] + segment.p1 * w[1] + segment.p2 * w[2] + segment.p3 * w[3])
}

/// Closed chain of cubic segments with a flat fill color.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedBezierPath {
    /// On-curve point shared by segments `i-1` and `i`.
    anchors: Vec<Point>,
    /// Free control pair of segment `i`.
    controls: Vec<(Point, Point)>,
    pub fill_color: Color,
}

impl ClosedBezierPath {
    pub fn new(anchors: Vec<Point>, controls: Vec<(Point, Point)>, fill_color: Color) -> Result<Self> {
        if anchors.len() < 2 || anchors.len() != controls.len() {
            return Err(Error::InvalidInput(format!(
                "closed path needs k >= 2 segments with matching anchors/controls, got {}/{}",
                anchors.len(),
                controls.len()
            )));
        }
        let finite = anchors.iter().all(|p| p.is_finite())
            && controls.iter().all(|(a, b)| a.is_finite() && b.is_finite());
        if !finite {
            return Err(Error::InvalidInput("path control points must be finite".into()));
        }
        Ok(ClosedBezierPath { anchors, controls, fill_color })
    }

    /// Number of cubic segments.
    pub fn num_segments(&self) -> usize {
        self.anchors.len()
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    pub fn controls(&self) -> &[(Point, Point)] {
        &self.controls
    }

    pub fn anchors_mut(&mut self) -> &mut [Point] {
        &mut self.anchors
    }

    pub fn controls_mut(&mut self) -> &mut [(Point, Point)] {
        &mut self.controls
    }

    /// Materializes segment `i`; its endpoints are the shared anchors.
    pub fn segment(&self, i: usize) -> CubicSegment {
        let k = self.num_segments();
        CubicSegment::new(
            self.anchors[i],
            self.controls[i].0,
            self.controls[i].1,
            self.anchors[(i + 1) % k],
        )
    }

    pub fn segments(&self) -> impl Iterator<Item = CubicSegment> + '_ {
        (0..self.num_segments()).map(|i| self.segment(i))
    }
}

/// Ordered list of paths over a background color; later paths paint over
/// earlier ones.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorScene {
    pub background_color: Color,
    pub paths: Vec<ClosedBezierPath>,
}

impl VectorScene {
    pub fn new(background_color: Color) -> Self {
        VectorScene { background_color, paths: Vec::new() }
    }
}

/// Fits an axis-aligned ellipse to a component's mask (centroid plus second
/// moments) and samples it into `k` cubic arcs. Semi-axes are clamped to at
/// least one pixel. Fill color is the component mean.
pub fn init_path_for_component(component: &Component, k: usize, width: usize) -> Result<ClosedBezierPath> {
    if k < 2 {
        return Err(Error::InvalidInput("paths need at least 2 segments".into()));
    }
    if component.area == 0 {
        return Err(Error::InvalidInput("cannot fit a path to an empty component".into()));
    }
    let mut cx = 0.0;
    let mut cy = 0.0;
    for (idx, inside) in component.mask.iter().enumerate() {
        if *inside {
            cx += (idx % width) as f64 + 0.5;
            cy += (idx / width) as f64 + 0.5;
        }
    }
    let n = component.area as f64;
    cx /= n;
    cy /= n;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (idx, inside) in component.mask.iter().enumerate() {
        if *inside {
            let dx = (idx % width) as f64 + 0.5 - cx;
            let dy = (idx / width) as f64 + 0.5 - cy;
            var_x += dx * dx;
            var_y += dy * dy;
        }
    }
    // A solid ellipse with semi-axis a has second moment a^2/4 along that axis.
    let a = (2.0 * (var_x / n).sqrt()).max(1.0);
    let b = (2.0 * (var_y / n).sqrt()).max(1.0);
    Ok(ellipse_path(Point::new(cx, cy), a, b, k, component.mean_color))
}

/// Samples an axis-aligned ellipse into `k` cubic arcs using the standard
/// circle approximation with tangent handles of length `(4/3) tan(pi/2k)`.
pub fn ellipse_path(center: Point, a: f64, b: f64, k: usize, fill_color: Color) -> ClosedBezierPath {
    let step = std::f64::consts::TAU / k as f64;
    let handle = 4.0 / 3.0 * (step / 4.0).tan();
    let mut anchors = Vec::with_capacity(k);
    let mut tangents = Vec::with_capacity(k);
    for i in 0..k {
        let phi = step * i as f64;
        anchors.push(center + Point::new(a * phi.cos(), b * phi.sin()));
        tangents.push(Point::new(-a * phi.sin(), b * phi.cos()));
    }
    let mut controls = Vec::with_capacity(k);
    for i in 0..k {
        let j = (i + 1) % k;
        controls.push((anchors[i] + tangents[i] * handle, anchors[j] - tangents[j] * handle));
    }
    ClosedBezierPath::new(anchors, controls, fill_color).expect("ellipse construction is valid")
}

/// Splits the longest segment (by chord length, ties to the lowest index) at
/// t = 0.5 by de Casteljau subdivision. The result has one more segment and
/// identical geometry.
pub fn refine_path(path: &ClosedBezierPath) -> ClosedBezierPath {
    let k = path.num_segments();
    let mut longest = 0usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..k {
        let len = path.segment(i).chord_length();
        if len > best {
            best = len;
            longest = i;
        }
    }
    let seg = path.segment(longest);
    // de Casteljau at t = 0.5.
    let mid = |a: Point, b: Point| (a + b) * 0.5;
    let l1 = mid(seg.p0, seg.p1);
    let t = mid(seg.p1, seg.p2);
    let r2 = mid(seg.p2, seg.p3);
    let l2 = mid(l1, t);
    let r1 = mid(t, r2);
    let m = mid(l2, r1);

    let mut anchors = path.anchors().to_vec();
    let mut controls = path.controls().to_vec();
    controls[longest] = (l1, l2);
    anchors.insert(longest + 1, m);
    controls.insert(longest + 1, (r1, r2));
    ClosedBezierPath::new(anchors, controls, path.fill_color).expect("refinement preserves validity")
}

/// Uniform-t polyline approximation: `samples_per_segment` vertices per
/// segment, `k * n` vertices total, implicitly closed. Vertex `i*n` is the
/// shared anchor of segment `i` exactly.
pub fn flatten_path(path: &ClosedBezierPath, samples_per_segment: usize) -> Result<Vec<Point>> {
    if samples_per_segment < 2 {
        return Err(Error::InvalidInput("need at least 2 samples per segment".into()));
    }
    let n = samples_per_segment;
    let mut verts = Vec::with_capacity(path.num_segments() * n);
    for i in 0..path.num_segments() {
        let seg = path.segment(i);
        verts.push(seg.p0);
        for j in 1..n {
            let t = j as f64 / n as f64;
            let w = bernstein3(t);
            verts.push(seg.p0 * w[0] + seg.p1 * w[1] + seg.p2 * w[2] + seg.p3 * w[3]);
        }
    }
    Ok(verts)
}

/// Distance from `point` to the closed polyline `verts`, and the index of the
/// nearest edge with its projection parameter.
pub(crate) fn polyline_distance(verts: &[Point], point: Point) -> (f64, usize, f64) {
    let mut best = f64::INFINITY;
    let mut best_edge = 0usize;
    let mut best_u = 0.0f64;
    for i in 0..verts.len() {
        let a = verts[i];
        let b = verts[(i + 1) % verts.len()];
        let e = b - a;
        let len2 = e.dot(e);
        let u = if len2 > 0.0 {
            ((point - a).dot(e) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let h = a + e * u;
        let d = (point - h).norm();
        if d < best {
            best = d;
            best_edge = i;
            best_u = u;
        }
    }
    (best, best_edge, best_u)
}

/// Even-odd inside test against the closed polyline.
pub(crate) fn polyline_contains(verts: &[Point], point: Point) -> bool {
    let mut inside = false;
    for i in 0..verts.len() {
        let a = verts[i];
        let b = verts[(i + 1) % verts.len()];
        if (a.y > point.y) != (b.y > point.y) {
            let x_cross = a.x + (point.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if point.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Signed distance to the path's flattened polyline: negative inside (by the
/// even-odd rule), positive outside.
pub fn signed_distance(path: &ClosedBezierPath, point: Point, samples_per_segment: usize) -> Result<f64> {
    if samples_per_segment < 8 {
        return Err(Error::InvalidInput("signed distance needs at least 8 samples per segment".into()));
    }
    let verts = flatten_path(path, samples_per_segment)?;
    let (d, _, _) = polyline_distance(&verts, point);
    Ok(if polyline_contains(&verts, point) { -d } else { d })
}
