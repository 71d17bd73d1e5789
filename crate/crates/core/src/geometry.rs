//! Planar geometry: points, polylines with arc-length parametrization,
//! simple polygons, Frenet projection and line-of-sight visibility polygons.
//!
//! Lateral offsets are positive to the left of the direction of travel.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for boundary membership and degenerate-segment checks.
pub const GEOM_EPS: f64 = 1e-9;

/// Angular jitter applied around obstacle vertices by the visibility sweep.
pub const VERTEX_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("consecutive polyline points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is self-intersecting (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("sensor origin lies inside obstacle {0}")]
    OriginInsideObstacle(usize),
    #[error("invalid parameter {0}: {1}")]
    InvalidParameter(&'static str, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotated +90 degrees.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Point2 {
        let n = self.norm();
        Point2::new(self.x / n, self.y / n)
    }

    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        self + (o - self) * t
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Longitudinal / lateral coordinates relative to a reference polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetCoord {
    pub s: f64,
    pub d: f64,
}

/// Ordered points with cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for i in 1..points.len() {
            let seg = points[i].dist(points[i - 1]);
            if seg <= GEOM_EPS {
                return Err(GeometryError::DuplicatePoint(i - 1, i));
            }
            cumulative.push(cumulative[i - 1] + seg);
        }
        Ok(Self { points, cumulative })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn cumulative_arc_length(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("polyline has points")
    }

    pub fn start(&self) -> Point2 {
        self.points[0]
    }

    pub fn end(&self) -> Point2 {
        *self.points.last().expect("polyline has points")
    }

    /// Index of the segment containing arc length `s` (clamped).
    fn segment_at(&self, s: f64) -> usize {
        let n = self.points.len();
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Point at arc length `s`; extrapolates linearly beyond both ends.
    pub fn point_at(&self, s: f64) -> Point2 {
        let i = self.segment_at(s);
        let a = self.points[i];
        let b = self.points[i + 1];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        a.lerp(b, (s - self.cumulative[i]) / len)
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Point2 {
        let i = self.segment_at(s);
        (self.points[i + 1] - self.points[i]).normalized()
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.tangent_at(s).angle()
    }

    /// Cartesian point at Frenet coordinates (s, d).
    pub fn frenet_to_point(&self, s: f64, d: f64) -> Point2 {
        self.point_at(s) + self.tangent_at(s).perp() * d
    }

    pub fn project(&self, p: Point2) -> FrenetCoord {
        frenet_project(p, self)
    }

    /// Sub-polyline between two arc lengths (clamped to the line).
    pub fn slice(&self, s0: f64, s1: f64) -> Option<Polyline> {
        let s0 = s0.clamp(0.0, self.length());
        let s1 = s1.clamp(0.0, self.length());
        if s1 - s0 <= GEOM_EPS {
            return None;
        }
        let mut pts = vec![self.point_at(s0)];
        for (p, &c) in self.points.iter().zip(&self.cumulative) {
            if c > s0 + GEOM_EPS && c < s1 - GEOM_EPS {
                pts.push(*p);
            }
        }
        pts.push(self.point_at(s1));
        Polyline::new(pts).ok()
    }

    /// Appends `other`, dropping its first point when it coincides with our end.
    pub fn concat(&self, other: &Polyline) -> Polyline {
        let mut pts = self.points.clone();
        let skip = usize::from(other.start().dist(self.end()) <= 1e-6);
        pts.extend_from_slice(&other.points[skip..]);
        Polyline::new(pts).expect("concatenation of valid polylines")
    }

    pub fn reversed(&self) -> Polyline {
        let mut pts = self.points.clone();
        pts.reverse();
        Polyline::new(pts).expect("reversal of valid polyline")
    }

    /// Discrete curvature at arc length `s`, from the circumcircle through
    /// points at `s - h`, `s`, `s + h`.
    pub fn curvature_at(&self, s: f64, h: f64) -> f64 {
        let l = self.length();
        let (s0, s1, s2) = ((s - h).max(0.0), s.clamp(0.0, l), (s + h).min(l));
        if s2 - s0 < 1e-6 {
            return 0.0;
        }
        let (a, b, c) = (self.point_at(s0), self.point_at(s1), self.point_at(s2));
        let area2 = (b - a).cross(c - a).abs();
        let denom = a.dist(b) * b.dist(c) * c.dist(a);
        if denom <= 1e-12 {
            0.0
        } else {
            2.0 * area2 / denom
        }
    }
}

/// Closest-point projection onto a polyline. Ties resolve to the lowest `s`.
pub fn frenet_project(point: Point2, reference: &Polyline) -> FrenetCoord {
    let pts = &reference.points;
    let mut best_dist_sq = f64::INFINITY;
    let mut best = FrenetCoord { s: 0.0, d: 0.0 };
    for i in 0..pts.len() - 1 {
        let a = pts[i];
        let ab = pts[i + 1] - a;
        let len_sq = ab.norm_sq();
        let t = ((point - a).dot(ab) / len_sq).clamp(0.0, 1.0);
        let foot = a + ab * t;
        let offset = point - foot;
        let dist_sq = offset.norm_sq();
        if dist_sq < best_dist_sq - 1e-18 {
            best_dist_sq = dist_sq;
            let sign = if ab.cross(offset) < 0.0 { -1.0 } else { 1.0 };
            best = FrenetCoord {
                s: reference.cumulative[i] + t * len_sq.sqrt(),
                d: sign * dist_sq.sqrt(),
            };
        }
    }
    best
}

/// Resamples at arc lengths `0, step, 2 step, ...` and always keeps the final
/// endpoint. Interior original vertices falling exactly on a sample are kept
/// as that sample.
pub fn resample_polyline(line: &Polyline, step: f64) -> Result<Polyline, GeometryError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(GeometryError::InvalidParameter("step", format!("{step}")));
    }
    let total = line.length();
    let n = (total / step + 1e-9).floor() as usize;
    let mut pts = Vec::with_capacity(n + 2);
    for k in 0..=n {
        pts.push(line.point_at(k as f64 * step));
    }
    if total - n as f64 * step > 1e-9 {
        pts.push(line.end());
    } else if let Some(last) = pts.last_mut() {
        *last = line.end();
    }
    Polyline::new(pts)
}

/// Simple polygon with counter-clockwise vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Validates and normalizes orientation to counter-clockwise.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        if vertices.len() > 3 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        let area = signed_area(&vertices);
        if area.abs() <= GEOM_EPS {
            return Err(GeometryError::ZeroArea);
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle centred at `center`, rotated by `heading`.
    pub fn oriented_rect(center: Point2, heading: f64, length: f64, width: f64) -> Self {
        let fwd = Point2::from_polar(1.0, heading);
        let left = fwd.perp();
        let (hl, hw) = (length / 2.0, width / 2.0);
        let vertices = vec![
            center - fwd * hl - left * hw,
            center + fwd * hl - left * hw,
            center + fwd * hl + left * hw,
            center - fwd * hl + left * hw,
        ];
        Self { vertices }
    }

    /// Caller guarantees a simple CCW ring with at least three vertices.
    pub(crate) fn from_ccw_unchecked(vertices: Vec<Point2>) -> Self {
        debug_assert!(vertices.len() >= 3);
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn contains(&self, p: Point2) -> bool {
        polygon_contains(self, p)
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len() as f64;
        self.vertices.iter().fold(Point2::default(), |acc, &v| acc + v) * (1.0 / n)
    }

    /// Uniform scaling about the vertex centroid.
    pub fn scaled(&self, factor: f64) -> Polygon {
        let c = self.centroid();
        Polygon {
            vertices: self.vertices.iter().map(|&v| c + (v - c) * factor).collect(),
        }
    }

    /// Euclidean distance from `p` to the polygon (0 when inside).
    pub fn distance_to(&self, p: Point2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn signed_area(v: &[Point2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>() / 2.0
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq <= 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    point_segment_distance(p, a, b) <= GEOM_EPS
}

/// Closed segment intersection test (touching counts).
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(c, a, b) || on_segment(d, a, b) || on_segment(a, c, d) || on_segment(b, c, d)
}

/// Parameter `t` along `a -> b` where it crosses segment `c -> d`, if it does.
/// Parallel overlaps report no crossing.
pub fn segment_crossing(a: Point2, b: Point2, c: Point2, d: Point2) -> Option<(f64, f64)> {
    let r = b - a;
    let s = d - c;
    let denom = r.cross(s);
    if denom.abs() <= 1e-15 {
        return None;
    }
    let ac = c - a;
    let t = ac.cross(s) / denom;
    let u = ac.cross(r) / denom;
    if (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
        Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
    } else {
        None
    }
}

/// Point-in-polygon with the boundary counted as inside.
pub fn polygon_contains(poly: &Polygon, point: Point2) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if on_segment(point, a, b) {
            return true;
        }
        if (a.y > point.y) != (b.y > point.y) {
            let x = a.x + (point.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if point.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Star-shaped visible region around a sensor origin.
///
/// Vertices are stored in strictly increasing polar angle about the origin,
/// which allows logarithmic-time containment queries.
#[derive(Debug, Clone)]
pub struct VisibilityPolygon {
    origin: Point2,
    sensor_range: f64,
    polygon: Polygon,
    angles: Vec<f64>,
}

impl VisibilityPolygon {
    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn sensor_range(&self) -> f64 {
        self.sensor_range
    }

    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }

    pub fn into_polygon(self) -> Polygon {
        self.polygon
    }

    /// Containment using the angular structure; boundary counts as inside.
    pub fn contains(&self, p: Point2) -> bool {
        let rel = p - self.origin;
        let r_sq = rel.norm_sq();
        if r_sq <= GEOM_EPS * GEOM_EPS {
            return true;
        }
        if r_sq > (self.sensor_range + 1e-6).powi(2) {
            return false;
        }
        let theta = rel.angle();
        let n = self.angles.len();
        // wedge [angles[i], angles[i+1]) with wraparound
        let idx = self.angles.partition_point(|&a| a <= theta);
        let (i, j) = if idx == 0 || idx == n { (n - 1, 0) } else { (idx - 1, idx) };
        let verts = self.polygon.vertices();
        let a = verts[i] - self.origin;
        let b = verts[j] - self.origin;
        // inside when on the origin side of chord a->b (CCW ring)
        let side = (b - a).cross(rel - a);
        if side >= -1e-9 * (b - a).norm().max(1.0) {
            return true;
        }
        on_segment(rel, a, b)
    }
}

/// Nearest hit distance along a ray among obstacle edges, capped at `max_range`.
fn cast_ray(origin: Point2, dir: Point2, obstacles: &[Polygon], max_range: f64) -> f64 {
    let far = origin + dir * max_range;
    let mut best = max_range;
    for obs in obstacles {
        for (a, b) in obs.edges() {
            if let Some((t, _)) = segment_crossing(origin, far, a, b) {
                let dist = t * max_range;
                if dist < best {
                    best = dist;
                }
            }
        }
    }
    best
}

/// Angular-sweep visibility polygon.
///
/// Rays are cast at every obstacle vertex (exactly and at +/- jitter) and at a
/// uniform fill spacing of `angular_resolution`. Obstacles entirely beyond the
/// sensor range are ignored.
pub fn build_visibility_polygon(
    origin: Point2,
    obstacles: &[Polygon],
    sensor_range: f64,
    angular_resolution: f64,
) -> Result<VisibilityPolygon, GeometryError> {
    if !(sensor_range > 0.0 && sensor_range.is_finite()) {
        return Err(GeometryError::InvalidParameter("sensor_range", format!("{sensor_range}")));
    }
    if !(angular_resolution > 0.0 && angular_resolution.is_finite()) {
        return Err(GeometryError::InvalidParameter(
            "angular_resolution",
            format!("{angular_resolution}"),
        ));
    }
    if let Some(i) = obstacles.iter().position(|o| point_strictly_inside(o, origin)) {
        return Err(GeometryError::OriginInsideObstacle(i));
    }
    let relevant: Vec<Polygon> = obstacles
        .iter()
        .filter(|o| o.distance_to(origin) <= sensor_range)
        .cloned()
        .collect();

    let fill = ((2.0 * PI / angular_resolution).ceil() as usize).max(3);
    let mut angles: Vec<f64> = (0..fill)
        .map(|k| wrap_angle(-PI + k as f64 * 2.0 * PI / fill as f64))
        .collect();
    for obs in &relevant {
        for &v in obs.vertices() {
            let rel = v - origin;
            if rel.norm() > sensor_range || rel.norm() <= GEOM_EPS {
                continue;
            }
            let a = rel.angle();
            angles.extend([
                wrap_angle(a - VERTEX_JITTER),
                a,
                wrap_angle(a + VERTEX_JITTER),
            ]);
        }
    }
    angles.sort_by(|a, b| a.total_cmp(b));
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if angles.len() > 1 && (angles[0] + 2.0 * PI - angles[angles.len() - 1]).abs() < 1e-12 {
        angles.pop();
    }

    let vertices: Vec<Point2> = angles
        .iter()
        .map(|&a| {
            let dir = Point2::from_polar(1.0, a);
            origin + dir * cast_ray(origin, dir, &relevant, sensor_range)
        })
        .collect();
    Ok(VisibilityPolygon {
        origin,
        sensor_range,
        polygon: Polygon::from_ccw_unchecked(vertices),
        angles,
    })
}

fn point_strictly_inside(poly: &Polygon, p: Point2) -> bool {
    polygon_contains(poly, p) && !poly.edges().any(|(a, b)| on_segment(p, a, b))
}

/// Wraps into [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn straight() -> Polyline {
        Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)]).unwrap()
    }

    fn unit_square() -> Polygon {
        Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn projects_onto_straight_reference() {
        let r = straight();
        let c = frenet_project(Point2::new(5.0, 0.0), &r);
        assert_abs_diff_eq!(c.s, 5.0);
        assert_abs_diff_eq!(c.d, 0.0);
        let c = frenet_project(Point2::new(5.0, 2.0), &r);
        assert_abs_diff_eq!(c.s, 5.0);
        assert_abs_diff_eq!(c.d, 2.0);
        let c = frenet_project(Point2::new(5.0, -2.0), &r);
        assert_abs_diff_eq!(c.d, -2.0);
    }

    #[test]
    fn projection_clamps_to_endpoint() {
        // exhaustive segment-wise minimisation over a dense sampling
        let r = straight();
        let p = Point2::new(12.0, 1.0);
        let (mut best_s, mut best_d) = (0.0, f64::INFINITY);
        for k in 0..=100_000 {
            let s = k as f64 * 1e-4;
            let d = p.dist(r.point_at(s));
            if d < best_d {
                best_d = d;
                best_s = s;
            }
        }
        let c = frenet_project(p, &r);
        assert_abs_diff_eq!(c.s, best_s, epsilon = 1e-9);
        assert_abs_diff_eq!(c.d, best_d, epsilon = 1e-9);
        assert_abs_diff_eq!(c.d, 5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn projection_tie_prefers_lowest_s() {
        // V shape: point on the bisector is equidistant to both legs
        let r = Polyline::new(vec![
            Point2::new(-10.0, 10.0),
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 10.0),
        ])
        .unwrap();
        let c = frenet_project(Point2::new(0.0, 5.0), &r);
        assert!(c.s < r.length() / 2.0);
    }

    #[test]
    fn contains_with_boundary() {
        let sq = unit_square();
        assert!(polygon_contains(&sq, Point2::new(0.5, 0.5)));
        assert!(!polygon_contains(&sq, Point2::new(2.0, 2.0)));
        assert!(polygon_contains(&sq, Point2::new(1.0, 0.5)));
        assert!(polygon_contains(&sq, Point2::new(0.0, 0.0)));
    }

    #[test]
    fn polygon_rejects_bowtie_and_reorients() {
        let bowtie = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(3.0, 3.0),
            Point2::new(3.0, 0.0),
            Point2::new(0.0, 1.0),
        ]);
        assert!(matches!(bowtie, Err(GeometryError::SelfIntersecting(_, _))));
        let cw = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(signed_area(cw.vertices()) > 0.0);
    }

    #[test]
    fn resample_examples() {
        let r = straight();
        let a = resample_polyline(&r, 2.0).unwrap();
        assert_eq!(a.cumulative_arc_length(), &[0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let b = resample_polyline(&r, 3.0).unwrap();
        assert_eq!(b.cumulative_arc_length(), &[0.0, 3.0, 6.0, 9.0, 10.0]);
        assert!(resample_polyline(&r, 0.0).is_err());
    }

    #[test]
    fn resample_keeps_corner() {
        let l = Polyline::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(10.0, 10.0),
        ])
        .unwrap();
        // oracle: cumulative segment sums 0, 10, 20 -> samples at 0,5,10,15,20
        let seg_sums: Vec<f64> = l
            .points()
            .windows(2)
            .scan(0.0, |acc, w| {
                *acc += w[0].dist(w[1]);
                Some(*acc)
            })
            .collect();
        assert_eq!(seg_sums, vec![10.0, 20.0]);
        let r = resample_polyline(&l, 5.0).unwrap();
        assert_eq!(r.points().len(), 5);
        assert_abs_diff_eq!(r.points()[2].x, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.points()[2].y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unobstructed_visibility_is_regular_polygon() {
        let vis =
            build_visibility_polygon(Point2::default(), &[], 50.0, 1f64.to_radians()).unwrap();
        let v = vis.polygon().vertices();
        assert_eq!(v.len(), 360);
        for p in v {
            assert_abs_diff_eq!(p.norm(), 50.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn far_obstacle_is_ignored() {
        let far = Polygon::oriented_rect(Point2::new(100.0, 0.0), 0.0, 2.0, 2.0);
        let a = build_visibility_polygon(Point2::default(), &[], 50.0, 1f64.to_radians()).unwrap();
        let b =
            build_visibility_polygon(Point2::default(), &[far], 50.0, 1f64.to_radians()).unwrap();
        assert_eq!(a.polygon(), b.polygon());
    }

    #[test]
    fn square_casts_shadow() {
        let sq = Polygon::oriented_rect(Point2::new(10.0, 0.0), 0.0, 1.0, 1.0);
        let vis =
            build_visibility_polygon(Point2::default(), &[sq], 50.0, 1f64.to_radians()).unwrap();
        assert!(!vis.contains(Point2::new(20.0, 0.0)));
        assert!(vis.contains(Point2::new(0.0, 20.0)));
        assert!(!polygon_contains(vis.polygon(), Point2::new(20.0, 0.0)));
        assert!(polygon_contains(vis.polygon(), Point2::new(0.0, 20.0)));
    }

    #[test]
    fn origin_inside_obstacle_is_rejected() {
        let sq = Polygon::oriented_rect(Point2::default(), 0.0, 2.0, 2.0);
        let err = build_visibility_polygon(Point2::default(), &[sq], 50.0, 0.1).unwrap_err();
        assert_eq!(err, GeometryError::OriginInsideObstacle(0));
    }

    #[test]
    fn curvature_of_circle_arc() {
        let r = 20.0;
        let pts: Vec<Point2> = (0..=90)
            .map(|k| Point2::from_polar(r, (k as f64).to_radians()))
            .collect();
        let arc = Polyline::new(pts).unwrap();
        assert_abs_diff_eq!(arc.curvature_at(arc.length() / 2.0, 2.0), 1.0 / r, epsilon = 1e-3);
        assert_abs_diff_eq!(straight().curvature_at(5.0, 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn frenet_round_trip_on_straight_reference(
            x0 in -100.0..100.0f64,
            y0 in -100.0..100.0f64,
            heading in -3.1..3.1f64,
            len in 1.0..200.0f64,
            u in 0.0..1.0f64,
            d in -20.0..20.0f64,
        ) {
            let a = Point2::new(x0, y0);
            let b = a + Point2::from_polar(len, heading);
            let line = Polyline::new(vec![a, b]).unwrap();
            let s = u * line.length();
            let c = frenet_project(line.frenet_to_point(s, d), &line);
            prop_assert!((c.s - s).abs() <= 1e-9, "s {} vs {s}", c.s);
            prop_assert!((c.d - d).abs() <= 1e-9, "d {} vs {d}", c.d);
        }

        #[test]
        fn visibility_vertices_are_in_range_and_unobstructed(
            boxes in proptest::collection::vec((-40.0..40.0f64, -40.0..40.0f64, 0.0..3.1f64, 1.0..8.0f64, 1.0..8.0f64), 0..6),
        ) {
            let obstacles: Vec<Polygon> = boxes
                .iter()
                .map(|&(x, y, h, l, w)| Polygon::oriented_rect(Point2::new(x, y), h, l, w))
                .filter(|p| p.distance_to(Point2::default()) > 0.5 && !p.contains(Point2::default()))
                .collect();
            let vis = build_visibility_polygon(Point2::default(), &obstacles, 50.0, 1f64.to_radians()).unwrap();
            for &v in vis.polygon().vertices() {
                prop_assert!(v.norm() <= 50.0 + 1e-9);
                // pull the ray end slightly inwards so a vertex lying on an
                // obstacle boundary does not count as crossing it
                let end = v * 0.999;
                for o in &obstacles {
                    for (a, b) in o.edges() {
                        prop_assert!(!segments_intersect(Point2::default(), end, a, b), "ray to {v:?} is blocked");
                    }
                }
            }
        }
    }
}
