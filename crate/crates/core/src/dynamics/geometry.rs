//! Planar geometry shared by the simulator, the reward and the generator:
//! oriented boxes, convex separation, signed road-edge distance and route
//! projection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in the world frame, meters.
pub type Point = [f64; 2];

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("road edge set is empty")]
    EmptyEdges,
    #[error("polyline needs at least 2 vertices, got {0}")]
    DegeneratePolyline(usize),
}

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

/// Rotates a world-frame offset into a frame with the given heading.
#[inline]
pub fn to_local(offset: Point, heading: f64) -> Point {
    let (s, c) = heading.sin_cos();
    [c * offset[0] + s * offset[1], -s * offset[0] + c * offset[1]]
}

/// Closest point parameter `t ∈ [0, 1]` on segment `a→b` and the squared distance.
#[inline]
fn closest_on_segment(p: Point, a: Point, b: Point) -> (f64, f64) {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0] - p[0], a[1] + t * ab[1] - p[1]];
    (t, dot(q, q))
}

/// A rectangle with a heading, described by its center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, heading: f64, length: f64, width: f64) -> Self {
        Self { cx, cy, heading, length, width }
    }

    pub fn center(&self) -> Point {
        [self.cx, self.cy]
    }

    pub fn is_finite(&self) -> bool {
        self.cx.is_finite()
            && self.cy.is_finite()
            && self.heading.is_finite()
            && self.length.is_finite()
            && self.width.is_finite()
    }

    /// Corners in the order front-left, front-right, rear-right, rear-left.
    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = self.heading.sin_cos();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let at = |lon: f64, lat: f64| [self.cx + lon * c - lat * s, self.cy + lon * s + lat * c];
        [at(hl, hw), at(hl, -hw), at(-hl, -hw), at(-hl, hw)]
    }

    /// Whether `p` lies inside or on the boundary.
    pub fn contains(&self, p: Point) -> bool {
        let local = to_local(sub(p, self.center()), self.heading);
        local[0].abs() <= 0.5 * self.length && local[1].abs() <= 0.5 * self.width
    }

    fn axes(&self) -> [Point; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    fn overlaps(&self, other: &OrientedBox) -> bool {
        let ca = self.corners();
        let cb = other.corners();
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (amin, amax) = project_extent(&ca, axis);
            let (bmin, bmax) = project_extent(&cb, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }
}

fn project_extent(corners: &[Point; 4], axis: Point) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
        let v = dot(p, axis);
        (lo.min(v), hi.max(v))
    })
}

/// Minimum Euclidean distance between two boxes; 0 when they touch or overlap.
pub fn min_separation(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a.overlaps(b) {
        return 0.0;
    }
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for (pts, poly) in [(&ca, &cb), (&cb, &ca)] {
        for &p in pts.iter() {
            for i in 0..4 {
                let (_, d2) = closest_on_segment(p, poly[i], poly[(i + 1) % 4]);
                best = best.min(d2);
            }
        }
    }
    best.sqrt()
}

/// A polyline with cached cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<Point>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::DegeneratePolyline(points.len()));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            acc += distance(w[0], w[1]);
            cumulative.push(acc);
        }
        Ok(Self { points, cumulative })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Arc length of the closest point on the polyline; ties resolve to the
    /// earliest segment.
    pub fn project(&self, p: Point) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (i, w) in self.points.windows(2).enumerate() {
            let (t, d2) = closest_on_segment(p, w[0], w[1]);
            if d2 < best.0 {
                let seg = self.cumulative[i + 1] - self.cumulative[i];
                best = (d2, self.cumulative[i] + t * seg);
            }
        }
        best.1
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => return self.points[i],
            Err(i) => i.clamp(1, self.points.len() - 1),
        };
        let (a, b) = (self.points[i - 1], self.points[i]);
        let seg = self.cumulative[i] - self.cumulative[i - 1];
        let t = if seg > 0.0 { (s - self.cumulative[i - 1]) / seg } else { 0.0 };
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Unit tangent direction at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let i = self
            .cumulative
            .partition_point(|&c| c <= s)
            .clamp(1, self.points.len() - 1);
        let d = sub(self.points[i], self.points[i - 1]);
        d[1].atan2(d[0])
    }
}

/// Arc length from the route start to the point on `route` closest to `point`.
pub fn project_onto_route(point: Point, route: &[Point]) -> Result<f64, GeometryError> {
    Ok(Polyline::new(route.to_vec())?.project(point))
}

/// Signed distance from a point to a set of road-edge polylines.
///
/// Every edge polyline keeps the drivable surface on its left. The result is
/// negative on-road, positive off-road, with magnitude equal to the distance
/// to the nearest edge.
pub fn signed_distance_point(p: Point, edges: &[Vec<Point>]) -> Result<f64, GeometryError> {
    let mut best_d2 = f64::INFINITY;
    let mut best: Option<(usize, usize, f64)> = None;
    for (e, line) in edges.iter().enumerate() {
        for i in 0..line.len().saturating_sub(1) {
            let (t, d2) = closest_on_segment(p, line[i], line[i + 1]);
            if d2 < best_d2 {
                best_d2 = d2;
                best = Some((e, i, t));
            }
        }
    }
    let (e, i, t) = best.ok_or(GeometryError::EmptyEdges)?;
    let line = &edges[e];
    let right_normal = |k: usize| {
        let d = sub(line[k + 1], line[k]);
        let n = d[0].hypot(d[1]).max(f64::MIN_POSITIVE);
        [d[1] / n, -d[0] / n]
    };
    // Off-road direction at the nearest feature; vertices shared by two
    // segments use the summed normals so convex and reflex corners agree.
    let (anchor, normal) = if t <= 0.0 && i > 0 {
        let (n0, n1) = (right_normal(i - 1), right_normal(i));
        (line[i], [n0[0] + n1[0], n0[1] + n1[1]])
    } else if t >= 1.0 && i + 2 < line.len() {
        let (n0, n1) = (right_normal(i), right_normal(i + 1));
        (line[i + 1], [n0[0] + n1[0], n0[1] + n1[1]])
    } else {
        (line[i], right_normal(i))
    };
    let d = best_d2.sqrt();
    Ok(if dot(sub(p, anchor), normal) > 0.0 { d } else { -d })
}

/// Signed distance of the box corner closest to leaving the drivable region.
pub fn signed_distance_to_road_edge(
    bx: &OrientedBox,
    edges: &[Vec<Point>],
) -> Result<f64, GeometryError> {
    if edges.iter().all(|l| l.len() < 2) {
        return Err(GeometryError::EmptyEdges);
    }
    let mut worst = f64::NEG_INFINITY;
    for c in bx.corners() {
        worst = worst.max(signed_distance_point(c, edges)?);
    }
    Ok(worst)
}
