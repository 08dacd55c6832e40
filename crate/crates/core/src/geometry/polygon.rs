//! Polygonal domains and the quadrilateral labeling used by the mapper.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::GeometryError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

impl From<Point> for Complex64 {
    fn from(p: Point) -> Self {
        Complex64::new(p.x, p.y)
    }
}

impl From<Complex64> for Point {
    fn from(z: Complex64) -> Self {
        Point { x: z.re, y: z.im }
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// A simple closed polygon with counterclockwise vertices.
///
/// Interior angle fractions `alpha_k` (interior angle / pi) are derived from
/// the vertex geometry at construction; for a simple CCW polygon the exterior
/// turns sum to 2 pi, i.e. `sum(1 - alpha_k) = 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
    angle_fractions: Vec<f64>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices { n });
        }
        if shoelace(&vertices) <= 0.0 {
            return Err(GeometryError::NotCounterClockwise);
        }
        if is_self_intersecting(&vertices) {
            return Err(GeometryError::SelfIntersecting);
        }

        let mut fractions = Vec::with_capacity(n);
        for k in 0..n {
            let prev = vertices[(k + n - 1) % n];
            let cur = vertices[k];
            let next = vertices[(k + 1) % n];
            let (ex, ey) = (cur.x - prev.x, cur.y - prev.y);
            let (fx, fy) = (next.x - cur.x, next.y - cur.y);
            let turn = (ex * fy - ey * fx).atan2(ex * fx + ey * fy);
            let alpha = 1.0 - turn / std::f64::consts::PI;
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(GeometryError::DegenerateAngle { vertex: k, alpha });
            }
            fractions.push(alpha);
        }
        let turn_sum: f64 = fractions.iter().map(|a| 1.0 - a).sum();
        if (turn_sum - 2.0).abs() > 1e-9 {
            return Err(GeometryError::AngleSum { sum: turn_sum });
        }

        Ok(Polygon {
            vertices,
            angle_fractions: fractions,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Interior angle fractions in (0, 2), aligned with `vertices()`.
    pub fn angle_fractions(&self) -> &[f64] {
        &self.angle_fractions
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.dist(hi)
    }

    /// Boundary-inclusive point membership (even-odd ray cast; points within
    /// `1e-12 * diameter` of an edge count as inside).
    pub fn contains(&self, p: Point) -> bool {
        let eps = 1e-12 * self.diameter().max(1.0);
        if self.distance_to_boundary(p) <= eps {
            return true;
        }
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (vi, vj) = (self.vertices[i], self.vertices[j]);
            if (vi.y > p.y) != (vj.y > p.y) {
                let x_cross = vi.x + (p.y - vi.y) / (vj.y - vi.y) * (vj.x - vi.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Euclidean distance from `p` to the polygon boundary.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            best = best.min(point_segment_distance(p, a, b));
        }
        best
    }
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        acc += v[i].x * v[j].y - v[j].x * v[i].y;
    }
    0.5 * acc
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (abx, aby) = (b.x - a.x, b.y - a.y);
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0)
    };
    p.dist(Point::new(a.x + t * abx, a.y + t * aby))
}

fn segments_properly_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    false
}

fn is_self_intersecting(v: &[Point]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            // skip adjacent edges (they share an endpoint)
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            if segments_properly_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// The free-function form of [`Polygon::area`].
pub fn polygon_area(p: &Polygon) -> f64 {
    p.area()
}

/// A polygon with four marked corner vertices (in CCW order) that the
/// conformal map sends to the rectangle corners. Rotating the labels by one
/// position swaps the side pairing and hence inverts the conformal module.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Quadrilateral {
    pub polygon: Polygon,
    corners: [usize; 4],
}

impl Quadrilateral {
    pub fn new(polygon: Polygon, corners: [usize; 4]) -> Result<Self, GeometryError> {
        let n = polygon.len();
        for &c in &corners {
            if c >= n {
                return Err(GeometryError::CornerOutOfRange { corner: c, n });
            }
        }
        // distinct and cyclically increasing: rotating so the smallest index
        // leads must give a strictly increasing sequence
        let min_pos = (0..4).min_by_key(|&i| corners[i]).unwrap();
        let rotated: Vec<usize> = (0..4).map(|i| corners[(min_pos + i) % 4]).collect();
        if !(rotated[0] < rotated[1] && rotated[1] < rotated[2] && rotated[2] < rotated[3]) {
            return Err(GeometryError::CornersNotCyclic { corners });
        }
        Ok(Quadrilateral { polygon, corners })
    }

    /// Corner indices as given (the first entry is the designated first
    /// corner; the labeling orientation is preserved).
    pub fn corners(&self) -> [usize; 4] {
        self.corners
    }

    /// Rotates the corner labeling by one position; the conformal module of
    /// the result is the reciprocal of the original.
    pub fn rotate_labels(&self) -> Quadrilateral {
        let c = self.corners;
        Quadrilateral {
            polygon: self.polygon.clone(),
            corners: [c[1], c[2], c[3], c[0]],
        }
    }
}

/// An axis-aligned W x H rectangle treated as the canonical domain
/// [0, W] x [0, H] (and, for lattice work, as a flat torus).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RectangleDomain {
    w: f64,
    h: f64,
}

impl RectangleDomain {
    pub fn new(w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::BadRectangle { w, h });
        }
        Ok(RectangleDomain { w, h })
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Aspect module H/W: the conformal module of the rectangle as a
    /// quadrilateral with its own corners.
    pub fn module(&self) -> f64 {
        self.h / self.w
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.w).contains(&p.x) && (0.0..=self.h).contains(&p.y)
    }
}
