//! Planar primitives: points, axis-aligned rectangles, and analytic clipping
//! of polylines against rectangles and simple polygons.

use serde::{Deserialize, Serialize};

/// A point in canvas units (pixels).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for Rect {
    fn from([x0, y0, x1, y1]: [f64; 4]) -> Self {
        Self::new(x0, y0, x1, y1)
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

impl Rect {
    /// Builds a rectangle from two corners in any order.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x0: x0.min(x1),
            y0: y0.min(y1),
            x1: x0.max(x1),
            y1: y0.max(y1),
        }
    }

    pub fn from_origin(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self::new(x, y, x + width, y + height)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Longer side.
    pub fn longer_side(&self) -> f64 {
        self.width().max(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Bounding box of a point set, `None` when empty.
    pub fn bounding(points: impl IntoIterator<Item = Point>) -> Option<Rect> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut r = Rect {
            x0: first.x,
            y0: first.y,
            x1: first.x,
            y1: first.y,
        };
        for p in iter {
            r.x0 = r.x0.min(p.x);
            r.y0 = r.y0.min(p.y);
            r.x1 = r.x1.max(p.x);
            r.y1 = r.y1.max(p.y);
        }
        Some(r)
    }
}

/// Polyline arc length.
pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Length of segment `a–b` inside `rect` (Liang–Barsky parametric clipping).
pub fn segment_length_in_rect(a: Point, b: Point, rect: &Rect) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len = dx.hypot(dy);
    if len == 0.0 {
        return 0.0;
    }
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    let checks = [
        (-dx, a.x - rect.x0),
        (dx, rect.x1 - a.x),
        (-dy, a.y - rect.y0),
        (dy, rect.y1 - a.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return 0.0;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return 0.0;
            }
        }
    }
    (t1 - t0) * len
}

/// Length of a polyline inside `rect`.
pub fn polyline_length_in_rect(points: &[Point], rect: &Rect) -> f64 {
    points
        .windows(2)
        .map(|w| segment_length_in_rect(w[0], w[1], rect))
        .sum()
}

/// Closed polygon; the last vertex connects back to the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    /// Closes the ring implicitly, dropping a repeated closing vertex and
    /// consecutive duplicates.
    pub fn new(points: &[Point]) -> Self {
        let mut vertices: Vec<Point> = Vec::with_capacity(points.len());
        for &p in points {
            if vertices.last() != Some(&p) {
                vertices.push(p);
            }
        }
        while vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        let twice: f64 = self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum();
        0.5 * twice.abs()
    }

    /// Even-odd point containment.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True when fewer than three vertices, zero area, or any two
    /// non-adjacent edges touch.
    pub fn is_degenerate_or_self_intersecting(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 || self.area() == 0.0 {
            return true;
        }
        let edges: Vec<(Point, Point)> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return true;
                }
            }
        }
        false
    }

    /// Length of segment `a–b` inside the polygon: the segment is split at
    /// every edge crossing and each piece is classified by its midpoint.
    pub fn segment_length_inside(&self, a: Point, b: Point) -> f64 {
        let len = a.distance(b);
        if len == 0.0 {
            return 0.0;
        }
        let mut ts = vec![0.0, 1.0];
        for (c, d) in self.edges() {
            if let Some(t) = segment_param_intersection(a, b, c, d) {
                ts.push(t);
            }
        }
        ts.sort_by(f64::total_cmp);
        let mut inside = 0.0;
        for w in ts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            if t1 - t0 <= 0.0 {
                continue;
            }
            let tm = 0.5 * (t0 + t1);
            let mid = Point::new(a.x + tm * (b.x - a.x), a.y + tm * (b.y - a.y));
            if self.contains(mid) {
                inside += (t1 - t0) * len;
            }
        }
        inside
    }

    pub fn polyline_length_inside(&self, points: &[Point]) -> f64 {
        points
            .windows(2)
            .map(|w| self.segment_length_inside(w[0], w[1]))
            .sum()
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test, collinear overlaps included.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Parameter `t ∈ (0, 1)` along `a–b` where it properly crosses `c–d`.
fn segment_param_intersection(a: Point, b: Point, c: Point, d: Point) -> Option<f64> {
    let r = (b.x - a.x, b.y - a.y);
    let s = (d.x - c.x, d.y - c.y);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == 0.0 {
        return None;
    }
    let qp = (c.x - a.x, c.y - a.y);
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    if (0.0..=1.0).contains(&u) && t > 0.0 && t < 1.0 {
        Some(t)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn segment_clipping_cases() {
        let r = Rect::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(segment_length_in_rect(p(0.0, 5.0), p(10.0, 5.0), &r), 10.0);
        assert!((segment_length_in_rect(p(-5.0, 5.0), p(5.0, 5.0), &r) - 5.0).abs() < 1e-12);
        assert_eq!(segment_length_in_rect(p(20.0, 5.0), p(30.0, 5.0), &r), 0.0);
        assert_eq!(segment_length_in_rect(p(3.0, 3.0), p(3.0, 3.0), &r), 0.0);
        // diagonal through the corner region
        let l = segment_length_in_rect(p(-5.0, -5.0), p(15.0, 15.0), &r);
        assert!((l - 200f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn polygon_area_and_containment() {
        let sq = Polygon::new(&[p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0), p(0.0, 0.0)]);
        assert_eq!(sq.vertices().len(), 4);
        assert_eq!(sq.area(), 100.0);
        assert!(sq.contains(p(5.0, 5.0)));
        assert!(!sq.contains(p(15.0, 5.0)));
        assert!(!sq.is_degenerate_or_self_intersecting());
        let l = sq.segment_length_inside(p(-5.0, 5.0), p(5.0, 5.0));
        assert!((l - 5.0).abs() < 1e-12);
    }

    #[test]
    fn bowtie_is_self_intersecting() {
        let bowtie = Polygon::new(&[p(0.0, 0.0), p(10.0, 10.0), p(10.0, 0.0), p(0.0, 10.0)]);
        assert!(bowtie.is_degenerate_or_self_intersecting());
        let line = Polygon::new(&[p(0.0, 0.0), p(10.0, 0.0)]);
        assert!(line.is_degenerate_or_self_intersecting());
    }

    #[test]
    fn concave_polygon_clipping() {
        // U shape: a horizontal segment crossing both arms and the notch
        let u = Polygon::new(&[
            p(0.0, 0.0),
            p(3.0, 0.0),
            p(3.0, 7.0),
            p(7.0, 7.0),
            p(7.0, 0.0),
            p(10.0, 0.0),
            p(10.0, 10.0),
            p(0.0, 10.0),
        ]);
        let l = u.segment_length_inside(p(-1.0, 5.0), p(11.0, 5.0));
        assert!((l - 6.0).abs() < 1e-12);
        let l = u.segment_length_inside(p(-1.0, 8.0), p(11.0, 8.0));
        assert!((l - 10.0).abs() < 1e-12);
    }
}
