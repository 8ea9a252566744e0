//! Quadrilateral text boxes and the planar geometry behind them.
//!
//! Coordinates are in pixels with pixel `(x, y)` centred on the integer
//! point `(x, y)`. Quads are stored clockwise as seen on screen (y down),
//! which is a positive shoelace area.

use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Shoelace area; positive for clockwise-on-screen vertex order.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    if cross(a, b, p).abs() > EPS * (1.0 + a.sub(b).x.abs() + a.sub(b).y.abs()) {
        return false;
    }
    p.x >= a.x.min(b.x) - EPS
        && p.x <= a.x.max(b.x) + EPS
        && p.y >= a.y.min(b.y) - EPS
        && p.y <= a.y.max(b.y) + EPS
}

/// Point-in-polygon test that counts the boundary as inside.
pub fn contains_point(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    for i in 0..n {
        if on_segment(p, poly[i], poly[(i + 1) % n]) {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS))
        && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS))
    {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

pub fn is_convex(poly: &[Point]) -> bool {
    let n = poly.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let c = cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        if c.abs() <= EPS {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

/// A four-vertex text box.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadBox {
    pub vertices: [Point; 4],
    /// Detector confidence for predictions; `None` for ground truth.
    pub confidence: Option<f64>,
    /// Don't-care region (ICDAR `###` transcription).
    pub ignore: bool,
}

impl QuadBox {
    /// Validates and normalises the vertex order to clockwise.
    pub fn new(vertices: [Point; 4]) -> Result<Self> {
        let mut quad = Self {
            vertices,
            confidence: None,
            ignore: false,
        };
        quad.validate()?;
        if signed_area(&quad.vertices) < 0.0 {
            quad.vertices.swap(1, 3);
        }
        Ok(quad)
    }

    /// Axis-aligned rectangle spanning `[x0, x1] x [y0, y1]`.
    pub fn axis_aligned(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new([
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }

    pub fn with_ignore(mut self, ignore: bool) -> Self {
        self.ignore = ignore;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.vertices;
        if v.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Geometry("non-finite vertex".into()));
        }
        if polygon_area(v) <= EPS {
            return Err(Error::Geometry("quad has zero area".into()));
        }
        // only the two pairs of opposite edges can cross in a quadrilateral
        if segments_cross(v[0], v[1], v[2], v[3]) || segments_cross(v[1], v[2], v[3], v[0]) {
            return Err(Error::Geometry("quad is self-intersecting".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    pub fn is_convex(&self) -> bool {
        is_convex(&self.vertices)
    }

    pub fn contains(&self, p: Point) -> bool {
        contains_point(&self.vertices, p)
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y)),
        )
    }

    /// Pixels of a `width x height` raster whose centres lie inside the quad,
    /// in row-major order.
    pub fn covered_pixels(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let (x0, y0, x1, y1) = self.bounds();
        let lo_x = x0.ceil().max(0.0);
        let lo_y = y0.ceil().max(0.0);
        let hi_x = x1.floor().min(width as f64 - 1.0);
        let hi_y = y1.floor().min(height as f64 - 1.0);
        let mut out = Vec::new();
        if lo_x > hi_x || lo_y > hi_y {
            return out;
        }
        for y in lo_y as usize..=hi_y as usize {
            for x in lo_x as usize..=hi_x as usize {
                if self.contains(Point::new(x as f64, y as f64)) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Convex hull by the monotone-chain method, clockwise on screen.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Minimum-area enclosing rectangle of a point set (rotating calipers over
/// hull edges). Returns `None` for degenerate (collinear) input.
pub fn min_area_rect(points: &[Point]) -> Option<[Point; 4]> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, [Point; 4])> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let len = (b.x - a.x).hypot(b.y - a.y);
        if len <= EPS {
            continue;
        }
        let u = Point::new((b.x - a.x) / len, (b.y - a.y) / len);
        let v = Point::new(-u.y, u.x);
        let (mut umin, mut umax, mut vmin, mut vmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let pu = p.x * u.x + p.y * u.y;
            let pv = p.x * v.x + p.y * v.y;
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let area = (umax - umin) * (vmax - vmin);
        if best.as_ref().map_or(true, |(a, _)| area < *a - EPS) {
            let at = |s: f64, t: f64| Point::new(s * u.x + t * v.x, s * u.y + t * v.y);
            best = Some((
                area,
                [at(umin, vmin), at(umax, vmin), at(umax, vmax), at(umin, vmax)],
            ));
        }
    }
    let (area, mut rect) = best?;
    if area <= EPS {
        return None;
    }
    if signed_area(&rect) < 0.0 {
        rect.swap(1, 3);
    }
    // start from the vertex closest to the top-left corner
    let start = (0..4)
        .min_by(|&i, &j| {
            let si = rect[i].x + rect[i].y;
            let sj = rect[j].x + rect[j].y;
            si.total_cmp(&sj).then(rect[i].y.total_cmp(&rect[j].y))
        })
        .unwrap_or(0);
    rect.rotate_left(start);
    Some(rect)
}

/// Intersection of two convex polygons (Sutherland-Hodgman), both clockwise.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        // clockwise-on-screen polygons have positive shoelace area, so the
        // interior lies where cross(a, b, p) >= 0
        let inside = |p: Point| cross(a, b, p) >= -EPS;
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let r = q.sub(p);
    let s = b.sub(a);
    let denom = r.x * s.y - r.y * s.x;
    if denom.abs() < 1e-15 {
        return q;
    }
    let t = ((a.x - p.x) * s.y - (a.y - p.y) * s.x) / denom;
    Point::new(p.x + t * r.x, p.y + t * r.y)
}
