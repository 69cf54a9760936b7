//! Planar and box geometry in the local frame.
//!
//! All predicates treat shapes as closed sets: touching counts as
//! intersecting.

use serde::{Deserialize, Serialize};

use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, o: &Self) -> T {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn dist_sq(&self, o: &Self) -> T {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        dx * dx + dy * dy
    }

    pub fn lerp(&self, o: &Self, u: T) -> Self {
        Self::new(self.x + (o.x - self.x) * u, self.y + (o.y - self.y) * u)
    }

    /// Point at most `max_len` along the ray from `self` toward `to`.
    pub fn steer(&self, to: &Self, max_len: T) -> Self {
        let d = self.dist(to);
        if d <= max_len {
            *to
        } else {
            self.lerp(to, max_len / d)
        }
    }
}

/// Horizontal axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub min_x: T,
    pub min_y: T,
    pub max_x: T,
    pub max_y: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(min_x: T, min_y: T, max_x: T, max_y: T) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    pub fn width(&self) -> T {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> T {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> T {
        self.width().max(T::zero()) * self.height().max(T::zero())
    }

    pub fn contains(&self, p: &Point2<T>) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn intersects(&self, o: &Self) -> bool {
        self.min_x <= o.max_x && o.min_x <= self.max_x && self.min_y <= o.max_y && o.min_y <= self.max_y
    }

    /// Counter-clockwise corners starting at the minimum corner.
    pub fn corners(&self) -> [Point2<T>; 4] {
        [
            Point2::new(self.min_x, self.min_y),
            Point2::new(self.max_x, self.min_y),
            Point2::new(self.max_x, self.max_y),
            Point2::new(self.min_x, self.max_y),
        ]
    }

    pub fn bounding<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Point2<T>>,
    {
        let mut it = points.into_iter();
        let p = it.next()?;
        let mut r = Self::new(p.x, p.y, p.x, p.y);
        for p in it {
            r.min_x = r.min_x.min(p.x);
            r.min_y = r.min_y.min(p.y);
            r.max_x = r.max_x.max(p.x);
            r.max_y = r.max_y.max(p.y);
        }
        Some(r)
    }

    pub fn expanded(&self, m: T) -> Self {
        Self::new(self.min_x - m, self.min_y - m, self.max_x + m, self.max_y + m)
    }

    pub fn union(&self, o: &Self) -> Self {
        Self::new(
            self.min_x.min(o.min_x),
            self.min_y.min(o.min_y),
            self.max_x.max(o.max_x),
            self.max_y.max(o.max_y),
        )
    }
}

/// Axis-aligned 3D box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb<T> {
    pub min: [T; 3],
    pub max: [T; 3],
}

impl<T: Scalar> Aabb<T> {
    pub fn new(min: [T; 3], max: [T; 3]) -> Self {
        Self { min, max }
    }

    /// Bounding box of two points.
    pub fn spanning(a: &[T; 3], b: &[T; 3]) -> Self {
        let mut bx = Self { min: *a, max: *a };
        for i in 0..3 {
            bx.min[i] = a[i].min(b[i]);
            bx.max[i] = a[i].max(b[i]);
        }
        bx
    }

    pub fn inflated(&self, r: &[T; 3]) -> Self {
        let mut bx = *self;
        for ((lo, hi), &m) in bx.min.iter_mut().zip(bx.max.iter_mut()).zip(r) {
            *lo = *lo - m;
            *hi = *hi + m;
        }
        bx
    }

    pub fn contains(&self, p: &[T; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self, axis: usize) -> T {
        self.max[axis] - self.min[axis]
    }

    pub fn footprint(&self) -> Rect<T> {
        Rect::new(self.min[0], self.min[1], self.max[0], self.max[1])
    }

    pub fn to_array(&self) -> [T; 6] {
        [self.min[0], self.min[1], self.min[2], self.max[0], self.max[1], self.max[2]]
    }

    pub fn from_array(a: [T; 6]) -> Self {
        Self { min: [a[0], a[1], a[2]], max: [a[3], a[4], a[5]] }
    }
}

fn orient<T: Scalar>(a: &Point2<T>, b: &Point2<T>, c: &Point2<T>) -> T {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn sign<T: Scalar>(v: T) -> i8 {
    if v > T::zero() {
        1
    } else if v < T::zero() {
        -1
    } else {
        0
    }
}

fn on_segment<T: Scalar>(a: &Point2<T>, b: &Point2<T>, p: &Point2<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection test, including collinear overlap.
pub fn segments_intersect<T: Scalar>(a: &Point2<T>, b: &Point2<T>, c: &Point2<T>, d: &Point2<T>) -> bool {
    let d1 = sign(orient(c, d, a));
    let d2 = sign(orient(c, d, b));
    let d3 = sign(orient(a, b, c));
    let d4 = sign(orient(a, b, d));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(c, d, a))
        || (d2 == 0 && on_segment(c, d, b))
        || (d3 == 0 && on_segment(a, b, c))
        || (d4 == 0 && on_segment(a, b, d))
}

pub fn point_segment_distance<T: Scalar>(p: &Point2<T>, a: &Point2<T>, b: &Point2<T>) -> T {
    let len2 = a.dist_sq(b);
    if len2 == T::zero() {
        return p.dist(a);
    }
    let u = (((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / len2)
        .max(T::zero())
        .min(T::one());
    p.dist(&a.lerp(b, u))
}

pub fn segment_distance<T: Scalar>(a: &Point2<T>, b: &Point2<T>, c: &Point2<T>, d: &Point2<T>) -> T {
    if segments_intersect(a, b, c, d) {
        return T::zero();
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

fn edges<T: Scalar>(poly: &[Point2<T>]) -> impl Iterator<Item = (&Point2<T>, &Point2<T>)> {
    let n = poly.len();
    (0..n).map(move |i| (&poly[i], &poly[(i + 1) % n]))
}

/// Point-in-polygon by crossing parity; boundary points count as inside.
pub fn point_in_polygon<T: Scalar>(p: &Point2<T>, poly: &[Point2<T>]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut inside = false;
    for (a, b) in edges(poly) {
        if orient(a, b, p) == T::zero() && on_segment(a, b, p) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn segment_intersects_polygon<T: Scalar>(a: &Point2<T>, b: &Point2<T>, poly: &[Point2<T>]) -> bool {
    point_in_polygon(a, poly)
        || point_in_polygon(b, poly)
        || edges(poly).any(|(c, d)| segments_intersect(a, b, c, d))
}

/// Distance from a segment to a polygon region (zero when they meet).
pub fn segment_polygon_distance<T: Scalar>(a: &Point2<T>, b: &Point2<T>, poly: &[Point2<T>]) -> T {
    if segment_intersects_polygon(a, b, poly) {
        return T::zero();
    }
    edges(poly)
        .map(|(c, d)| segment_distance(a, b, c, d))
        .fold(T::infinity(), |m, v| m.min(v))
}

pub fn rect_intersects_polygon<T: Scalar>(r: &Rect<T>, poly: &[Point2<T>]) -> bool {
    let Some(pb) = Rect::bounding(poly) else {
        return false;
    };
    if !r.intersects(&pb) {
        return false;
    }
    if poly.iter().any(|p| r.contains(p)) {
        return true;
    }
    let c = r.corners();
    if c.iter().any(|p| point_in_polygon(p, poly)) {
        return true;
    }
    edges(poly).any(|(a, b)| (0..4).any(|i| segments_intersect(a, b, &c[i], &c[(i + 1) % 4])))
}

/// Convex hull, counter-clockwise, without collinear points.
pub fn convex_hull<T: Scalar>(points: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap_or(std::cmp::Ordering::Equal).then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2<T>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2<T>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && orient(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= T::zero() {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Area swept by an axis-aligned square of half-size `h` whose center
/// moves from `a` to `b`.
pub fn swept_square<T: Scalar>(a: &Point2<T>, b: &Point2<T>, h: T) -> Vec<Point2<T>> {
    let corners = |p: &Point2<T>| {
        [Point2::new(p.x - h, p.y - h), Point2::new(p.x + h, p.y - h), Point2::new(p.x + h, p.y + h), Point2::new(p.x - h, p.y + h)]
    };
    let mut pts = corners(a).to_vec();
    pts.extend(corners(b));
    convex_hull(&pts)
}

/// Closed polygon regions share at least one point.
pub fn polygons_intersect<T: Scalar>(p: &[Point2<T>], q: &[Point2<T>]) -> bool {
    match (Rect::bounding(p), Rect::bounding(q)) {
        (Some(a), Some(b)) if a.intersects(&b) => {}
        _ => return false,
    }
    p.iter().any(|v| point_in_polygon(v, q))
        || q.iter().any(|v| point_in_polygon(v, p))
        || edges(p).any(|(a, b)| edges(q).any(|(c, d)| segments_intersect(a, b, c, d)))
}

pub fn polygon_bounds<T: Scalar>(poly: &[Point2<T>]) -> Option<Rect<T>> {
    Rect::bounding(poly)
}

/// True when no two non-adjacent edges meet and adjacent edges only share
/// their common vertex.
pub fn polygon_is_simple<T: Scalar>(poly: &[Point2<T>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let (c, d) = (&poly[j], &poly[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Adjacent edges must not fold back onto each other.
                let shared = if j == i + 1 { b } else { a };
                let (p, q) = if j == i + 1 { (a, d) } else { (b, c) };
                if orient(shared, p, q) == T::zero() {
                    let dot = (p.x - shared.x) * (q.x - shared.x) + (p.y - shared.y) * (q.y - shared.y);
                    if dot > T::zero() {
                        return false;
                    }
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Parametric interval `[u0, u1] ⊂ [0, 1]` of segment `a→b` lying inside
/// `r` (Liang–Barsky), or `None` when the segment misses the rectangle.
pub fn clip_segment_to_rect<T: Scalar>(a: &Point2<T>, b: &Point2<T>, r: &Rect<T>) -> Option<(T, T)> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut u0 = T::zero();
    let mut u1 = T::one();
    let checks = [
        (-dx, a.x - r.min_x),
        (dx, r.max_x - a.x),
        (-dy, a.y - r.min_y),
        (dy, r.max_y - a.y),
    ];
    for (p, q) in checks {
        if p == T::zero() {
            if q < T::zero() {
                return None;
            }
        } else {
            let u = q / p;
            if p < T::zero() {
                u0 = u0.max(u);
            } else {
                u1 = u1.min(u);
            }
            if u0 > u1 {
                return None;
            }
        }
    }
    Some((u0, u1))
}

/// Exact area of the union of axis-aligned rectangles: sweep over the
/// distinct x coordinates and merge the active y intervals in each slab.
pub fn union_area<T: Scalar>(rects: &[Rect<T>]) -> T {
    let rects: Vec<&Rect<T>> = rects.iter().filter(|r| r.area() > T::zero()).collect();
    let mut xs: Vec<T> = rects.iter().flat_map(|r| [r.min_x, r.max_x]).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    xs.dedup();
    let mut total = T::zero();
    let mut ys: Vec<(T, T)> = Vec::new();
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        ys.clear();
        ys.extend(rects.iter().filter(|r| r.min_x <= x0 && r.max_x >= x1).map(|r| (r.min_y, r.max_y)));
        if ys.is_empty() {
            continue;
        }
        ys.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        let mut covered = T::zero();
        let (mut lo, mut hi) = ys[0];
        for &(a, b) in &ys[1..] {
            if a > hi {
                covered = covered + (hi - lo);
                lo = a;
                hi = b;
            } else {
                hi = hi.max(b);
            }
        }
        covered = covered + (hi - lo);
        total = total + covered * (x1 - x0);
    }
    total
}
