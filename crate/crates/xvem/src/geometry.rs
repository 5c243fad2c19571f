//! Planar geometry primitives shared by the mesh and quadrature layers.

use crate::scalar::Real;

/// A point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

#[allow(clippy::should_implement_trait)] // add/sub as plain methods keep the geometry kernels readable without operator-trait imports
impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn add(self, other: Self) -> Self {
        Self::new(self.x + other.x, self.y + other.y)
    }

    pub fn sub(self, other: Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    /// 2D cross product (z-component of the 3D cross product).
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn dist(self, other: Self) -> T {
        self.sub(other).norm()
    }

    /// Midpoint of the segment `self`-`other`.
    pub fn midpoint(self, other: Self) -> Self {
        self.add(other).scale(T::of(0.5))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Signed area of a polygon given by its vertex cycle (positive if counterclockwise).
pub fn signed_area<T: Real>(vertices: &[Point2<T>]) -> T {
    let mut two_a = T::zero();
    let n = vertices.len();
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        two_a += p.cross(q);
    }
    two_a * T::of(0.5)
}

/// Area-weighted centroid of a simple polygon.
pub fn centroid<T: Real>(vertices: &[Point2<T>]) -> Point2<T> {
    let n = vertices.len();
    let mut cx = T::zero();
    let mut cy = T::zero();
    let mut two_a = T::zero();
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        let w = p.cross(q);
        two_a += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    let scale = T::one() / (T::of(3.0) * two_a);
    Point2::new(cx * scale, cy * scale)
}

/// Maximum pairwise vertex distance.
pub fn diameter<T: Real>(vertices: &[Point2<T>]) -> T {
    let mut d = T::zero();
    for (i, p) in vertices.iter().enumerate() {
        for q in vertices.iter().skip(i + 1) {
            d = d.max(p.dist(*q));
        }
    }
    d
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance<T: Real>(p: Point2<T>, a: Point2<T>, b: Point2<T>) -> T {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == T::zero() {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(T::zero(), T::one());
    p.dist(a.add(ab.scale(t)))
}

/// Distance from `p` to the closed polygon `vertices` (0 if inside).
pub fn point_polygon_distance<T: Real>(p: Point2<T>, vertices: &[Point2<T>]) -> T {
    if point_in_polygon(p, vertices) {
        return T::zero();
    }
    let n = vertices.len();
    let mut d = T::max_value().unwrap();
    for i in 0..n {
        d = d.min(point_segment_distance(p, vertices[i], vertices[(i + 1) % n]));
    }
    d
}

/// Even-odd point-in-polygon test; points on the boundary count as inside
/// up to a tolerance scaled by the polygon size.
pub fn point_in_polygon<T: Real>(p: Point2<T>, vertices: &[Point2<T>]) -> bool {
    let n = vertices.len();
    let scale = diameter(vertices);
    let tol = scale * T::of(1e-12);
    // boundary check first
    for i in 0..n {
        if point_segment_distance(p, vertices[i], vertices[(i + 1) % n]) <= tol {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// True if `p` lies in the kernel of the polygon: on the inner side of every
/// (counterclockwise-oriented) edge line.
pub fn point_in_kernel<T: Real>(p: Point2<T>, vertices: &[Point2<T>]) -> bool {
    let n = vertices.len();
    let scale = diameter(vertices);
    let tol = -scale * scale * T::of(1e-12);
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if b.sub(a).cross(p.sub(a)) < tol {
            return false;
        }
    }
    true
}

/// Minimum distance from `p` to any edge line of the polygon (the inscribed
/// radius of the ball centred at `p` when `p` is in the kernel).
pub fn min_edge_distance<T: Real>(p: Point2<T>, vertices: &[Point2<T>]) -> T {
    let n = vertices.len();
    let mut d = T::max_value().unwrap();
    for i in 0..n {
        d = d.min(point_segment_distance(p, vertices[i], vertices[(i + 1) % n]));
    }
    d
}

/// Proper intersection test for two open segments (shared endpoints do not count).
fn segments_cross<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>, d: Point2<T>) -> bool {
    let d1 = b.sub(a).cross(c.sub(a));
    let d2 = b.sub(a).cross(d.sub(a));
    let d3 = d.sub(c).cross(a.sub(c));
    let d4 = d.sub(c).cross(b.sub(c));
    (d1 * d2 < T::zero()) && (d3 * d4 < T::zero())
}

/// True if the polygon is simple: no two non-adjacent edges intersect.
pub fn is_simple_polygon<T: Real>(vertices: &[Point2<T>]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[(i + 1) % n]);
        for j in (i + 1)..n {
            // skip adjacent edges (they share a vertex)
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (c, d) = (vertices[j], vertices[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return false;
            }
        }
    }
    true
}
