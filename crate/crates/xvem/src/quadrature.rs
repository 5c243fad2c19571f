//! Numerical integration on edges and polygons.
//!
//! Edge rules are Gauss–Legendre, optionally with geometric subdivision toward
//! a singular endpoint. Polygon rules fan a sub-triangulation from a kernel
//! point and use a collapsed tensor (Duffy) rule per triangle; triangles that
//! touch a marked singular point are refined geometrically toward it, which
//! makes integrands like |∇(r^a)|^2 converge exponentially in the number of
//! grading levels.

use crate::error::{Error, Result};
use crate::geometry::{
    centroid, diameter, min_edge_distance, point_in_kernel, signed_area, Point2,
};
use crate::scalar::Real;

/// Quadrature rule on a mesh edge. Weights are positive and sum to the edge length.
#[derive(Debug, Clone)]
pub struct EdgeRule<T> {
    pub nodes: Vec<Point2<T>>,
    pub weights: Vec<T>,
}

/// Quadrature rule on a polygon. Weights are positive and sum to the area.
#[derive(Debug, Clone)]
pub struct PolygonRule<T> {
    pub nodes: Vec<Point2<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> EdgeRule<T> {
    pub fn integrate(&self, mut f: impl FnMut(Point2<T>) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&p, &w)| acc + w * f(p))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl<T: Real> PolygonRule<T> {
    pub fn integrate(&self, mut f: impl FnMut(Point2<T>) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&p, &w)| acc + w * f(p))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
///
/// Roots of the Legendre polynomial found by Newton iteration from the
/// Chebyshev-like initial guess; accurate to machine precision of `T`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "need at least one quadrature point");
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::of(n as f64);
    for i in 0..n.div_ceil(2) {
        // initial guess for the i-th root (descending)
        let mut x = (T::pi() * (T::of(i as f64) + T::of(0.75)) / (nf + T::of(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            // evaluate P_n and P_n' by recurrence
            let mut p0 = T::one();
            let mut p1 = x;
            for k in 2..=n {
                let kf = T::of(k as f64);
                let p2 = ((T::of(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // derivative from P_n and P_{n-1}
            dp = nf * (x * p1 - p0) / (x * x - T::one());
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= T::default_epsilon() * T::of(4.0) {
                break;
            }
        }
        let w = T::of(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped affinely to the segment `a`-`b`.
pub fn gauss_edge<T: Real>(a: Point2<T>, b: Point2<T>, n_points: usize) -> EdgeRule<T> {
    let (t, w) = gauss_legendre::<T>(n_points);
    let half = T::of(0.5);
    let mid = a.midpoint(b);
    let dir = b.sub(a).scale(half);
    let jac = a.dist(b) * half;
    EdgeRule {
        nodes: t.iter().map(|&ti| mid.add(dir.scale(ti))).collect(),
        weights: w.iter().map(|&wi| wi * jac).collect(),
    }
}

/// Edge rule with geometric subdivision (ratio 1/2, `levels` times) toward a
/// singular point. The point may be either endpoint or lie on the edge
/// interior (the edge is then split at the point and both halves graded).
/// If the point is not on the edge, a plain Gauss rule is returned.
pub fn graded_edge_rule<T: Real>(
    a: Point2<T>,
    b: Point2<T>,
    n_points: usize,
    singular: Point2<T>,
    levels: usize,
) -> EdgeRule<T> {
    let h = a.dist(b);
    let tol = h * T::of(1e-12);
    if singular.dist(a) <= tol {
        return graded_toward_start(a, b, n_points, levels);
    }
    if singular.dist(b) <= tol {
        return graded_toward_start(b, a, n_points, levels);
    }
    // point on the open edge: split and grade both halves toward it
    let ab = b.sub(a);
    let t = singular.sub(a).dot(ab) / ab.dot(ab);
    if t > T::zero()
        && t < T::one()
        && crate::geometry::point_segment_distance(singular, a, b) <= tol
    {
        let split = a.add(ab.scale(t));
        let mut rule = graded_toward_start(split, a, n_points, levels);
        let right = graded_toward_start(split, b, n_points, levels);
        rule.nodes.extend(right.nodes);
        rule.weights.extend(right.weights);
        return rule;
    }
    gauss_edge(a, b, n_points)
}

fn graded_toward_start<T: Real>(
    a: Point2<T>,
    b: Point2<T>,
    n_points: usize,
    levels: usize,
) -> EdgeRule<T> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let dir = b.sub(a);
    let half = T::of(0.5);
    let mut outer = T::one();
    for _ in 0..levels {
        let inner = outer * half;
        let piece = gauss_edge(a.add(dir.scale(inner)), a.add(dir.scale(outer)), n_points);
        nodes.extend(piece.nodes);
        weights.extend(piece.weights);
        outer = inner;
    }
    // innermost piece [0, outer]: substitute s = outer * t^4, which turns
    // integrands r^alpha (alpha >= -1/2) into smooth functions of t
    let (tq, wq) = gauss_legendre::<T>(n_points);
    let len = dir.norm();
    let four = T::of(4.0);
    for (&ti, &wi) in tq.iter().zip(&wq) {
        let t = (ti + T::one()) * half;
        let s = outer * t.powi(4);
        nodes.push(a.add(dir.scale(s)));
        weights.push(wi * half * four * outer * t.powi(3) * len);
    }
    EdgeRule { nodes, weights }
}

/// Collapsed tensor-product rule on the triangle `(a, b, c)`, exact for
/// polynomials of total degree `d`. The collapse vertex is `a`; for integrands
/// with a point singularity at `a` the u-Jacobian regularises r^{-1}-type
/// behaviour.
fn duffy_triangle<T: Real>(
    a: Point2<T>,
    b: Point2<T>,
    c: Point2<T>,
    d: usize,
    nodes: &mut Vec<Point2<T>>,
    weights: &mut Vec<T>,
) {
    let n_u = (d + 3) / 2; // covers degree d plus the Jacobian factor u
    let n_v = (d + 2) / 2;
    let (tu, wu) = gauss_legendre::<T>(n_u.max(1));
    let (tv, wv) = gauss_legendre::<T>(n_v.max(1));
    let two_area = (b.sub(a)).cross(c.sub(a)).abs();
    let half = T::of(0.5);
    for (&ui, &wui) in tu.iter().zip(&wu) {
        let u = (ui + T::one()) * half;
        for (&vi, &wvi) in tv.iter().zip(&wv) {
            let v = (vi + T::one()) * half;
            // x(u, v) = a + u*(b - a) + u*v*(c - b)
            let p = a
                .add(b.sub(a).scale(u))
                .add(c.sub(b).scale(u * v));
            let w = wui * wvi * half * half * u * two_area;
            nodes.push(p);
            weights.push(w);
        }
    }
}

/// Graded rule on a triangle whose vertex `a` is the singular point.
///
/// The triangle is parametrised radially: x = a + s ((1-v)(b-a) + v(c-a)),
/// Jacobian 2 |T| s. Geometric strips of ratio 1/2 in s toward `a` carry
/// tensor Gauss rules; the innermost piece substitutes s = s0 t^4 so that
/// r^alpha integrands with alpha >= -1 become smooth in t.
fn graded_triangle<T: Real>(
    a: Point2<T>,
    b: Point2<T>,
    c: Point2<T>,
    d: usize,
    levels: usize,
    nodes: &mut Vec<Point2<T>>,
    weights: &mut Vec<T>,
) {
    let n_s = ((d + 3) / 2).max(8);
    let n_v = ((d + 2) / 2).max(8);
    let (ts, ws) = gauss_legendre::<T>(n_s);
    let (tv, wv) = gauss_legendre::<T>(n_v);
    let two_area = (b.sub(a)).cross(c.sub(a)).abs();
    let half = T::of(0.5);
    let ab = b.sub(a);
    let bc = c.sub(b);
    let point_at = |s: T, v: T| a.add(ab.scale(s)).add(bc.scale(s * v));

    let mut outer = T::one();
    for _ in 0..levels {
        let inner = outer * half;
        let mid = (inner + outer) * half;
        let rad = (outer - inner) * half;
        for (&si, &wsi) in ts.iter().zip(&ws) {
            let s = mid + rad * si;
            for (&vi, &wvi) in tv.iter().zip(&wv) {
                let v = (vi + T::one()) * half;
                nodes.push(point_at(s, v));
                weights.push(wsi * wvi * rad * half * s * two_area);
            }
        }
        outer = inner;
    }
    // innermost: s = outer * t^4, weight picks up ds/dt = 4 outer t^3
    let four = T::of(4.0);
    for (&si, &wsi) in ts.iter().zip(&ws) {
        let t = (si + T::one()) * half;
        let s = outer * t.powi(4);
        let ds = four * outer * t.powi(3) * half;
        for (&vi, &wvi) in tv.iter().zip(&wv) {
            let v = (vi + T::one()) * half;
            nodes.push(point_at(s, v));
            weights.push(wsi * wvi * ds * half * s * two_area);
        }
    }
}

/// Rule on a triangle, dispatching on the position of the optional singular
/// point: grade when it is a vertex, subdivide when it is nearby, plain rule
/// otherwise.
#[allow(clippy::too_many_arguments)]
fn triangle_rule<T: Real>(
    a: Point2<T>,
    b: Point2<T>,
    c: Point2<T>,
    d: usize,
    grading: Option<(Point2<T>, usize)>,
    depth: usize,
    nodes: &mut Vec<Point2<T>>,
    weights: &mut Vec<T>,
) {
    let Some((p, levels)) = grading else {
        duffy_triangle(a, b, c, d, nodes, weights);
        return;
    };
    let diam = diameter(&[a, b, c]);
    let tol = diam * T::of(1e-12);
    if p.dist(a) <= tol {
        graded_triangle(a, b, c, d, levels, nodes, weights);
        return;
    }
    if p.dist(b) <= tol {
        graded_triangle(b, c, a, d, levels, nodes, weights);
        return;
    }
    if p.dist(c) <= tol {
        graded_triangle(c, a, b, d, levels, nodes, weights);
        return;
    }
    // nearby singularity: quadrisect so the size/distance ratio improves
    let near = crate::geometry::point_polygon_distance(p, &[a, b, c])
        < diam * T::of(1.5);
    if near && depth < 3 {
        let mab = a.midpoint(b);
        let mbc = b.midpoint(c);
        let mca = c.midpoint(a);
        triangle_rule(a, mab, mca, d, grading, depth + 1, nodes, weights);
        triangle_rule(mab, b, mbc, d, grading, depth + 1, nodes, weights);
        triangle_rule(mca, mbc, c, d, grading, depth + 1, nodes, weights);
        triangle_rule(mab, mbc, mca, d, grading, depth + 1, nodes, weights);
        return;
    }
    duffy_triangle(a, b, c, d, nodes, weights);
}

/// Find a kernel point of the polygon: the centroid when it works, otherwise a
/// grid search maximising the inscribed-ball radius.
pub fn kernel_point<T: Real>(vertices: &[Point2<T>]) -> Result<Point2<T>> {
    let c = centroid(vertices);
    if point_in_kernel(c, vertices) {
        return Ok(c);
    }
    let (mut xmin, mut xmax) = (vertices[0].x, vertices[0].x);
    let (mut ymin, mut ymax) = (vertices[0].y, vertices[0].y);
    for v in vertices {
        xmin = xmin.min(v.x);
        xmax = xmax.max(v.x);
        ymin = ymin.min(v.y);
        ymax = ymax.max(v.y);
    }
    let steps = 40usize;
    let mut best: Option<(T, Point2<T>)> = None;
    for i in 1..steps {
        for j in 1..steps {
            let fi = T::of(i as f64 / steps as f64);
            let fj = T::of(j as f64 / steps as f64);
            let p = Point2::new(xmin + (xmax - xmin) * fi, ymin + (ymax - ymin) * fj);
            if point_in_kernel(p, vertices) {
                let r = min_edge_distance(p, vertices);
                if best.is_none_or(|(rb, _)| r > rb) {
                    best = Some((r, p));
                }
            }
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| {
        Error::Quadrature("no kernel point found (polygon not star-shaped?)".into())
    })
}

/// Quadrature rule on a simple polygon, exact for polynomials of total degree
/// `degree`. With `grading = Some((p, levels))`, triangles touching `p` are
/// geometrically refined toward it.
pub fn polygon_rule<T: Real>(
    vertices: &[Point2<T>],
    degree: usize,
    grading: Option<(Point2<T>, usize)>,
) -> Result<PolygonRule<T>> {
    if vertices.len() < 3 {
        return Err(Error::Quadrature("polygon needs at least 3 vertices".into()));
    }
    let area = signed_area(vertices);
    if area <= T::zero() {
        return Err(Error::Quadrature(
            "polygon must be counterclockwise with positive area".into(),
        ));
    }
    // Prefer fanning from the singular point itself when it is on the closure
    // and sees the whole polygon: every fan triangle is then graded at it.
    let fan_centre = match grading {
        Some((p, _))
            if point_in_kernel(p, vertices)
                && crate::geometry::point_polygon_distance(p, vertices) == T::zero() =>
        {
            p
        }
        _ => kernel_point(vertices)?,
    };
    let diam = diameter(vertices);
    let degenerate = diam * diam * T::of(1e-14);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let n = vertices.len();
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if (a.sub(fan_centre)).cross(b.sub(fan_centre)).abs() * T::of(0.5) <= degenerate {
            continue; // fan centre collinear with this edge
        }
        triangle_rule(fan_centre, a, b, degree, grading, 0, &mut nodes, &mut weights);
    }
    Ok(PolygonRule { nodes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Vec<Point2<f64>> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    /// Adaptive Simpson on [a, b]; independent reference for singular radial
    /// integrals.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth > 50 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, left, tol / 2.0, depth + 1) + rec(f, m, b, right, tol / 2.0, depth + 1)
            }
        }
        rec(f, a, b, simpson(f, a, b), tol, 0)
    }

    #[test]
    fn midpoint_rule_on_edge() {
        let rule = gauss_edge(Point2::new(0.0f64, 0.0), Point2::new(2.0, 0.0), 1);
        assert_eq!(rule.len(), 1);
        assert!((rule.nodes[0].x - 1.0).abs() < 1e-15);
        assert!(rule.nodes[0].y.abs() < 1e-15);
        assert!((rule.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_gauss_nodes() {
        let (t, w) = gauss_legendre::<f64>(2);
        let x = 1.0 / 3.0_f64.sqrt();
        assert!((t[0] + x).abs() < 1e-15 && (t[1] - x).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn odd_power_integrates_to_zero() {
        let rule = gauss_edge(Point2::new(-1.0f64, 0.0), Point2::new(1.0, 0.0), 3);
        let v = rule.integrate(|p| p.x.powi(5));
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn gauss_exactness_high_order() {
        // n points are exact for P_{2n-1}
        for n in 1..=12 {
            let rule = gauss_edge(Point2::new(-1.0f64, 0.0), Point2::new(1.0, 0.0), n);
            for d in 0..(2 * n) {
                let got = rule.integrate(|p| p.x.powi(d as i32));
                let exact = if d % 2 == 0 { 2.0 / (d as f64 + 1.0) } else { 0.0 };
                assert!(
                    (got - exact).abs() < 1e-13,
                    "n={n} d={d}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn polygon_weight_sum_is_area() {
        let rule = polygon_rule(&unit_square(), 4, None).unwrap();
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        assert!(rule.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn polygon_monomial_exactness() {
        let sq = unit_square();
        let rule = polygon_rule(&sq, 4, None).unwrap();
        let got = rule.integrate(|p| p.x * p.x * p.y * p.y);
        assert!((got - 1.0 / 9.0).abs() < 1e-13, "got {got}");
        // all monomials up to total degree 4 on the square
        for i in 0..=4usize {
            for j in 0..=(4 - i) {
                let got = rule.integrate(|p| p.x.powi(i as i32) * p.y.powi(j as i32));
                let exact = 1.0 / ((i as f64 + 1.0) * (j as f64 + 1.0));
                assert!((got - exact).abs() < 1e-13, "x^{i} y^{j}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn nonconvex_polygon_rule() {
        // L-shaped hexagon: kernel search must find an interior fan centre
        let lshape = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(0.0, 2.0),
        ];
        let rule = polygon_rule(&lshape, 3, None).unwrap();
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
        let got = rule.integrate(|p| p.x);
        // int x over the L: 2 over lower rect [0,2]x[0,1], 0.5 over upper [0,1]x[1,2]
        assert!((got - 2.5).abs() < 1e-12);
    }

    #[test]
    fn non_star_shaped_polygon_has_no_kernel() {
        // U-shape: no point sees the whole boundary
        let u_shape: Vec<Point2<f64>> = vec![
            Point2::new(0.0, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(3.0, 3.0),
            Point2::new(2.0, 3.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 3.0),
            Point2::new(0.0, 3.0),
        ];
        assert!(kernel_point(&u_shape).is_err());
        assert!(polygon_rule(&u_shape, 2, None).is_err());
    }

    #[test]
    fn graded_rule_matches_adaptive_reference_for_inverse_sqrt_r() {
        // integral of r^{-1/2} over (0,1)^2, radial reference:
        // 2 * int_0^{pi/4} int_0^{1/cos t} r^{-1/2} r dr dt = (4/3) int_0^{pi/4} cos(t)^{-3/2} dt
        let reference = 4.0 / 3.0
            * adaptive_simpson(&|t: f64| t.cos().powf(-1.5), 0.0, std::f64::consts::FRAC_PI_4, 1e-13);
        let rule = polygon_rule(&unit_square(), 8, Some((Point2::new(0.0, 0.0), 12))).unwrap();
        let got = rule.integrate(|p| (p.x * p.x + p.y * p.y).powf(-0.25));
        assert!(
            ((got - reference) / reference).abs() < 1e-8,
            "got {got}, reference {reference}"
        );
    }

    #[test]
    fn grading_self_convergence_for_gradient_energy() {
        // |grad(r^{1/2} sin(theta/2))|^2 = 1/(4 r); element touching the tip at a corner
        let f = |p: Point2<f64>| 0.25 / (p.x * p.x + p.y * p.y).sqrt();
        let sq = unit_square();
        let at = |levels: usize| {
            polygon_rule(&sq, 8, Some((Point2::new(0.0, 0.0), levels)))
                .unwrap()
                .integrate(f)
        };
        let coarse = at(12);
        let fine = at(24);
        assert!(
            ((coarse - fine) / fine).abs() < 1e-8,
            "levels 12 vs 24: {coarse} vs {fine}"
        );
    }

    #[test]
    fn graded_edge_rule_convergence() {
        // int_0^1 x^{-1/2} dx = 2
        let a = Point2::new(0.0f64, 0.0);
        let b = Point2::new(1.0, 0.0);
        let rule = graded_edge_rule(a, b, 10, a, 14);
        let got = rule.integrate(|p| p.x.powf(-0.5));
        assert!((got - 2.0).abs() < 1e-12, "got {got}");
        // smooth integrands see plain accuracy
        let rule2 = graded_edge_rule(a, b, 6, a, 14);
        let got2 = rule2.integrate(|p| p.x.powi(3));
        assert!((got2 - 0.25).abs() < 1e-14);
        // weight sum is the edge length
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn graded_edge_interior_point_split() {
        let a = Point2::new(0.0f64, 0.0);
        let b = Point2::new(1.0, 0.0);
        let s = Point2::new(0.3, 0.0);
        let rule = graded_edge_rule(a, b, 8, s, 14);
        let got = rule.integrate(|p| (p.x - 0.3).abs().powf(-0.25));
        // reference: int_0^0.3 u^{-1/4} + int_0^0.7 u^{-1/4}
        let exact = (0.3_f64.powf(0.75) + 0.7_f64.powf(0.75)) / 0.75;
        assert!(((got - exact) / exact).abs() < 1e-12, "got {got} vs {exact}");
    }

    #[test]
    fn f32_rules_work() {
        let rule = gauss_edge(Point2::new(-1.0f32, 0.0), Point2::new(1.0, 0.0), 4);
        let got = rule.integrate(|p| p.x * p.x);
        assert!((got - 2.0 / 3.0).abs() < 1e-5);
        let sq: Vec<Point2<f32>> = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let prule = polygon_rule(&sq, 3, None).unwrap();
        let a: f32 = prule.weights.iter().sum();
        assert!((a - 1.0).abs() < 1e-5);
    }
}
