//! Enrichment fields and the element/edge enrichment plan.
//!
//! A [`ScalarField`] is any globally continuous H^1 function with evaluable
//! value, gradient and Laplacian. The built-in fields are the harmonic corner
//! singularities r^a sin(a (theta - theta0)); their branch cuts coincide with
//! domain boundaries (or the crack), and evaluation takes an optional hint
//! point that disambiguates which side of a cut a query point belongs to.

use crate::geometry::{point_polygon_distance, Point2};
use crate::scalar::Real;
use std::sync::Arc;

pub trait ScalarField<T: Real>: Send + Sync {
    /// Field value. `hint` is a point interior to the owning element; it is
    /// only consulted when `p` lies exactly on a branch cut.
    fn value(&self, p: Point2<T>, hint: Option<Point2<T>>) -> T;
    /// Gradient; components are infinite at a point where the field is not
    /// differentiable (e.g. the singular point itself).
    fn gradient(&self, p: Point2<T>, hint: Option<Point2<T>>) -> Point2<T>;
    fn laplacian(&self, p: Point2<T>, hint: Option<Point2<T>>) -> T;
}

/// r^a sin(a (theta - theta0)) around `origin`, with theta lifted into
/// [branch, branch + 2 pi). Harmonic away from the origin.
#[derive(Debug, Clone)]
pub struct CornerSingularity<T> {
    pub origin: Point2<T>,
    /// singularity exponent a (1/2 for a crack, 2/3 for a 3 pi/2 corner)
    pub exponent: T,
    /// angular phase so the field vanishes on both faces of the corner
    pub theta0: T,
    /// angles below this value are lifted by 2 pi
    pub branch: T,
    /// whether points exactly on the cut need a side hint (crack geometry,
    /// where both faces share the same locus)
    pub hint_on_cut: bool,
}

impl<T: Real> CornerSingularity<T> {
    fn polar(&self, p: Point2<T>, hint: Option<Point2<T>>) -> (T, T) {
        let d = p.sub(self.origin);
        let r = d.norm();
        let mut theta = d.y.atan2(d.x);
        if theta < self.branch {
            theta += T::two_pi();
        } else if self.hint_on_cut && theta == self.branch {
            // exactly on the cut: the hint point says which face
            let below = hint.is_some_and(|h| h.y - self.origin.y < T::zero());
            if below {
                theta += T::two_pi();
            }
        }
        (r, theta)
    }
}

impl<T: Real> ScalarField<T> for CornerSingularity<T> {
    fn value(&self, p: Point2<T>, hint: Option<Point2<T>>) -> T {
        let (r, theta) = self.polar(p, hint);
        if r == T::zero() {
            return T::zero();
        }
        let a = self.exponent;
        r.powf(a) * (a * (theta - self.theta0)).sin()
    }

    fn gradient(&self, p: Point2<T>, hint: Option<Point2<T>>) -> Point2<T> {
        let (r, theta) = self.polar(p, hint);
        let a = self.exponent;
        if r == T::zero() {
            let inf = T::max_value().unwrap() * T::of(2.0); // overflows to +inf
            return Point2::new(inf, inf);
        }
        let scale = a * r.powf(a - T::one());
        let arg = a * (theta - self.theta0);
        let (s, c) = (arg.sin(), arg.cos());
        // grad = psi_r e_r + (psi_theta / r) e_theta
        Point2::new(
            scale * (s * theta.cos() - c * theta.sin()),
            scale * (s * theta.sin() + c * theta.cos()),
        )
    }

    fn laplacian(&self, _p: Point2<T>, _hint: Option<Point2<T>>) -> T {
        T::zero()
    }
}

/// Finite-dimensional space of enrichment fields attached to one singular point.
#[derive(Clone)]
pub struct EnrichmentSpace<T: Real> {
    pub fields: Vec<Arc<dyn ScalarField<T>>>,
    pub singular_point: Point2<T>,
    /// angular window (for documentation/diagnostics)
    pub angular_range: (T, T),
}

impl<T: Real> EnrichmentSpace<T> {
    pub fn custom(
        fields: Vec<Arc<dyn ScalarField<T>>>,
        singular_point: Point2<T>,
        angular_range: (T, T),
    ) -> Self {
        Self {
            fields,
            singular_point,
            angular_range,
        }
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }
}

/// Crack-tip singularity of the fractured square: psi = r^{1/2} sin(theta/2),
/// theta in (0, 2 pi) measured from the positive x-axis, branch cut on the
/// crack. Both crack faces carry zero trace.
pub fn fracture_singularity<T: Real>() -> EnrichmentSpace<T> {
    let f = CornerSingularity {
        origin: Point2::origin(),
        exponent: T::of(0.5),
        theta0: T::zero(),
        branch: T::zero(),
        hint_on_cut: true,
    };
    EnrichmentSpace::custom(
        vec![Arc::new(f)],
        Point2::origin(),
        (T::zero(), T::two_pi()),
    )
}

/// Re-entrant corner singularity of (-1,1)^2 \ [0,1)^2:
/// psi = r^{2/3} sin((2/3)(theta - pi/2)), theta in [pi/2, 2 pi].
pub fn lshape_singularity_topright<T: Real>() -> EnrichmentSpace<T> {
    let f = CornerSingularity {
        origin: Point2::origin(),
        exponent: T::of(2.0 / 3.0),
        theta0: T::frac_pi_2(),
        branch: T::frac_pi_2(),
        hint_on_cut: false,
    };
    EnrichmentSpace::custom(
        vec![Arc::new(f)],
        Point2::origin(),
        (T::frac_pi_2(), T::two_pi()),
    )
}

/// Re-entrant corner singularity of (-1,1)^2 \ [0,1) x (-1,0]:
/// psi = r^{2/3} sin((2/3) theta), theta in [0, 3 pi/2].
pub fn lshape_singularity_bottomright<T: Real>() -> EnrichmentSpace<T> {
    let f = CornerSingularity {
        origin: Point2::origin(),
        exponent: T::of(2.0 / 3.0),
        theta0: T::zero(),
        branch: T::zero(),
        hint_on_cut: false,
    };
    EnrichmentSpace::custom(
        vec![Arc::new(f)],
        Point2::origin(),
        (T::zero(), T::of(1.5) * T::pi()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnrichmentMode {
    None,
    Global,
    Local,
}

/// Where enrichment DOFs are placed: nowhere, everywhere, or only on elements
/// within distance `gamma` of the singular point.
#[derive(Debug, Clone, Copy)]
pub struct EnrichmentPlan<T> {
    pub mode: EnrichmentMode,
    pub gamma: T,
}

impl<T: Real> EnrichmentPlan<T> {
    pub fn none() -> Self {
        Self {
            mode: EnrichmentMode::None,
            gamma: T::zero(),
        }
    }

    pub fn global() -> Self {
        Self {
            mode: EnrichmentMode::Global,
            gamma: T::zero(),
        }
    }

    pub fn local(gamma: T) -> Self {
        Self {
            mode: EnrichmentMode::Local,
            gamma,
        }
    }
}

/// Whether an element (given by its vertex polygon) carries enrichment DOFs.
/// Local mode uses the closed disk of radius gamma; gamma = 0 degenerates to
/// no enrichment.
pub fn is_enriched<T: Real>(
    element_polygon: &[Point2<T>],
    plan: &EnrichmentPlan<T>,
    space: &EnrichmentSpace<T>,
) -> bool {
    match plan.mode {
        EnrichmentMode::None => false,
        EnrichmentMode::Global => true,
        EnrichmentMode::Local => {
            plan.gamma > T::zero()
                && point_polygon_distance(space.singular_point, element_polygon) <= plan.gamma
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// gradient check by 5-point central differences of value()
    fn fd_gradient(f: &dyn ScalarField<f64>, p: Point2<f64>, h: f64) -> Point2<f64> {
        let vx = |x| f.value(Point2::new(x, p.y), None);
        let vy = |y| f.value(Point2::new(p.x, y), None);
        let d = |v: &dyn Fn(f64) -> f64, c: f64| {
            (v(c - 2.0 * h) - 8.0 * v(c - h) + 8.0 * v(c + h) - v(c + 2.0 * h)) / (12.0 * h)
        };
        Point2::new(d(&vx, p.x), d(&vy, p.y))
    }

    /// divergence of the analytic gradient by central differences: an
    /// independent harmonicity oracle
    fn fd_laplacian_of_gradient(f: &dyn ScalarField<f64>, p: Point2<f64>, h: f64) -> f64 {
        let gx = |x: f64| f.gradient(Point2::new(x, p.y), None).x;
        let gy = |y: f64| f.gradient(Point2::new(p.x, y), None).y;
        (gx(p.x + h) - gx(p.x - h)) / (2.0 * h) + (gy(p.y + h) - gy(p.y - h)) / (2.0 * h)
    }

    #[test]
    fn fracture_values() {
        let space = fracture_singularity::<f64>();
        let f = &space.fields[0];
        // r = 1, theta = pi: sin(pi/2) = 1
        assert!((f.value(Point2::new(-1.0, 0.0), None) - 1.0).abs() < 1e-14);
        // both crack faces carry zero trace
        let above = f.value(Point2::new(0.5, 0.0), Some(Point2::new(0.5, 0.1)));
        let below = f.value(Point2::new(0.5, 0.0), Some(Point2::new(0.5, -0.1)));
        assert!(above.abs() < 1e-14, "above face: {above}");
        assert!(below.abs() < 1e-13, "below face: {below}");
        // value at the tip is zero, gradient flagged unbounded
        assert_eq!(f.value(Point2::origin(), None), 0.0);
        let g = f.gradient(Point2::origin(), None);
        assert!(!g.x.is_finite() && !g.y.is_finite());
    }

    #[test]
    fn fracture_gradient_jump_across_crack() {
        let space = fracture_singularity::<f64>();
        let f = &space.fields[0];
        let g_above = f.gradient(Point2::new(0.25, 0.0), Some(Point2::new(0.25, 0.1)));
        let g_below = f.gradient(Point2::new(0.25, 0.0), Some(Point2::new(0.25, -0.1)));
        // normal derivative is 0.5 r^{-1/2} pointing up above, down below
        let want = 0.5 / 0.25_f64.sqrt();
        assert!((g_above.y - want).abs() < 1e-12);
        assert!((g_below.y + want).abs() < 1e-12);
        assert!(g_above.x.abs() < 1e-12 && g_below.x.abs() < 1e-12);
    }

    #[test]
    fn lshape_topright_values() {
        let space = lshape_singularity_topright::<f64>();
        let f = &space.fields[0];
        let t = 5.0 * PI / 4.0;
        assert!((f.value(Point2::new(t.cos(), t.sin()), None) - 1.0).abs() < 1e-14);
        // zero on both corner faces
        assert!(f.value(Point2::new(0.0, 0.5), None).abs() < 1e-14);
        assert!(f.value(Point2::new(0.5, 0.0), None).abs() < 1e-13);
    }

    #[test]
    fn lshape_topright_gradient_magnitude() {
        let space = lshape_singularity_topright::<f64>();
        let f = &space.fields[0];
        let r: f64 = 1e-2;
        let t = PI; // interior direction
        let p = Point2::new(r * t.cos(), r * t.sin());
        let g = f.gradient(p, None);
        let want = (2.0 / 3.0) * r.powf(-1.0 / 3.0);
        assert!((g.norm() - want).abs() / want < 1e-12, "|grad| = {}", g.norm());
        let fd = fd_gradient(f.as_ref(), p, r * 1e-4);
        assert!((g.x - fd.x).abs() / want < 1e-6);
        assert!((g.y - fd.y).abs() / want < 1e-6);
    }

    #[test]
    fn lshape_bottomright_values() {
        let space = lshape_singularity_bottomright::<f64>();
        let f = &space.fields[0];
        let t = 3.0 * PI / 4.0;
        assert!((f.value(Point2::new(t.cos(), t.sin()), None) - 1.0).abs() < 1e-14);
        assert!(f.value(Point2::new(0.5, 0.0), None).abs() < 1e-14);
        assert!(f.value(Point2::new(0.0, -0.5), None).abs() < 1e-13);
    }

    #[test]
    fn builtin_fields_are_harmonic() {
        let spaces = [
            fracture_singularity::<f64>(),
            lshape_singularity_topright::<f64>(),
            lshape_singularity_bottomright::<f64>(),
        ];
        // deterministic probe points with r > 1e-3, avoiding branch cuts
        for (si, space) in spaces.iter().enumerate() {
            let f = &space.fields[0];
            for i in 0..100 {
                let r = 1e-3 + 0.9 * (i as f64 / 100.0);
                let t = 0.6 + 2.0 * (i as f64 * 0.031415).fract();
                let p = Point2::new(r * (PI * t / 2.0).cos(), r * (PI * t / 2.0).sin());
                // analytic laplacian is identically zero
                assert_eq!(f.laplacian(p, None), 0.0);
                // independent check: divergence of the analytic gradient
                let lap = fd_laplacian_of_gradient(f.as_ref(), p, r * 2e-6);
                let scale = f.gradient(p, None).norm() / r;
                assert!(
                    lap.abs() < 1e-6 * scale.max(1.0),
                    "space {si} point {i}: div grad = {lap:e}"
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spaces = [
            fracture_singularity::<f64>(),
            lshape_singularity_topright::<f64>(),
            lshape_singularity_bottomright::<f64>(),
        ];
        for space in &spaces {
            let f = &space.fields[0];
            for i in 0..40 {
                let r = 0.02 + 0.9 * (i as f64 / 40.0);
                let t = 0.55 + 0.4 * ((i * 7 % 13) as f64 / 13.0);
                let p = Point2::new(r * (PI * t).cos(), r * (PI * t).sin());
                let g = f.gradient(p, None);
                let fd = fd_gradient(f.as_ref(), p, r * 1e-5);
                let scale = g.norm();
                assert!(
                    (g.x - fd.x).abs() < 1e-6 * scale && (g.y - fd.y).abs() < 1e-6 * scale,
                    "point {i}: analytic {g:?} vs fd {fd:?}"
                );
            }
        }
    }

    #[test]
    fn enrichment_plan_modes() {
        let space = fracture_singularity::<f64>();
        let tip_cell = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.25, 0.0),
            Point2::new(0.25, 0.25),
            Point2::new(0.0, 0.25),
        ];
        let far_cell: Vec<Point2<f64>> = tip_cell
            .iter()
            .map(|p| Point2::new(p.x + 0.2, p.y + 0.0))
            .collect();
        let local = EnrichmentPlan::local(0.15);
        assert!(is_enriched(&tip_cell, &local, &space));
        assert!(!is_enriched(&far_cell, &local, &space)); // nearest point at 0.2
        assert!(!is_enriched(&tip_cell, &EnrichmentPlan::none(), &space));
        assert!(is_enriched(&far_cell, &EnrichmentPlan::global(), &space));
        // gamma = 0 degenerates to no enrichment
        assert!(!is_enriched(&tip_cell, &EnrichmentPlan::local(0.0), &space));
    }

    #[test]
    fn enriched_count_matches_brute_force_scan() {
        let mesh = crate::mesh::build_cartesian_fractured_mesh::<f64>(16).unwrap();
        let space = fracture_singularity::<f64>();
        let plan = EnrichmentPlan::local(0.15);
        let via_plan = mesh
            .elements
            .iter()
            .filter(|e| is_enriched(&mesh.element_vertex_positions(e.id), &plan, &space))
            .count();
        // brute force: fine point sampling of each element against the disk
        let mut brute = 0;
        for e in &mesh.elements {
            let pts = mesh.element_vertex_positions(e.id);
            let (x0, y0) = (pts.iter().map(|p| p.x).fold(f64::MAX, f64::min),
                            pts.iter().map(|p| p.y).fold(f64::MAX, f64::min));
            let (x1, y1) = (pts.iter().map(|p| p.x).fold(f64::MIN, f64::max),
                            pts.iter().map(|p| p.y).fold(f64::MIN, f64::max));
            let mut hit = false;
            let steps = 60;
            'scan: for i in 0..=steps {
                for j in 0..=steps {
                    let p = Point2::new(
                        x0 + (x1 - x0) * i as f64 / steps as f64,
                        y0 + (y1 - y0) * j as f64 / steps as f64,
                    );
                    if crate::geometry::point_in_polygon(p, &pts) && p.norm() <= 0.15 {
                        hit = true;
                        break 'scan;
                    }
                }
            }
            if hit {
                brute += 1;
            }
        }
        assert_eq!(via_plan, brute);
    }

    #[test]
    fn continuity_across_crack_closure() {
        // fracture field is continuous on the slit closure: both traces are 0
        let space = fracture_singularity::<f64>();
        let f = &space.fields[0];
        for i in 1..20 {
            let x = i as f64 / 20.0;
            let up = f.value(Point2::new(x, 0.0), Some(Point2::new(x, 1.0)));
            let down = f.value(Point2::new(x, 0.0), Some(Point2::new(x, -1.0)));
            assert!(up.abs() < 1e-13 && down.abs() < 1e-13);
        }
    }
}
