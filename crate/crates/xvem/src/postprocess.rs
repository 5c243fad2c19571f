//! Error norms against a manufactured solution, the discrete energy seminorm,
//! and convergence-rate fitting.

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::local_spaces::{evaluate_dofs, DofVector, ScalarFn, Spaces};
use crate::mesh::Mesh;
use crate::projector::ElementOperators;
use crate::quadrature::polygon_rule;
use crate::scalar::Real;
use rayon::prelude::*;

/// Vector-valued function of a point (analytic gradient of the exact
/// solution), with the usual branch hint.
pub trait VectorFn<T: Real>: Sync {
    fn eval(&self, p: Point2<T>, hint: Option<Point2<T>>) -> Point2<T>;
}

impl<T: Real, F> VectorFn<T> for F
where
    F: Fn(Point2<T>, Option<Point2<T>>) -> Point2<T> + Sync,
{
    fn eval(&self, p: Point2<T>, hint: Option<Point2<T>>) -> Point2<T> {
        self(p, hint)
    }
}

/// Relative error norms of a discrete solution. The numerators compare the
/// element projections of the solution against the exact fields at quadrature
/// points; the denominators use the projection of the exact solution's DOF
/// interpolant, which is the computable stand-in for the exact energy.
#[derive(Debug, Clone, Copy)]
pub struct ErrorNorms<T> {
    pub l2: T,
    pub h1: T,
    pub l2_num: T,
    pub l2_den: T,
    pub h1_num: T,
    pub h1_den: T,
}

pub fn compute_errors<T: Real>(
    mesh: &Mesh<T>,
    spaces: &Spaces<T>,
    solution: &DofVector<T>,
    exact: &dyn ScalarFn<T>,
    exact_gradient: &dyn VectorFn<T>,
) -> Result<ErrorNorms<T>> {
    let interp = evaluate_dofs(mesh, spaces, exact)?;
    let grading = Some((
        spaces.enrichment.singular_point,
        spaces.settings.grading_levels,
    ));
    let degree = 2 * spaces.k + 4;
    let sums: Vec<(T, T, T, T)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| -> Result<(T, T, T, T)> {
            let ops = ElementOperators::build(mesh, spaces, e)?;
            let proj_h = ops.project(&ops.gather(solution));
            let proj_i = ops.project(&ops.gather(&interp));
            let pts = mesh.element_vertex_positions(e);
            let rule = polygon_rule(&pts, degree, grading)?;
            let hint = Some(mesh.elements[e].centroid);
            let mut l2_num = T::zero();
            let mut l2_den = T::zero();
            let mut h1_num = T::zero();
            let mut h1_den = T::zero();
            for (&p, &w) in rule.nodes.iter().zip(&rule.weights) {
                let u = exact.eval(p, hint);
                let gu = exact_gradient.eval(p, hint);
                let uh = ops.evaluate(&proj_h, p);
                let guh = ops.evaluate_gradient(&proj_h, p);
                let ui = ops.evaluate(&proj_i, p);
                let gui = ops.evaluate_gradient(&proj_i, p);
                l2_num += w * (uh - u) * (uh - u);
                l2_den += w * ui * ui;
                let dg = guh.sub(gu);
                h1_num += w * dg.dot(dg);
                h1_den += w * gui.dot(gui);
            }
            Ok((l2_num, l2_den, h1_num, h1_den))
        })
        .collect::<Result<_>>()?;
    let (l2_num, l2_den, h1_num, h1_den) = sums.into_iter().fold(
        (T::zero(), T::zero(), T::zero(), T::zero()),
        |(a, b, c, d), (x, y, z, w)| (a + x, b + y, c + z, d + w),
    );
    Ok(ErrorNorms {
        l2: (l2_num / l2_den).max(T::zero()).sqrt(),
        h1: (h1_num / h1_den).max(T::zero()).sqrt(),
        l2_num,
        l2_den,
        h1_num,
        h1_den,
    })
}

/// Global discrete energy seminorm:
/// sum over elements of |grad Pi v|^2 + h^{-2}|moment(v - Pi v)|^2
/// + h^{-1}|v - Pi v|^2 on the boundary.
pub fn discrete_seminorm<T: Real>(
    mesh: &Mesh<T>,
    spaces: &Spaces<T>,
    v: &DofVector<T>,
) -> Result<T> {
    let total: Vec<T> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| -> Result<T> {
            let ops = ElementOperators::build(mesh, spaces, e)?;
            let lm = crate::assembly::local_stiffness(&ops);
            Ok(lm.seminorm_sq(&ops, &ops.gather(v)))
        })
        .collect::<Result<_>>()?;
    Ok(total
        .into_iter()
        .fold(T::zero(), |a, b| a + b)
        .max(T::zero())
        .sqrt())
}

/// One row of a convergence study.
#[derive(Debug, Clone)]
pub struct ErrorReport<T> {
    pub mesh_title: String,
    pub mesh_size: T,
    pub n_cells: usize,
    pub n_edges: usize,
    pub n_vertices: usize,
    /// interface DOFs remaining after static condensation and boundary fixing
    pub dofs: usize,
    pub l2_error: Option<T>,
    pub h1_error: Option<T>,
    pub cond_estimate: Option<T>,
    pub failed: bool,
}

/// Per-pair and asymptotic log-log slopes of a refinement study.
#[derive(Debug, Clone)]
pub struct RateFit<T> {
    /// slope of log(err) vs log(h) between consecutive meshes
    pub pairwise_h: Vec<T>,
    /// slope of log(err) vs log(DOFs) between consecutive meshes
    pub pairwise_dofs: Vec<T>,
    /// least-squares slope in h over the last (up to) 3 points
    pub asymptotic_h: T,
    /// least-squares slope in DOFs over the last (up to) 3 points
    pub asymptotic_dofs: T,
}

fn least_squares_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let n = T::of(xs.len() as f64);
    let mx = xs.iter().fold(T::zero(), |a, &b| a + b) / n;
    let my = ys.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Fit convergence rates of one error column (picked by `select`) over the
/// successful rows. Requires at least 2 rows and strictly decreasing h.
pub fn fit_rates<T: Real>(
    reports: &[ErrorReport<T>],
    select: impl Fn(&ErrorReport<T>) -> Option<T>,
) -> Result<RateFit<T>> {
    let rows: Vec<(T, usize, T)> = reports
        .iter()
        .filter_map(|r| select(r).map(|e| (r.mesh_size, r.dofs, e)))
        .collect();
    if rows.len() < 2 {
        return Err(Error::Config(
            "rate fitting needs at least two successful meshes".into(),
        ));
    }
    for w in rows.windows(2) {
        if w[1].0 >= w[0].0 {
            return Err(Error::Config("mesh sizes must decrease monotonically".into()));
        }
    }
    let log_h: Vec<T> = rows.iter().map(|r| r.0.ln()).collect();
    let log_dofs: Vec<T> = rows.iter().map(|r| T::of(r.1 as f64).ln()).collect();
    let log_e: Vec<T> = rows.iter().map(|r| r.2.ln()).collect();
    let pairwise_h = log_h
        .windows(2)
        .zip(log_e.windows(2))
        .map(|(h, e)| (e[1] - e[0]) / (h[1] - h[0]))
        .collect();
    let pairwise_dofs = log_dofs
        .windows(2)
        .zip(log_e.windows(2))
        .map(|(d, e)| (e[1] - e[0]) / (d[1] - d[0]))
        .collect();
    let tail = rows.len().min(3);
    let s = rows.len() - tail;
    Ok(RateFit {
        pairwise_h,
        pairwise_dofs,
        asymptotic_h: least_squares_slope(&log_h[s..], &log_e[s..]),
        asymptotic_dofs: least_squares_slope(&log_dofs[s..], &log_e[s..]),
    })
}
