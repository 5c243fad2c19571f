//! Per-edge and per-element local spaces, the DOF layout, and DOF evaluation.
//!
//! Edge spaces carry an L^2-orthonormal Legendre basis of P_k(E) plus an
//! orthonormal singular complement built by projecting each enrichment field
//! off the polynomials; components whose relative projection residual falls
//! below `tau_rank` are dropped (the edge is effectively unenriched for that
//! field, which is what keeps far-field enrichment from destroying the
//! conditioning). Element moment spaces hold an orthonormal basis of
//! P_l(P) + (Laplacians of the enrichment fields), rank-filtered the same way.

use crate::enrichment::{is_enriched, EnrichmentPlan, EnrichmentSpace, ScalarField};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Point2};
use crate::mesh::Mesh;
use crate::quadrature::{gauss_edge, graded_edge_rule, polygon_rule, EdgeRule, PolygonRule};
use crate::scalar::Real;
use nalgebra::DVector;
use rayon::prelude::*;
use std::sync::Arc;

/// Vector of global DOF coefficients.
pub type DofVector<T> = DVector<T>;

/// Scalar function evaluable at points, with an optional branch hint.
/// Implemented by closures `Fn(Point2<T>, Option<Point2<T>>) -> T`.
pub trait ScalarFn<T: Real>: Sync {
    fn eval(&self, p: Point2<T>, hint: Option<Point2<T>>) -> T;
}

impl<T: Real, F> ScalarFn<T> for F
where
    F: Fn(Point2<T>, Option<Point2<T>>) -> T + Sync,
{
    fn eval(&self, p: Point2<T>, hint: Option<Point2<T>>) -> T {
        self(p, hint)
    }
}

/// Tunable numerical constants of the space construction.
#[derive(Debug, Clone, Copy)]
pub struct SpaceSettings<T> {
    /// relative projection residual below which an enrichment contribution is
    /// dropped as numerically polynomial
    pub tau_rank: T,
    /// geometric grading levels toward the singular point
    pub grading_levels: usize,
}

impl<T: Real> Default for SpaceSettings<T> {
    fn default() -> Self {
        Self {
            tau_rank: T::of(1e-8),
            grading_levels: 14,
        }
    }
}

/// Number of monomials of total degree <= d in two variables.
pub fn n_poly(d: usize) -> usize {
    (d + 1) * (d + 2) / 2
}

/// Scaled monomial basis ((x - xc)/h)^i ((y - yc)/h)^j of total degree <= degree.
#[derive(Debug, Clone)]
pub struct ScaledMonomials<T> {
    pub centre: Point2<T>,
    pub h: T,
    pub exponents: Vec<(u32, u32)>,
}

impl<T: Real> ScaledMonomials<T> {
    pub fn new(centre: Point2<T>, h: T, degree: usize) -> Self {
        let mut exponents = Vec::with_capacity(n_poly(degree));
        for total in 0..=degree as u32 {
            for i in (0..=total).rev() {
                exponents.push((i, total - i));
            }
        }
        Self { centre, h, exponents }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    fn local(&self, p: Point2<T>) -> (T, T) {
        (
            (p.x - self.centre.x) / self.h,
            (p.y - self.centre.y) / self.h,
        )
    }

    pub fn value(&self, idx: usize, p: Point2<T>) -> T {
        let (x, y) = self.local(p);
        let (i, j) = self.exponents[idx];
        x.powi(i as i32) * y.powi(j as i32)
    }

    pub fn gradient(&self, idx: usize, p: Point2<T>) -> Point2<T> {
        let (x, y) = self.local(p);
        let (i, j) = self.exponents[idx];
        let gx = if i == 0 {
            T::zero()
        } else {
            T::of(i as f64) * x.powi(i as i32 - 1) * y.powi(j as i32) / self.h
        };
        let gy = if j == 0 {
            T::zero()
        } else {
            T::of(j as f64) * x.powi(i as i32) * y.powi(j as i32 - 1) / self.h
        };
        Point2::new(gx, gy)
    }

    pub fn laplacian(&self, idx: usize, p: Point2<T>) -> T {
        let (x, y) = self.local(p);
        let (i, j) = self.exponents[idx];
        let h2 = self.h * self.h;
        let mut lap = T::zero();
        if i >= 2 {
            lap += T::of((i * (i - 1)) as f64) * x.powi(i as i32 - 2) * y.powi(j as i32) / h2;
        }
        if j >= 2 {
            lap += T::of((j * (j - 1)) as f64) * x.powi(i as i32) * y.powi(j as i32 - 2) / h2;
        }
        lap
    }
}

/// Legendre polynomial L_i(t) by recurrence.
fn legendre<T: Real>(i: usize, t: T) -> T {
    match i {
        0 => T::one(),
        1 => t,
        _ => {
            let mut p0 = T::one();
            let mut p1 = t;
            for n in 1..i {
                let nf = T::of(n as f64);
                let p2 = ((T::of(2.0) * nf + T::one()) * t * p1 - nf * p0) / (nf + T::one());
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// A member of the singular edge complement, stored as a linear combination
/// of the raw enrichment fields and the Legendre basis.
#[derive(Debug, Clone)]
struct SingularEdgeFn<T> {
    field_coeffs: Vec<T>,
    legendre_coeffs: Vec<T>,
}

/// Orthonormalised trace space of one edge: P_k(E) plus the singular
/// complement, and the derived D2 space P_{k-2}(E) + complement.
pub struct EdgeSpace<T: Real> {
    pub edge_id: usize,
    pub k: usize,
    pub enriched: bool,
    a: Point2<T>,
    b: Point2<T>,
    h: T,
    hint: Option<Point2<T>>,
    fields: Vec<Arc<dyn ScalarField<T>>>,
    singular: Vec<SingularEdgeFn<T>>,
    /// master quadrature rule; every integral on this edge uses it
    pub rule: EdgeRule<T>,
}

impl<T: Real> EdgeSpace<T> {
    /// Number of retained singular basis members.
    pub fn n_singular(&self) -> usize {
        self.singular.len()
    }

    /// dim of the D2 moment space P_{k-2}(E) + complement; 0 polynomial
    /// moments when k = 1.
    pub fn dim_d2(&self) -> usize {
        (self.k - 1) + self.singular.len()
    }

    /// dim of the full trace space P_k(E) + complement.
    pub fn dim_trace(&self) -> usize {
        (self.k + 1) + self.singular.len()
    }

    pub fn endpoints(&self) -> (Point2<T>, Point2<T>) {
        (self.a, self.b)
    }

    pub fn length(&self) -> T {
        self.h
    }

    pub fn hint(&self) -> Option<Point2<T>> {
        self.hint
    }

    fn param(&self, p: Point2<T>) -> T {
        let d = self.b.sub(self.a);
        T::of(2.0) * p.sub(self.a).dot(d) / d.dot(d) - T::one()
    }

    /// L^2(E)-orthonormal Legendre basis member i (0..=k).
    pub fn poly_value(&self, i: usize, p: Point2<T>) -> T {
        let t = self.param(p);
        legendre(i, t) * ((T::of(2.0 * i as f64) + T::one()) / self.h).sqrt()
    }

    /// Singular basis member j, orthonormal and orthogonal to P_k(E).
    pub fn singular_value(&self, j: usize, p: Point2<T>) -> T {
        let s = &self.singular[j];
        let mut v = T::zero();
        for (f, &c) in self.fields.iter().zip(&s.field_coeffs) {
            if c != T::zero() {
                v += c * f.value(p, self.hint);
            }
        }
        for (i, &c) in s.legendre_coeffs.iter().enumerate() {
            if c != T::zero() {
                v += c * self.poly_value(i, p);
            }
        }
        v
    }

    /// Value of the `idx`-th member of the full trace basis
    /// [phi_0 .. phi_k, zeta_1 .. zeta_p].
    pub fn trace_value(&self, idx: usize, p: Point2<T>) -> T {
        if idx <= self.k {
            self.poly_value(idx, p)
        } else {
            self.singular_value(idx - self.k - 1, p)
        }
    }

    /// Value of the `idx`-th member of the D2 basis
    /// [phi_0 .. phi_{k-2}, zeta_1 .. zeta_p].
    pub fn d2_value(&self, idx: usize, p: Point2<T>) -> T {
        if idx < self.k - 1 {
            self.poly_value(idx, p)
        } else {
            self.singular_value(idx - (self.k - 1), p)
        }
    }

    /// Trace-basis index corresponding to a D2-basis index.
    pub fn d2_to_trace_index(&self, idx: usize) -> usize {
        if idx < self.k - 1 {
            idx
        } else {
            idx + 2 // skip phi_{k-1}, phi_k
        }
    }
}

fn build_edge_rule<T: Real>(
    a: Point2<T>,
    b: Point2<T>,
    k: usize,
    enriched: bool,
    singular_point: Point2<T>,
    levels: usize,
) -> EdgeRule<T> {
    let base = k + 2;
    if !enriched {
        return gauss_edge(a, b, base);
    }
    let h = a.dist(b);
    let dist = point_segment_distance(singular_point, a, b);
    if dist <= h * T::of(1e-12) {
        graded_edge_rule(a, b, base.max(10), singular_point, levels)
    } else if dist < h {
        gauss_edge(a, b, base.max(16))
    } else {
        gauss_edge(a, b, base.max(10))
    }
}

/// Build the trace space of one edge. `field_scales` gives, per enrichment
/// field, the expected magnitude of the field near this edge (used to detect
/// identically-vanishing traces such as crack faces).
#[allow(clippy::too_many_arguments)]
pub fn build_edge_space<T: Real>(
    edge_id: usize,
    a: Point2<T>,
    b: Point2<T>,
    k: usize,
    enriched: bool,
    space: &EnrichmentSpace<T>,
    field_scales: &[T],
    hint: Option<Point2<T>>,
    settings: &SpaceSettings<T>,
) -> EdgeSpace<T> {
    assert!(k >= 1);
    let rule = build_edge_rule(a, b, k, enriched, space.singular_point, settings.grading_levels);
    let mut es = EdgeSpace {
        edge_id,
        k,
        enriched,
        a,
        b,
        h: a.dist(b),
        hint,
        fields: space.fields.clone(),
        singular: Vec::new(),
        rule,
    };
    if !enriched {
        return es;
    }

    let quad_n = es.rule.len();
    let node_hint = es.hint;
    for (fi, field) in space.fields.iter().enumerate() {
        // start from the raw field; coefficients track the linear combination
        let mut fc = vec![T::zero(); space.fields.len()];
        fc[fi] = T::one();
        let mut lc = vec![T::zero(); k + 1];
        let mut values: Vec<T> = es
            .rule
            .nodes
            .iter()
            .map(|&p| field.value(p, node_hint))
            .collect();
        let norm0 = l2_norm(&es.rule, &values);
        // trace numerically zero relative to the field's local magnitude
        if norm0 <= T::of(1e-12) * field_scales[fi].max(T::default_epsilon()) {
            continue;
        }
        // project off P_k(E) and previously kept members; one
        // reorthogonalisation pass
        for _pass in 0..2 {
            for (i, lc_i) in lc.iter_mut().enumerate() {
                let c = inner(&es.rule, &values, |p| es.poly_value(i, p));
                *lc_i -= c;
                for (q, v) in values.iter_mut().enumerate() {
                    *v -= c * es.poly_value(i, es.rule.nodes[q]);
                }
            }
            for j in 0..es.singular.len() {
                let c = inner(&es.rule, &values, |p| es.singular_value(j, p));
                for (t, &sc) in es.singular[j].field_coeffs.iter().enumerate() {
                    fc[t] -= c * sc;
                }
                for (t, &sc) in es.singular[j].legendre_coeffs.iter().enumerate() {
                    lc[t] -= c * sc;
                }
                for (q, v) in values.iter_mut().enumerate() {
                    *v -= c * es.singular_value(j, es.rule.nodes[q]);
                }
            }
        }
        let resid = l2_norm(&es.rule, &values);
        if resid <= settings.tau_rank * norm0 {
            continue; // numerically polynomial on this edge
        }
        let inv = T::one() / resid;
        for c in fc.iter_mut() {
            *c *= inv;
        }
        for c in lc.iter_mut() {
            *c *= inv;
        }
        es.singular.push(SingularEdgeFn {
            field_coeffs: fc,
            legendre_coeffs: lc,
        });
        debug_assert_eq!(es.rule.len(), quad_n);
    }
    es
}

fn inner<T: Real>(rule: &EdgeRule<T>, values: &[T], mut g: impl FnMut(Point2<T>) -> T) -> T {
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .zip(values)
        .fold(T::zero(), |acc, ((&p, &w), &v)| acc + w * v * g(p))
}

fn l2_norm<T: Real>(rule: &EdgeRule<T>, values: &[T]) -> T {
    rule.weights
        .iter()
        .zip(values)
        .fold(T::zero(), |acc, (&w, &v)| acc + w * v * v)
        .max(T::zero())
        .sqrt()
}

/// A member of the element moment space, stored as a linear combination of
/// scaled monomials of degree <= l and the Laplacians of enrichment fields.
#[derive(Debug, Clone)]
struct MomentFn<T> {
    mono_coeffs: Vec<T>,
    lap_coeffs: Vec<T>,
}

/// Orthonormalised moment space P_l(P) + (Laplacians of enrichment fields).
pub struct ElementMomentSpace<T: Real> {
    pub element_id: usize,
    pub l: usize,
    pub monomials: ScaledMonomials<T>,
    fields: Vec<Arc<dyn ScalarField<T>>>,
    hint: Option<Point2<T>>,
    members: Vec<MomentFn<T>>,
    /// master element rule shared with projector/stiffness integrals
    pub rule: PolygonRule<T>,
}

impl<T: Real> ElementMomentSpace<T> {
    pub fn dim(&self) -> usize {
        self.members.len()
    }

    pub fn value(&self, j: usize, p: Point2<T>) -> T {
        let m = &self.members[j];
        let mut v = T::zero();
        for (i, &c) in m.mono_coeffs.iter().enumerate() {
            if c != T::zero() {
                v += c * self.monomials.value(i, p);
            }
        }
        for (f, &c) in self.fields.iter().zip(&m.lap_coeffs) {
            if c != T::zero() {
                v += c * f.laplacian(p, self.hint);
            }
        }
        v
    }

    /// Coefficients of the constant function 1 in the orthonormal basis.
    pub fn constant_coefficients(&self) -> Vec<T> {
        self.members
            .iter()
            .map(|_| T::zero())
            .enumerate()
            .map(|(j, _)| {
                self.rule
                    .nodes
                    .iter()
                    .zip(&self.rule.weights)
                    .fold(T::zero(), |acc, (&p, &w)| acc + w * self.value(j, p))
            })
            .collect()
    }
}

/// Build the moment space of one element with the given master rule.
#[allow(clippy::too_many_arguments)]
pub fn build_element_moment_space<T: Real>(
    element_id: usize,
    centre: Point2<T>,
    h: T,
    k: usize,
    enriched: bool,
    space: &EnrichmentSpace<T>,
    hint: Option<Point2<T>>,
    rule: PolygonRule<T>,
    settings: &SpaceSettings<T>,
) -> ElementMomentSpace<T> {
    assert!(k >= 1);
    let l = k.saturating_sub(2);
    let monomials = ScaledMonomials::new(centre, h, l);
    let n_mono = monomials.len();
    let n_fields = space.fields.len();
    let mut ems = ElementMomentSpace {
        element_id,
        l,
        monomials,
        fields: space.fields.clone(),
        hint,
        members: Vec::new(),
        rule,
    };
    // candidate list: monomials first (never dropped in practice), then the
    // field Laplacians when the element is enriched
    let n_cand = n_mono + if enriched { n_fields } else { 0 };
    for cand in 0..n_cand {
        let mut mc = vec![T::zero(); n_mono];
        let mut lc = vec![T::zero(); n_fields];
        let mut values: Vec<T>;
        if cand < n_mono {
            mc[cand] = T::one();
            values = ems
                .rule
                .nodes
                .iter()
                .map(|&p| ems.monomials.value(cand, p))
                .collect();
        } else {
            lc[cand - n_mono] = T::one();
            values = ems
                .rule
                .nodes
                .iter()
                .map(|&p| ems.fields[cand - n_mono].laplacian(p, hint))
                .collect();
        }
        let norm0 = poly_l2_norm(&ems.rule, &values);
        if norm0 <= T::default_epsilon() {
            continue; // e.g. harmonic enrichment: Laplacian vanishes
        }
        for _pass in 0..2 {
            for j in 0..ems.members.len() {
                let c = ems
                    .rule
                    .nodes
                    .iter()
                    .zip(&ems.rule.weights)
                    .zip(&values)
                    .fold(T::zero(), |acc, ((&p, &w), &v)| acc + w * v * ems.value(j, p));
                for (t, &sc) in ems.members[j].mono_coeffs.iter().enumerate() {
                    mc[t] -= c * sc;
                }
                for (t, &sc) in ems.members[j].lap_coeffs.iter().enumerate() {
                    lc[t] -= c * sc;
                }
                for (q, v) in values.iter_mut().enumerate() {
                    *v -= c * ems.value(j, ems.rule.nodes[q]);
                }
            }
        }
        let resid = poly_l2_norm(&ems.rule, &values);
        if resid <= settings.tau_rank * norm0 {
            continue;
        }
        let inv = T::one() / resid;
        for c in mc.iter_mut() {
            *c *= inv;
        }
        for c in lc.iter_mut() {
            *c *= inv;
        }
        ems.members.push(MomentFn {
            mono_coeffs: mc,
            lap_coeffs: lc,
        });
    }
    ems
}

fn poly_l2_norm<T: Real>(rule: &PolygonRule<T>, values: &[T]) -> T {
    rule.weights
        .iter()
        .zip(values)
        .fold(T::zero(), |acc, (&w, &v)| acc + w * v * v)
        .max(T::zero())
        .sqrt()
}

/// Global indexing of D1 (vertex), D2 (edge moment) and D3 (element moment)
/// unknowns.
#[derive(Debug, Clone)]
pub struct DofLayout {
    pub n_d1: usize,
    pub n_d2: usize,
    pub n_d3: usize,
    pub edge_offsets: Vec<usize>,
    pub edge_dims: Vec<usize>,
    pub element_offsets: Vec<usize>,
    pub element_dims: Vec<usize>,
}

impl DofLayout {
    pub fn n_total(&self) -> usize {
        self.n_d1 + self.n_d2 + self.n_d3
    }

    pub fn vertex_dof(&self, v: usize) -> usize {
        v
    }

    pub fn edge_dof(&self, e: usize, j: usize) -> usize {
        debug_assert!(j < self.edge_dims[e]);
        self.n_d1 + self.edge_offsets[e] + j
    }

    pub fn element_dof(&self, el: usize, j: usize) -> usize {
        debug_assert!(j < self.element_dims[el]);
        self.n_d1 + self.n_d2 + self.element_offsets[el] + j
    }
}

/// All local spaces for a mesh at a given degree, plus the shared DOF layout.
pub struct Spaces<T: Real> {
    pub k: usize,
    pub l: usize,
    pub edge_spaces: Vec<EdgeSpace<T>>,
    pub moment_spaces: Vec<ElementMomentSpace<T>>,
    pub element_enriched: Vec<bool>,
    /// indices of enrichment fields kept in each element's extended basis
    pub element_kept_fields: Vec<Vec<usize>>,
    pub layout: DofLayout,
    pub enrichment: EnrichmentSpace<T>,
    pub settings: SpaceSettings<T>,
}

impl<T: Real> Spaces<T> {
    /// Local DOF count of one element: vertices, edge moments, element moments.
    pub fn n_local_dofs(&self, mesh: &Mesh<T>, element: usize) -> usize {
        let el = &mesh.elements[element];
        el.vertex_ids.len()
            + el.edge_ids
                .iter()
                .map(|&e| self.edge_spaces[e].dim_d2())
                .sum::<usize>()
            + self.moment_spaces[element].dim()
    }

    /// Global DOF indices of one element, ordered vertices / edge blocks in
    /// cycle order / element block.
    pub fn local_to_global(&self, mesh: &Mesh<T>, element: usize) -> Vec<usize> {
        let el = &mesh.elements[element];
        let mut idx = Vec::with_capacity(self.n_local_dofs(mesh, element));
        for &v in &el.vertex_ids {
            idx.push(self.layout.vertex_dof(v));
        }
        for &e in &el.edge_ids {
            for j in 0..self.layout.edge_dims[e] {
                idx.push(self.layout.edge_dof(e, j));
            }
        }
        for j in 0..self.layout.element_dims[element] {
            idx.push(self.layout.element_dof(element, j));
        }
        idx
    }
}

/// Degree of the master polygon rule: products of two basis members plus the
/// geometric mapping; enriched elements get two extra orders.
pub fn element_rule_degree(k: usize, enriched: bool) -> usize {
    if enriched {
        2 * k + 4
    } else {
        2 * k + 2
    }
}

/// Build every local space for the mesh. Edge spaces are shared by both
/// adjacent elements; construction is element/edge parallel.
pub fn build_spaces<T: Real>(
    mesh: &Mesh<T>,
    k: usize,
    plan: &EnrichmentPlan<T>,
    space: &EnrichmentSpace<T>,
    settings: SpaceSettings<T>,
) -> Result<Spaces<T>> {
    if k < 1 {
        return Err(Error::Space("degree k must be at least 1".into()));
    }
    let element_enriched: Vec<bool> = mesh
        .elements
        .iter()
        .map(|el| is_enriched(&mesh.element_vertex_positions(el.id), plan, space))
        .collect();

    // master polygon rules; graded toward the singular point on enriched
    // elements (the rule itself decides vertex-grading vs subdivision)
    let rules: Vec<PolygonRule<T>> = mesh
        .elements
        .par_iter()
        .map(|el| {
            let pts = mesh.element_vertex_positions(el.id);
            let grading = if element_enriched[el.id] {
                Some((space.singular_point, settings.grading_levels))
            } else {
                None
            };
            polygon_rule(&pts, element_rule_degree(k, element_enriched[el.id]), grading)
        })
        .collect::<Result<_>>()?;

    // per-field magnitude near each enriched edge, from an adjacent element
    let edge_enriched: Vec<bool> = mesh
        .edges
        .iter()
        .map(|e| e.adjacent_element_ids.iter().any(|&el| element_enriched[el]))
        .collect();

    let edge_spaces: Vec<EdgeSpace<T>> = mesh
        .edges
        .par_iter()
        .map(|e| {
            let (a, b) = self_edge_endpoints(mesh, e.id);
            let hint = Some(mesh.edge_hint(e.id));
            let scales: Vec<T> = if edge_enriched[e.id] {
                let owner = *e
                    .adjacent_element_ids
                    .iter()
                    .find(|&&el| element_enriched[el])
                    .unwrap();
                let rule = &rules[owner];
                let area = mesh.elements[owner].area;
                let hint_el = Some(mesh.elements[owner].centroid);
                space
                    .fields
                    .iter()
                    .map(|f| {
                        let ms = rule
                            .nodes
                            .iter()
                            .zip(&rule.weights)
                            .fold(T::zero(), |acc, (&p, &w)| {
                                let v = f.value(p, hint_el);
                                acc + w * v * v
                            });
                        (ms / area).max(T::zero()).sqrt() * e.length.sqrt()
                    })
                    .collect()
            } else {
                vec![T::zero(); space.fields.len()]
            };
            build_edge_space(
                e.id,
                a,
                b,
                k,
                edge_enriched[e.id],
                space,
                &scales,
                hint,
                &settings,
            )
        })
        .collect();

    let moment_spaces: Vec<ElementMomentSpace<T>> = mesh
        .elements
        .par_iter()
        .zip(rules)
        .map(|(el, rule)| {
            build_element_moment_space(
                el.id,
                el.centroid,
                el.diameter,
                k,
                element_enriched[el.id],
                space,
                Some(el.centroid),
                rule,
                &settings,
            )
        })
        .collect();

    // rank filter for the extended projector basis: a field is kept on an
    // element when its projection residual off P_k(P) is above tau_rank
    let element_kept_fields: Vec<Vec<usize>> = mesh
        .elements
        .par_iter()
        .map(|el| {
            if !element_enriched[el.id] {
                return Vec::new();
            }
            let rule = &moment_spaces[el.id].rule;
            let hint = Some(el.centroid);
            let monos = ScaledMonomials::new(el.centroid, el.diameter, k);
            // orthonormalise monomials on the fly for a stable projection
            let mut basis_vals: Vec<Vec<T>> = Vec::with_capacity(monos.len());
            for i in 0..monos.len() {
                let mut v: Vec<T> = rule.nodes.iter().map(|&p| monos.value(i, p)).collect();
                for _ in 0..2 {
                    for prev in &basis_vals {
                        let c = dot_rule(rule, &v, prev);
                        for (a, b) in v.iter_mut().zip(prev) {
                            *a -= c * *b;
                        }
                    }
                }
                let n = poly_l2_norm(rule, &v);
                for a in v.iter_mut() {
                    *a /= n;
                }
                basis_vals.push(v);
            }
            space
                .fields
                .iter()
                .enumerate()
                .filter_map(|(fi, f)| {
                    let mut v: Vec<T> = rule.nodes.iter().map(|&p| f.value(p, hint)).collect();
                    let norm0 = poly_l2_norm(rule, &v);
                    if norm0 <= T::default_epsilon() * el.diameter {
                        return None;
                    }
                    for _ in 0..2 {
                        for prev in &basis_vals {
                            let c = dot_rule(rule, &v, prev);
                            for (a, b) in v.iter_mut().zip(prev) {
                                *a -= c * *b;
                            }
                        }
                    }
                    (poly_l2_norm(rule, &v) > settings.tau_rank * norm0).then_some(fi)
                })
                .collect()
        })
        .collect();

    let mut edge_offsets = Vec::with_capacity(mesh.n_edges());
    let mut edge_dims = Vec::with_capacity(mesh.n_edges());
    let mut off = 0;
    for es in &edge_spaces {
        edge_offsets.push(off);
        edge_dims.push(es.dim_d2());
        off += es.dim_d2();
    }
    let n_d2 = off;
    let mut element_offsets = Vec::with_capacity(mesh.n_elements());
    let mut element_dims = Vec::with_capacity(mesh.n_elements());
    let mut off = 0;
    for ms in &moment_spaces {
        element_offsets.push(off);
        element_dims.push(ms.dim());
        off += ms.dim();
    }
    let layout = DofLayout {
        n_d1: mesh.n_vertices(),
        n_d2,
        n_d3: off,
        edge_offsets,
        edge_dims,
        element_offsets,
        element_dims,
    };

    Ok(Spaces {
        k,
        l: k.saturating_sub(2),
        edge_spaces,
        moment_spaces,
        element_enriched,
        element_kept_fields,
        layout,
        enrichment: space.clone(),
        settings,
    })
}

fn self_edge_endpoints<T: Real>(mesh: &Mesh<T>, e: usize) -> (Point2<T>, Point2<T>) {
    mesh.edge_endpoints(e)
}

fn dot_rule<T: Real>(rule: &PolygonRule<T>, a: &[T], b: &[T]) -> T {
    rule.weights
        .iter()
        .zip(a.iter().zip(b))
        .fold(T::zero(), |acc, (&w, (&x, &y))| acc + w * x * y)
}

/// Interpolate a function into the DOF vector: vertex values, edge-moment
/// projections, element-moment projections, all via the master quadrature
/// rules. Fails if the function is not finite at a vertex.
pub fn evaluate_dofs<T: Real>(
    mesh: &Mesh<T>,
    spaces: &Spaces<T>,
    f: &dyn ScalarFn<T>,
) -> Result<DofVector<T>> {
    let layout = &spaces.layout;
    let mut dofs = DVector::zeros(layout.n_total());
    for v in &mesh.vertices {
        let val = f.eval(v.position, Some(mesh.vertex_hint(v.id)));
        if !val.is_finite() {
            return Err(Error::Space(format!(
                "function not finite at vertex {} ({:?})",
                v.id, v.position
            )));
        }
        dofs[layout.vertex_dof(v.id)] = val;
    }
    for es in &spaces.edge_spaces {
        let hint = es.hint();
        for j in 0..es.dim_d2() {
            let c = es.rule.nodes.iter().zip(&es.rule.weights).fold(
                T::zero(),
                |acc, (&p, &w)| acc + w * f.eval(p, hint) * es.d2_value(j, p),
            );
            dofs[layout.edge_dof(es.edge_id, j)] = c;
        }
    }
    for ms in &spaces.moment_spaces {
        let hint = Some(mesh.elements[ms.element_id].centroid);
        for j in 0..ms.dim() {
            let c = ms.rule.nodes.iter().zip(&ms.rule.weights).fold(
                T::zero(),
                |acc, (&p, &w)| acc + w * f.eval(p, hint) * ms.value(j, p),
            );
            dofs[layout.element_dof(ms.element_id, j)] = c;
        }
    }
    Ok(dofs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enrichment::{fracture_singularity, EnrichmentPlan};
    use crate::mesh::build_cartesian_fractured_mesh;

    fn straight_edge_space(
        a: Point2<f64>,
        b: Point2<f64>,
        k: usize,
        enriched: bool,
    ) -> EdgeSpace<f64> {
        let space = fracture_singularity::<f64>();
        let scale = if enriched {
            // generic O(1) scale of the field near the edge midpoint
            let m = a.midpoint(b);
            vec![space.fields[0].value(m, Some(Point2::new(m.x, m.y + 1.0))).abs().max(1e-3)
                * a.dist(b).sqrt()]
        } else {
            vec![0.0]
        };
        build_edge_space(
            0,
            a,
            b,
            k,
            enriched,
            &space,
            &scale,
            Some(a.midpoint(b).add(Point2::new(0.0, 1.0))),
            &SpaceSettings::default(),
        )
    }

    #[test]
    fn edge_dims_unenriched() {
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(1.0, 0.0);
        assert_eq!(straight_edge_space(a, b, 1, false).dim_d2(), 0);
        assert_eq!(straight_edge_space(a, b, 3, false).dim_d2(), 2);
        assert_eq!(straight_edge_space(a, b, 2, false).dim_trace(), 3);
    }

    #[test]
    fn edge_poly_basis_is_orthonormal() {
        let es = straight_edge_space(Point2::new(0.2, -0.4), Point2::new(1.3, 0.9), 3, false);
        for i in 0..=3 {
            for j in 0..=3 {
                let g = es
                    .rule
                    .integrate(|p| es.poly_value(i, p) * es.poly_value(j, p));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12, "G[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn enriched_edge_gram_is_identity() {
        // edge incident to the crack tip, where the trace is genuinely r^{1/2}
        let es = straight_edge_space(Point2::new(0.0, 0.0), Point2::new(0.0, 0.5), 2, true);
        assert_eq!(es.n_singular(), 1);
        let dim = es.dim_trace();
        for i in 0..dim {
            for j in 0..dim {
                let g = es
                    .rule
                    .integrate(|p| es.trace_value(i, p) * es.trace_value(j, p));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (g - want).abs() < 1e-10,
                    "Gram[{i}][{j}] = {g:e} (dim {dim})"
                );
            }
        }
    }

    #[test]
    fn far_edge_drops_numerically_polynomial_trace() {
        // short edge far from the tip and away from the crack line: the field
        // trace is analytic and indistinguishable from a cubic
        let es = straight_edge_space(Point2::new(7.0, 7.0), Point2::new(7.1, 7.0), 3, true);
        assert_eq!(es.n_singular(), 0, "far edge should be effectively unenriched");
    }

    #[test]
    fn crack_face_trace_is_dropped() {
        // the field vanishes identically on both crack faces
        let space = fracture_singularity::<f64>();
        let a = Point2::new(0.25, 0.0);
        let b = Point2::new(0.5, 0.0);
        let es = build_edge_space(
            0,
            a,
            b,
            2,
            true,
            &space,
            &[0.3], // O(sqrt(r) * sqrt(h)) magnitude nearby
            Some(Point2::new(0.35, 0.1)),
            &SpaceSettings::default(),
        );
        assert_eq!(es.n_singular(), 0);
    }

    #[test]
    fn rank_filter_is_scale_invariant() {
        use crate::enrichment::CornerSingularity;
        use std::sync::Arc;
        for scale in [1.0f64, 1e6] {
            struct Scaled(CornerSingularity<f64>, f64);
            impl ScalarField<f64> for Scaled {
                fn value(&self, p: Point2<f64>, h: Option<Point2<f64>>) -> f64 {
                    self.1 * self.0.value(p, h)
                }
                fn gradient(&self, p: Point2<f64>, h: Option<Point2<f64>>) -> Point2<f64> {
                    self.0.gradient(p, h).scale(self.1)
                }
                fn laplacian(&self, p: Point2<f64>, h: Option<Point2<f64>>) -> f64 {
                    self.1 * self.0.laplacian(p, h)
                }
            }
            let base = fracture_singularity::<f64>();
            let inner = CornerSingularity {
                origin: Point2::origin(),
                exponent: 0.5,
                theta0: 0.0,
                branch: 0.0,
                hint_on_cut: true,
            };
            let space = EnrichmentSpace::custom(
                vec![Arc::new(Scaled(inner, scale)) as Arc<dyn ScalarField<f64>>],
                base.singular_point,
                base.angular_range,
            );
            // near edge keeps the singular member, far edge drops it
            let near = build_edge_space(
                0,
                Point2::new(0.0, 0.0),
                Point2::new(0.0, 0.5),
                2,
                true,
                &space,
                &[0.5 * scale],
                None,
                &SpaceSettings::default(),
            );
            let far = build_edge_space(
                1,
                Point2::new(7.0, 7.0),
                Point2::new(7.1, 7.0),
                3,
                true,
                &space,
                &[3.0 * scale],
                None,
                &SpaceSettings::default(),
            );
            assert_eq!(near.n_singular(), 1, "scale {scale}");
            assert_eq!(far.n_singular(), 0, "scale {scale}");
        }
    }

    #[test]
    fn linearly_dependent_user_fields_are_filtered() {
        // a second field proportional to the first carries no new content:
        // the orthonormalisation leaves exactly one singular member
        use crate::enrichment::CornerSingularity;
        use std::sync::Arc;
        struct Twice(CornerSingularity<f64>);
        impl ScalarField<f64> for Twice {
            fn value(&self, p: Point2<f64>, h: Option<Point2<f64>>) -> f64 {
                2.0 * self.0.value(p, h)
            }
            fn gradient(&self, p: Point2<f64>, h: Option<Point2<f64>>) -> Point2<f64> {
                self.0.gradient(p, h).scale(2.0)
            }
            fn laplacian(&self, p: Point2<f64>, h: Option<Point2<f64>>) -> f64 {
                2.0 * self.0.laplacian(p, h)
            }
        }
        let base = CornerSingularity {
            origin: Point2::origin(),
            exponent: 0.5,
            theta0: 0.0,
            branch: 0.0,
            hint_on_cut: true,
        };
        let space = EnrichmentSpace::custom(
            vec![
                Arc::new(base.clone()) as Arc<dyn ScalarField<f64>>,
                Arc::new(Twice(base)) as Arc<dyn ScalarField<f64>>,
            ],
            Point2::origin(),
            (0.0, std::f64::consts::TAU),
        );
        let es = build_edge_space(
            0,
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 0.5),
            2,
            true,
            &space,
            &[0.4, 0.8],
            None,
            &SpaceSettings::default(),
        );
        assert_eq!(es.n_singular(), 1);
    }

    #[test]
    fn moment_space_dims() {
        let space = fracture_singularity::<f64>();
        let settings = SpaceSettings::default();
        let sq = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let rule = polygon_rule(&sq, 6, None).unwrap();
        // harmonic enrichment contributes nothing: dims are those of P_l
        let ms1 = build_element_moment_space(
            0,
            Point2::new(0.5, 0.5),
            2.0_f64.sqrt(),
            1,
            true,
            &space,
            None,
            rule.clone(),
            &settings,
        );
        assert_eq!(ms1.dim(), 1);
        let ms3 = build_element_moment_space(
            0,
            Point2::new(0.5, 0.5),
            2.0_f64.sqrt(),
            3,
            true,
            &space,
            None,
            rule.clone(),
            &settings,
        );
        assert_eq!(ms3.dim(), 3);
        // constants are contained: first member is the normalised constant
        let v = ms1.value(0, Point2::new(0.3, 0.8));
        assert!((v - 1.0).abs() < 1e-12, "constant member = {v}"); // |P| = 1
        // orthonormality
        for i in 0..ms3.dim() {
            for j in 0..ms3.dim() {
                let g = ms3.rule.integrate(|p| ms3.value(i, p) * ms3.value(j, p));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nonharmonic_field_extends_moment_space() {
        struct Bump;
        impl ScalarField<f64> for Bump {
            fn value(&self, p: Point2<f64>, _: Option<Point2<f64>>) -> f64 {
                // any function with Laplacian 1 + x
                0.25 * p.x * p.x + p.x.powi(3) / 6.0
            }
            fn gradient(&self, p: Point2<f64>, _: Option<Point2<f64>>) -> Point2<f64> {
                Point2::new(0.5 * p.x + 0.5 * p.x * p.x, 0.0)
            }
            fn laplacian(&self, p: Point2<f64>, _: Option<Point2<f64>>) -> f64 {
                0.5 + p.x // affine, independent of constants for k = 1? no: l = 0
            }
        }
        let space = EnrichmentSpace::custom(
            vec![std::sync::Arc::new(Bump) as std::sync::Arc<dyn ScalarField<f64>>],
            Point2::origin(),
            (0.0, std::f64::consts::TAU),
        );
        let sq = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let rule = polygon_rule(&sq, 6, None).unwrap();
        let ms = build_element_moment_space(
            0,
            Point2::new(0.5, 0.5),
            2.0_f64.sqrt(),
            1,
            true,
            &space,
            None,
            rule,
            &SpaceSettings::default(),
        );
        // k = 1: constants plus the non-constant part of (0.5 + x)
        assert_eq!(ms.dim(), 2);
    }

    #[test]
    fn dof_layout_counts_match_space_dimension() {
        let mesh = build_cartesian_fractured_mesh::<f64>(4).unwrap();
        let space = fracture_singularity::<f64>();
        for k in 1..=3 {
            let spaces = build_spaces(
                &mesh,
                k,
                &EnrichmentPlan::local(0.3),
                &space,
                SpaceSettings::default(),
            )
            .unwrap();
            for el in &mesh.elements {
                let n_v = el.vertex_ids.len();
                let sum_edges: usize = el
                    .edge_ids
                    .iter()
                    .map(|&e| spaces.edge_spaces[e].dim_d2())
                    .sum();
                let q = spaces.moment_spaces[el.id].dim();
                // trace dim + moment dim = (sum over edges of trace dims - n_v) + q
                let trace_dim: usize = el
                    .edge_ids
                    .iter()
                    .map(|&e| spaces.edge_spaces[e].dim_trace())
                    .sum::<usize>()
                    - n_v;
                assert_eq!(
                    spaces.n_local_dofs(&mesh, el.id),
                    n_v + sum_edges + q
                );
                assert_eq!(n_v + sum_edges, trace_dim, "element {} k {}", el.id, k);
            }
            let lg = spaces.local_to_global(&mesh, 0);
            let mut sorted = lg.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), lg.len(), "duplicate global dof");
            assert!(lg.iter().all(|&g| g < spaces.layout.n_total()));
        }
    }

    #[test]
    fn evaluate_dofs_of_constant() {
        let mesh = build_cartesian_fractured_mesh::<f64>(2).unwrap();
        let space = fracture_singularity::<f64>();
        let spaces = build_spaces(
            &mesh,
            2,
            &EnrichmentPlan::none(),
            &space,
            SpaceSettings::default(),
        )
        .unwrap();
        let one = |_: Point2<f64>, _: Option<Point2<f64>>| 1.0;
        let dofs = evaluate_dofs(&mesh, &spaces, &one).unwrap();
        for v in 0..mesh.n_vertices() {
            assert!((dofs[spaces.layout.vertex_dof(v)] - 1.0).abs() < 1e-14);
        }
        // edge moments of a constant against mean-free Legendre modes vanish;
        // k = 2 has one mode per edge: phi_0 = 1/sqrt(h): moment = sqrt(h)
        for e in 0..mesh.n_edges() {
            let h = mesh.edges[e].length;
            assert!((dofs[spaces.layout.edge_dof(e, 0)] - h.sqrt()).abs() < 1e-13);
        }
        // element constant coefficient is |P|^{1/2}
        for el in &mesh.elements {
            let got = dofs[spaces.layout.element_dof(el.id, 0)];
            assert!((got - el.area.sqrt()).abs() < 1e-12, "got {got}");
        }
    }

    #[test]
    fn evaluate_dofs_of_scaled_monomial() {
        let mesh = build_cartesian_fractured_mesh::<f64>(2).unwrap();
        let space = fracture_singularity::<f64>();
        let spaces = build_spaces(
            &mesh,
            1,
            &EnrichmentPlan::none(),
            &space,
            SpaceSettings::default(),
        )
        .unwrap();
        let el = &mesh.elements[0];
        let (xc, h) = (el.centroid, el.diameter);
        let xhat = move |p: Point2<f64>, _: Option<Point2<f64>>| (p.x - xc.x) / h;
        let dofs = evaluate_dofs(&mesh, &spaces, &xhat).unwrap();
        // k=1: the element moment is the projection onto the normalised
        // constant: integral of xhat / sqrt(|P|)
        let ms = &spaces.moment_spaces[0];
        let direct = ms.rule.integrate(|p| (p.x - xc.x) / h) / el.area.sqrt();
        let got = dofs[spaces.layout.element_dof(0, 0)];
        assert!((got - direct).abs() < 1e-13);
    }

    #[test]
    fn evaluate_dofs_rejects_unbounded_vertex_value() {
        let mesh = build_cartesian_fractured_mesh::<f64>(2).unwrap();
        let space = fracture_singularity::<f64>();
        let spaces = build_spaces(
            &mesh,
            1,
            &EnrichmentPlan::none(),
            &space,
            SpaceSettings::default(),
        )
        .unwrap();
        // 1/r is unbounded at the tip vertex
        let f = |p: Point2<f64>, _: Option<Point2<f64>>| 1.0 / p.norm();
        assert!(evaluate_dofs(&mesh, &spaces, &f).is_err());
    }

    #[test]
    fn splitting_identity_on_edge() {
        // random member of the extended trace space decomposes exactly into
        // polynomial and singular parts
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let es = straight_edge_space(Point2::new(0.0, 0.0), Point2::new(0.0, 0.5), 3, true);
        assert_eq!(es.n_singular(), 1);
        let dim = es.dim_trace();
        for _ in 0..10 {
            let coeffs: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = |p: Point2<f64>| -> f64 {
                (0..dim).map(|i| coeffs[i] * es.trace_value(i, p)).sum()
            };
            // recover the coefficients by orthonormal projection
            for i in 0..dim {
                let c = es.rule.integrate(|p| w(p) * es.trace_value(i, p));
                assert!(
                    (c - coeffs[i]).abs() < 1e-10,
                    "coefficient {i}: {c} vs {}",
                    coeffs[i]
                );
            }
        }
    }
}
