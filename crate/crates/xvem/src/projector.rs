//! The extended elliptic projector: a per-element linear map from local DOFs
//! onto the extended space P_k(P) + enrichment, computable from the DOFs via
//! integration by parts, plus the constructive reconstruction of the boundary
//! trace from vertex values and edge moments.

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::local_spaces::{ScaledMonomials, Spaces};
use crate::mesh::Mesh;
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

/// Boundary trace of a virtual function: per local edge, coefficients in the
/// edge's orthonormal trace basis [phi_0..phi_k, zeta_1..zeta_p].
#[derive(Debug, Clone)]
pub struct TraceFunction<T> {
    pub edge_coeffs: Vec<DVector<T>>,
}

/// Coefficients in the element's extended basis (scaled monomials of degree
/// <= k followed by the kept enrichment fields; not orthonormalised).
#[derive(Debug, Clone)]
pub struct Projection<T> {
    pub coeffs: DVector<T>,
}

/// Local DOF block structure of one element: vertices, edge moment blocks in
/// cycle order, element moments.
#[derive(Debug, Clone)]
pub struct LocalLayout {
    pub n_vertices: usize,
    pub edge_offsets: Vec<usize>,
    pub edge_dims: Vec<usize>,
    pub d3_offset: usize,
    pub n_d3: usize,
    pub n_local: usize,
}

/// Everything the scheme needs on one element: Gram matrices of the extended
/// basis, trace reconstruction operators, and the elliptic projector matrix.
pub struct ElementOperators<'a, T: Real> {
    pub element: usize,
    pub mesh: &'a Mesh<T>,
    pub spaces: &'a Spaces<T>,
    pub monomials: ScaledMonomials<T>,
    pub kept_fields: Vec<usize>,
    pub n_ext: usize,
    pub local: LocalLayout,
    /// energy Gram of the extended basis
    pub g_mat: DMatrix<T>,
    /// L^2 Gram of the extended basis
    pub h_mat: DMatrix<T>,
    /// moment-space projection of the extended basis: (q x n_ext)
    pub proj_moment: DMatrix<T>,
    /// integrals of the extended basis
    pub mean_vec: DVector<T>,
    /// integrals of the moment basis
    pub moment_means: DVector<T>,
    /// per local edge: reconstruction matrix mapping the element-local DOF
    /// vector to the edge trace coefficients (dim_trace x n_local)
    pub trace_ops: Vec<DMatrix<T>>,
    /// elliptic projector matrix (n_ext x n_local)
    pub projector: DMatrix<T>,
    /// 2-norm condition number of the local projector system
    pub local_cond: T,
}

impl<'a, T: Real> ElementOperators<'a, T> {
    pub fn build(mesh: &'a Mesh<T>, spaces: &'a Spaces<T>, element: usize) -> Result<Self> {
        let el = &mesh.elements[element];
        let k = spaces.k;
        let monomials = ScaledMonomials::new(el.centroid, el.diameter, k);
        let kept_fields = spaces.element_kept_fields[element].clone();
        let n_mono = monomials.len();
        let n_ext = n_mono + kept_fields.len();
        let rule = &spaces.moment_spaces[element].rule;
        let hint = Some(el.centroid);

        let n_v = el.vertex_ids.len();
        let mut edge_offsets = Vec::with_capacity(n_v);
        let mut edge_dims = Vec::with_capacity(n_v);
        let mut off = n_v;
        for &e in &el.edge_ids {
            edge_offsets.push(off);
            let dim = spaces.edge_spaces[e].dim_d2();
            edge_dims.push(dim);
            off += dim;
        }
        let q = spaces.moment_spaces[element].dim();
        let local = LocalLayout {
            n_vertices: n_v,
            edge_offsets,
            edge_dims,
            d3_offset: off,
            n_d3: q,
            n_local: off + q,
        };

        let ext_value = |i: usize, p: Point2<T>| -> T {
            if i < n_mono {
                monomials.value(i, p)
            } else {
                spaces.enrichment.fields[kept_fields[i - n_mono]].value(p, hint)
            }
        };
        let ext_gradient = |i: usize, p: Point2<T>| -> Point2<T> {
            if i < n_mono {
                monomials.gradient(i, p)
            } else {
                spaces.enrichment.fields[kept_fields[i - n_mono]].gradient(p, hint)
            }
        };
        let ext_laplacian = |i: usize, p: Point2<T>| -> T {
            if i < n_mono {
                monomials.laplacian(i, p)
            } else {
                spaces.enrichment.fields[kept_fields[i - n_mono]].laplacian(p, hint)
            }
        };

        // volume integrals over the master rule
        let mut g_mat = DMatrix::zeros(n_ext, n_ext);
        let mut h_mat = DMatrix::zeros(n_ext, n_ext);
        let mut proj_moment = DMatrix::zeros(q, n_ext);
        let mut lap_moment = DMatrix::zeros(q, n_ext); // int mu_j lap(phi_i)
        let mut mean_vec = DVector::zeros(n_ext);
        let mut moment_means = DVector::zeros(q);
        let ms = &spaces.moment_spaces[element];
        for (&p, &w) in rule.nodes.iter().zip(&rule.weights) {
            let vals: Vec<T> = (0..n_ext).map(|i| ext_value(i, p)).collect();
            let grads: Vec<Point2<T>> = (0..n_ext).map(|i| ext_gradient(i, p)).collect();
            let laps: Vec<T> = (0..n_ext).map(|i| ext_laplacian(i, p)).collect();
            let mus: Vec<T> = (0..q).map(|j| ms.value(j, p)).collect();
            for i in 0..n_ext {
                mean_vec[i] += w * vals[i];
                for j in i..n_ext {
                    g_mat[(i, j)] += w * grads[i].dot(grads[j]);
                    h_mat[(i, j)] += w * vals[i] * vals[j];
                }
                for j in 0..q {
                    proj_moment[(j, i)] += w * mus[j] * vals[i];
                    if laps[i] != T::zero() {
                        lap_moment[(j, i)] += w * mus[j] * laps[i];
                    }
                }
            }
            for j in 0..q {
                moment_means[j] += w * mus[j];
            }
        }
        for i in 0..n_ext {
            for j in 0..i {
                g_mat[(i, j)] = g_mat[(j, i)];
                h_mat[(i, j)] = h_mat[(j, i)];
            }
        }

        // trace reconstruction operators per local edge
        let mut trace_ops = Vec::with_capacity(n_v);
        for (le, &e) in el.edge_ids.iter().enumerate() {
            trace_ops.push(trace_operator(mesh, spaces, element, le, e, &local)?);
        }

        // right-hand sides of the projector system for each local DOF:
        // b_i(v) = -int_P (moment proj of v) lap(phi_i) + int_dP dn(phi_i) v
        let mut b_mat = DMatrix::zeros(n_ext, local.n_local);
        // volume part acts on the D3 block
        for i in 0..n_ext {
            for j in 0..q {
                let c = lap_moment[(j, i)];
                if c != T::zero() {
                    b_mat[(i, local.d3_offset + j)] -= c;
                }
            }
        }
        // boundary part: per edge, int_E dn(phi_i) beta_c composed with the
        // trace reconstruction
        for (le, &e) in el.edge_ids.iter().enumerate() {
            let es = &spaces.edge_spaces[e];
            let normal = outward_normal_of(mesh, element, le);
            let dim_t = es.dim_trace();
            let mut n_e = DMatrix::zeros(n_ext, dim_t);
            for (&p, &w) in es.rule.nodes.iter().zip(&es.rule.weights) {
                for i in 0..n_ext {
                    let dn = ext_gradient(i, p).dot(normal);
                    if dn != T::zero() {
                        for c in 0..dim_t {
                            n_e[(i, c)] += w * dn * es.trace_value(c, p);
                        }
                    }
                }
            }
            b_mat += n_e * &trace_ops[le];
        }

        // mean-value closure: the row of the constant basis function (index 0,
        // whose gradient vanishes) is replaced by the mean constraint
        let mut sys = g_mat.clone();
        for j in 0..n_ext {
            sys[(0, j)] = mean_vec[j];
        }
        for r in 0..local.n_local {
            b_mat[(0, r)] = T::zero();
        }
        for j in 0..q {
            b_mat[(0, local.d3_offset + j)] = moment_means[j];
        }
        // conditioning of the local system: the extended basis degenerates
        // when an enrichment field is numerically polynomial on the element
        let sv = sys.clone().svd(false, false).singular_values;
        let (sv_max, sv_min) = sv
            .iter()
            .fold((T::zero(), T::max_value().unwrap()), |(hi, lo), &s| {
                (hi.max(s), lo.min(s))
            });
        let local_cond = if sv_min > T::zero() {
            sv_max / sv_min
        } else {
            T::max_value().unwrap()
        };
        let lu = sys.clone().full_piv_lu();
        let projector = lu.solve(&b_mat).ok_or_else(|| Error::Projector {
            element,
            detail: format!("projector system singular (condition {:e})", local_cond.to_f64_lossy()),
        })?;
        let residual = (&sys * &projector - &b_mat).abs().max();
        let scale = b_mat.abs().max().max(T::one());
        if !residual.is_finite() || residual > T::of(1e-4) * scale {
            return Err(Error::Projector {
                element,
                detail: format!(
                    "projector solve inaccurate (residual {:e}, condition {:e})",
                    residual.to_f64_lossy(),
                    local_cond.to_f64_lossy()
                ),
            });
        }

        Ok(Self {
            element,
            mesh,
            spaces,
            monomials,
            kept_fields,
            n_ext,
            local,
            g_mat,
            h_mat,
            proj_moment,
            mean_vec,
            moment_means,
            trace_ops,
            projector,
            local_cond,
        })
    }

    pub fn ext_value(&self, i: usize, p: Point2<T>) -> T {
        let n_mono = self.monomials.len();
        if i < n_mono {
            self.monomials.value(i, p)
        } else {
            let hint = Some(self.mesh.elements[self.element].centroid);
            self.spaces.enrichment.fields[self.kept_fields[i - n_mono]].value(p, hint)
        }
    }

    pub fn ext_gradient(&self, i: usize, p: Point2<T>) -> Point2<T> {
        let n_mono = self.monomials.len();
        if i < n_mono {
            self.monomials.gradient(i, p)
        } else {
            let hint = Some(self.mesh.elements[self.element].centroid);
            self.spaces.enrichment.fields[self.kept_fields[i - n_mono]].gradient(p, hint)
        }
    }

    /// Extract this element's local DOF sub-vector from a global DOF vector.
    pub fn gather(&self, global: &DVector<T>) -> DVector<T> {
        let idx = self.spaces.local_to_global(self.mesh, self.element);
        DVector::from_iterator(idx.len(), idx.iter().map(|&g| global[g]))
    }

    /// Elliptic projection of a local DOF vector.
    pub fn project(&self, local_dofs: &DVector<T>) -> Projection<T> {
        Projection {
            coeffs: &self.projector * local_dofs,
        }
    }

    /// Boundary trace reconstructed from the D1/D2 entries of a local DOF
    /// vector (Lemma-style: singular component straight from the moments,
    /// polynomial component from moments plus endpoint matching).
    pub fn reconstruct_trace(&self, local_dofs: &DVector<T>) -> TraceFunction<T> {
        TraceFunction {
            edge_coeffs: self
                .trace_ops
                .iter()
                .map(|op| op * local_dofs)
                .collect(),
        }
    }

    /// Evaluate a trace on local edge `le` at a point of that edge.
    pub fn trace_value(&self, trace: &TraceFunction<T>, le: usize, p: Point2<T>) -> T {
        let e = self.mesh.elements[self.element].edge_ids[le];
        let es = &self.spaces.edge_spaces[e];
        (0..es.dim_trace())
            .map(|c| trace.edge_coeffs[le][c] * es.trace_value(c, p))
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn evaluate(&self, proj: &Projection<T>, p: Point2<T>) -> T {
        (0..self.n_ext)
            .map(|i| proj.coeffs[i] * self.ext_value(i, p))
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn evaluate_gradient(&self, proj: &Projection<T>, p: Point2<T>) -> Point2<T> {
        let mut g = Point2::new(T::zero(), T::zero());
        for i in 0..self.n_ext {
            let c = proj.coeffs[i];
            if c != T::zero() {
                g = g.add(self.ext_gradient(i, p).scale(c));
            }
        }
        g
    }
}

fn outward_normal_of<T: Real>(mesh: &Mesh<T>, element: usize, local_edge: usize) -> Point2<T> {
    mesh.outward_normal(element, local_edge)
}

/// Build the (dim_trace x n_local) matrix reconstructing the trace on one
/// edge from the element-local DOF vector.
fn trace_operator<T: Real>(
    mesh: &Mesh<T>,
    spaces: &Spaces<T>,
    element: usize,
    local_edge: usize,
    edge: usize,
    local: &LocalLayout,
) -> Result<DMatrix<T>> {
    let el = &mesh.elements[element];
    let es = &spaces.edge_spaces[edge];
    let k = spaces.k;
    let n_sing = es.n_singular();
    let dim_t = es.dim_trace();
    let (a, b) = es.endpoints();

    // local positions of the edge's global endpoints in the element cycle
    let pos_of = |v: usize| -> Result<usize> {
        el.vertex_ids
            .iter()
            .position(|&w| w == v)
            .ok_or_else(|| Error::Projector {
                element,
                detail: format!("edge {edge} endpoint {v} not in element cycle"),
            })
    };
    let ia = pos_of(mesh.edges[edge].vertex_ids[0])?;
    let ib = pos_of(mesh.edges[edge].vertex_ids[1])?;

    let d2_off = local.edge_offsets[local_edge];
    let d2_dim = local.edge_dims[local_edge];
    debug_assert_eq!(d2_dim, es.dim_d2());

    let mut op = DMatrix::zeros(dim_t, local.n_local);
    // singular coefficients come straight from the singular moments
    for j in 0..n_sing {
        op[(k + 1 + j, d2_off + (k - 1) + j)] = T::one();
    }
    // polynomial moments below degree k-1 are the Legendre coefficients
    for i in 0..k.saturating_sub(1) {
        op[(i, d2_off + i)] = T::one();
    }
    // remaining two Legendre coefficients from the endpoint values
    // m_a - z(a) - sum_{i<=k-2} c_i phi_i(a), likewise at b
    let m2 = nalgebra::Matrix2::new(
        es.poly_value(k - 1, a),
        es.poly_value(k, a),
        es.poly_value(k - 1, b),
        es.poly_value(k, b),
    );
    let inv = m2.try_inverse().ok_or_else(|| Error::Projector {
        element,
        detail: format!("endpoint system singular on edge {edge}"),
    })?;
    // rhs rows as linear functionals of the local DOFs
    let mut rhs = DMatrix::zeros(2, local.n_local);
    rhs[(0, ia)] = T::one();
    rhs[(1, ib)] = T::one();
    for j in 0..n_sing {
        rhs[(0, d2_off + (k - 1) + j)] -= es.singular_value(j, a);
        rhs[(1, d2_off + (k - 1) + j)] -= es.singular_value(j, b);
    }
    for i in 0..k.saturating_sub(1) {
        rhs[(0, d2_off + i)] -= es.poly_value(i, a);
        rhs[(1, d2_off + i)] -= es.poly_value(i, b);
    }
    let top = inv * rhs;
    for c in 0..local.n_local {
        op[(k - 1, c)] = top[(0, c)];
        op[(k, c)] = top[(1, c)];
    }
    Ok(op)
}
