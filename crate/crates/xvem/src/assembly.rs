//! Local stiffness (consistency + stabilisation), load vector, global
//! assembly, Dirichlet elimination and static condensation of the element
//! moment unknowns.
//!
//! The local bilinear form is
//!   K_P = grad-projection consistency
//!       + h^{-2} (moment projection of v - Pi v)^2
//!       + h^{-1} boundary residual^2,
//! whose stabilisation part vanishes on the extended polynomial space and
//! makes the discrete bilinear form agree exactly with the discrete seminorm.

use crate::error::{Error, Result};
use crate::local_spaces::{ScalarFn, Spaces};
use crate::mesh::Mesh;
use crate::projector::ElementOperators;
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Local stiffness and load of one element, with the stabilisation stored in
/// factored halves so that v' K v splits into the seminorm contributions.
pub struct LocalMatrices<T: Real> {
    pub k_mat: DMatrix<T>,
    pub f_vec: DVector<T>,
    /// consistency block: projector' G projector
    pub consistency: DMatrix<T>,
    /// h^{-1} (D3 - moment projection of Pi): volume stab = half' half
    pub vol_half: DMatrix<T>,
    /// stacked sqrt(w) h^{-1/2} (trace - Pi) at boundary nodes
    pub bnd_half: DMatrix<T>,
}

impl<T: Real> LocalMatrices<T> {
    /// The stabilisation part of the local matrix.
    pub fn stabilisation(&self) -> DMatrix<T> {
        self.vol_half.transpose() * &self.vol_half + self.bnd_half.transpose() * &self.bnd_half
    }

    /// Local seminorm squared of a local DOF vector:
    /// |grad Pi v|^2 + h^{-2}|moment(v - Pi v)|^2 + h^{-1}|v - Pi v|^2 on dP.
    pub fn seminorm_sq(&self, ops: &ElementOperators<'_, T>, v: &DVector<T>) -> T {
        let proj = &ops.projector * v;
        let grad = (proj.transpose() * &ops.g_mat * &proj)[(0, 0)];
        let vol = (&self.vol_half * v).norm_squared();
        let bnd = (&self.bnd_half * v).norm_squared();
        grad + vol + bnd
    }
}

/// Local stiffness matrix of one element.
pub fn local_stiffness<T: Real>(ops: &ElementOperators<'_, T>) -> LocalMatrices<T> {
    let n_loc = ops.local.n_local;
    let q = ops.local.n_d3;
    let el = &ops.mesh.elements[ops.element];
    let h = el.diameter;

    let consistency = ops.projector.transpose() * &ops.g_mat * &ops.projector;

    // volume stabilisation: moment coefficients of v - Pi v
    let mut d3_sel = DMatrix::zeros(q, n_loc);
    for j in 0..q {
        d3_sel[(j, ops.local.d3_offset + j)] = T::one();
    }
    let mut vol_half = d3_sel - &ops.proj_moment * &ops.projector;
    vol_half /= h;

    // boundary stabilisation: pointwise residual at the edge quadrature nodes
    let n_bnd: usize = el
        .edge_ids
        .iter()
        .map(|&e| ops.spaces.edge_spaces[e].rule.len())
        .sum();
    let mut bnd_half = DMatrix::zeros(n_bnd, n_loc);
    let inv_sqrt_h = T::one() / h.sqrt();
    let mut row = 0;
    for (le, &e) in el.edge_ids.iter().enumerate() {
        let es = &ops.spaces.edge_spaces[e];
        let dim_t = es.dim_trace();
        // trace basis values and extended basis values at the nodes
        for (&p, &w) in es.rule.nodes.iter().zip(&es.rule.weights) {
            let sw = w.sqrt() * inv_sqrt_h;
            // trace of each local DOF through the reconstruction operator
            for c in 0..dim_t {
                let tv = es.trace_value(c, p) * sw;
                if tv != T::zero() {
                    for r in 0..n_loc {
                        let coef = ops.trace_ops[le][(c, r)];
                        if coef != T::zero() {
                            bnd_half[(row, r)] += tv * coef;
                        }
                    }
                }
            }
            // minus the projection evaluated at the node
            for i in 0..ops.n_ext {
                let ev = ops.ext_value(i, p) * sw;
                if ev != T::zero() {
                    for r in 0..n_loc {
                        bnd_half[(row, r)] -= ev * ops.projector[(i, r)];
                    }
                }
            }
            row += 1;
        }
    }

    let k_mat = &consistency
        + vol_half.transpose() * &vol_half
        + bnd_half.transpose() * &bnd_half;

    LocalMatrices {
        k_mat,
        f_vec: DVector::zeros(n_loc),
        consistency,
        vol_half,
        bnd_half,
    }
}

/// Local load vector: moments of the forcing term against the element moment
/// basis. Only the D3 entries are nonzero.
pub fn local_load<T: Real>(
    ops: &ElementOperators<'_, T>,
    f: &dyn ScalarFn<T>,
) -> DVector<T> {
    let ms = &ops.spaces.moment_spaces[ops.element];
    let hint = Some(ops.mesh.elements[ops.element].centroid);
    let mut load = DVector::zeros(ops.local.n_local);
    for j in 0..ms.dim() {
        let c = ms
            .rule
            .nodes
            .iter()
            .zip(&ms.rule.weights)
            .fold(T::zero(), |acc, (&p, &w)| {
                acc + w * f.eval(p, hint) * ms.value(j, p)
            });
        load[ops.local.d3_offset + j] = c;
    }
    load
}

/// The assembled global system: per-element local matrices plus their
/// local-to-global maps, the assembled right-hand side, and the Dirichlet
/// bookkeeping.
pub struct GlobalSystem<T: Real> {
    pub n: usize,
    /// worst per-element projector-system condition number, the carrier of
    /// the enrichment-induced ill-conditioning
    pub max_local_cond: T,
    pub local: Vec<LocalMatrices<T>>,
    pub maps: Vec<Vec<usize>>,
    pub d3_offsets: Vec<usize>,
    pub rhs: DVector<T>,
    /// Dirichlet-fixed DOFs with their values (None = free)
    pub fixed: Vec<Option<T>>,
}

/// Assemble local stiffness and load over all elements (element-parallel,
/// order-preserving reduction).
pub fn assemble<T: Real>(
    mesh: &Mesh<T>,
    spaces: &Spaces<T>,
    f: &dyn ScalarFn<T>,
) -> Result<GlobalSystem<T>> {
    let n = spaces.layout.n_total();
    let built: Vec<(LocalMatrices<T>, T)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let ops = ElementOperators::build(mesh, spaces, e)?;
            let mut lm = local_stiffness(&ops);
            lm.f_vec = local_load(&ops, f);
            Ok((lm, ops.local_cond))
        })
        .collect::<Result<_>>()?;
    let mut max_local_cond = T::one();
    let local: Vec<LocalMatrices<T>> = built
        .into_iter()
        .map(|(lm, cond)| {
            max_local_cond = max_local_cond.max(cond);
            lm
        })
        .collect();
    let maps: Vec<Vec<usize>> = (0..mesh.n_elements())
        .map(|e| spaces.local_to_global(mesh, e))
        .collect();
    let d3_offsets: Vec<usize> = (0..mesh.n_elements())
        .map(|e| {
            let el = &mesh.elements[e];
            el.vertex_ids.len()
                + el.edge_ids
                    .iter()
                    .map(|&ed| spaces.edge_spaces[ed].dim_d2())
                    .sum::<usize>()
        })
        .collect();
    let mut rhs = DVector::zeros(n);
    for (lm, map) in local.iter().zip(&maps) {
        for (i, &g) in map.iter().enumerate() {
            if g >= n {
                return Err(Error::Assembly(format!("dof index {g} out of range {n}")));
            }
            rhs[g] += lm.f_vec[i];
        }
    }
    Ok(GlobalSystem {
        n,
        max_local_cond,
        local,
        maps,
        d3_offsets,
        rhs,
        fixed: vec![None; n],
    })
}

impl<T: Real> GlobalSystem<T> {
    /// Scatter the full system into symmetric triplets (tests and the
    /// uncondensed solve path).
    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut t = Vec::new();
        for (lm, map) in self.local.iter().zip(&self.maps) {
            for (i, &gi) in map.iter().enumerate() {
                for (j, &gj) in map.iter().enumerate() {
                    let v = lm.k_mat[(i, j)];
                    if v != T::zero() {
                        t.push((gi, gj, v));
                    }
                }
            }
        }
        t
    }
}

/// Fix the boundary DOFs from the Dirichlet datum: vertex values at boundary
/// vertices, moment projections of the trace on boundary edges. Duplicated
/// crack-face edges are fixed independently (each carries its own hint).
pub fn apply_dirichlet<T: Real>(
    mesh: &Mesh<T>,
    spaces: &Spaces<T>,
    system: &mut GlobalSystem<T>,
    g: &dyn ScalarFn<T>,
) -> Result<()> {
    for v in &mesh.vertices {
        if v.on_boundary {
            let val = g.eval(v.position, Some(mesh.vertex_hint(v.id)));
            if !val.is_finite() {
                return Err(Error::Assembly(format!(
                    "Dirichlet datum not finite at boundary vertex {}",
                    v.id
                )));
            }
            system.fixed[spaces.layout.vertex_dof(v.id)] = Some(val);
        }
    }
    for e in &mesh.edges {
        if e.on_boundary {
            let es = &spaces.edge_spaces[e.id];
            let hint = es.hint();
            for j in 0..es.dim_d2() {
                let c = es.rule.nodes.iter().zip(&es.rule.weights).fold(
                    T::zero(),
                    |acc, (&p, &w)| acc + w * g.eval(p, hint) * es.d2_value(j, p),
                );
                system.fixed[spaces.layout.edge_dof(e.id, j)] = Some(c);
            }
        }
    }
    Ok(())
}

/// Per-element recovery data for the condensed moment unknowns.
pub struct ElementRecovery<T: Real> {
    /// inverse of the D3 diagonal block
    pub kcc_inv: DMatrix<T>,
    /// coupling block D3 x boundary-trace dofs
    pub kcr: DMatrix<T>,
    pub f_c: DVector<T>,
    /// global ids of the element's non-D3 dofs
    pub r_global: Vec<usize>,
    /// global ids of the element's D3 dofs
    pub d3_global: Vec<usize>,
}

/// The condensed, Dirichlet-reduced SPD system plus recovery data.
pub struct CondensedSystem<T: Real> {
    /// global dof -> condensed index (None: fixed or condensed out)
    pub index: Vec<Option<usize>>,
    pub n: usize,
    pub triplets: Vec<(usize, usize, T)>,
    pub rhs: DVector<T>,
    pub recovery: Vec<ElementRecovery<T>>,
}

/// Schur-complement elimination of all element moment DOFs, followed by
/// Dirichlet elimination with right-hand-side correction.
pub fn static_condense<T: Real>(system: &GlobalSystem<T>) -> Result<CondensedSystem<T>> {
    let n = system.n;
    // D3 dofs never carry Dirichlet data
    let mut is_d3 = vec![false; n];
    for (map, &off) in system.maps.iter().zip(&system.d3_offsets) {
        for &g in &map[off..] {
            is_d3[g] = true;
        }
    }
    let mut index = vec![None; n];
    let mut n_free = 0;
    for g in 0..n {
        if !is_d3[g] && system.fixed[g].is_none() {
            index[g] = Some(n_free);
            n_free += 1;
        }
    }

    let mut triplets = Vec::new();
    let mut rhs = DVector::zeros(n_free);
    let mut recovery = Vec::with_capacity(system.local.len());

    for ((lm, map), &off) in system.local.iter().zip(&system.maps).zip(&system.d3_offsets) {
        let n_loc = map.len();
        let q = n_loc - off;
        let k = &lm.k_mat;
        let krr = k.view((0, 0), (off, off)).into_owned();
        let krc = k.view((0, off), (off, q)).into_owned();
        let kcc = k.view((off, off), (q, q)).into_owned();
        let f_r = lm.f_vec.rows(0, off).into_owned();
        let f_c = lm.f_vec.rows(off, q).into_owned();
        let kcc_inv = kcc.clone().try_inverse().ok_or_else(|| {
            Error::Assembly("singular element moment block in condensation".into())
        })?;
        // reduced local matrix and load
        let k_red = &krr - &krc * &kcc_inv * krc.transpose();
        let f_red = &f_r + -(&krc * &kcc_inv * &f_c);

        for (i, &gi) in map[..off].iter().enumerate() {
            let Some(ci) = index[gi] else { continue };
            let mut r = rhs[ci] + f_red[i];
            for (j, &gj) in map[..off].iter().enumerate() {
                match index[gj] {
                    Some(cj) => {
                        let v = k_red[(i, j)];
                        if v != T::zero() {
                            triplets.push((ci, cj, v));
                        }
                    }
                    None => {
                        // Dirichlet column: move to the right-hand side
                        let gval = system.fixed[gj].unwrap();
                        r -= k_red[(i, j)] * gval;
                    }
                }
            }
            rhs[ci] = r;
        }
        recovery.push(ElementRecovery {
            kcc_inv,
            kcr: krc.transpose(),
            f_c,
            r_global: map[..off].to_vec(),
            d3_global: map[off..].to_vec(),
        });
    }

    Ok(CondensedSystem {
        index,
        n: n_free,
        triplets,
        rhs,
        recovery,
    })
}

impl<T: Real> CondensedSystem<T> {
    /// Expand a condensed solution into the full DOF vector: fixed boundary
    /// values, interface solution, and recovered element moments.
    pub fn recover(&self, system: &GlobalSystem<T>, x: &DVector<T>) -> DVector<T> {
        let mut full = DVector::zeros(system.n);
        for g in 0..system.n {
            if let Some(v) = system.fixed[g] {
                full[g] = v;
            } else if let Some(c) = self.index[g] {
                full[g] = x[c];
            }
        }
        for rec in &self.recovery {
            let xr = DVector::from_iterator(
                rec.r_global.len(),
                rec.r_global.iter().map(|&g| full[g]),
            );
            let d3 = &rec.kcc_inv * (&rec.f_c - &rec.kcr * xr);
            for (j, &g) in rec.d3_global.iter().enumerate() {
                full[g] = d3[j];
            }
        }
        full
    }
}

/// Solve the Dirichlet problem end to end: assemble, fix boundary data,
/// condense, solve, recover. Returns the full DOF vector and the condensed
/// interface size, plus a condition estimate of the condensed matrix.
pub struct SolveOutcome<T: Real> {
    pub solution: DVector<T>,
    pub n_condensed: usize,
    pub condition_estimate: T,
}

pub fn solve_poisson<T: Real>(
    mesh: &Mesh<T>,
    spaces: &Spaces<T>,
    f: &dyn ScalarFn<T>,
    g: &dyn ScalarFn<T>,
    options: &crate::solver::SolveOptions<T>,
) -> Result<SolveOutcome<T>> {
    let mut system = assemble(mesh, spaces, f)?;
    apply_dirichlet(mesh, spaces, &mut system, g)?;
    let condensed = static_condense(&system)?;
    let (x, cond) = if condensed.n == 0 {
        (DVector::zeros(0), T::one())
    } else {
        let a = crate::solver::CsrMatrix::from_triplets(condensed.n, &condensed.triplets)?;
        let cond = crate::solver::condition_estimate(&a, None, 30, options.seed);
        let x = crate::solver::solve_spd(&a, &condensed.rhs, options)?;
        (x, cond)
    };
    Ok(SolveOutcome {
        solution: condensed.recover(&system, &x),
        n_condensed: condensed.n,
        condition_estimate: cond,
    })
}
