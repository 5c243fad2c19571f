//! Sparse symmetric linear algebra: CSR storage, reverse Cuthill-McKee
//! ordering, a simplicial LDL^T factorisation (the default direct solver),
//! conjugate gradients as the optional Krylov path, and a Lanczos-based
//! condition-number estimate.

use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Symmetric sparse matrix in CSR form with the full (both triangles) pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::Assembly(format!("triplet ({i},{j}) out of range {n}")));
            }
            counts[i + 1] += 1;
        }
        let mut indptr = vec![0usize; n + 1];
        for i in 0..n {
            indptr[i + 1] = indptr[i] + counts[i + 1];
        }
        let mut indices = vec![0usize; triplets.len()];
        let mut data = vec![T::zero(); triplets.len()];
        let mut next = indptr.clone();
        for &(i, j, v) in triplets {
            let p = next[i];
            indices[p] = j;
            data[p] = v;
            next[i] += 1;
        }
        // sort each row and merge duplicates
        let mut out_indptr = vec![0usize; n + 1];
        let mut out_indices = Vec::with_capacity(triplets.len());
        let mut out_data = Vec::with_capacity(triplets.len());
        let mut row: Vec<(usize, T)> = Vec::new();
        for i in 0..n {
            row.clear();
            for p in indptr[i]..indptr[i + 1] {
                row.push((indices[p], data[p]));
            }
            row.sort_unstable_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut v = row[k].1;
                k += 1;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                out_indices.push(j);
                out_data.push(v);
            }
            out_indptr[i + 1] = out_indices.len();
        }
        Ok(Self {
            n,
            indptr: out_indptr,
            indices: out_indices,
            data: out_data,
        })
    }

    pub fn matvec(&self, x: &DVector<T>, y: &mut DVector<T>) {
        for i in 0..self.n {
            let mut s = T::zero();
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> DVector<T> {
        let mut d = DVector::zeros(self.n);
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[p] == i {
                    d[i] = self.data[p];
                }
            }
        }
        d
    }

    pub fn max_abs_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                let mut aji = T::zero();
                for q in self.indptr[j]..self.indptr[j + 1] {
                    if self.indices[q] == i {
                        aji = self.data[q];
                    }
                }
                worst = worst.max((self.data[p] - aji).abs());
            }
        }
        worst
    }
}

/// Reverse Cuthill-McKee ordering: BFS from a pseudo-peripheral vertex,
/// neighbours by increasing degree, then reversed. Returns perm such that
/// new index i corresponds to old index perm[i].
pub fn reverse_cuthill_mckee<T: Real>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.n;
    let degree = |i: usize| a.indptr[i + 1] - a.indptr[i];
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut component = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        // pseudo-peripheral start: run BFS twice from the min-degree vertex
        let mut root = start;
        for _ in 0..2 {
            let mut dist = vec![usize::MAX; n];
            dist[root] = 0;
            let mut queue = std::collections::VecDeque::from([root]);
            let mut last = root;
            while let Some(u) = queue.pop_front() {
                last = u;
                for p in a.indptr[u]..a.indptr[u + 1] {
                    let v = a.indices[p];
                    if dist[v] == usize::MAX && !visited[v] {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            root = last;
        }
        component.clear();
        visited[root] = true;
        component.push(root);
        let mut head = 0;
        while head < component.len() {
            let u = component[head];
            head += 1;
            let mut nbrs: Vec<usize> = (a.indptr[u]..a.indptr[u + 1])
                .map(|p| a.indices[p])
                .filter(|&v| !visited[v])
                .collect();
            nbrs.sort_unstable_by_key(|&v| degree(v));
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    component.push(v);
                }
            }
        }
        order.extend(component.iter().rev());
    }
    order
}

/// Simplicial LDL^T factors of a permuted symmetric matrix.
pub struct LdltFactor<T> {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<T>,
    d: Vec<T>,
}

/// Factor A = P' L D L' P with the RCM permutation. Fails on a zero pivot.
pub fn ldlt_factor<T: Real>(a: &CsrMatrix<T>) -> Result<LdltFactor<T>> {
    let n = a.n;
    let perm = reverse_cuthill_mckee(a);
    let mut iperm = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        iperm[old] = new;
    }
    // upper-triangular columns of the permuted matrix in CSC form: column j
    // of PAP' (entries with row <= j)
    let mut cp = vec![0usize; n + 1];
    let mut centries: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for old_i in 0..n {
        let i = iperm[old_i];
        for p in a.indptr[old_i]..a.indptr[old_i + 1] {
            let j = iperm[a.indices[p]];
            if i <= j {
                centries[j].push((i, a.data[p]));
            }
        }
    }
    for col in centries.iter_mut() {
        col.sort_unstable_by_key(|&(i, _)| i);
    }
    for j in 0..n {
        cp[j + 1] = cp[j] + centries[j].len();
    }

    // symbolic: elimination tree and column counts
    let mut parent = vec![usize::MAX; n];
    let mut lnz = vec![0usize; n];
    let mut flag = vec![usize::MAX; n];
    for k in 0..n {
        flag[k] = k;
        for &(i, _) in &centries[k] {
            let mut t = i;
            while t < k && flag[t] != k {
                if parent[t] == usize::MAX {
                    parent[t] = k;
                }
                lnz[t] += 1;
                flag[t] = k;
                t = parent[t];
            }
        }
    }
    let mut lp = vec![0usize; n + 1];
    for k in 0..n {
        lp[k + 1] = lp[k] + lnz[k];
    }
    let nnz = lp[n];
    let mut li = vec![0usize; nnz];
    let mut lx = vec![T::zero(); nnz];
    let mut d = vec![T::zero(); n];

    // numeric: up-looking factorisation
    let mut y = vec![T::zero(); n];
    let mut pattern = vec![0usize; n];
    let mut lnz_used = vec![0usize; n];
    let mut flag = vec![usize::MAX; n];
    for k in 0..n {
        let mut top = n;
        flag[k] = k;
        y[k] = T::zero();
        for &(i, v) in &centries[k] {
            y[i] += v;
            let mut len = 0;
            let mut t = i;
            while t < k && flag[t] != k {
                pattern[len] = t;
                len += 1;
                flag[t] = k;
                t = parent[t];
            }
            // push the path in reverse (topological order)
            while len > 0 {
                len -= 1;
                top -= 1;
                pattern[top] = pattern[len];
            }
        }
        d[k] = y[k];
        y[k] = T::zero();
        for &j in &pattern[top..n] {
            let yj = y[j];
            y[j] = T::zero();
            for p in lp[j]..(lp[j] + lnz_used[j]) {
                y[li[p]] -= lx[p] * yj;
            }
            let djj = d[j];
            if djj == T::zero() {
                return Err(Error::Solver {
                    detail: format!("zero pivot at column {j}"),
                    residual: f64::INFINITY,
                });
            }
            let lkj = yj / djj;
            d[k] -= lkj * yj;
            let p = lp[j] + lnz_used[j];
            li[p] = k;
            lx[p] = lkj;
            lnz_used[j] += 1;
        }
        if d[k] == T::zero() {
            return Err(Error::Solver {
                detail: format!("zero pivot at column {k}"),
                residual: f64::INFINITY,
            });
        }
    }
    Ok(LdltFactor {
        n,
        perm,
        lp,
        li,
        lx,
        d,
    })
}

impl<T: Real> LdltFactor<T> {
    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let n = self.n;
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        // L y = b
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        // L' z = y
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[j] = s;
        }
        // un-permute
        let mut out = DVector::zeros(n);
        for i in 0..n {
            out[self.perm[i]] = x[i];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Krylov,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<T> {
    pub method: SolveMethod,
    pub tol: T,
    pub max_iter: usize,
    pub seed: u64,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            method: SolveMethod::Direct,
            tol: T::of(1e-10),
            max_iter: 0, // 0: choose from the system size
            seed: 0,
        }
    }
}

/// Solve an SPD system to the requested relative residual. The direct path
/// factorises with LDL^T; the Krylov path runs Jacobi-preconditioned CG and
/// reports its best residual on failure.
pub fn solve_spd<T: Real>(
    a: &CsrMatrix<T>,
    b: &DVector<T>,
    options: &SolveOptions<T>,
) -> Result<DVector<T>> {
    match options.method {
        SolveMethod::Direct => {
            let factor = ldlt_factor(a)?;
            solve_with_factor(a, &factor, b, options)
        }
        SolveMethod::Krylov => {
            let bnorm = b.norm();
            if bnorm == T::zero() {
                return Ok(DVector::zeros(a.n));
            }
            let x = conjugate_gradient(a, b, options)?;
            check_residual(a, b, x, options)
        }
    }
}

/// Direct solve reusing an existing factorisation, with a few steps of
/// iterative refinement to push the residual to machine level.
pub fn solve_with_factor<T: Real>(
    a: &CsrMatrix<T>,
    factor: &LdltFactor<T>,
    b: &DVector<T>,
    options: &SolveOptions<T>,
) -> Result<DVector<T>> {
    let bnorm = b.norm();
    if bnorm == T::zero() {
        return Ok(DVector::zeros(a.n));
    }
    let mut x = factor.solve(b);
    let mut r = DVector::zeros(a.n);
    for _ in 0..3 {
        a.matvec(&x, &mut r);
        r.zip_apply(b, |ri, bi| *ri = bi - *ri);
        if r.norm() <= options.tol * bnorm * T::of(0.01) {
            break;
        }
        let dx = factor.solve(&r);
        x += dx;
    }
    check_residual(a, b, x, options)
}

fn check_residual<T: Real>(
    a: &CsrMatrix<T>,
    b: &DVector<T>,
    x: DVector<T>,
    options: &SolveOptions<T>,
) -> Result<DVector<T>> {
    let mut r = DVector::zeros(a.n);
    a.matvec(&x, &mut r);
    r -= b;
    let rel = r.norm() / b.norm();
    if !rel.is_finite() || rel > options.tol {
        return Err(Error::Solver {
            detail: format!("relative residual above tolerance after {:?}", options.method),
            residual: rel.to_f64_lossy(),
        });
    }
    Ok(x)
}

fn conjugate_gradient<T: Real>(
    a: &CsrMatrix<T>,
    b: &DVector<T>,
    options: &SolveOptions<T>,
) -> Result<DVector<T>> {
    let n = a.n;
    let max_iter = if options.max_iter == 0 {
        (20 * n).max(1000)
    } else {
        options.max_iter
    };
    let diag = a.diagonal();
    let precond = |r: &DVector<T>| -> DVector<T> {
        DVector::from_iterator(
            n,
            r.iter().zip(diag.iter()).map(|(&ri, &di)| {
                if di.abs() > T::zero() {
                    ri / di
                } else {
                    ri
                }
            }),
        )
    };
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut best = r.norm() / bnorm;
    let mut ap = DVector::zeros(n);
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap = p.dot(&ap);
        if pap <= T::zero() {
            return Err(Error::Solver {
                detail: "matrix not positive definite in CG".into(),
                residual: best.to_f64_lossy(),
            });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, T::one());
        r.axpy(-alpha, &ap, T::one());
        let rel = r.norm() / bnorm;
        best = best.min(rel);
        if rel <= options.tol {
            return Ok(x);
        }
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    Err(Error::Solver {
        detail: format!("CG did not converge in {max_iter} iterations"),
        residual: best.to_f64_lossy(),
    })
}

/// Extreme Ritz values (smallest positive, largest) of a symmetric operator
/// from a short Lanczos run with full reorthogonalisation and a deterministic
/// seeded start vector.
pub fn lanczos_extreme_ritz<T: Real>(
    mut op: impl FnMut(&DVector<T>, &mut DVector<T>),
    n: usize,
    steps: usize,
    seed: u64,
) -> (T, T) {
    if n == 0 {
        return (T::one(), T::one());
    }
    let m = steps.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let mut v = DVector::from_iterator(n, (0..n).map(|_| T::of(rng.random_range(-1.0..1.0))));
    v /= v.norm();
    let mut basis: Vec<DVector<T>> = vec![v.clone()];
    let mut alphas: Vec<T> = Vec::with_capacity(m);
    let mut betas: Vec<T> = Vec::new();
    let mut w = DVector::zeros(n);
    for j in 0..m {
        op(&basis[j], &mut w);
        let alpha = basis[j].dot(&w);
        alphas.push(alpha);
        w.axpy(-alpha, &basis[j], T::one());
        if j > 0 {
            let b = betas[j - 1];
            w.axpy(-b, &basis[j - 1], T::one());
        }
        // full reorthogonalisation
        for q in &basis {
            let c = q.dot(&w);
            w.axpy(-c, q, T::one());
        }
        let beta = w.norm();
        if beta <= T::default_epsilon() * T::of(100.0) || j + 1 == m {
            break;
        }
        betas.push(beta);
        basis.push(&w / beta);
    }
    let k = alphas.len();
    let mut tri = DMatrix::zeros(k, k);
    for i in 0..k {
        tri[(i, i)] = alphas[i];
        if i + 1 < k {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let eigs = tri.symmetric_eigenvalues();
    let mut lo = T::max_value().unwrap();
    let mut hi = T::zero();
    for &e in eigs.iter() {
        let e = e.abs();
        if e > T::default_epsilon() {
            lo = lo.min(e);
        }
        hi = hi.max(e);
    }
    if lo == T::max_value().unwrap() {
        lo = T::default_epsilon();
    }
    (lo, hi)
}

/// Condition-number estimate from short Lanczos runs. The largest eigenvalue
/// comes from the forward operator; the smallest, which plain Lanczos badly
/// overestimates, comes from the largest Ritz value of the factored inverse
/// when a factorisation is supplied.
pub fn condition_estimate<T: Real>(
    a: &CsrMatrix<T>,
    factor: Option<&LdltFactor<T>>,
    steps: usize,
    seed: u64,
) -> T {
    if a.n <= 1 {
        return T::one();
    }
    let (lo_fwd, hi) = lanczos_extreme_ritz(|x, y| a.matvec(x, y), a.n, steps, seed);
    let lo = match factor {
        Some(f) => {
            let (_, inv_hi) =
                lanczos_extreme_ritz(|x, y| y.copy_from(&f.solve(x)), a.n, steps, seed);
            if inv_hi > T::zero() {
                T::one() / inv_hi
            } else {
                lo_fwd
            }
        }
        None => lo_fwd,
    };
    if lo <= T::zero() {
        T::max_value().unwrap()
    } else {
        hi / lo
    }
}

/// Backwards-compatible helper running the forward-only estimate.
pub fn lanczos_condition_estimate<T: Real>(a: &CsrMatrix<T>, steps: usize, seed: u64) -> T {
    condition_estimate(a, None, steps, seed)
}
