//! Constrained symmetric generalized eigensolver.
//!
//! Solves `Ã x = κ B x`, `C x = 0` by shift-invert Lanczos on
//! `(K − σ M)⁻¹ M` in the `M` inner product, where `(K, M)` is either the
//! pencil reduced to an explicit null-space basis of `C` or the full pencil
//! with `C` appended as a saddle-point block.

use faer::prelude::*;
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assembly::BlockSystem;
use crate::sparse::{block2x2, dot, norm2, CsrMatrix, TripletBuilder};

pub const DENSE_ORACLE_CAP: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("factorization of the shifted operator failed at shift {shift}: {reason}")]
    Factorization { shift: f64, reason: String },
    #[error("system has {n} dofs, above the dense cap of {cap}")]
    SizeCap { n: usize, cap: usize },
    #[error("constraint row {0} has no column to eliminate")]
    ConstraintNotEliminable(usize),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("dense linear algebra failed: {0}")]
    Dense(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintMethod {
    /// Eliminate one dof per constraint row.
    NullSpace,
    /// Keep all dofs and append `C` as a Lagrange-multiplier block.
    SaddlePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// Smallest eigenvalues strictly above the shift.
    AboveShift,
    /// Eigenvalues closest to the shift on either side.
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub shift: f64,
    pub n_modes: usize,
    /// Relative Ritz residual tolerance.
    pub tol: f64,
    pub method: ConstraintMethod,
    pub target: Target,
    pub seed: u64,
    pub max_krylov: usize,
    pub max_shift_retries: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            shift: (2.0 * std::f64::consts::PI * 50.0).powi(2),
            n_modes: 4,
            tol: 1e-10,
            method: ConstraintMethod::NullSpace,
            target: Target::AboveShift,
            seed: 0x5eed_1234,
            max_krylov: 300,
            max_shift_retries: 3,
        }
    }
}

impl SolveOptions {
    pub fn with_modes(mut self, n: usize) -> Self {
        self.n_modes = n;
        self
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_method(mut self, method: ConstraintMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    /// `κ = ω²`.
    pub kappa: f64,
    /// Solution vector in the layout of the system (`xᵀ B x = 1`).
    pub vector: Vec<f64>,
    /// `‖Zᵀ(Ã x − κ B x)‖ / (|κ| ‖Zᵀ B x‖)`.
    pub residual: f64,
    pub constraint_violation: f64,
    pub kernel: bool,
}

impl EigenPair {
    /// `ω = √κ`, or NaN for negative `κ`.
    pub fn omega(&self) -> f64 {
        if self.kappa >= 0.0 {
            self.kappa.sqrt()
        } else {
            f64::NAN
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub requested: usize,
    /// Converged physical pairs, ascending in `κ`.
    pub pairs: Vec<EigenPair>,
    /// Pairs flagged as kernel modes by [`filter_modes`].
    pub kernel: Vec<EigenPair>,
    pub shift: f64,
    pub shift_retries: usize,
    pub n_unconverged: usize,
    pub krylov_dim: usize,
    /// Set when filtering removed every mode.
    pub all_filtered: bool,
}

impl SpectrumReport {
    pub fn kappas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.kappa).collect()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.pairs.iter().map(EigenPair::omega).collect()
    }

    pub fn converged(&self) -> bool {
        self.n_unconverged == 0
    }
}

/// Explicit basis `Z` of `ker C` obtained by eliminating one column per row.
#[derive(Debug, Clone)]
pub struct NullSpace {
    pub z: CsrMatrix,
    pub zt: CsrMatrix,
    pub pivots: Vec<usize>,
}

/// Builds `Z` with `C Z = 0`.
///
/// Each row of `C` must own a column that no other row touches; columns in
/// `prefer` are eliminated first, then the largest coefficient wins.
pub fn nullspace_basis(c: &CsrMatrix, prefer: std::ops::Range<usize>) -> Result<NullSpace, EigenError> {
    let n = c.ncols();
    let mut count = vec![0usize; n];
    for (_, j, v) in c.triplets() {
        if v != 0.0 {
            count[j] += 1;
        }
    }
    let mut is_pivot = vec![false; n];
    let mut pivots = Vec::with_capacity(c.nrows());
    for r in 0..c.nrows() {
        let best = c
            .row(r)
            .filter(|&(j, v)| v != 0.0 && count[j] == 1 && !is_pivot[j])
            .map(|(j, v)| (prefer.contains(&j), v.abs(), j))
            .fold(None, |acc: Option<(bool, f64, usize)>, cand| match acc {
                Some(a) if (a.0, a.1) >= (cand.0, cand.1) => Some(a),
                _ => Some(cand),
            });
        let Some((_, _, p)) = best else { return Err(EigenError::ConstraintNotEliminable(r)) };
        is_pivot[p] = true;
        pivots.push(p);
    }
    let mut free_index = vec![usize::MAX; n];
    let mut m = 0;
    for j in 0..n {
        if !is_pivot[j] {
            free_index[j] = m;
            m += 1;
        }
    }
    let mut tb = TripletBuilder::with_capacity(n, m, n + c.nnz());
    for j in 0..n {
        if !is_pivot[j] {
            tb.push(j, free_index[j], 1.0);
        }
    }
    for (r, &p) in pivots.iter().enumerate() {
        let cp = c.get(r, p);
        for (j, v) in c.row(r) {
            if j != p && v != 0.0 {
                tb.push(p, free_index[j], -v / cp);
            }
        }
    }
    let z = tb.build();
    let zt = z.transpose();
    Ok(NullSpace { z, zt, pivots })
}

/// Equilibrated LU of `K − σ M` with one step of iterative refinement.
struct ShiftedSolver {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    matrix: CsrMatrix,
    scaling: Vec<f64>,
}

impl ShiftedSolver {
    fn new(matrix: CsrMatrix, shift: f64) -> Result<Self, EigenError> {
        let scaling = matrix.equilibrate(8);
        let lu = matrix
            .scale_symmetric(&scaling)
            .to_faer()
            .sp_lu()
            .map_err(|e| EigenError::Factorization { shift, reason: format!("{e:?}") })?;
        Ok(ShiftedSolver { lu, matrix, scaling })
    }

    fn solve_once(&self, rhs: &[f64]) -> Vec<f64> {
        let d = &self.scaling;
        let mut x = Mat::<f64>::from_fn(d.len(), 1, |i, _| d[i] * rhs[i]);
        self.lu.solve_in_place(x.as_mut());
        (0..d.len()).map(|i| d[i] * x[(i, 0)]).collect()
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.solve_once(rhs);
        let ax = self.matrix.mul_vec(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = self.solve_once(&r);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
        x
    }
}

struct Ritz {
    theta: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    n_unconverged: usize,
    dim: usize,
}

/// Lanczos on `op` (self-adjoint in the `mass` inner product) with full
/// reorthogonalization. Returns the wanted converged Ritz pairs.
fn lanczos(
    n: usize,
    op: &dyn Fn(&[f64]) -> Result<Vec<f64>, EigenError>,
    mass: &CsrMatrix,
    opts: &SolveOptions,
) -> Result<Ritz, EigenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut v = op(&r)?;
    let nrm = mass.bilinear(&v, &v).sqrt();
    if !(nrm > 0.0 && nrm.is_finite()) {
        return Err(EigenError::InvalidRequest("start vector has no mass component".into()));
    }
    v.iter_mut().for_each(|x| *x /= nrm);

    let max_dim = opts.max_krylov.min(n).max(1);
    let min_dim = (4 * opts.n_modes).max(20).min(max_dim);
    let mut q: Vec<Vec<f64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut mw = vec![0.0; n];
    loop {
        let j = q.len() - 1;
        let mut w = op(&q[j])?;
        mass.mul_vec_into(&q[j], &mut mw);
        let a = dot(&mw, &w);
        alpha.push(a);
        for (x, qi) in w.iter_mut().zip(&q[j]) {
            *x -= a * qi;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (x, qi) in w.iter_mut().zip(&q[j - 1]) {
                *x -= b * qi;
            }
        }
        for _ in 0..2 {
            mass.mul_vec_into(&w, &mut mw);
            for qi in &q {
                let c = dot(qi, &mw);
                for (x, y) in w.iter_mut().zip(qi) {
                    *x -= c * y;
                }
            }
        }
        mass.mul_vec_into(&w, &mut mw);
        let b = dot(&w, &mw).max(0.0).sqrt();
        let k = q.len();
        let scale = alpha.iter().chain(&beta).fold(0.0f64, |m, x| m.max(x.abs()));
        let breakdown = b <= 1e-13 * scale;
        let at_checkpoint = k >= min_dim && ((k - min_dim) % 10 == 0 || k == max_dim);
        if at_checkpoint || breakdown || k == max_dim {
            let (theta, s) = tridiagonal_eigen(&alpha, &beta)?;
            let wanted = select(&theta, opts.target, opts.n_modes);
            let converged: Vec<bool> =
                wanted.iter().map(|&i| breakdown || (b * s[(k - 1, i)]).abs() <= opts.tol * theta[i].abs()).collect();
            let enough = wanted.len() >= opts.n_modes || breakdown;
            if (enough && converged.iter().all(|&c| c)) || breakdown || k == max_dim {
                let mut out = Ritz { theta: Vec::new(), vectors: Vec::new(), n_unconverged: 0, dim: k };
                for (&i, &ok) in wanted.iter().zip(&converged) {
                    if !ok {
                        out.n_unconverged += 1;
                        continue;
                    }
                    let mut y = vec![0.0; n];
                    for (l, ql) in q.iter().enumerate() {
                        let c = s[(l, i)];
                        for (x, v) in y.iter_mut().zip(ql) {
                            *x += c * v;
                        }
                    }
                    // one inverse-iteration step removes components in ker M
                    let mut y = op(&y)?;
                    y.iter_mut().for_each(|x| *x /= theta[i]);
                    out.theta.push(theta[i]);
                    out.vectors.push(y);
                }
                out.n_unconverged += opts.n_modes.saturating_sub(wanted.len());
                return Ok(out);
            }
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        q.push(w);
    }
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Mat<f64>), EigenError> {
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let e = t.self_adjoint_eigen(Side::Lower).map_err(|e| EigenError::Dense(format!("{e:?}")))?;
    let theta = (0..k).map(|i| e.S()[i]).collect();
    Ok((theta, e.U().to_owned()))
}

fn select(theta: &[f64], target: Target, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..theta.len()).collect();
    match target {
        Target::AboveShift => {
            idx.retain(|&i| theta[i] > 0.0);
            idx.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]));
        }
        Target::Nearest => idx.sort_by(|&a, &b| theta[b].abs().total_cmp(&theta[a].abs())),
    }
    idx.truncate(n);
    idx
}

/// Shift-invert solve of the constrained pencil of `system`.
pub fn solve_pencil(system: &BlockSystem, opts: &SolveOptions) -> Result<SpectrumReport, EigenError> {
    if opts.n_modes == 0 {
        return Err(EigenError::InvalidRequest("n_modes must be at least 1".into()));
    }
    let n = system.n_dofs();
    let prefer = system.layout.w_offset()..system.layout.p_offset();
    let ns = if system.c.nrows() > 0 { Some(nullspace_basis(&system.c, prefer)?) } else { None };
    let (k, m) = match &ns {
        Some(ns) => (ns.zt.matmul(&system.a).matmul(&ns.z), ns.zt.matmul(&system.b).matmul(&ns.z)),
        None => (system.a.clone(), system.b.clone()),
    };

    let mut shift = opts.shift;
    let mut retries = 0;
    let ritz = loop {
        let attempt = match opts.method {
            ConstraintMethod::NullSpace => run_nullspace(&k, &m, shift, opts),
            ConstraintMethod::SaddlePoint => run_saddle(system, shift, opts),
        };
        match attempt {
            Ok(r) => break r,
            Err(EigenError::Factorization { .. }) if retries < opts.max_shift_retries => {
                retries += 1;
                shift = opts.shift * (1.0 + 1e-3 * retries as f64) + 1e-3 * retries as f64;
            }
            Err(e) => return Err(e),
        }
    };

    let mut pairs = Vec::with_capacity(ritz.theta.len());
    for (theta, y) in ritz.theta.iter().zip(&ritz.vectors) {
        let kappa = shift + 1.0 / theta;
        let x = match (&ns, opts.method) {
            (Some(ns), ConstraintMethod::NullSpace) => ns.z.mul_vec(y),
            _ => y[..n].to_vec(),
        };
        let mut x = x;
        let bn = system.b.bilinear(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= bn);
        let ax = system.a.mul_vec(&x);
        let bx = system.b.mul_vec(&x);
        let r: Vec<f64> = ax.iter().zip(&bx).map(|(a, b)| a - kappa * b).collect();
        let (rn, bnorm) = match &ns {
            Some(ns) => (norm2(&ns.zt.mul_vec(&r)), norm2(&ns.zt.mul_vec(&bx))),
            None => (norm2(&r), norm2(&bx)),
        };
        let cv = if system.c.nrows() > 0 { norm2(&system.c.mul_vec(&x)) / norm2(&x) } else { 0.0 };
        pairs.push(EigenPair { kappa, vector: x, residual: rn / (kappa.abs() * bnorm), constraint_violation: cv, kernel: false });
    }
    pairs.sort_by(|a, b| a.kappa.total_cmp(&b.kappa));
    pairs.dedup_by(|b, a| (b.kappa - a.kappa).abs() <= 1e-12 * a.kappa.abs().max(b.kappa.abs()));
    Ok(SpectrumReport {
        requested: opts.n_modes,
        pairs,
        kernel: Vec::new(),
        shift,
        shift_retries: retries,
        n_unconverged: ritz.n_unconverged,
        krylov_dim: ritz.dim,
        all_filtered: false,
    })
}

fn finite_or_fail(v: Vec<f64>, shift: f64) -> Result<Vec<f64>, EigenError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(EigenError::Factorization { shift, reason: "solve produced non-finite values".into() })
    }
}

fn run_nullspace(k: &CsrMatrix, m: &CsrMatrix, shift: f64, opts: &SolveOptions) -> Result<Ritz, EigenError> {
    let solver = ShiftedSolver::new(k.add_scaled(m, -shift), shift)?;
    let op = |v: &[f64]| finite_or_fail(solver.solve(&m.mul_vec(v)), shift);
    lanczos(k.nrows(), &op, m, opts)
}

fn run_saddle(system: &BlockSystem, shift: f64, opts: &SolveOptions) -> Result<Ritz, EigenError> {
    let n = system.n_dofs();
    let nc = system.c.nrows();
    let top = system.a.add_scaled(&system.b, -shift);
    let aug = block2x2(&top, &system.c.transpose(), &system.c, &CsrMatrix::zeros(nc, nc));
    let solver = ShiftedSolver::new(aug, shift)?;
    let b = &system.b;
    let op = |v: &[f64]| {
        let mut rhs = b.mul_vec(v);
        rhs.resize(n + nc, 0.0);
        let x = solver.solve(&rhs);
        finite_or_fail(x[..n].to_vec(), shift)
    };
    lanczos(n, &op, b, opts)
}

/// Flags modes with `κ ≤ kernel_tol · κ_ref` (κ_ref the largest κ) as kernel
/// modes and removes them from the physical list.
pub fn filter_modes(report: &SpectrumReport, kernel_tol: f64) -> SpectrumReport {
    let kappa_ref = report.pairs.iter().map(|p| p.kappa).fold(f64::NEG_INFINITY, f64::max);
    let mut out = report.clone();
    out.pairs.clear();
    for p in &report.pairs {
        let mut p = p.clone();
        if p.kappa <= kernel_tol * kappa_ref {
            p.kernel = true;
            out.kernel.push(p);
        } else {
            out.pairs.push(p);
        }
    }
    out.all_filtered = out.pairs.is_empty();
    out
}

/// All finite eigenvalues of the constrained pencil, by dense linear algebra.
pub fn dense_oracle(system: &BlockSystem) -> Result<Vec<f64>, EigenError> {
    let n = system.n_dofs();
    if n > DENSE_ORACLE_CAP {
        return Err(EigenError::SizeCap { n, cap: DENSE_ORACLE_CAP });
    }
    let dense = |m: &CsrMatrix| {
        let d = m.to_dense();
        Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| d[i * m.ncols() + j])
    };
    let a = dense(&system.a);
    let b = dense(&system.b);
    let z = if system.c.nrows() == 0 {
        Mat::<f64>::identity(n, n)
    } else {
        let c = dense(&system.c);
        let svd = c.svd().map_err(|e| EigenError::Dense(format!("{e:?}")))?;
        let s = svd.S();
        let smax = (0..s.dim()).map(|i| s[i]).fold(0.0, f64::max);
        let rank = (0..s.dim()).filter(|&i| s[i] > 1e-12 * smax * n as f64).count();
        svd.V().subcols(rank, n - rank).to_owned()
    };
    let k = z.transpose() * &a * &z;
    let m = z.transpose() * &b * &z;
    let sym = |x: &Mat<f64>| Mat::<f64>::from_fn(x.nrows(), x.ncols(), |i, j| 0.5 * (x[(i, j)] + x[(j, i)]));
    let (k, m) = (sym(&k), sym(&m));
    let me = m.self_adjoint_eigen(Side::Lower).map_err(|e| EigenError::Dense(format!("{e:?}")))?;
    let lam: Vec<f64> = (0..m.nrows()).map(|i| me.S()[i]).collect();
    let lmax = lam.iter().fold(0.0f64, |a, &b| a.max(b));
    let keep: Vec<usize> = (0..lam.len()).filter(|&i| lam[i] > 1e-10 * lmax).collect();
    let l = Mat::<f64>::from_fn(m.nrows(), keep.len(), |i, j| me.U()[(i, keep[j])] * lam[keep[j]].sqrt());
    let fro = |x: &Mat<f64>| x.norm_l2();
    let sigma = -1e-3 * fro(&k) / fro(&m);
    let s = &k - sigma * &m;
    let sinv_l = s.partial_piv_lu().solve(&l);
    let g = l.transpose() * &sinv_l;
    let g = sym(&g);
    let theta = g.self_adjoint_eigenvalues(Side::Lower).map_err(|e| EigenError::Dense(format!("{e:?}")))?;
    let tmax = theta.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut kappas: Vec<f64> = theta.iter().filter(|t| t.abs() > 1e-14 * tmax).map(|t| sigma + 1.0 / t).collect();
    kappas.sort_by(f64::total_cmp);
    Ok(kappas)
}
