//! Least-squares solvers: simplex-constrained NNLS (active set on the Gram
//! matrix), NNLS inside the unit ball, sum-to-one equality LS and plain LS.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Default dual tolerance.
pub const DEFAULT_DUAL_TOL: f64 = 1e-10;

const BALL_NORM_TOL: f64 = 1e-8;

/// Side constraint attached to a least-squares problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    None,
    /// `x ≥ 0`, `1ᵀx = 1`
    Simplex,
    /// `x ≥ 0`, `‖x‖₂ ≤ 1`
    Ball,
}

/// `min ½‖y − Hx‖²` subject to a [`Constraint`].
#[derive(Debug, Clone)]
pub struct LsProblem {
    pub h: DMatrix<f64>,
    pub y: DVector<f64>,
    pub constraint: Constraint,
    pub tol: f64,
}

impl LsProblem {
    pub fn new(h: DMatrix<f64>, y: DVector<f64>, constraint: Constraint) -> Result<Self> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::InvalidParameter { name: "h", reason: "matrix must be nonempty".into() });
        }
        if h.nrows() != y.len() {
            return Err(Error::LengthMismatch { expected: h.nrows(), got: y.len() });
        }
        if h.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "h", reason: "entries must be finite".into() });
        }
        Ok(Self { h, y, constraint, tol: DEFAULT_DUAL_TOL })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// `½‖y − Hx‖²`
    pub fn objective(&self, x: &[f64]) -> f64 {
        let r = &self.y - &self.h * DVector::from_column_slice(x);
        0.5 * r.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub x: Vec<f64>,
    /// Indices with `x_i > 0`.
    pub active: Vec<usize>,
    /// Multiplier of the equality (simplex) or norm (ball) constraint.
    pub lambda: f64,
    /// Dual vector `v`; `v_i ≤ ε` everywhere and `|v_i| ≤ ε` where `x_i > 0`.
    pub dual: Vec<f64>,
    pub iterations: usize,
}

fn sub_matrix(g: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| g[(idx[i], idx[j])])
}

fn sub_vector(b: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| b[idx[i]])
}

/// Solves `M u = r` for symmetric positive semidefinite `M`, adding a ridge of
/// `1e-10 · trace/n` when `M` is numerically singular.
pub(crate) fn solve_spd(m: &DMatrix<f64>, rhs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = m.nrows();
    let trace = m.trace().max(f64::MIN_POSITIVE);
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0f64, f64::max);
    if let Some(chol) = m.clone().cholesky() {
        let l = chol.l_dirty();
        let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if min_pivot > 1e-12 * max_diag {
            return rhs.iter().map(|r| chol.solve(r)).collect();
        }
    }
    let mut ridged = m.clone();
    let ridge = 1e-10 * trace / n as f64;
    for i in 0..n {
        ridged[(i, i)] += ridge;
    }
    match ridged.clone().cholesky() {
        Some(chol) => rhs.iter().map(|r| chol.solve(r)).collect(),
        None => {
            let pinv = symmetric_pinv(&ridged);
            rhs.iter().map(|r| &pinv * r).collect()
        }
    }
}

// Minimizer of ½xᵀGx − bᵀx on the index set `idx` subject to Σx = 1.
fn equality_step(g: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> (DVector<f64>, f64) {
    let m = sub_matrix(g, idx);
    let ones = DVector::from_element(idx.len(), 1.0);
    let sols = solve_spd(&m, &[sub_vector(b, idx), ones.clone()]);
    let (u, w) = (&sols[0], &sols[1]);
    let lambda = (u.sum() - 1.0) / w.sum();
    (u - w * lambda, lambda)
}

fn dual_vector(g: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
    b - g * x - DVector::from_element(x.len(), lambda)
}

/// Active-set solver for `min ½xᵀGx − bᵀx` over the probability simplex.
pub fn simplex_nnls_gram(g: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<LsSolution> {
    let n = b.len();
    if n == 0 {
        return Err(Error::Infeasible);
    }
    let cap = 10 * n.max(3);
    let mut x = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let mut lambda = 0.0;
    // Start from x = 0 with v = b; feasibility is reached at the first insertion.
    let mut v = b.clone();
    let mut blocked: Option<usize> = None;
    let mut iterations = 0;
    loop {
        let candidate = (0..n)
            .filter(|i| !passive.contains(i) && Some(*i) != blocked)
            .max_by(|&i, &j| v[i].total_cmp(&v[j]).then(j.cmp(&i)));
        let j = match candidate {
            Some(j) if passive.is_empty() || v[j] > tol => j,
            _ => break,
        };
        passive.push(j);
        passive.sort_unstable();
        blocked = None;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::Stalled(iterations));
            }
            let (s_p, lam) = equality_step(g, b, &passive);
            lambda = lam;
            if s_p.iter().all(|&s| s > 0.0) {
                x.fill(0.0);
                for (k, &i) in passive.iter().enumerate() {
                    x[i] = s_p[k];
                }
                break;
            }
            // Backtrack toward s until the first coordinate hits zero.
            let step = |set: &mut dyn Iterator<Item = (usize, f64)>| -> Option<f64> {
                set.filter(|&(i, s)| s <= 0.0 && x[i] - s > 0.0)
                    .map(|(i, s)| x[i] / (x[i] - s))
                    .min_by(f64::total_cmp)
            };
            let pairs: Vec<(usize, f64)> = passive.iter().enumerate().map(|(k, &i)| (i, s_p[k])).collect();
            let mut alpha = step(&mut pairs.iter().copied()).unwrap_or(0.0);
            if alpha == 0.0 {
                // Re-select over the coordinates that are currently nonzero.
                alpha = step(&mut pairs.iter().copied().filter(|&(i, _)| x[i] != 0.0)).unwrap_or(0.0);
                if alpha == 0.0 {
                    // The entering index cannot move; exclude it for this round.
                    passive.retain(|&i| i != j);
                    blocked = Some(j);
                    if passive.is_empty() {
                        return Err(Error::Stalled(iterations));
                    }
                    continue;
                }
            }
            for &(i, s) in &pairs {
                x[i] += alpha * (s - x[i]);
            }
            let before = passive.len();
            passive.retain(|&i| x[i] > 1e-15);
            for i in 0..n {
                if !passive.contains(&i) {
                    x[i] = 0.0;
                }
            }
            if passive.len() == before {
                // numerical stall: force the worst offender out
                if let Some(&(worst, _)) = pairs.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
                    passive.retain(|&i| i != worst);
                    x[worst] = 0.0;
                }
            }
            if passive.is_empty() {
                return Err(Error::Stalled(iterations));
            }
            let sum = x.sum();
            x /= sum;
        }
        v = dual_vector(g, b, &x, lambda);
    }
    for &i in &passive {
        v[i] = v[i].clamp(-tol, tol);
    }
    let active = (0..n).filter(|&i| x[i] > 0.0).collect();
    Ok(LsSolution { x: x.iter().copied().collect(), active, lambda, dual: v.iter().copied().collect(), iterations })
}

/// `min ½‖y − Hx‖²` subject to `x ≥ 0`, `1ᵀx = 1`.
pub fn solve_simplex_nnls(prob: &LsProblem) -> Result<LsSolution> {
    let g = prob.h.transpose() * &prob.h;
    let b = prob.h.transpose() * &prob.y;
    simplex_nnls_gram(&g, &b, prob.tol)
}

/// Lawson–Hanson NNLS in Gram form: `min ½xᵀGx − bᵀx`, `x ≥ 0`.
pub fn nnls_gram(g: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<(DVector<f64>, usize)> {
    let n = b.len();
    let cap = 10 * n.max(3);
    let mut x = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let mut w = b.clone();
    let mut iterations = 0;
    let mut blocked: Option<usize> = None;
    loop {
        let candidate = (0..n)
            .filter(|i| !passive.contains(i) && Some(*i) != blocked)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let j = match candidate {
            Some(j) if w[j] > tol => j,
            _ => break,
        };
        passive.push(j);
        passive.sort_unstable();
        blocked = None;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::Stalled(iterations));
            }
            let s_p = solve_spd(&sub_matrix(g, &passive), &[sub_vector(b, &passive)]).remove(0);
            if s_p.iter().all(|&s| s > 0.0) {
                x.fill(0.0);
                for (k, &i) in passive.iter().enumerate() {
                    x[i] = s_p[k];
                }
                break;
            }
            let alpha = passive
                .iter()
                .enumerate()
                .filter(|&(k, &i)| s_p[k] <= 0.0 && x[i] - s_p[k] > 0.0)
                .map(|(k, &i)| x[i] / (x[i] - s_p[k]))
                .min_by(f64::total_cmp)
                .unwrap_or(0.0);
            if alpha == 0.0 && x[j] == 0.0 && passive.len() == 1 {
                passive.clear();
                blocked = Some(j);
                break;
            }
            for (k, &i) in passive.iter().enumerate() {
                x[i] += alpha * (s_p[k] - x[i]);
            }
            let before = passive.len();
            passive.retain(|&i| x[i] > 1e-15);
            if passive.len() == before {
                let (k_min, _) = s_p.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
                passive.remove(k_min);
            }
            for i in 0..n {
                if !passive.contains(&i) {
                    x[i] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
        w = b - g * &x;
    }
    Ok((x, iterations))
}

/// `min ½‖y − Hx‖²` subject to `x ≥ 0`, `‖x‖₂ ≤ 1`: NNLS on `HᵀH + λI`
/// with `λ ≥ 0` found by bisection on the norm.
pub fn solve_ball_nnls(prob: &LsProblem) -> Result<LsSolution> {
    let g = prob.h.transpose() * &prob.h;
    let b = prob.h.transpose() * &prob.y;
    ball_nnls_gram(&g, &b, prob.tol)
}

pub fn ball_nnls_gram(g: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<LsSolution> {
    let n = b.len();
    let shifted = |lambda: f64| -> Result<(DVector<f64>, usize)> {
        let mut m = g.clone();
        for i in 0..n {
            m[(i, i)] += lambda;
        }
        nnls_gram(&m, b, tol)
    };
    let (x0, mut iterations) = shifted(0.0)?;
    let (x, lambda) = if x0.norm() <= 1.0 {
        (x0, 0.0)
    } else {
        let mut lo = 0.0;
        let mut hi = 1.0f64.max(b.amax());
        let mut x_hi = None;
        for _ in 0..200 {
            let (xh, it) = shifted(hi)?;
            iterations += it;
            if xh.norm() <= 1.0 {
                x_hi = Some(xh);
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        let mut x_hi = x_hi.ok_or(Error::Stalled(iterations))?;
        let mut converged = 1.0 - x_hi.norm() <= BALL_NORM_TOL;
        for _ in 0..300 {
            if converged {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (xm, it) = shifted(mid)?;
            iterations += it;
            if xm.norm() <= 1.0 {
                hi = mid;
                x_hi = xm;
                converged = 1.0 - x_hi.norm() <= BALL_NORM_TOL;
            } else {
                lo = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                // λ pinned to machine precision; accept the feasible side.
                converged = true;
            }
        }
        if !converged {
            return Err(Error::Stalled(iterations));
        }
        (x_hi, hi)
    };
    let mut v = b - g * &x - &x * lambda;
    let active: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
    for &i in &active {
        v[i] = v[i].clamp(-tol, tol);
    }
    Ok(LsSolution { x: x.iter().copied().collect(), active, lambda, dual: v.iter().copied().collect(), iterations })
}

/// Relative singular-value cutoff below which directions count as null.
pub(crate) const RANK_TOL: f64 = 1e-7;

fn symmetric_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut pinv = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > top * 1e-14 {
            let v = eig.eigenvectors.column(i);
            pinv += v * v.transpose() / lam;
        }
    }
    pinv
}

/// Orthonormal basis of the row space of `h` (columns), from the
/// eigendecomposition of `hᵀh` with singular values above
/// `RANK_TOL · max(σ_max, scale)`.
pub(crate) fn row_space(h: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let n = h.ncols();
    let eig = SymmetricEigen::new(h.transpose() * h);
    let top = eig.eigenvalues.iter().cloned().fold(scale * scale, f64::max);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| top > 0.0 && eig.eigenvalues[i] > top * RANK_TOL * RANK_TOL)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column space of `h`; `scale` sets a floor on the
/// singular value treated as significant.
pub(crate) fn column_space(h: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let rows = row_space(h, scale);
    if rows.ncols() == 0 {
        return DMatrix::zeros(h.nrows(), 0);
    }
    let qr = (h * rows).qr();
    qr.q()
}

/// Unconstrained least squares, minimum-norm on rank deficiency: the
/// solution is restricted to the numerical row space of `H` and the reduced
/// full-rank problem is solved by Householder QR.
pub fn solve_ls(h: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if h.nrows() != y.len() {
        return Err(Error::LengthMismatch { expected: h.nrows(), got: y.len() });
    }
    let basis = row_space(h, 0.0);
    let r = basis.ncols();
    if r == 0 {
        return Ok(DVector::zeros(h.ncols()));
    }
    let qr = (h * &basis).qr();
    let rhs = qr.q().transpose() * y;
    let z = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::DegenerateHistory("triangular factor is singular".into()))?;
    debug_assert_eq!(z.len(), r);
    Ok(basis * z)
}

/// Orthonormal basis of the complement of `1` in `R^d` (Helmert columns).
pub(crate) fn sum_zero_basis(d: usize) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(d, d.saturating_sub(1));
    for k in 1..d {
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            basis[(i, k - 1)] = scale;
        }
        basis[(k, k - 1)] = -(k as f64) * scale;
    }
    basis
}

/// `min ‖y − Hc‖²` subject to `Σc = 1`, solved exactly in the affine
/// parametrization `c = 1/d + N z` with `N` spanning `1^⊥`.
pub fn solve_sum_to_one_ls(h: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let d = h.ncols();
    if d == 0 {
        return Err(Error::Infeasible);
    }
    let base = DVector::from_element(d, 1.0 / d as f64);
    if d == 1 {
        return Ok(base);
    }
    let basis = sum_zero_basis(d);
    let residual = y - h * &base;
    let z = solve_ls(&(h * &basis), &residual)?;
    Ok(base + basis * z)
}
