//! Sliding-window autoregressive predictors. Each model regresses the most
//! recent observation on its `d` predecessors over a window of `τ` slots,
//! with one coefficient vector shared across files (per-file for counts), and
//! reads out the next-slot profile.

use crate::asp::{asp, optimal_placement, AspConstants};
use crate::domain::PopularityProfile;
use crate::error::{Error, Result};
use crate::nnls::{ball_nnls_gram, column_space, simplex_nnls_gram, solve_ls, DEFAULT_DUAL_TOL, RANK_TOL};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

const RANGE_PENALTY: f64 = 1e3;
const RANGE_TOL: f64 = 1e-13;
const MULTIPLIER_ROUNDS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpModel {
    Ppm,
    Gpm,
    Rpm,
    Ipm,
    AspPm,
}

impl OpModel {
    pub const ALL: [OpModel; 5] = [OpModel::Ppm, OpModel::Gpm, OpModel::Rpm, OpModel::Ipm, OpModel::AspPm];

    pub fn name(self) -> &'static str {
        match self {
            OpModel::Ppm => "PPM",
            OpModel::Gpm => "GPM",
            OpModel::Rpm => "RPM",
            OpModel::Ipm => "IPM",
            OpModel::AspPm => "ASP-PM",
        }
    }
}

/// Reference count used to scale log-counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountScale {
    /// Largest count in the current window, at least 2.
    WindowMax,
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpConfig {
    pub model: OpModel,
    pub order: usize,
    pub window: usize,
    /// Floor applied to probabilities before taking logs.
    pub prob_floor: f64,
    pub count_scale: CountScale,
    pub tol: f64,
}

impl OpConfig {
    pub fn new(model: OpModel, order: usize, window: usize) -> Result<Self> {
        let cfg = Self { model, order, window, prob_floor: 1e-6, count_scale: CountScale::WindowMax, tol: DEFAULT_DUAL_TOL };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidParameter { name: "d", reason: "order must be at least 1".into() });
        }
        if self.window < self.order + 1 {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("window {} must exceed order {}", self.window, self.order),
            });
        }
        if !(self.prob_floor > 0.0 && self.prob_floor < 1.0) {
            return Err(Error::InvalidParameter { name: "prob_floor", reason: "must lie in (0, 1)".into() });
        }
        Ok(())
    }
}

/// The `τ` most recent observations in chronological order.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    profiles: Vec<PopularityProfile>,
    counts: Option<Vec<Vec<u64>>>,
    end: usize,
}

impl HistoryWindow {
    /// `end` is the time index of the last profile.
    pub fn new(profiles: Vec<PopularityProfile>, end: usize) -> Result<Self> {
        let n = profiles.first().map(|p| p.len()).ok_or(Error::EmptyDataset)?;
        if let Some(bad) = profiles.iter().find(|p| p.len() != n) {
            return Err(Error::LengthMismatch { expected: n, got: bad.len() });
        }
        Ok(Self { profiles, counts: None, end })
    }

    /// Attaches per-slot request counts (`counts[slot][file]`).
    pub fn with_counts(mut self, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != self.profiles.len() {
            return Err(Error::LengthMismatch { expected: self.profiles.len(), got: counts.len() });
        }
        let n = self.n_files();
        if let Some(bad) = counts.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch { expected: n, got: bad.len() });
        }
        self.counts = Some(counts);
        Ok(self)
    }

    pub fn profiles(&self) -> &[PopularityProfile] {
        &self.profiles
    }

    pub fn counts(&self) -> Option<&[Vec<u64>]> {
        self.counts.as_deref()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn n_files(&self) -> usize {
        self.profiles[0].len()
    }

    pub fn end(&self) -> usize {
        self.end
    }

    fn check(&self, cfg: &OpConfig) -> Result<()> {
        cfg.validate()?;
        if self.len() != cfg.window {
            return Err(Error::LengthMismatch { expected: cfg.window, got: self.len() });
        }
        Ok(())
    }
}

/// Regression data for `s_j ≈ Σ_k c_k s_{j−k}`: stacked lag rows and targets.
struct Stacked {
    lagged: DMatrix<f64>,
    target: DVector<f64>,
}

fn stack(series: &[DVector<f64>], order: usize) -> Stacked {
    let dim = series[0].len();
    let blocks = series.len() - order;
    let mut lagged = DMatrix::zeros(blocks * dim, order);
    let mut target = DVector::zeros(blocks * dim);
    for (b, j) in (order..series.len()).enumerate() {
        for i in 0..dim {
            target[b * dim + i] = series[j][i];
            for k in 0..order {
                lagged[(b * dim + i, k)] = series[j - 1 - k][i];
            }
        }
    }
    Stacked { lagged, target }
}

/// Column `k` is the lag-`k+1` observation relative to the next slot.
fn readout_basis(series: &[DVector<f64>], order: usize) -> DMatrix<f64> {
    let last = series.len() - 1;
    DMatrix::from_fn(series[0].len(), order, |i, k| series[last - k][i])
}

/// Range/null split of a readout basis `B` (`n × d`).
struct BasisSplit {
    pinv: DMatrix<f64>,
    range_proj: DMatrix<f64>,
    null: DMatrix<f64>,
    rank: usize,
}

fn split_basis(basis: &DMatrix<f64>) -> Result<BasisSplit> {
    let (n, d) = basis.shape();
    let eig = SymmetricEigen::new(basis.transpose() * basis);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if top <= 0.0 {
        return Err(Error::DegenerateHistory("readout basis is zero".into()));
    }
    let cutoff = top * RANK_TOL * RANK_TOL;
    let mut pinv = DMatrix::zeros(d, n);
    let mut range_proj = DMatrix::zeros(n, n);
    let mut null_cols = Vec::new();
    let mut rank = 0;
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        if lam > cutoff {
            let sigma = lam.sqrt();
            let u = basis * v / sigma;
            pinv += v * u.transpose() / sigma;
            range_proj += &u * u.transpose();
            rank += 1;
        } else {
            null_cols.push(v.into_owned());
        }
    }
    let null = if null_cols.is_empty() { DMatrix::zeros(d, 0) } else { DMatrix::from_columns(&null_cols) };
    Ok(BasisSplit { pinv, range_proj, null, rank })
}

/// Removes from `m` its component along the column space of `span`,
/// ignoring directions of `span` below `RANK_TOL · scale`.
fn project_out(m: &DMatrix<f64>, span: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let basis = column_space(span, scale);
    m - &basis * (basis.transpose() * m)
}

#[derive(Clone, Copy)]
enum Readout {
    Simplex,
    Ball,
}

/// Solves the coefficient fit in readout space `x = B c`. Null-space
/// directions of `B` are profiled out of the objective and readouts are
/// confined to `range(B)`, so the result is the readout of the best
/// coefficient vector subject to the readout constraint.
fn fit_readout(
    lagged: &DMatrix<f64>,
    target: &DVector<f64>,
    basis: &DMatrix<f64>,
    readout: Readout,
    tol: f64,
) -> Result<DVector<f64>> {
    let n = basis.nrows();
    let split = split_basis(basis)?;
    let mut design = lagged * &split.pinv;
    let mut y = DMatrix::from_column_slice(target.len(), 1, target.as_slice());
    if split.null.ncols() > 0 {
        let free = lagged * &split.null;
        let scale = lagged.norm();
        design = project_out(&design, &free, scale);
        y = project_out(&y, &free, scale);
    }
    let y = y.column(0).into_owned();
    let mut gram = design.transpose() * &design;
    let rhs = design.transpose() * &y;
    let solve = |gram: &DMatrix<f64>, rhs: &DVector<f64>| -> Result<DVector<f64>> {
        let sol = match readout {
            Readout::Simplex => simplex_nnls_gram(gram, rhs, tol)?,
            Readout::Ball => ball_nnls_gram(gram, rhs, tol)?,
        };
        Ok(DVector::from_vec(sol.x))
    };
    if split.rank == n {
        return solve(&gram, &rhs);
    }
    // Readouts must stay in range(B): enforce (I − Π)x = 0 by the method of
    // multipliers on top of the constrained solver.
    let leave = DMatrix::identity(n, n) - &split.range_proj;
    let weight = RANGE_PENALTY * (gram.trace() / n as f64).max(1.0);
    gram += &leave * weight;
    let mut multiplier = DVector::zeros(n);
    let mut x = solve(&gram, &rhs)?;
    for _ in 0..MULTIPLIER_ROUNDS {
        let violation = &leave * &x;
        if violation.amax() <= RANGE_TOL {
            break;
        }
        multiplier += violation * weight;
        x = solve(&gram, &(&rhs - &leave * &multiplier))?;
    }
    Ok(x)
}

fn profile_series(w: &HistoryWindow) -> Vec<DVector<f64>> {
    w.profiles.iter().map(|p| DVector::from_column_slice(p.as_slice())).collect()
}

/// Profile-domain model with simplex-constrained readout.
pub fn ppm_predict(w: &HistoryWindow, cfg: &OpConfig) -> Result<PopularityProfile> {
    w.check(cfg)?;
    let series = profile_series(w);
    let st = stack(&series, cfg.order);
    let x = fit_readout(&st.lagged, &st.target, &readout_basis(&series, cfg.order), Readout::Simplex, cfg.tol)?;
    Ok(PopularityProfile::clamp_normalize(x.as_slice()))
}

/// Square-root-domain model with unit-ball readout.
pub fn gpm_predict(w: &HistoryWindow, cfg: &OpConfig) -> Result<PopularityProfile> {
    w.check(cfg)?;
    let series: Vec<DVector<f64>> =
        w.profiles.iter().map(|p| DVector::from_column_slice(p.sqrt().as_slice())).collect();
    let st = stack(&series, cfg.order);
    let x = fit_readout(&st.lagged, &st.target, &readout_basis(&series, cfg.order), Readout::Ball, cfg.tol)?;
    let squared: Vec<f64> = x.iter().map(|v| v * v).collect();
    Ok(PopularityProfile::clamp_normalize(&squared))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountPrediction {
    /// Floored predicted counts per file.
    pub counts: Vec<f64>,
    pub profile: PopularityProfile,
}

/// Log-count model, one unconstrained fit per file.
pub fn rpm_predict(w: &HistoryWindow, cfg: &OpConfig) -> Result<CountPrediction> {
    w.check(cfg)?;
    let counts = w
        .counts()
        .ok_or_else(|| Error::InvalidParameter { name: "counts", reason: "count model needs request counts".into() })?;
    let n = w.n_files();
    let scale = match cfg.count_scale {
        CountScale::WindowMax => counts.iter().flatten().copied().max().unwrap_or(0).max(2),
        CountScale::Fixed(v) => v.max(2),
    } as f64;
    let d = cfg.order;
    let tau = w.len();
    let mut predicted = Vec::with_capacity(n);
    for file in 0..n {
        let logs: Vec<f64> = counts.iter().map(|c| (c[file].max(1) as f64 / scale).ln()).collect();
        let lagged = DMatrix::from_fn(tau - d, d, |r, k| logs[r + d - 1 - k]);
        let target = DVector::from_fn(tau - d, |r, _| logs[r + d]);
        let coef = solve_ls(&lagged, &target)?;
        let next: f64 = (0..d).map(|k| coef[k] * logs[tau - 1 - k]).sum();
        let value = (scale * next.min(700.0).exp() + 1e-9).floor();
        predicted.push(if value.is_finite() { value } else { f64::MAX });
    }
    let profile = PopularityProfile::from_weights(&predicted).unwrap_or_else(|_| PopularityProfile::uniform(n));
    Ok(CountPrediction { counts: predicted, profile })
}

/// Information-domain (`−log p`) model with unconstrained shared coefficients.
pub fn ipm_predict(w: &HistoryWindow, cfg: &OpConfig) -> Result<PopularityProfile> {
    w.check(cfg)?;
    let series: Vec<DVector<f64>> = w
        .profiles
        .iter()
        .map(|p| {
            let floored: Vec<f64> = p.as_slice().iter().map(|v| v.max(cfg.prob_floor)).collect();
            let sum: f64 = floored.iter().sum();
            DVector::from_iterator(floored.len(), floored.iter().map(|v| -(v / sum).ln()))
        })
        .collect();
    let st = stack(&series, cfg.order);
    let coef = solve_ls(&st.lagged, &st.target)?;
    let info = readout_basis(&series, cfg.order) * coef;
    let weights: Vec<f64> = info.iter().map(|v| (-v).exp()).collect();
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateHistory("information readout overflowed".into()));
    }
    Ok(PopularityProfile::from_weights(&weights).unwrap_or_else(|_| PopularityProfile::uniform(w.n_files())))
}

/// Regresses the per-slot optimal ASP series and reads out the matching
/// convex combination of past profiles.
pub fn asppm_predict(w: &HistoryWindow, cfg: &OpConfig, k: &AspConstants, budget: usize) -> Result<PopularityProfile> {
    w.check(cfg)?;
    let mut values = Vec::with_capacity(w.len());
    for p in &w.profiles {
        let policy = optimal_placement(p, budget, k)?;
        values.push(DVector::from_element(1, asp(p, &policy.q, k)?));
    }
    let st = stack(&values, cfg.order);
    let series = profile_series(w);
    let x = fit_readout(&st.lagged, &st.target, &readout_basis(&series, cfg.order), Readout::Simplex, cfg.tol)?;
    Ok(PopularityProfile::clamp_normalize(x.as_slice()))
}

/// Dispatches on `cfg.model`. `asp_ctx` is required for ASP-PM only.
pub fn predict(w: &HistoryWindow, cfg: &OpConfig, asp_ctx: Option<(&AspConstants, usize)>) -> Result<PopularityProfile> {
    match cfg.model {
        OpModel::Ppm => ppm_predict(w, cfg),
        OpModel::Gpm => gpm_predict(w, cfg),
        OpModel::Rpm => rpm_predict(w, cfg).map(|p| p.profile),
        OpModel::Ipm => ipm_predict(w, cfg),
        OpModel::AspPm => {
            let (k, budget) = asp_ctx.ok_or_else(|| Error::InvalidParameter {
                name: "asp_constants",
                reason: "ASP-PM needs network constants and a cache size".into(),
            })?;
            asppm_predict(w, cfg, k, budget)
        }
    }
}
