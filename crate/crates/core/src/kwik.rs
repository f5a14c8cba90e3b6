//! Know-what-it-knows learner for block-wise autoregressive popularity.
//!
//! Every file keeps its own history of lag vectors and realized next values.
//! A file predicts only when its current lag vector is well covered by that
//! history; otherwise it abstains and the lag vector, paired with the value
//! that follows it, becomes a new training row.

use std::collections::VecDeque;

use crate::domain::PopularityProfile;
use crate::error::{Error, Result};
use crate::nnls::solve_sum_to_one_ls;
use crate::ol_predictors::information;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalues of `HᵀH` at or above this count as well determined.
pub const EIGEN_SPLIT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KwikConfig {
    pub order: usize,
    /// Bound on `‖q‖`.
    pub alpha_q: f64,
    /// Bound on `‖v‖`.
    pub alpha_v: f64,
    /// Rows kept per file; the oldest row is evicted beyond this.
    pub max_rows: usize,
}

impl KwikConfig {
    pub fn new(order: usize) -> Result<Self> {
        let cfg = Self { order, alpha_q: 0.5, alpha_v: 0.5, max_rows: 512 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidParameter { name: "d", reason: "order must be at least 1".into() });
        }
        if !(self.alpha_q > 0.0 && self.alpha_v > 0.0) {
            return Err(Error::InvalidParameter { name: "alpha", reason: "thresholds must be positive".into() });
        }
        if self.max_rows < self.order {
            return Err(Error::InvalidParameter { name: "max_rows", reason: "must be at least the order".into() });
        }
        Ok(())
    }
}

/// Uncertainty of a least-squares prediction at `x` given history `H`:
/// `q = H U_k Λ_k⁻¹ U_kᵀ x` over eigenvalues `≥ 1` of `HᵀH`, and `v` the
/// coordinates of `x` along the remaining eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Accuracy {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

pub fn accuracy_vectors(history: &DMatrix<f64>, x: &DVector<f64>) -> Result<Accuracy> {
    if history.nrows() == 0 {
        return Err(Error::DegenerateHistory("empty history".into()));
    }
    if history.ncols() != x.len() {
        return Err(Error::LengthMismatch { expected: history.ncols(), got: x.len() });
    }
    let eig = SymmetricEigen::new(history.transpose() * history);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut weights = DVector::zeros(x.len());
    let mut small = Vec::new();
    for &i in &order {
        let u = eig.eigenvectors.column(i);
        let coord = u.dot(x);
        let lam = eig.eigenvalues[i];
        if lam >= EIGEN_SPLIT {
            weights += u * (coord / lam);
        } else {
            small.push(coord);
        }
    }
    Ok(Accuracy { q: history * weights, v: DVector::from_vec(small) })
}

#[derive(Debug, Clone, Default, PartialEq)]
struct FileHistory {
    rows: VecDeque<Vec<f64>>,
    targets: VecDeque<f64>,
}

impl FileHistory {
    fn matrix(&self, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), d, |i, k| self.rows[i][k])
    }

    fn push(&mut self, row: Vec<f64>, target: f64, cap: usize) {
        if self.rows.len() == cap {
            self.rows.pop_front();
            self.targets.pop_front();
        }
        self.rows.push_back(row);
        self.targets.push_back(target);
    }
}

/// Per-file outcome for the next slot; `None` is an abstention.
#[derive(Debug, Clone, PartialEq)]
pub struct KwikOutput {
    pub values: Vec<Option<f64>>,
    /// Fitted lag coefficients behind each emitted value, oldest lag first.
    pub coefficients: Vec<Option<Vec<f64>>>,
}

impl KwikOutput {
    pub fn all_known(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn abstentions(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KwikState {
    cfg: KwikConfig,
    files: Vec<FileHistory>,
    recent: VecDeque<Vec<f64>>,
    pending: Vec<Option<Vec<f64>>>,
    appended: usize,
}

impl KwikState {
    pub fn new(n_files: usize, cfg: KwikConfig) -> Result<Self> {
        cfg.validate()?;
        if n_files == 0 {
            return Err(Error::InvalidParameter { name: "n_files", reason: "must be positive".into() });
        }
        Ok(Self {
            cfg,
            files: vec![FileHistory::default(); n_files],
            recent: VecDeque::with_capacity(cfg.order + 1),
            pending: vec![None; n_files],
            appended: 0,
        })
    }

    pub fn n_files(&self) -> usize {
        self.files.len()
    }

    pub fn config(&self) -> &KwikConfig {
        &self.cfg
    }

    /// Rows currently held for `file`.
    pub fn history_len(&self, file: usize) -> usize {
        self.files[file].rows.len()
    }

    /// Total rows ever appended across files.
    pub fn rows_appended(&self) -> usize {
        self.appended
    }

    fn lag_vector(&self, file: usize) -> Vec<f64> {
        self.recent.iter().map(|obs| obs[file]).collect()
    }

    fn predict_file(&self, file: usize, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let hist = &self.files[file];
        if hist.rows.is_empty() {
            return None;
        }
        let h = hist.matrix(self.cfg.order);
        let xv = DVector::from_column_slice(x);
        let acc = accuracy_vectors(&h, &xv).ok()?;
        if acc.q.norm() > self.cfg.alpha_q || acc.v.norm() > self.cfg.alpha_v {
            return None;
        }
        let y = DVector::from_iterator(hist.targets.len(), hist.targets.iter().copied());
        let coef = solve_sum_to_one_ls(&h, &y).ok()?;
        let value = coef.dot(&xv);
        value.is_finite().then(|| (value, coef.as_slice().to_vec()))
    }
}

/// Absorbs the observation for slot `t` and returns per-file outputs for slot
/// `t + 1`. Lag vectors of files that abstained on the previous call are
/// stored together with the value just observed.
pub fn kwik_step(s: &mut KwikState, obs: &[f64]) -> Result<KwikOutput> {
    if obs.len() != s.n_files() {
        return Err(Error::LengthMismatch { expected: s.n_files(), got: obs.len() });
    }
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidProfile("observation must be finite".into()));
    }
    let cap = s.cfg.max_rows;
    for (file, pending) in s.pending.iter_mut().enumerate() {
        if let Some(row) = pending.take() {
            s.files[file].push(row, obs[file], cap);
            s.appended += 1;
        }
    }
    if s.recent.len() == s.cfg.order {
        s.recent.pop_front();
    }
    s.recent.push_back(obs.to_vec());
    let mut values = vec![None; s.n_files()];
    let mut coefficients = vec![None; s.n_files()];
    if s.recent.len() < s.cfg.order {
        return Ok(KwikOutput { values, coefficients });
    }
    for file in 0..s.n_files() {
        let x = s.lag_vector(file);
        match s.predict_file(file, &x) {
            Some((value, coef)) => {
                values[file] = Some(value);
                coefficients[file] = Some(coef);
            }
            None => s.pending[file] = Some(x),
        }
    }
    Ok(KwikOutput { values, coefficients })
}

/// Per-file observable fed to the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KwikDomain {
    /// Probabilities.
    Profile,
    /// Square roots of probabilities.
    Sqrt,
    /// `log(n / n_max)` of clamped counts.
    LogCount,
    /// `−log p` with a floor.
    Information,
}

impl KwikDomain {
    pub fn encode(self, p: &PopularityProfile, counts: Option<&[u64]>, n_max: u64) -> Result<Vec<f64>> {
        Ok(match self {
            KwikDomain::Profile => p.as_slice().to_vec(),
            KwikDomain::Sqrt => p.sqrt().as_slice().to_vec(),
            KwikDomain::Information => information(p, 1e-6),
            KwikDomain::LogCount => {
                let counts = counts.ok_or_else(|| Error::InvalidParameter {
                    name: "counts",
                    reason: "count domain needs request counts".into(),
                })?;
                let scale = n_max.max(2) as f64;
                counts.iter().map(|&n| (n.max(1) as f64 / scale).ln()).collect()
            }
        })
    }

    /// Maps a complete per-file prediction back onto the simplex.
    pub fn decode(self, values: &[f64]) -> PopularityProfile {
        let weights: Vec<f64> = match self {
            KwikDomain::Profile => values.to_vec(),
            KwikDomain::Sqrt => values.iter().map(|v| v.max(0.0).powi(2)).collect(),
            KwikDomain::LogCount => values.iter().map(|v| v.min(700.0).exp()).collect(),
            KwikDomain::Information => values.iter().map(|v| (-v.max(-700.0)).exp()).collect(),
        };
        PopularityProfile::clamp_normalize(&weights)
    }
}

/// Renormalized full-profile prediction, or `None` when any file abstained.
pub fn assemble(out: &KwikOutput, domain: KwikDomain) -> Option<PopularityProfile> {
    if !out.all_known() {
        return None;
    }
    let values: Vec<f64> = out.values.iter().map(|v| v.expect("all known")).collect();
    Some(domain.decode(&values))
}
