//! Recursive online learners with O(N) state per step. Each learner keeps a
//! weighted running estimate in its own domain and tracks the weighted loss
//! of its predictions alongside the sufficient statistics of the best fixed
//! comparator.

use crate::domain::{PopularityProfile, SqrtProfile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OlModel {
    Ppm,
    Gpm,
    Rpm,
    Ipm,
}

impl OlModel {
    pub const ALL: [OlModel; 4] = [OlModel::Ppm, OlModel::Gpm, OlModel::Rpm, OlModel::Ipm];

    pub fn name(self) -> &'static str {
        match self {
            OlModel::Ppm => "PPM",
            OlModel::Gpm => "GPM",
            OlModel::Rpm => "RPM",
            OlModel::Ipm => "IPM",
        }
    }

    /// Loss weight applied at step `t ≥ 1`.
    pub fn weight(self, t: usize) -> f64 {
        let inv = 1.0 / t as f64;
        match self {
            OlModel::Gpm => 1.0 - inv,
            _ => inv,
        }
    }
}

/// Learner state. `t` is the index of the next observation.
#[derive(Debug, Clone, PartialEq)]
pub struct OlState {
    model: OlModel,
    t: usize,
    estimate: Vec<f64>,
    kappa: f64,
    prob_floor: f64,
    learner_loss: f64,
    weight_sum: f64,
    weighted_obs: Vec<f64>,
    weighted_sq: f64,
}

impl OlState {
    /// Starts from the uniform profile in the model's domain; the GPM
    /// estimate starts at the uniform unit vector with `κ₁ = 1`.
    pub fn new(model: OlModel, n_files: usize) -> Result<Self> {
        if n_files == 0 {
            return Err(Error::InvalidParameter { name: "n_files", reason: "must be positive".into() });
        }
        let n = n_files as f64;
        let estimate = match model {
            OlModel::Ppm => vec![1.0 / n; n_files],
            OlModel::Gpm => vec![1.0 / n.sqrt(); n_files],
            OlModel::Rpm => vec![0.0; n_files],
            OlModel::Ipm => vec![n.ln(); n_files],
        };
        Ok(Self {
            model,
            t: 1,
            estimate,
            kappa: 1.0,
            prob_floor: 1e-6,
            learner_loss: 0.0,
            weight_sum: 0.0,
            weighted_obs: vec![0.0; n_files],
            weighted_sq: 0.0,
        })
    }

    pub fn with_prob_floor(mut self, floor: f64) -> Self {
        self.prob_floor = floor;
        self
    }

    pub fn model(&self) -> OlModel {
        self.model
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n_files(&self) -> usize {
        self.estimate.len()
    }

    /// Current estimate in the model's domain.
    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Prediction for slot `t` as a popularity profile.
    pub fn readout(&self) -> PopularityProfile {
        match self.model {
            OlModel::Ppm => PopularityProfile::clamp_normalize(&self.estimate),
            OlModel::Gpm => {
                let sq: Vec<f64> = self.estimate.iter().map(|v| v * v).collect();
                PopularityProfile::clamp_normalize(&sq)
            }
            OlModel::Rpm | OlModel::Ipm => {
                let sign = if self.model == OlModel::Rpm { 1.0 } else { -1.0 };
                let w: Vec<f64> = self.estimate.iter().map(|v| (sign * v).exp()).collect();
                PopularityProfile::from_weights(&w).unwrap_or_else(|_| PopularityProfile::uniform(w.len()))
            }
        }
    }

    fn check(&self, model: OlModel, len: usize) -> Result<()> {
        if self.model != model {
            return Err(Error::InvalidParameter { name: "model", reason: format!("state belongs to {}", self.model.name()) });
        }
        if len != self.n_files() {
            return Err(Error::LengthMismatch { expected: self.n_files(), got: len });
        }
        Ok(())
    }

    // Charges the current estimate against `obs` and accumulates comparator
    // statistics, both at the weight of step t. Step 1 has no prediction yet.
    fn account(&mut self, obs: &[f64]) {
        if self.t == 1 {
            return;
        }
        let w = self.model.weight(self.t);
        let err: f64 = self.estimate.iter().zip(obs).map(|(a, b)| (a - b) * (a - b)).sum();
        self.learner_loss += 0.5 * w * err;
        self.weight_sum += w;
        for (acc, o) in self.weighted_obs.iter_mut().zip(obs) {
            *acc += w * o;
        }
        self.weighted_sq += w * obs.iter().map(|o| o * o).sum::<f64>();
    }

    /// Weighted loss of the predictions so far.
    pub fn learner_loss(&self) -> f64 {
        self.learner_loss
    }

    /// Weighted loss of the best fixed point in hindsight: the weighted mean,
    /// which also lies in the unit ball for square-root profiles.
    pub fn comparator_loss(&self) -> f64 {
        if self.weight_sum <= 0.0 {
            return 0.0;
        }
        let mean_sq: f64 = self.weighted_obs.iter().map(|v| v * v).sum::<f64>() / self.weight_sum;
        (0.5 * (self.weighted_sq - mean_sq)).max(0.0)
    }

    /// Number of scored predictions.
    pub fn horizon(&self) -> usize {
        self.t.saturating_sub(2)
    }
}

/// Running mean with weight `1/t` on the newest profile.
pub fn ppm_ol_step(s: &mut OlState, p: &PopularityProfile) -> Result<PopularityProfile> {
    s.check(OlModel::Ppm, p.len())?;
    s.account(p.as_slice());
    let c = 1.0 / s.t as f64;
    for (e, v) in s.estimate.iter_mut().zip(p.as_slice()) {
        *e = c * v + (1.0 - c) * *e;
    }
    s.t += 1;
    Ok(s.readout())
}

/// `p̂̄ ← z_t p̄_t + κ_t p̂̄`, then `κ_{t+1} = ‖p̂̄‖` and normalize.
pub fn gpm_ol_step(s: &mut OlState, pbar: &SqrtProfile) -> Result<PopularityProfile> {
    s.check(OlModel::Gpm, pbar.as_slice().len())?;
    s.account(pbar.as_slice());
    let z = 1.0 - 1.0 / s.t as f64;
    let raw: Vec<f64> = s.estimate.iter().zip(pbar.as_slice()).map(|(e, v)| z * v + s.kappa * e).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegenerateState);
    }
    s.kappa = norm;
    s.estimate = raw.into_iter().map(|v| v / norm).collect();
    s.t += 1;
    Ok(s.readout())
}

/// Running mean of `log(n/n_max)` with counts clamped to at least one; the
/// readout is `⌊n_max · exp(estimate)⌋`.
pub fn rpm_ol_step(s: &mut OlState, counts: &[u64], n_max: u64) -> Result<Vec<f64>> {
    s.check(OlModel::Rpm, counts.len())?;
    let scale = n_max.max(2) as f64;
    let logs: Vec<f64> = counts.iter().map(|&n| (n.max(1) as f64 / scale).ln()).collect();
    s.account(&logs);
    let c = 1.0 / s.t as f64;
    for (e, v) in s.estimate.iter_mut().zip(&logs) {
        *e = c * v + (1.0 - c) * *e;
    }
    s.t += 1;
    Ok(rpm_counts(s, n_max))
}

/// Predicted counts for the current RPM estimate.
pub fn rpm_counts(s: &OlState, n_max: u64) -> Vec<f64> {
    let scale = n_max.max(2) as f64;
    s.estimate.iter().map(|v| (scale * v.exp() + 1e-9).floor()).collect()
}

/// Running mean of `−log p` with `p` floored before the log.
pub fn ipm_ol_step(s: &mut OlState, p: &PopularityProfile) -> Result<PopularityProfile> {
    s.check(OlModel::Ipm, p.len())?;
    let info = information(p, s.prob_floor);
    s.account(&info);
    let c = 1.0 / s.t as f64;
    for (e, v) in s.estimate.iter_mut().zip(&info) {
        *e = c * v + (1.0 - c) * *e;
    }
    s.t += 1;
    Ok(s.readout())
}

/// `−log p` after flooring at `floor` and renormalizing.
pub fn information(p: &PopularityProfile, floor: f64) -> Vec<f64> {
    let floored: Vec<f64> = p.as_slice().iter().map(|v| v.max(floor)).collect();
    let sum: f64 = floored.iter().sum();
    floored.iter().map(|v| -(v / sum).ln()).collect()
}

/// One slot of observed data, in whatever form a learner needs.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub profile: &'a PopularityProfile,
    pub counts: Option<&'a [u64]>,
    pub n_max: u64,
}

/// Advances any learner by one observation and returns its next profile.
pub fn ol_step(s: &mut OlState, obs: Observation<'_>) -> Result<PopularityProfile> {
    match s.model {
        OlModel::Ppm => ppm_ol_step(s, obs.profile),
        OlModel::Gpm => gpm_ol_step(s, &obs.profile.sqrt()),
        OlModel::Ipm => ipm_ol_step(s, obs.profile),
        OlModel::Rpm => {
            let counts = obs.counts.ok_or_else(|| Error::InvalidParameter {
                name: "counts",
                reason: "count learner needs request counts".into(),
            })?;
            let predicted = rpm_ol_step(s, counts, obs.n_max)?;
            Ok(PopularityProfile::from_weights(&predicted).unwrap_or_else(|_| s.readout()))
        }
    }
}

/// Quantities entering the regret bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n_files: usize,
    pub n_max: u64,
    pub zipf_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretReport {
    pub empirical: f64,
    pub bound: f64,
    pub horizon: usize,
}

impl RegretReport {
    pub fn within_bound(&self) -> bool {
        self.empirical <= self.bound
    }
}

/// Analytic regret bound after `horizon` steps.
pub fn regret_bound(model: OlModel, horizon: usize, params: &BoundParams) -> f64 {
    let t = horizon as f64;
    let harmonic_tail = 2.0 - 1.0 / t;
    let n = params.n_files as f64;
    match model {
        OlModel::Ppm => 2.0 * harmonic_tail,
        OlModel::Gpm => t - t.ln() - 1.0,
        OlModel::Rpm => 2.0 * n * (params.n_max.max(2) as f64).ln() * harmonic_tail,
        OlModel::Ipm => 2.0 * n * (params.zipf_exponent * n.ln()).powi(2) * harmonic_tail,
    }
}

/// Learner loss minus comparator loss, next to the analytic bound.
pub fn measure_regret(s: &OlState, params: &BoundParams) -> RegretReport {
    let horizon = s.horizon();
    RegretReport {
        empirical: s.learner_loss() - s.comparator_loss(),
        bound: regret_bound(s.model, horizon.max(1), params),
        horizon,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(v: &[f64]) -> PopularityProfile {
        PopularityProfile::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ppm_first_step_copies_observation() {
        let mut s = OlState::new(OlModel::Ppm, 3).unwrap();
        let p = profile(&[0.5, 0.3, 0.2]);
        assert_eq!(ppm_ol_step(&mut s, &p).unwrap(), p);
    }

    #[test]
    fn ppm_two_step_mean() {
        let mut s = OlState::new(OlModel::Ppm, 2).unwrap();
        ppm_ol_step(&mut s, &profile(&[1.0, 0.0])).unwrap();
        let next = ppm_ol_step(&mut s, &profile(&[0.0, 1.0])).unwrap();
        assert_eq!(next.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn gpm_initialization_survives_first_step() {
        let mut s = OlState::new(OlModel::Gpm, 4).unwrap();
        let p = profile(&[0.7, 0.1, 0.1, 0.1]);
        let out = gpm_ol_step(&mut s, &p.sqrt()).unwrap();
        for v in out.as_slice() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!((s.kappa() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gpm_hand_unrolled_two_steps() {
        // z₁ = 0: raw = (½, ½)·… stays uniform, κ₂ = 1
        // z₂ = ½: raw = ½(0,1)+1·(1/√2,1/√2)
        let mut s = OlState::new(OlModel::Gpm, 2).unwrap();
        gpm_ol_step(&mut s, &SqrtProfile::from_direction(&[1.0, 0.0]).unwrap()).unwrap();
        gpm_ol_step(&mut s, &SqrtProfile::from_direction(&[0.0, 1.0]).unwrap()).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let raw = [r, 0.5 + r];
        let norm = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        assert!((s.kappa() - norm).abs() < 1e-15);
        assert!((s.estimate()[0] - raw[0] / norm).abs() < 1e-15);
        assert!((s.estimate()[1] - raw[1] / norm).abs() < 1e-15);
    }

    #[test]
    fn rpm_geometric_mean_example() {
        let mut s = OlState::new(OlModel::Rpm, 1).unwrap();
        assert_eq!(rpm_ol_step(&mut s, &[4], 64).unwrap(), vec![4.0]);
        assert_eq!(rpm_ol_step(&mut s, &[16], 64).unwrap(), vec![8.0]);
    }

    #[test]
    fn ipm_two_profiles_give_geometric_mean() {
        let a = profile(&[0.6, 0.4]);
        let b = profile(&[0.2, 0.8]);
        let mut s = OlState::new(OlModel::Ipm, 2).unwrap();
        ipm_ol_step(&mut s, &a).unwrap();
        let got = ipm_ol_step(&mut s, &b).unwrap();
        let g = [(0.6f64 * 0.2).sqrt(), (0.4f64 * 0.8).sqrt()];
        let sum = g[0] + g[1];
        assert!((got.as_slice()[0] - g[0] / sum).abs() < 1e-12);
    }

    #[test]
    fn constant_streams_are_fixed_points() {
        let p = profile(&[0.5, 0.25, 0.25]);
        for model in OlModel::ALL {
            let mut s = OlState::new(model, 3).unwrap();
            let counts = [50u64, 25, 25];
            let mut out = PopularityProfile::uniform(3);
            for _ in 0..50 {
                out = ol_step(&mut s, Observation { profile: &p, counts: Some(&counts), n_max: 100 }).unwrap();
            }
            // the GPM initial direction keeps weight κ₁ = 1 against Σz ≈ t
            let tol = if model == OlModel::Gpm { 1e-2 } else { 1e-9 };
            for (a, b) in out.as_slice().iter().zip(p.as_slice()) {
                assert!((a - b).abs() < tol, "{model:?}");
            }
        }
    }

    #[test]
    fn constant_stream_regret_is_small() {
        let p = profile(&[0.5, 0.25, 0.25]);
        let mut s = OlState::new(OlModel::Ppm, 3).unwrap();
        for _ in 0..100 {
            ppm_ol_step(&mut s, &p).unwrap();
        }
        let params = BoundParams { n_files: 3, n_max: 100, zipf_exponent: 1.0 };
        let r = measure_regret(&s, &params);
        assert!(r.within_bound());
        assert!(r.empirical.abs() <= 1e-12);
    }

    #[test]
    fn wrong_model_is_rejected() {
        let mut s = OlState::new(OlModel::Gpm, 2).unwrap();
        assert!(ppm_ol_step(&mut s, &PopularityProfile::uniform(2)).is_err());
    }
}
