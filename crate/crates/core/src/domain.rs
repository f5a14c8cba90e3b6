//! Shared value types: popularity profiles, request counts, network
//! parameters, the Zipf popularity law and the per-slot metric record.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tolerance on `Σp = 1` accepted by every profile constructor.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Generator used by every stochastic routine.
pub type SimRng = ChaCha8Rng;

/// Builds the experiment generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives the seed of replica `index` from a base seed (SplitMix64 finalizer
/// applied to `base + (index + 1) * golden_gamma`).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A probability vector over `N` contents for one time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityProfile {
    values: Vec<f64>,
}

impl PopularityProfile {
    /// Accepts a vector that is already on the simplex up to [`SIMPLEX_TOL`],
    /// renormalizing away the residual drift.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProfile("profile must have at least one entry".into()));
        }
        let mut values = values;
        for v in values.iter_mut() {
            if !v.is_finite() || *v < -SIMPLEX_TOL {
                return Err(Error::InvalidProfile(format!("entry {v} is not a probability")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidProfile(format!("entries sum to {sum}, not 1")));
        }
        values.iter_mut().for_each(|v| *v /= sum);
        Ok(Self { values })
    }

    /// Normalizes arbitrary nonnegative weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidProfile("profile must have at least one entry".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidProfile("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::EmptySlot);
        }
        Ok(Self { values: weights.iter().map(|w| w / sum).collect() })
    }

    /// Clamps every entry to `[0, 1]` and renormalizes; falls back to the
    /// uniform profile when nothing positive survives.
    pub fn clamp_normalize(raw: &[f64]) -> Self {
        let clamped: Vec<f64> = raw
            .iter()
            .map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        Self::from_weights(&clamped).unwrap_or_else(|_| Self::uniform(raw.len().max(1)))
    }

    pub fn uniform(n: usize) -> Self {
        Self { values: vec![1.0 / n as f64; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Entrywise square root, a unit vector in the nonnegative orthant.
    pub fn sqrt(&self) -> SqrtProfile {
        SqrtProfile { values: self.values.iter().map(|v| v.sqrt()).collect() }
    }

    /// Reorders entries: output entry `i` is input entry `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { values: perm.iter().map(|&i| self.values[i]).collect() }
    }
}

/// Entrywise square root of a popularity profile.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtProfile {
    values: Vec<f64>,
}

impl SqrtProfile {
    /// Wraps a nonnegative vector, scaling it to unit Euclidean norm.
    pub fn from_direction(raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidProfile("square-root profile must be nonnegative".into()));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(Error::DegenerateState);
        }
        Ok(Self { values: raw.iter().map(|v| v / norm).collect() })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entrywise square, renormalized onto the simplex.
    pub fn square(&self) -> PopularityProfile {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        PopularityProfile::from_weights(&sq).unwrap_or_else(|_| PopularityProfile::uniform(sq.len()))
    }
}

/// Per-slot request counts, stored file-major (`counts[file][slot]`).
#[derive(Debug, Clone, PartialEq)]
pub struct RequestMatrix {
    counts: Vec<Vec<u64>>,
    slot_duration: f64,
}

impl RequestMatrix {
    pub fn new(counts: Vec<Vec<u64>>, slot_duration: f64) -> Result<Self> {
        let slots = counts.first().map(Vec::len).unwrap_or(0);
        if let Some(row) = counts.iter().find(|r| r.len() != slots) {
            return Err(Error::LengthMismatch { expected: slots, got: row.len() });
        }
        Ok(Self { counts, slot_duration })
    }

    pub fn zeros(n_files: usize, n_slots: usize, slot_duration: f64) -> Self {
        Self { counts: vec![vec![0; n_slots]; n_files], slot_duration }
    }

    pub fn n_files(&self) -> usize {
        self.counts.len()
    }

    pub fn n_slots(&self) -> usize {
        self.counts.first().map(Vec::len).unwrap_or(0)
    }

    pub fn slot_duration(&self) -> f64 {
        self.slot_duration
    }

    pub fn get(&self, file: usize, slot: usize) -> u64 {
        self.counts[file][slot]
    }

    pub fn column(&self, slot: usize) -> Vec<u64> {
        self.counts.iter().map(|r| r[slot]).collect()
    }

    pub fn row(&self, file: usize) -> &[u64] {
        &self.counts[file]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Slots whose column is all zero and therefore cannot be normalized.
    pub fn empty_slots(&self) -> Vec<usize> {
        (0..self.n_slots()).filter(|&t| self.counts.iter().all(|r| r[t] == 0)).collect()
    }

    /// One profile per slot; empty slots yield `Err(EmptySlot)`.
    pub fn profiles(&self) -> Vec<Result<PopularityProfile>> {
        (0..self.n_slots()).map(|t| normalize_column(&self.column(t))).collect()
    }
}

/// Normalizes one column of request counts into a profile.
pub fn normalize_column(counts: &[u64]) -> Result<PopularityProfile> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptySlot);
    }
    let total = total as f64;
    Ok(PopularityProfile { values: counts.iter().map(|&c| c as f64 / total).collect() })
}

/// Zipf popularity law over `n_files` contents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfSpec {
    pub n_files: usize,
    pub exponent: f64,
}

impl ZipfSpec {
    pub fn new(n_files: usize, exponent: f64) -> Result<Self> {
        if n_files == 0 {
            return Err(Error::InvalidParameter { name: "n_files", reason: "must be at least 1".into() });
        }
        if !exponent.is_finite() || exponent < 0.0 {
            return Err(Error::InvalidParameter {
                name: "exponent",
                reason: format!("must be finite and nonnegative, got {exponent}"),
            });
        }
        Ok(Self { n_files, exponent })
    }
}

/// `p_j = j^{-s} / Σ_i i^{-s}` for `j = 1..N`.
pub fn zipf_pmf(spec: ZipfSpec) -> PopularityProfile {
    let weights: Vec<f64> = (1..=spec.n_files).map(|j| (j as f64).powf(-spec.exponent)).collect();
    let sum: f64 = weights.iter().sum();
    PopularityProfile { values: weights.into_iter().map(|w| w / sum).collect() }
}

/// Squared Euclidean distance between a profile and a prediction.
pub fn mse(p: &PopularityProfile, predicted: &[f64]) -> Result<f64> {
    if p.len() != predicted.len() {
        return Err(Error::LengthMismatch { expected: p.len(), got: predicted.len() });
    }
    Ok(p.as_slice().iter().zip(predicted).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Physical-layer parameters of the PPP cellular network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkParams {
    /// Base-station density per unit area.
    pub bs_density: f64,
    /// Path-loss exponent, must exceed 2.
    pub path_loss: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    /// Rate threshold in bits/s.
    pub rate_threshold: f64,
    /// Transmit power in watts.
    pub tx_power: f64,
    /// Noise power in watts.
    pub noise: f64,
    /// Cache size in files.
    pub cache_size: usize,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            bs_density: 200.0,
            path_loss: 3.5,
            bandwidth: 24_000.0,
            rate_threshold: 1.0,
            tx_power: 1.0,
            noise: 0.0,
            cache_size: 2,
        }
    }
}

impl NetworkParams {
    /// SINR threshold `s0 = 2^{R0/W} - 1`.
    pub fn sinr_threshold(&self) -> f64 {
        (std::f64::consts::LN_2 * self.rate_threshold / self.bandwidth).exp_m1()
    }

    pub fn validate(&self, n_files: usize) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.bs_density > 0.0) {
            return bad("bs_density", format!("must be positive, got {}", self.bs_density));
        }
        if !(self.path_loss > 2.0) {
            return Err(Error::DivergentIntegral(self.path_loss));
        }
        if !(self.bandwidth > 0.0) {
            return bad("bandwidth", format!("must be positive, got {}", self.bandwidth));
        }
        if !(self.rate_threshold > 0.0) {
            return bad("rate_threshold", format!("must be positive, got {}", self.rate_threshold));
        }
        if !(self.tx_power > 0.0) {
            return bad("tx_power", format!("must be positive, got {}", self.tx_power));
        }
        if !(self.noise >= 0.0) {
            return bad("noise", format!("must be nonnegative, got {}", self.noise));
        }
        if self.cache_size < 1 || self.cache_size > n_files {
            return bad("cache_size", format!("must lie in 1..={n_files}, got {}", self.cache_size));
        }
        Ok(())
    }
}

/// Metrics of one model at one slot (possibly averaged over replications).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub model: String,
    pub slot: usize,
    /// `‖p − p̂‖²`
    pub mse: f64,
    /// `P_s(p, q*) − P_s(p̂, q̂)`, both terms under their own profile.
    pub asp_diff: f64,
    /// `P_s(p, q*) − P_s(p, q̂)`, both terms under the true profile.
    pub asp_diff_true_eval: f64,
}

impl MetricRecord {
    pub fn is_finite(&self) -> bool {
        self.mse.is_finite() && self.asp_diff.is_finite() && self.asp_diff_true_eval.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_column_examples() {
        let p = normalize_column(&[1, 1, 2]).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.25, 0.5]);
        let p = normalize_column(&[5, 0, 0]).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(normalize_column(&[0, 0, 0]), Err(Error::EmptySlot));
    }

    #[test]
    fn zipf_examples() {
        let p = zipf_pmf(ZipfSpec::new(2, 0.0).unwrap());
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
        let p = zipf_pmf(ZipfSpec::new(3, 1.0).unwrap());
        for (a, b) in p.as_slice().iter().zip([6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        // direct summation oracle
        let sigma = 1.0 + 2f64.powf(-1.5) + 3f64.powf(-1.5);
        let p = zipf_pmf(ZipfSpec::new(3, 1.5).unwrap());
        let want = [1.0 / sigma, 2f64.powf(-1.5) / sigma, 3f64.powf(-1.5) / sigma];
        for (a, b) in p.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_examples() {
        let p = PopularityProfile::new(vec![0.2, 0.8]).unwrap();
        assert_eq!(mse(&p, &[0.2, 0.8]).unwrap(), 0.0);
        let p = PopularityProfile::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(mse(&p, &[0.0, 1.0]).unwrap(), 2.0);
        assert!(matches!(mse(&p, &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn profile_rejects_off_simplex() {
        assert!(PopularityProfile::new(vec![0.5, 0.6]).is_err());
        assert!(PopularityProfile::new(vec![-0.1, 1.1]).is_err());
        let p = PopularityProfile::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sinr_threshold_matches_definition() {
        let net = NetworkParams::default();
        let direct = 2f64.powf(1.0 / 24_000.0) - 1.0;
        assert!((net.sinr_threshold() - direct).abs() < 1e-15);
    }

    #[test]
    fn seed_split_is_stable_and_distinct() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }

    proptest! {
        #[test]
        fn normalized_columns_are_profiles(counts in proptest::collection::vec(0u64..1000, 1..12)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let p = normalize_column(&counts).unwrap();
            prop_assert!(p.as_slice().iter().all(|&v| v >= 0.0));
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn sqrt_square_round_trip(w in proptest::collection::vec(0.0f64..10.0, 1..12)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-6);
            let p = PopularityProfile::from_weights(&w).unwrap();
            let s = p.sqrt();
            prop_assert!((s.norm() - 1.0).abs() < 1e-9);
            let back = s.square();
            for (a, b) in back.as_slice().iter().zip(p.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn zipf_is_monotone(n in 1usize..40, s in 0.0f64..3.0) {
            let p = zipf_pmf(ZipfSpec::new(n, s).unwrap());
            prop_assert!(p.as_slice().windows(2).all(|w| w[0] >= w[1]));
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn mse_matches_elementwise_sum(a in proptest::collection::vec(0.0f64..1.0, 5), b in proptest::collection::vec(0.0f64..1.0, 5)) {
            prop_assume!(a.iter().sum::<f64>() > 1e-3);
            let p = PopularityProfile::from_weights(&a).unwrap();
            let mut oracle = 0.0;
            for i in 0..5 {
                let d = p.as_slice()[i] - b[i];
                oracle += d * d;
            }
            prop_assert!((mse(&p, &b).unwrap() - oracle).abs() < 1e-12);
        }
    }
}
