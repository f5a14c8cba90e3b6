//! Average success probability (ASP) of a typical user in a PPP network and
//! the ASP-maximizing cache placement.
//!
//! The success probability of content `l` cached with probability `q` is
//! `g0(q) = qC / (qA + (1-q)B + qC)` in the interference-limited regime, where
//! `A`, `B` are interference integrals and `C = πλ`. The optimum placement
//! splits contents into a fully cached set `R`, a fractional set `P` and an
//! uncached set `Z`, with `q_i = (B/(A+C-B)) (η p̄_i / Σ_P p̄ - 1)` on `P`.

use crate::domain::{NetworkParams, PopularityProfile};
use crate::error::{Error, Result};
use crate::quad;
use std::f64::consts::PI;

/// Default relative tolerance of the interference integrals.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Scalars of the ASP expression together with the network they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AspConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub params: NetworkParams,
}

impl AspConstants {
    /// `A + C - B`, the slope of the denominator of `g0` in `q`.
    pub fn curvature(&self) -> f64 {
        self.a + self.c - self.b
    }

    /// Ceiling `C / (A + C)` reached by `g0(1)`.
    pub fn max_success(&self) -> f64 {
        self.c / (self.a + self.c)
    }
}

// ∫ dx / (1 + x^k) over [lo, hi], the smooth form every interference integral
// reduces to after a power substitution.
fn power_kernel(k: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    quad::integrate(|x: f64| 1.0 / (1.0 + x.powf(k)), lo, hi, tol, 0.0)
}

/// `∫_lower^∞ u^{β-1} / (1+u) du` for `0 < β < 1`.
///
/// The range is split at `u = 1`; `u = x^{1/β}` regularizes `[0, 1]` and
/// `u = 1/t, t = x^{1/(1-β)}` regularizes `[1, ∞)`.
fn interference_integral(beta: f64, lower: f64, tol: f64) -> Result<f64> {
    let upper_part = |t_max: f64| -> Result<f64> {
        let e = 1.0 - beta;
        Ok(power_kernel(1.0 / e, 0.0, t_max.powf(e), tol)? / e)
    };
    if lower >= 1.0 {
        upper_part(1.0 / lower)
    } else {
        let low = power_kernel(1.0 / beta, lower.powf(beta), 1.0, tol)? / beta;
        Ok(low + upper_part(1.0)?)
    }
}

/// Closed form of `B` from `∫₀^∞ u^{β-1}/(1+u) du = π / sin(πβ)`.
pub fn b_closed_form(params: &NetworkParams) -> f64 {
    let alpha = params.path_loss;
    let beta = 2.0 / alpha;
    let s0 = params.sinr_threshold();
    2.0 * PI * params.bs_density * s0.powf(beta) / alpha * PI / (PI * beta).sin()
}

/// Evaluates `A`, `B`, `C` by adaptive quadrature.
pub fn compute_constants(params: &NetworkParams, quad_tol: f64) -> Result<AspConstants> {
    let alpha = params.path_loss;
    if !(alpha > 2.0) {
        return Err(Error::DivergentIntegral(alpha));
    }
    if !(params.bs_density > 0.0) {
        return Err(Error::InvalidParameter {
            name: "bs_density",
            reason: format!("must be positive, got {}", params.bs_density),
        });
    }
    let s0 = params.sinr_threshold();
    if !(s0 > 0.0) {
        return Err(Error::InvalidParameter { name: "rate_threshold", reason: "SINR threshold must be positive".into() });
    }
    let beta = 2.0 / alpha;
    let prefactor = 2.0 * PI * params.bs_density * s0.powf(beta) / alpha;
    let a = prefactor * interference_integral(beta, 1.0 / s0, quad_tol)?;
    let b = prefactor * interference_integral(beta, 0.0, quad_tol)?;
    let c = PI * params.bs_density;
    let closed = b_closed_form(params);
    if ((b - closed) / closed).abs() > 1e3 * quad_tol.max(1e-14) {
        return Err(Error::QuadratureFailure(format!("B = {b} disagrees with closed form {closed}")));
    }
    Ok(AspConstants { a, b, c, params: *params })
}

fn check_probability(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter { name: "q", reason: format!("caching probability {q} outside [0, 1]") });
    }
    Ok(())
}

/// Interference-limited success probability of a content cached with
/// probability `q`.
pub fn g0(q: f64, k: &AspConstants) -> Result<f64> {
    check_probability(q)?;
    Ok(g0_unchecked(q, k))
}

#[inline]
pub(crate) fn g0_unchecked(q: f64, k: &AspConstants) -> f64 {
    q * k.c / (q * k.a + (1.0 - q) * k.b + q * k.c)
}

/// Derivative of `g0`: `BC / (B + q(A+C-B))²`.
#[inline]
pub(crate) fn g0_slope(q: f64, k: &AspConstants) -> f64 {
    let d = k.b + q * k.curvature();
    k.b * k.c / (d * d)
}

/// Success probability with thermal noise, integrating over `x = r²`.
pub fn g_noisy(q: f64, k: &AspConstants, quad_tol: f64) -> Result<f64> {
    check_probability(q)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    let params = &k.params;
    if params.noise < 0.0 {
        return Err(Error::InvalidParameter { name: "noise", reason: "must be nonnegative".into() });
    }
    let denom = q * k.a + (1.0 - q) * k.b + q * k.c;
    let noise_coeff = params.sinr_threshold() * params.noise / params.tx_power;
    if noise_coeff == 0.0 {
        return Ok(q * k.c / denom);
    }
    // With y = denom·x the integral is (1/denom)∫₀^∞ exp(-y - κ y^{α/2}) dy;
    // y = t/(1-t) maps it onto [0, 1).
    let half_alpha = params.path_loss / 2.0;
    let kappa = noise_coeff / denom.powf(half_alpha);
    let integrand = |t: f64| {
        let one_minus = 1.0 - t;
        let y = t / one_minus;
        let expo = y + kappa * y.powf(half_alpha);
        if expo > 745.0 {
            0.0
        } else {
            (-expo).exp() / (one_minus * one_minus)
        }
    };
    let integral = quad::integrate(integrand, 0.0, 1.0, quad_tol, 1e-300)?;
    Ok(q * k.c / denom * integral)
}

fn check_lengths(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// `P_s(p, q) = Σ p_l g0(q_l)`.
pub fn asp(p: &PopularityProfile, q: &[f64], k: &AspConstants) -> Result<f64> {
    check_lengths(p.len(), q.len())?;
    let mut total = 0.0;
    for (&pl, &ql) in p.as_slice().iter().zip(q) {
        total += pl * g0(ql, k)?;
    }
    Ok(total)
}

/// Index sets of the optimal placement, in original content indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Cached with probability one.
    pub full: Vec<usize>,
    /// Cached fractionally.
    pub partial: Vec<usize>,
    /// Never cached.
    pub zero: Vec<usize>,
    /// Cache budget `L` the partition was computed for.
    pub budget: usize,
}

impl Partition {
    /// `η = |P| + (L − |R|)(A − B + C)/B`.
    pub fn eta(&self, k: &AspConstants) -> f64 {
        self.partial.len() as f64 + (self.budget as f64 - self.full.len() as f64) * k.curvature() / k.b
    }
}

/// Caching probabilities with their index partition.
#[derive(Debug, Clone, PartialEq)]
pub struct CachePolicy {
    pub q: Vec<f64>,
    pub partition: Partition,
    pub budget: usize,
}

// Sorted view of p̄ with prefix sums, used by the partition search.
struct SortedRoots {
    order: Vec<usize>,
    roots: Vec<f64>,
    prefix: Vec<f64>,
}

impl SortedRoots {
    fn new(p: &PopularityProfile) -> Self {
        let mut order: Vec<usize> = (0..p.len()).collect();
        // stable sort keeps lower index first among ties
        order.sort_by(|&i, &j| p.as_slice()[j].total_cmp(&p.as_slice()[i]));
        let roots: Vec<f64> = order.iter().map(|&i| p.as_slice()[i].sqrt()).collect();
        let mut prefix = Vec::with_capacity(roots.len() + 1);
        prefix.push(0.0);
        for r in &roots {
            prefix.push(prefix.last().unwrap() + r);
        }
        Self { order, roots, prefix }
    }

    fn n(&self) -> usize {
        self.roots.len()
    }

    /// Threshold `Σ_P p̄ / η` for `R` = first `r`, `Z` = last `z` sorted entries.
    fn threshold(&self, r: usize, z: usize, budget: usize, k: &AspConstants) -> Option<f64> {
        let n = self.n();
        let size = n.checked_sub(r + z)?;
        if size == 0 || r > budget {
            return None;
        }
        let eta = size as f64 + (budget - r) as f64 * k.curvature() / k.b;
        Some((self.prefix[n - z] - self.prefix[r]) / eta)
    }

    /// KKT consistency of a candidate `(r, z)` split.
    fn consistent(&self, r: usize, z: usize, budget: usize, k: &AspConstants) -> bool {
        let n = self.n();
        if r + z > n || r > budget {
            return false;
        }
        let ratio = k.b / (k.a + k.c);
        if r + z == n {
            // P empty: the budget is exhausted by R and some multiplier must
            // separate the last R entry from the first Z entry.
            if r != budget {
                return false;
            }
            return match (r, z) {
                (0, _) | (_, 0) => true,
                _ => ratio * self.roots[r - 1] >= self.roots[r],
            };
        }
        let theta = match self.threshold(r, z, budget, k) {
            Some(t) => t,
            None => return false,
        };
        let r_ok = r == 0 || ratio * self.roots[r - 1] >= theta;
        let z_ok = z == 0 || self.roots[n - z] <= theta;
        let hi = self.roots[r];
        let lo = self.roots[n - z - 1];
        let p_ok = lo > theta && ratio * hi < theta;
        r_ok && z_ok && p_ok
    }

    /// Two-phase scan: grow `R` from the top while the next entry meets the
    /// full-caching condition, then grow `Z` from the bottom while the next
    /// entry meets the zero condition, repeating until the split is stable.
    fn greedy(&self, budget: usize, k: &AspConstants) -> (usize, usize) {
        let n = self.n();
        let ratio = k.b / (k.a + k.c);
        let (mut r, mut z) = (0usize, 0usize);
        for _ in 0..(2 * n + 2) {
            let (r0, z0) = (r, z);
            // R may have to shrink after Z grew (the threshold only rises).
            while r > 0 {
                match self.threshold(r, z, budget, k) {
                    Some(theta) if ratio * self.roots[r - 1] < theta => r -= 1,
                    _ => break,
                }
            }
            while r < budget && r + z < n {
                match self.threshold(r, z, budget, k) {
                    Some(theta) if ratio * self.roots[r] >= theta => r += 1,
                    _ => break,
                }
            }
            if r == budget {
                z = n - r;
                break;
            }
            while r + z < n {
                match self.threshold(r, z, budget, k) {
                    Some(theta) if self.roots[n - z - 1] <= theta => z += 1,
                    _ => break,
                }
            }
            if (r, z) == (r0, z0) {
                break;
            }
        }
        (r, z)
    }

    fn search(&self, budget: usize, k: &AspConstants) -> (usize, usize) {
        let (r, z) = self.greedy(budget, k);
        if self.consistent(r, z, budget, k) {
            return (r, z);
        }
        let n = self.n();
        for r in 0..=budget.min(n) {
            for z in 0..=(n - r) {
                if self.consistent(r, z, budget, k) {
                    return (r, z);
                }
            }
        }
        log::warn!("no KKT-consistent split found; keeping greedy result ({r}, {z})");
        (r, z)
    }
}

fn check_budget(n: usize, budget: usize) -> Result<()> {
    if budget < 1 || budget > n {
        return Err(Error::InvalidParameter { name: "cache_size", reason: format!("must lie in 1..={n}, got {budget}") });
    }
    Ok(())
}

/// Index partition `(R, P, Z)` of the ASP-optimal placement.
pub fn partition_indices(p: &PopularityProfile, budget: usize, k: &AspConstants) -> Result<Partition> {
    let n = p.len();
    check_budget(n, budget)?;
    if budget == n {
        return Ok(Partition { full: (0..n).collect(), partial: vec![], zero: vec![], budget });
    }
    let sorted = SortedRoots::new(p);
    let (r, z) = sorted.search(budget, k);
    let mut full: Vec<usize> = sorted.order[..r].to_vec();
    let mut partial: Vec<usize> = sorted.order[r..n - z].to_vec();
    let mut zero: Vec<usize> = sorted.order[n - z..].to_vec();
    full.sort_unstable();
    partial.sort_unstable();
    zero.sort_unstable();
    Ok(Partition { full, partial, zero, budget })
}

/// ASP-maximizing caching probabilities under `Σq ≤ L`, `0 ≤ q ≤ 1`.
pub fn optimal_placement(p: &PopularityProfile, budget: usize, k: &AspConstants) -> Result<CachePolicy> {
    if k.a + k.c <= k.b {
        return Err(Error::DegenerateGeometry);
    }
    let partition = partition_indices(p, budget, k)?;
    let mut q = vec![0.0; p.len()];
    for &i in &partition.full {
        q[i] = 1.0;
    }
    if !partition.partial.is_empty() {
        let eta = partition.eta(k);
        let root_sum: f64 = partition.partial.iter().map(|&i| p.as_slice()[i].sqrt()).sum();
        let scale = k.b / k.curvature();
        for &i in &partition.partial {
            let v = scale * (eta * p.as_slice()[i].sqrt() / root_sum - 1.0);
            q[i] = v.clamp(0.0, 1.0);
        }
    }
    Ok(CachePolicy { q, partition, budget })
}

/// Closed-form optimal ASP `(C/(A+C−B)) p̄ᵀ Z̄ p̄`.
pub fn optimal_asp_value(p: &PopularityProfile, policy: &CachePolicy, k: &AspConstants) -> Result<f64> {
    check_lengths(p.len(), policy.q.len())?;
    let part = &policy.partition;
    let consistent = part.full.iter().all(|&i| policy.q[i] == 1.0)
        && part.zero.iter().all(|&i| policy.q[i] == 0.0)
        && part.partial.iter().all(|&i| policy.q[i] > 0.0 && policy.q[i] < 1.0)
        && part.full.len() + part.partial.len() + part.zero.len() == p.len();
    if !consistent {
        return Err(Error::InconsistentPartition);
    }
    let kk = k.curvature();
    let ps = p.as_slice();
    let full_mass: f64 = part.full.iter().map(|&i| ps[i]).sum();
    let partial_mass: f64 = part.partial.iter().map(|&i| ps[i]).sum();
    let quad_form = if part.partial.is_empty() {
        kk / (k.a + k.c) * full_mass
    } else {
        let root_sum: f64 = part.partial.iter().map(|&i| ps[i].sqrt()).sum();
        kk / (k.a + k.c) * full_mass + partial_mass - root_sum * root_sum / part.eta(k)
    };
    Ok(k.c / kk * quad_form)
}

/// Analytical bound on the ASP loss of a prediction that reproduces the true
/// partition.
pub fn asp_difference_bound(p: &PopularityProfile, partition: &Partition, k: &AspConstants) -> Result<f64> {
    let ps = p.as_slice();
    if partition.partial.is_empty() {
        return Err(Error::DegenerateProfile("fractional set is empty".into()));
    }
    let roots: Vec<f64> = partition.partial.iter().map(|&i| ps[i].sqrt()).collect();
    let min = roots.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::DegenerateProfile("zero popularity inside the fractional set".into()));
    }
    let sum: f64 = roots.iter().sum();
    let full_mass: f64 = partition.full.iter().map(|&i| ps[i]).sum();
    let first = k.c / k.curvature() / partition.eta(k) * (sum / min - roots.len() as f64);
    Ok(first - k.b / (k.a + k.c) * full_mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{zipf_pmf, ZipfSpec};

    fn reference_constants() -> AspConstants {
        compute_constants(&NetworkParams::default(), DEFAULT_QUAD_TOL).unwrap()
    }

    #[test]
    fn b_for_alpha_four() {
        let params = NetworkParams {
            path_loss: 4.0,
            // s0 = 1 exactly
            rate_threshold: 24_000.0,
            ..NetworkParams::default()
        };
        assert!((params.sinr_threshold() - 1.0).abs() < 1e-15);
        let k = compute_constants(&params, 1e-12).unwrap();
        let want = 100.0 * PI * PI;
        assert!(((k.b - want) / want).abs() < 1e-10, "{} vs {}", k.b, want);
        // with s0 = 1 the A integral runs over [1, ∞): half of B by symmetry u -> 1/u at α = 4
        assert!(((k.a - want / 2.0) / want).abs() < 1e-10);
        assert_eq!(k.c, PI * 200.0);
    }

    #[test]
    fn constants_are_ordered() {
        let k = reference_constants();
        assert!(0.0 < k.a && k.a < k.b);
        assert_eq!(k.c, PI * 200.0);
        assert!(k.a + k.c > k.b);
    }

    #[test]
    fn divergent_integral_rejected() {
        let params = NetworkParams { path_loss: 2.0, ..NetworkParams::default() };
        assert_eq!(compute_constants(&params, 1e-10), Err(Error::DivergentIntegral(2.0)));
    }

    #[test]
    fn g0_examples() {
        let k = reference_constants();
        assert_eq!(g0(0.0, &k).unwrap(), 0.0);
        assert!((g0(1.0, &k).unwrap() - k.c / (k.a + k.c)).abs() < 1e-15);
        assert!((g0(0.5, &k).unwrap() - k.c / (k.a + k.b + k.c)).abs() < 1e-15);
        assert!(g0(1.5, &k).is_err());
        assert!(g0(-0.1, &k).is_err());
    }

    #[test]
    fn g0_increasing_and_concave_on_grid() {
        let k = reference_constants();
        let vals: Vec<f64> = (0..=1000).map(|i| g0(i as f64 / 1000.0, &k).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in vals.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] < 0.0);
        }
    }

    #[test]
    fn noisy_success_reduces_to_g0_without_noise() {
        let k = reference_constants();
        for i in 0..=10 {
            let q = i as f64 / 10.0;
            let a = g_noisy(q, &k, 1e-10).unwrap();
            let b = g0(q, &k).unwrap();
            assert!((a - b).abs() <= 1e-10 * b.max(1e-300), "q={q}: {a} vs {b}");
        }
    }

    #[test]
    fn noise_lowers_success() {
        let params = NetworkParams { noise: 1e-3, ..NetworkParams::default() };
        let k = compute_constants(&params, 1e-10).unwrap();
        let noisy = g_noisy(0.6, &k, 1e-10).unwrap();
        let clean = g0(0.6, &k).unwrap();
        assert!(noisy < clean);
        assert!(noisy > 0.0);
        assert_eq!(g_noisy(0.0, &k, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn asp_extremes() {
        let k = reference_constants();
        let p = zipf_pmf(ZipfSpec::new(4, 0.8).unwrap());
        assert_eq!(asp(&p, &[0.0; 4], &k).unwrap(), 0.0);
        assert!((asp(&p, &[1.0; 4], &k).unwrap() - k.max_success()).abs() < 1e-15);
        assert!(asp(&p, &[1.0; 3], &k).is_err());
    }

    #[test]
    fn uniform_profile_spreads_budget() {
        let k = reference_constants();
        for n in 2..=10 {
            for l in 1..n {
                let p = PopularityProfile::uniform(n);
                let pol = optimal_placement(&p, l, &k).unwrap();
                assert!(pol.partition.full.is_empty() && pol.partition.zero.is_empty());
                for q in &pol.q {
                    assert!((q - l as f64 / n as f64).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn full_budget_caches_everything() {
        let k = reference_constants();
        let p = zipf_pmf(ZipfSpec::new(5, 1.2).unwrap());
        let pol = optimal_placement(&p, 5, &k).unwrap();
        assert_eq!(pol.q, vec![1.0; 5]);
        assert_eq!(pol.partition.full, vec![0, 1, 2, 3, 4]);
        let v = optimal_asp_value(&PopularityProfile::uniform(5), &optimal_placement(&PopularityProfile::uniform(5), 5, &k).unwrap(), &k).unwrap();
        assert!((v - k.max_success()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_value_matches_direct_sum() {
        let k = reference_constants();
        for s in [0.0, 0.5, 1.0, 1.5, 2.5, 4.0] {
            for n in 2..8 {
                for l in 1..=n {
                    let p = zipf_pmf(ZipfSpec::new(n, s).unwrap());
                    let pol = optimal_placement(&p, l, &k).unwrap();
                    let direct = asp(&p, &pol.q, &k).unwrap();
                    let closed = optimal_asp_value(&p, &pol, &k).unwrap();
                    assert!((direct - closed).abs() < 1e-9, "s={s} n={n} l={l}: {direct} vs {closed}");
                    assert!((pol.q.iter().sum::<f64>() - l as f64).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn steep_profile_fills_top_entries() {
        let k = reference_constants();
        // p̄_2 ≤ (B/(A+C)) p̄_1 forces R = {0}, P = ∅ with L = 1
        let p = PopularityProfile::from_weights(&[1.0, 1e-7, 1e-8]).unwrap();
        let pol = optimal_placement(&p, 1, &k).unwrap();
        assert_eq!(pol.partition.full, vec![0]);
        assert_eq!(pol.q, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn inconsistent_partition_rejected() {
        let k = reference_constants();
        let p = PopularityProfile::uniform(3);
        let mut pol = optimal_placement(&p, 2, &k).unwrap();
        pol.q[0] = 1.0;
        assert_eq!(optimal_asp_value(&p, &pol, &k), Err(Error::InconsistentPartition));
    }

    #[test]
    fn bound_examples() {
        let k = reference_constants();
        let part = Partition { full: vec![], partial: vec![0, 1, 2], zero: vec![], budget: 2 };
        let v = asp_difference_bound(&PopularityProfile::uniform(3), &part, &k).unwrap();
        assert!(v.abs() < 1e-12);
        let p = PopularityProfile::new(vec![0.4, 0.2, 0.2, 0.2]).unwrap();
        let part = Partition { full: vec![0], partial: vec![1, 2, 3], zero: vec![], budget: 2 };
        let v = asp_difference_bound(&p, &part, &k).unwrap();
        assert!((v + k.b / (k.a + k.c) * 0.4).abs() < 1e-12);
        let p = PopularityProfile::new(vec![0.5, 0.5, 0.0]).unwrap();
        let part = Partition { full: vec![], partial: vec![0, 1, 2], zero: vec![], budget: 2 };
        assert!(matches!(asp_difference_bound(&p, &part, &k), Err(Error::DegenerateProfile(_))));
    }
}
