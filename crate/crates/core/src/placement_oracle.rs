//! Numerical placement oracle: projected gradient ascent of `Σ p_l g0(q_l)`
//! over `{q : 0 ≤ q ≤ 1, Σq ≤ L}`, independent of the closed form.

use crate::asp::{g0_slope, g0_unchecked, AspConstants, CachePolicy, Partition};
use crate::domain::{rng_from_seed, PopularityProfile};
use crate::error::{Error, Result};
use rand::Rng;

const STARTS: usize = 10;
const MAX_ITERS: usize = 200_000;
const ORACLE_SEED: u64 = 0x5EE_D0F0_AC1E;

/// Euclidean projection onto the box `[0,1]^N` intersected with `Σq ≤ budget`.
pub fn project_box_budget(y: &[f64], budget: f64) -> Vec<f64> {
    let clamp = |shift: f64| -> Vec<f64> { y.iter().map(|v| (v - shift).clamp(0.0, 1.0)).collect() };
    let direct = clamp(0.0);
    if direct.iter().sum::<f64>() <= budget {
        return direct;
    }
    // Σ clamp(y - μ) is nonincreasing in μ; bisect for equality with the budget.
    let mut lo = 0.0;
    let mut hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clamp(mid).iter().sum::<f64>() > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi.abs().max(1.0) {
            break;
        }
    }
    clamp(hi)
}

fn objective(p: &[f64], q: &[f64], k: &AspConstants) -> f64 {
    p.iter().zip(q).map(|(pl, ql)| pl * g0_unchecked(*ql, k)).sum()
}

fn gradient(p: &[f64], q: &[f64], k: &AspConstants) -> Vec<f64> {
    p.iter().zip(q).map(|(pl, ql)| pl * g0_slope(*ql, k)).collect()
}

// Spectral (Barzilai–Borwein) projected gradient ascent with a nonmonotone
// Armijo safeguard.
fn ascend(p: &[f64], start: Vec<f64>, budget: f64, k: &AspConstants, tol: f64) -> Result<(Vec<f64>, f64)> {
    let mut q = project_box_budget(&start, budget);
    let mut f = objective(p, &q, k);
    let mut grad = gradient(p, &q, k);
    let lipschitz = 2.0 * k.c * k.curvature() / (k.b * k.b);
    let mut step = 1.0 / lipschitz;
    let mut history = [f; 10];
    let mut quiet = 0;
    for iter in 0..MAX_ITERS {
        let trial_point: Vec<f64> = q.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        let target = project_box_budget(&trial_point, budget);
        let dir: Vec<f64> = target.iter().zip(&q).map(|(a, b)| a - b).collect();
        let slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        let reference = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let (mut next, mut f_next);
        loop {
            next = q.iter().zip(&dir).map(|(a, d)| (a + t * d).clamp(0.0, 1.0)).collect::<Vec<_>>();
            f_next = objective(p, &next, k);
            if f_next >= reference + 1e-4 * t * slope || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        let grad_next = gradient(p, &next, k);
        let s: Vec<f64> = next.iter().zip(&q).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = grad_next.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        // ascent on a concave objective: sy ≤ 0
        step = if sy < 0.0 { (ss / -sy).clamp(1e-12, 1e12) } else { 1.0 / lipschitz };
        let change = (f_next - f).abs();
        let moved = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        q = next;
        f = f_next;
        grad = grad_next;
        let slot = iter % history.len();
        history[slot] = f;
        if change < tol && moved < 1e-9 {
            quiet += 1;
            if quiet >= 5 {
                return Ok((q, f));
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Stalled(MAX_ITERS))
}

fn classify(q: &[f64], budget: usize) -> Partition {
    let mut full = vec![];
    let mut partial = vec![];
    let mut zero = vec![];
    for (i, &v) in q.iter().enumerate() {
        if v >= 1.0 - 1e-9 {
            full.push(i);
        } else if v <= 1e-9 {
            zero.push(i);
        } else {
            partial.push(i);
        }
    }
    Partition { full, partial, zero, budget }
}

/// Maximizes the ASP numerically from ten random starts and returns the best
/// point found. Intended for desk-scale `N ≤ 20`.
pub fn oracle_placement(p: &PopularityProfile, budget: usize, k: &AspConstants, tol: f64) -> Result<CachePolicy> {
    let n = p.len();
    if budget < 1 || budget > n {
        return Err(Error::InvalidParameter { name: "cache_size", reason: format!("must lie in 1..={n}, got {budget}") });
    }
    let mut rng = rng_from_seed(ORACLE_SEED);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..STARTS {
        let start: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let (q, f) = ascend(p.as_slice(), start, budget as f64, k, tol)?;
        if best.as_ref().is_none_or(|(_, fb)| f > *fb) {
            best = Some((q, f));
        }
    }
    let (mut q, _) = best.expect("at least one start");
    for v in q.iter_mut() {
        if *v >= 1.0 - 1e-9 {
            *v = 1.0;
        } else if *v <= 1e-9 {
            *v = 0.0;
        }
    }
    let partition = classify(&q, budget);
    Ok(CachePolicy { q, partition, budget })
}
