use edgecache::domain::rng_from_seed;
use edgecache::nnls::{solve_ball_nnls, solve_ls, solve_simplex_nnls, Constraint, LsProblem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn gaussian_problem(rng: &mut impl Rng, m: usize, n: usize, c: Constraint) -> LsProblem {
    let h = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let y = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    LsProblem::new(h, y, c).unwrap()
}

/// Minimum over every support set of the equality-constrained stationary
/// point, solved as a bordered linear system by LU.
fn enumerate_simplex(prob: &LsProblem) -> f64 {
    let n = prob.h.ncols();
    let g = prob.h.transpose() * &prob.h;
    let b = prob.h.transpose() * &prob.y;
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (a, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                kkt[(a, c)] = g[(i, j)];
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = b[i];
        }
        rhs[k] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if (0..k).any(|a| sol[a] < -1e-12) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (a, &i) in support.iter().enumerate() {
            x[i] = sol[a].max(0.0);
        }
        best = best.min(prob.objective(&x));
    }
    best
}

#[test]
fn simplex_matches_exhaustive_enumeration() {
    let mut rng = rng_from_seed(11);
    for _ in 0..300 {
        let prob = gaussian_problem(&mut rng, 6, 4, Constraint::Simplex);
        let sol = solve_simplex_nnls(&prob).unwrap();
        let oracle = enumerate_simplex(&prob);
        assert!((prob.objective(&sol.x) - oracle).abs() <= 1e-8);
        assert!(sol.x.iter().all(|&v| v >= 0.0));
        assert!((sol.x.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn simplex_kkt_residual() {
    let mut rng = rng_from_seed(12);
    for _ in 0..200 {
        let prob = gaussian_problem(&mut rng, 8, 5, Constraint::Simplex);
        let sol = solve_simplex_nnls(&prob).unwrap();
        let g = prob.h.transpose() * &prob.h;
        let b = prob.h.transpose() * &prob.y;
        let x = DVector::from_column_slice(&sol.x);
        let v = &b - &g * &x - DVector::from_element(5, sol.lambda);
        for i in 0..5 {
            if sol.x[i] > 0.0 {
                assert!(v[i].abs() <= 1e-6, "stationarity {}", v[i]);
            } else {
                assert!(v[i] <= 1e-8, "dual feasibility {}", v[i]);
            }
        }
    }
}

#[test]
fn simplex_beats_random_feasible_points() {
    let mut rng = rng_from_seed(13);
    for _ in 0..20 {
        let prob = gaussian_problem(&mut rng, 6, 4, Constraint::Simplex);
        let best = prob.objective(&solve_simplex_nnls(&prob).unwrap().x);
        for _ in 0..1000 {
            let e: Vec<f64> = (0..4).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
            let s: f64 = e.iter().sum();
            let x: Vec<f64> = e.iter().map(|v| v / s).collect();
            assert!(best <= prob.objective(&x) + 1e-12);
        }
    }
}

#[test]
fn simplex_is_deterministic() {
    let mut rng = rng_from_seed(14);
    let prob = gaussian_problem(&mut rng, 10, 6, Constraint::Simplex);
    let a = solve_simplex_nnls(&prob).unwrap();
    let b = solve_simplex_nnls(&prob).unwrap();
    assert_eq!(a, b);
}

fn ball_feasible(x: [f64; 2]) -> [f64; 2] {
    let c = [x[0].max(0.0), x[1].max(0.0)];
    let norm = (c[0] * c[0] + c[1] * c[1]).sqrt();
    if norm > 1.0 {
        [c[0] / norm, c[1] / norm]
    } else {
        c
    }
}

/// Grid search over the quarter disc at step 1e-3, followed by successive
/// local grids of shrinking step around the incumbent, plus a fine arc scan.
fn grid_ball(prob: &LsProblem) -> f64 {
    let f = |x: [f64; 2]| prob.objective(&x);
    let mut best = ([0.0, 0.0], f([0.0, 0.0]));
    let step = 1e-3;
    for i in 0..=1000 {
        let a = i as f64 * step;
        let top = (1.0 - a * a).max(0.0).sqrt();
        let mut bj = 0.0;
        while bj <= top {
            let v = f([a, bj]);
            if v < best.1 {
                best = ([a, bj], v);
            }
            bj += step;
        }
    }
    for i in 0..=20_000 {
        let t = i as f64 * std::f64::consts::FRAC_PI_2 / 20_000.0;
        let x = [t.cos(), t.sin()];
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let mut h = step;
    for _ in 0..6 {
        let centre = best.0;
        for i in -10..=10 {
            for j in -10..=10 {
                let x = ball_feasible([centre[0] + i as f64 * h / 5.0, centre[1] + j as f64 * h / 5.0]);
                let v = f(x);
                if v < best.1 {
                    best = (x, v);
                }
            }
        }
        h /= 5.0;
    }
    best.1
}

#[test]
fn ball_matches_grid_oracle() {
    let mut rng = rng_from_seed(15);
    for _ in 0..30 {
        let mut prob = gaussian_problem(&mut rng, 6, 2, Constraint::Ball);
        prob.y *= 3.0;
        let sol = solve_ball_nnls(&prob).unwrap();
        let norm = sol.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1.0 + 1e-8 && sol.x.iter().all(|&v| v >= 0.0));
        let oracle = grid_ball(&prob);
        let got = prob.objective(&sol.x);
        assert!((got - oracle).abs() <= 1e-6, "solver {got} grid {oracle}");
    }
}

#[test]
fn ls_matches_normal_equations() {
    let mut rng = rng_from_seed(16);
    for _ in 0..50 {
        let h = DMatrix::from_fn(8, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let c = solve_ls(&h, &y).unwrap();
        let normal = (h.transpose() * &h).try_inverse().unwrap() * (h.transpose() * &y);
        assert!((c - normal).amax() <= 1e-9);
    }
}
