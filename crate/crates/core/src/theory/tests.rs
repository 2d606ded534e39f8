use proptest::prelude::*;

use super::*;
use crate::numerics::SeedStream;

fn stats(g: f64, a: f64, rho: f64) -> ErrorStats {
    ErrorStats::new(g, a, rho).unwrap()
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = hi - r * (hi - lo);
        let x2 = lo + r * (hi - lo);
        if f(x1) < f(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    (lo + hi) / 2.0
}

fn random_stats(rng: &mut SeedStream) -> ErrorStats {
    let g = rng.uniform_range(0.05, 5.0);
    let a = rng.uniform_range(0.05, 5.0);
    let lo = -(g * a).sqrt();
    let hi = g.min(a);
    let rho = lo + rng.uniform_range(0.0, 0.999) * (hi - lo);
    stats(g, a, rho)
}

#[test]
fn mse_curve_hand_values() {
    let s = stats(2.0, 1.0, 0.3);
    assert_eq!(mse_curve(&s, 0.0).unwrap(), 1.0);
    assert_eq!(mse_curve(&s, 1.0).unwrap(), 2.0);
    let (a, b, c) = s.coefficients().unwrap();
    assert!((a - 2.4).abs() < 1e-15 && (b + 1.4).abs() < 1e-15 && c == 1.0);
    assert!((mse_curve(&s, 0.5).unwrap() - 0.9).abs() < 1e-15);
}

#[test]
fn invalid_stats_are_assumption_errors() {
    for (g, a, r) in [(0.0, 1.0, 0.0), (1.0, -1.0, 0.0), (2.0, 1.0, 1.0), (1.0, 1.0, 1.0), (f64::NAN, 1.0, 0.0)] {
        assert!(matches!(ErrorStats::new(g, a, r), Err(Gp2fError::Assumption(_))), "{g} {a} {r}");
    }
    let bad = ErrorStats {
        sigma_g2: 2.0,
        sigma_a2: 1.0,
        rho: 1.5,
    };
    assert!(matches!(mse_curve(&bad, 0.5), Err(Gp2fError::Assumption(_))));
    assert!(matches!(optimal_lambda(&bad), Err(Gp2fError::Assumption(_))));
}

#[test]
fn optimal_lambda_matches_golden_section() {
    assert_eq!(optimal_lambda(&stats(1.5, 1.5, 0.4)).unwrap(), 0.5);
    for (s, want) in [(stats(2.0, 1.0, 0.0), 1.0 / 3.0), (stats(2.0, 1.0, 0.3), 0.7 / 2.4)] {
        let ls = optimal_lambda(&s).unwrap();
        assert!((ls - want).abs() < 1e-15);
        let gs = golden_min(|l| mse_curve(&s, l).unwrap(), -1.0, 2.0);
        assert!((ls - gs).abs() < 1e-7, "{ls} vs {gs}");
    }
}

#[test]
fn mse_at_optimum_hand_values() {
    assert!((mse_at_optimum(&stats(1.0, 1.0, 0.0)).unwrap() - 0.5).abs() < 1e-15);
    let s = stats(2.0, 1.0, 0.0);
    assert!((mse_at_optimum(&s).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((mse_curve(&s, 1.0 / 3.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn second_differences_are_constant() {
    let mut rng = SeedStream::new(5);
    for _ in 0..50 {
        let s = random_stats(&mut rng);
        let (a, _, _) = s.coefficients().unwrap();
        let h = 0.1;
        let v: Vec<f64> = (0..21).map(|k| mse_curve(&s, -0.5 + k as f64 * h).unwrap()).collect();
        for w in v.windows(3) {
            let d2 = w[2] - 2.0 * w[1] + w[0];
            assert!((d2 - 2.0 * a * h * h).abs() < 1e-12, "{d2}");
        }
    }
}

proptest! {
    #[test]
    fn optimum_lies_strictly_inside_and_improves(
        g in 0.01f64..10.0,
        a in 0.01f64..10.0,
        t in 0.0f64..0.999,
    ) {
        let lo = -(g * a).sqrt();
        let rho = lo + t * (g.min(a) - lo);
        let s = ErrorStats::new(g, a, rho).unwrap();
        let ls = optimal_lambda(&s).unwrap();
        prop_assert!(ls > 0.0 && ls < 1.0);
        let m = mse_at_optimum(&s).unwrap();
        prop_assert!(m < mse_curve(&s, 0.0).unwrap().min(mse_curve(&s, 1.0).unwrap()));
        let (f1, f2) = mse_at_optimum_forms(&s).unwrap();
        prop_assert!((f1 - f2).abs() <= 1e-12 * g.max(a).max(1.0));
    }
}

#[test]
fn noise_model_reproduces_moments() {
    let s = stats(2.0, 1.0, 0.3);
    let m = NoiseModel::new(s, DEFAULT_NOISE_DIM, 11).unwrap();
    let (mut gg, mut aa, mut ga) = (Vec::new(), Vec::new(), Vec::new());
    m.for_each_pair(50_000, |g, a| {
        gg.push(g.iter().map(|x| x * x).sum::<f64>());
        aa.push(a.iter().map(|x| x * x).sum::<f64>());
        ga.push(g.iter().zip(a).map(|(x, y)| x * y).sum::<f64>());
    });
    for (v, want) in [(gg, 2.0), (aa, 1.0), (ga, 0.3)] {
        let e = McEstimate::from_values(&v);
        assert!((e.mean - want).abs() < 4.0 * e.std_error, "{} vs {want}", e.mean);
    }
}

#[test]
fn noise_model_rejects_impossible_correlation() {
    let s = ErrorStats {
        sigma_g2: 1.0,
        sigma_a2: 4.0,
        rho: -2.5,
    };
    assert!(s.validate().is_ok());
    assert!(matches!(NoiseModel::new(s, 4, 0), Err(Gp2fError::Assumption(_))));
    assert!(matches!(NoiseModel::new(stats(1.0, 1.0, 0.0), 0, 0), Err(Gp2fError::Config(_))));
}

#[test]
fn monte_carlo_endpoints_and_optimum() {
    let s = stats(2.0, 1.0, 0.3);
    let m = NoiseModel::new(s, DEFAULT_NOISE_DIM, 3).unwrap();
    let e0 = monte_carlo_mse(&m, 0.0, 20_000).unwrap();
    assert!((e0.mean - 1.0).abs() < 4.0 * e0.std_error);
    let ls = optimal_lambda(&s).unwrap();
    let e = monte_carlo_mse(&m, ls, 200_000).unwrap();
    let want = 1.0 - 0.49 / 2.4;
    assert!((mse_at_optimum(&s).unwrap() - want).abs() < 1e-15);
    assert!((e.mean - want).abs() / want < 0.02, "{}", e.mean);
    assert!(matches!(monte_carlo_mse(&m, 0.5, MIN_SAMPLES - 1), Err(Gp2fError::Config(_))));
}

#[test]
fn monte_carlo_is_deterministic() {
    let m = NoiseModel::new(stats(1.0, 2.0, -0.2), 8, 99).unwrap();
    let a = monte_carlo_mse(&m, 0.4, 10_000).unwrap();
    let b = monte_carlo_mse(&m, 0.4, 10_000).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = m;
        for i in 0..3 {
            mk[i][k] = r[i];
        }
        *o = det(mk) / d;
    }
    out
}

#[test]
fn quadratic_fit_recovers_coefficients() {
    let s = stats(2.0, 1.0, 0.3);
    let m = NoiseModel::new(s, DEFAULT_NOISE_DIM, 21).unwrap();
    let grid: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
    let rows = lambda_sweep(&m, &grid, 200_000).unwrap();
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for r in &rows {
        let x = [r.lambda * r.lambda, r.lambda, 1.0];
        for i in 0..3 {
            xty[i] += x[i] * r.empirical;
            for j in 0..3 {
                xtx[i][j] += x[i] * x[j];
            }
        }
        assert_eq!(r.analytic, mse_curve(&s, r.lambda).unwrap());
    }
    let fit = solve3(xtx, xty);
    for (got, want) in fit.iter().zip([2.4, -1.4, 1.0]) {
        assert!((got - want).abs() / want.abs() < 0.05, "{got} vs {want}");
    }
}

#[test]
fn standard_error_scales_as_inverse_root_n() {
    let m = NoiseModel::new(stats(2.0, 1.0, 0.3), DEFAULT_NOISE_DIM, 8).unwrap();
    let se: Vec<f64> = [1_000, 10_000, 100_000]
        .iter()
        .map(|&n| monte_carlo_mse(&m, 0.3, n).unwrap().std_error)
        .collect();
    for w in se.windows(2) {
        let ratio = w[0] / w[1] / 10f64.sqrt();
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    }
}

#[test]
fn improvement_verdicts() {
    let r = verify_improvement(&ErrorStats { sigma_g2: 2.0, sigma_a2: 1.0, rho: 0.3 }, DEFAULT_NOISE_DIM, 1, 200_000).unwrap();
    assert!(r.applicable && r.verdict);
    assert!((r.lambda_star.unwrap() - 0.7 / 2.4).abs() < 1e-15);
    let opt = r.mse_optimum.unwrap().mean;
    assert!(opt < r.mse_frozen.unwrap().mean && opt < r.mse_adapted.unwrap().mean);

    let boundary = ErrorStats { sigma_g2: 2.0, sigma_a2: 1.0, rho: 1.0 };
    let r = verify_improvement(&boundary, DEFAULT_NOISE_DIM, 1, 10_000).unwrap();
    assert!(!r.applicable && !r.verdict);
    assert!(r.reason.unwrap().contains("assumptions violated, theorem inapplicable"));
    assert_eq!((boundary.sigma_a2 - boundary.rho) / (boundary.sigma_g2 + boundary.sigma_a2 - 2.0 * boundary.rho), 0.0);
}

#[test]
fn near_degenerate_stats_still_improve() {
    let s = stats(1.0, 1.0, 0.999);
    assert!((s.coefficients().unwrap().0 - 0.002).abs() < 1e-12);
    let r = verify_improvement(&s, DEFAULT_NOISE_DIM, 4, 400_000).unwrap();
    assert!(r.verdict, "{r:?}");
}

#[test]
fn bound_hand_values_and_errors() {
    assert_eq!(corollary_bound(3, 2.0, 1.0, 0.0).unwrap().unclamped, 0.0);
    let b = corollary_bound(2, 1.0, 2.0, 0.25).unwrap();
    assert_eq!(b.unclamped, 0.25);
    assert_eq!(b.clamped, 0.25);
    let big = corollary_bound(5, 3.0, 0.5, 1.0).unwrap();
    assert_eq!(big.clamped, 1.0);
    assert!(big.unclamped > 1.0);
    for (c, bnd, g) in [(2, 1.0, 0.0), (2, 1.0, -1.0), (2, 0.0, 1.0), (1, 1.0, 1.0)] {
        assert!(matches!(corollary_bound(c, bnd, g, 0.1), Err(Gp2fError::Assumption(_))));
    }
}

#[test]
fn margin_problem_respects_assumptions() {
    for seed in 0..5 {
        let p = MarginProblem::generate(4, 6, 1.5, 0.7, 200, seed).unwrap();
        assert!(p.min_margin() >= 0.7);
        for c in 0..4 {
            let n: f64 = p.weights.row(c).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.5).abs() < 1e-12);
        }
        for i in 0..200 {
            assert_eq!(p.classify(p.points.row(i)), p.labels[i]);
        }
    }
    assert!(matches!(MarginProblem::generate(3, 4, 1.0, 0.0, 10, 0), Err(Gp2fError::Assumption(_))));
}

#[test]
fn empirical_error_stays_under_bound() {
    let p = MarginProblem::generate(3, 8, 1.0, 0.5, 100, 2).unwrap();
    let noise = NoiseModel::new(stats(2.0, 1.0, 0.3), 8, 6).unwrap();
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let rows = corollary_check(&p, &noise, &grid, 20_000).unwrap();
    assert_eq!(rows.len(), grid.len());
    for r in &rows {
        assert!(r.holds && r.error_rate <= r.bound.unclamped, "{r:?}");
        assert!(r.error_rate > 0.0);
    }
    let wrong = NoiseModel::new(stats(2.0, 1.0, 0.3), 4, 6).unwrap();
    assert!(corollary_check(&p, &wrong, &grid, 20_000).is_err());
}

#[test]
fn discrepancy_detects_shift() {
    let pre = DenseMatrix::from_fn(4, 3, |i, j| (i as f64 - 2.0 * j as f64) / 8.0);
    let same = branch_discrepancy_stats(&pre, &pre).unwrap();
    assert!(same.mean.iter().all(|&m| m == 0.0) && same.mean_norm == 0.0);
    assert!(same.covariance.data().iter().all(|&c| c == 0.0));
    let adp = pre.map(|x| x + 0.25);
    let d = branch_discrepancy_stats(&pre, &adp).unwrap();
    assert!(d.mean.iter().all(|&m| m == -0.25));
    assert_eq!(d.mean_norm, (3.0f64 * 0.0625).sqrt());
    assert!(branch_discrepancy_stats(&pre, &DenseMatrix::zeros(4, 2)).is_err());
}
