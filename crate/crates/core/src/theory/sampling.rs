use serde::{Deserialize, Serialize};

use super::{mse_at_optimum, mse_curve, optimal_lambda, ErrorStats};
use crate::error::{Gp2fError, Result};
use crate::numerics::SeedStream;

pub const DEFAULT_NOISE_DIM: usize = 16;
pub const MIN_SAMPLES: usize = 1000;
const CHUNK: usize = 4096;
const SE_MARGIN: f64 = 4.0;

/// Gaussian branch errors with prescribed second moments:
/// `ε^g = σ_g·u/√d`, `ε^a = (ρ/σ_g)·u/√d + c·v/√d` with `c² = σ_a² − ρ²/σ_g²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub stats: ErrorStats,
    pub dim: usize,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(stats: ErrorStats, dim: usize, seed: u64) -> Result<Self> {
        let m = Self { stats, dim, seed };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Gp2fError::Config("noise dimension must be positive".into()));
        }
        let s = &self.stats;
        if !(s.sigma_g2 > 0.0 && s.sigma_a2 > 0.0) || s.rho * s.rho > s.sigma_g2 * s.sigma_a2 {
            return Err(Gp2fError::Assumption(format!(
                "no joint distribution has σ_g²={}, σ_a²={}, ρ={} (needs ρ² ≤ σ_g²σ_a²)",
                s.sigma_g2, s.sigma_a2, s.rho
            )));
        }
        Ok(())
    }

    /// Calls `f(ε^g, ε^a)` for `n` independent draws. Draws are generated in
    /// fixed-size chunks, each from its own child stream.
    pub fn for_each_pair(&self, n: usize, mut f: impl FnMut(&[f64], &[f64])) {
        let d = self.dim;
        let s = &self.stats;
        let root = SeedStream::new(self.seed).named("noise");
        let scale = 1.0 / (d as f64).sqrt();
        let sg = s.sigma_g2.sqrt();
        let c1 = s.rho / sg;
        let c2 = (s.sigma_a2 - c1 * c1).max(0.0).sqrt();
        let (mut eg, mut ea) = (vec![0.0; d], vec![0.0; d]);
        let mut done = 0;
        let mut chunk = 0u64;
        while done < n {
            let mut rng = root.child(chunk);
            let take = CHUNK.min(n - done);
            for _ in 0..take {
                for j in 0..d {
                    let u = rng.normal() * scale;
                    let v = rng.normal() * scale;
                    eg[j] = sg * u;
                    ea[j] = c1 * u + c2 * v;
                }
                f(&eg, &ea);
            }
            done += take;
            chunk += 1;
        }
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
            samples: values.len(),
        }
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Gp2fError::Config(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    Ok(())
}

fn fused_sq_norm(lambda: f64, eg: &[f64], ea: &[f64]) -> f64 {
    eg.iter()
        .zip(ea)
        .map(|(g, a)| {
            let e = lambda * g + (1.0 - lambda) * a;
            e * e
        })
        .sum()
}

/// Empirical `E‖λε^g + (1−λ)ε^a‖²`.
pub fn monte_carlo_mse(model: &NoiseModel, lambda: f64, n: usize) -> Result<McEstimate> {
    model.check()?;
    check_samples(n)?;
    let mut values = Vec::with_capacity(n);
    model.for_each_pair(n, |eg, ea| values.push(fused_sq_norm(lambda, eg, ea)));
    Ok(McEstimate::from_values(&values))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
}

/// Analytic and empirical MSE over a λ grid, all from one set of draws.
pub fn lambda_sweep(model: &NoiseModel, grid: &[f64], n: usize) -> Result<Vec<SweepRow>> {
    model.check()?;
    check_samples(n)?;
    let mut values = vec![Vec::with_capacity(n); grid.len()];
    model.for_each_pair(n, |eg, ea| {
        for (k, &l) in grid.iter().enumerate() {
            values[k].push(fused_sq_norm(l, eg, ea));
        }
    });
    grid.iter()
        .zip(values)
        .map(|(&lambda, v)| {
            let est = McEstimate::from_values(&v);
            Ok(SweepRow {
                lambda,
                analytic: mse_curve(&model.stats, lambda)?,
                empirical: est.mean,
                std_error: est.std_error,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub applicable: bool,
    /// Why the theorem does not apply, when it does not.
    pub reason: Option<String>,
    pub lambda_star: Option<f64>,
    pub analytic_optimum: Option<f64>,
    pub mse_optimum: Option<McEstimate>,
    pub mse_frozen: Option<McEstimate>,
    pub mse_adapted: Option<McEstimate>,
    /// Paired differences `MSE(λ*) − MSE(1)` and `MSE(λ*) − MSE(0)`.
    pub gap_frozen: Option<McEstimate>,
    pub gap_adapted: Option<McEstimate>,
    pub verdict: bool,
}

impl ImprovementReport {
    fn inapplicable(reason: String) -> Self {
        Self {
            applicable: false,
            reason: Some(reason),
            lambda_star: None,
            analytic_optimum: None,
            mse_optimum: None,
            mse_frozen: None,
            mse_adapted: None,
            gap_frozen: None,
            gap_adapted: None,
            verdict: false,
        }
    }
}

/// Check empirically that `MSE(λ*)` lies below both endpoints by more than
/// four standard errors of the paired difference. Invalid stats yield an
/// inapplicable report rather than an error.
pub fn verify_improvement(stats: &ErrorStats, dim: usize, seed: u64, n: usize) -> Result<ImprovementReport> {
    check_samples(n)?;
    let model = match stats.validate().and_then(|_| NoiseModel::new(*stats, dim, seed)) {
        Ok(m) => m,
        Err(Gp2fError::Assumption(why)) => {
            return Ok(ImprovementReport::inapplicable(format!(
                "assumptions violated, theorem inapplicable: {why}"
            )))
        }
        Err(e) => return Err(e),
    };
    let ls = optimal_lambda(stats)?;
    let mut opt = Vec::with_capacity(n);
    let mut frozen = Vec::with_capacity(n);
    let mut adapted = Vec::with_capacity(n);
    model.for_each_pair(n, |eg, ea| {
        opt.push(fused_sq_norm(ls, eg, ea));
        frozen.push(fused_sq_norm(1.0, eg, ea));
        adapted.push(fused_sq_norm(0.0, eg, ea));
    });
    let diff = |other: &[f64]| {
        let d: Vec<f64> = opt.iter().zip(other).map(|(a, b)| a - b).collect();
        McEstimate::from_values(&d)
    };
    let gap_frozen = diff(&frozen);
    let gap_adapted = diff(&adapted);
    let below = |g: &McEstimate| g.mean + SE_MARGIN * g.std_error < 0.0;
    Ok(ImprovementReport {
        applicable: true,
        reason: None,
        lambda_star: Some(ls),
        analytic_optimum: Some(mse_at_optimum(stats)?),
        mse_optimum: Some(McEstimate::from_values(&opt)),
        mse_frozen: Some(McEstimate::from_values(&frozen)),
        mse_adapted: Some(McEstimate::from_values(&adapted)),
        verdict: below(&gap_frozen) && below(&gap_adapted),
        gap_frozen: Some(gap_frozen),
        gap_adapted: Some(gap_adapted),
    })
}
