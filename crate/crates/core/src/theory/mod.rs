//! Numerical checks of the fusion-estimator argument: the MSE of
//! `λ·h^g + (1−λ)·h^a` as a quadratic in `λ`, its minimizer, the strict
//! improvement over either branch, and the margin-based error bound.

mod margin;
mod sampling;

pub use margin::{corollary_bound, corollary_check, misclassification_bound, Bound, CorollaryRow, MarginProblem};
pub use sampling::{
    lambda_sweep, monte_carlo_mse, verify_improvement, ImprovementReport, McEstimate, NoiseModel, SweepRow,
    DEFAULT_NOISE_DIM, MIN_SAMPLES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Gp2fError, Result};
use crate::numerics::DenseMatrix;

/// Second moments of the two branch errors: `σ_g² = E‖ε^g‖²`,
/// `σ_a² = E‖ε^a‖²`, `ρ = E⟨ε^g, ε^a⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub sigma_g2: f64,
    pub sigma_a2: f64,
    pub rho: f64,
}

impl ErrorStats {
    pub fn new(sigma_g2: f64, sigma_a2: f64, rho: f64) -> Result<Self> {
        let s = Self {
            sigma_g2,
            sigma_a2,
            rho,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            sigma_g2,
            sigma_a2,
            rho,
        } = *self;
        if !(sigma_g2.is_finite() && sigma_a2.is_finite() && rho.is_finite()) {
            return Err(Gp2fError::Assumption("error moments must be finite".into()));
        }
        if sigma_g2 <= 0.0 || sigma_a2 <= 0.0 {
            return Err(Gp2fError::Assumption(format!(
                "variances must be positive (σ_g²={sigma_g2}, σ_a²={sigma_a2})"
            )));
        }
        if rho >= sigma_g2.min(sigma_a2) {
            return Err(Gp2fError::Assumption(format!(
                "ρ={rho} must be below min(σ_g², σ_a²)={}",
                sigma_g2.min(sigma_a2)
            )));
        }
        if self.a() <= 0.0 {
            return Err(Gp2fError::Assumption(format!("σ_g²+σ_a²−2ρ = {} must be positive", self.a())));
        }
        Ok(())
    }

    fn a(&self) -> f64 {
        self.sigma_g2 + self.sigma_a2 - 2.0 * self.rho
    }

    /// `(A, B, C)` with `MSE(λ) = Aλ² + Bλ + C`.
    pub fn coefficients(&self) -> Result<(f64, f64, f64)> {
        self.validate()?;
        Ok((self.a(), 2.0 * (self.rho - self.sigma_a2), self.sigma_a2))
    }
}

pub fn mse_curve(stats: &ErrorStats, lambda: f64) -> Result<f64> {
    let (a, b, c) = stats.coefficients()?;
    Ok(a * lambda * lambda + b * lambda + c)
}

/// `λ* = (σ_a² − ρ) / (σ_g² + σ_a² − 2ρ)`.
pub fn optimal_lambda(stats: &ErrorStats) -> Result<f64> {
    let (a, _, _) = stats.coefficients()?;
    Ok((stats.sigma_a2 - stats.rho) / a)
}

/// Both closed forms of `MSE(λ*)`: `σ_a² − (σ_a²−ρ)²/A` and `σ_g² − (σ_g²−ρ)²/A`.
pub fn mse_at_optimum_forms(stats: &ErrorStats) -> Result<(f64, f64)> {
    let (a, _, _) = stats.coefficients()?;
    Ok((
        stats.sigma_a2 - (stats.sigma_a2 - stats.rho).powi(2) / a,
        stats.sigma_g2 - (stats.sigma_g2 - stats.rho).powi(2) / a,
    ))
}

pub fn mse_at_optimum(stats: &ErrorStats) -> Result<f64> {
    let (adapted_form, frozen_form) = mse_at_optimum_forms(stats)?;
    let scale = stats.sigma_g2.max(stats.sigma_a2).max(1.0);
    if (adapted_form - frozen_form).abs() > 1e-12 * scale {
        return Err(Gp2fError::Numeric {
            op: format!("mse_at_optimum: closed forms disagree ({adapted_form} vs {frozen_form})"),
        });
    }
    Ok(adapted_form)
}

/// Mean and covariance of the row discrepancies `Δ_i = h_i^g − h_i^a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyStats {
    pub mean: Vec<f64>,
    pub mean_norm: f64,
    /// Population covariance, `d x d`.
    pub covariance: DenseMatrix,
}

pub fn branch_discrepancy_stats(h_pre: &DenseMatrix, h_adp: &DenseMatrix) -> Result<DiscrepancyStats> {
    let delta = h_pre.sub(h_adp)?;
    let (n, d) = delta.shape();
    if n == 0 {
        return Err(Gp2fError::Validation("no rows to summarize".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| delta.get(i, j)).sum::<f64>() / n as f64).collect();
    let covariance = DenseMatrix::from_fn(d, d, |j, k| {
        (0..n).map(|i| (delta.get(i, j) - mean[j]) * (delta.get(i, k) - mean[k])).sum::<f64>() / n as f64
    });
    Ok(DiscrepancyStats {
        mean_norm: mean.iter().map(|m| m * m).sum::<f64>().sqrt(),
        mean,
        covariance,
    })
}

#[cfg(test)]
mod tests;
