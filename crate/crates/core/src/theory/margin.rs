use serde::{Deserialize, Serialize};

use super::{mse_curve, NoiseModel};
use crate::error::{Gp2fError, Result};
use crate::numerics::{DenseMatrix, SeedStream};

const MAX_REJECTIONS: usize = 1_000_000;

/// Linear classes with rows of norm `radius` and latent points that clear
/// every competing class by at least `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginProblem {
    pub weights: DenseMatrix,
    pub radius: f64,
    pub gamma: f64,
    pub points: DenseMatrix,
    pub labels: Vec<usize>,
}

fn check(classes: usize, radius: f64, gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Gp2fError::Assumption(format!("margin γ must be positive, got {gamma}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Gp2fError::Assumption(format!("norm bound B must be positive, got {radius}")));
    }
    if classes < 2 {
        return Err(Gp2fError::Assumption(format!("need at least 2 classes, got {classes}")));
    }
    Ok(())
}

impl MarginProblem {
    pub fn generate(classes: usize, dim: usize, radius: f64, gamma: f64, points: usize, seed: u64) -> Result<Self> {
        check(classes, radius, gamma)?;
        if dim == 0 || points == 0 {
            return Err(Gp2fError::Config("dimension and point count must be positive".into()));
        }
        let root = SeedStream::new(seed);
        let mut wrng = root.named("weights");
        let mut weights = DenseMatrix::zeros(classes, dim);
        for c in 0..classes {
            let row: Vec<f64> = (0..dim).map(|_| wrng.normal()).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (j, x) in row.iter().enumerate() {
                weights.set(c, j, radius * x / norm);
            }
        }
        let mut prng = root.named("points");
        let mut pts = DenseMatrix::zeros(points, dim);
        let mut labels = Vec::with_capacity(points);
        let shifts: Vec<f64> = (0..classes).map(|y| class_shift(&weights, y, radius, gamma)).collect();
        for i in 0..points {
            let y = prng.below(classes);
            let shift = shifts[y];
            let mut tries = 0;
            loop {
                let z: Vec<f64> = (0..dim).map(|j| shift * weights.get(y, j) / radius + prng.normal()).collect();
                if margin_of(&weights, &z, y) >= gamma {
                    pts.row_mut(i).copy_from_slice(&z);
                    break;
                }
                tries += 1;
                if tries >= MAX_REJECTIONS {
                    return Err(Gp2fError::Assumption(format!(
                        "could not place a point with margin {gamma} for class {y}"
                    )));
                }
            }
            labels.push(y);
        }
        Ok(Self {
            weights,
            radius,
            gamma,
            points: pts,
            labels,
        })
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    /// Smallest margin over all points.
    pub fn min_margin(&self) -> f64 {
        (0..self.points.rows())
            .map(|i| margin_of(&self.weights, self.points.row(i), self.labels[i]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Argmax class of `z`, ties to the lowest index.
    pub fn classify(&self, z: &[f64]) -> usize {
        let scores: Vec<f64> = (0..self.classes()).map(|c| dot(self.weights.row(c), z)).collect();
        (1..scores.len()).fold(0, |b, c| if scores[c] > scores[b] { c } else { b })
    }
}

/// Distance along `w_y/B` at which every competing margin clears `γ` by half a
/// noise standard deviation, so accepted points sit near the margin.
fn class_shift(w: &DenseMatrix, y: usize, radius: f64, gamma: f64) -> f64 {
    (0..w.rows())
        .filter(|&c| c != y)
        .map(|c| {
            let gap = (radius * radius - dot(w.row(y), w.row(c))).max(1e-12 * radius * radius) / radius;
            let sd = (2.0 * radius * gap).sqrt();
            (gamma + 0.5 * sd) / gap
        })
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn margin_of(w: &DenseMatrix, z: &[f64], y: usize) -> f64 {
    let own = dot(w.row(y), z);
    (0..w.rows())
        .filter(|&c| c != y)
        .map(|c| own - dot(w.row(c), z))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub unclamped: f64,
    pub clamped: f64,
}

/// `4(C−1)B²·mse/γ²`.
pub fn corollary_bound(classes: usize, radius: f64, gamma: f64, mse: f64) -> Result<Bound> {
    check(classes, radius, gamma)?;
    let unclamped = 4.0 * (classes - 1) as f64 * radius * radius * mse / (gamma * gamma);
    Ok(Bound {
        unclamped,
        clamped: unclamped.clamp(0.0, 1.0),
    })
}

pub fn misclassification_bound(problem: &MarginProblem, mse: f64) -> Result<Bound> {
    corollary_bound(problem.classes(), problem.radius, problem.gamma, mse)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryRow {
    pub lambda: f64,
    pub mse: f64,
    pub bound: Bound,
    pub error_rate: f64,
    pub holds: bool,
}

/// Empirical argmax error of `z_i + λε^g + (1−λ)ε^a` against the bound at the
/// analytic MSE, for each λ. Sample `s` perturbs point `s mod n_points`.
pub fn corollary_check(problem: &MarginProblem, noise: &NoiseModel, lambdas: &[f64], n: usize) -> Result<Vec<CorollaryRow>> {
    if noise.dim != problem.dim() {
        return Err(Gp2fError::dim(
            "corollary_check",
            format!("noise dimension {} vs problem dimension {}", noise.dim, problem.dim()),
        ));
    }
    let mut errors = vec![0usize; lambdas.len()];
    let mut s = 0usize;
    let mut z = vec![0.0; problem.dim()];
    let np = problem.points.rows();
    noise.for_each_pair(n, |eg, ea| {
        let i = s % np;
        let base = problem.points.row(i);
        for (k, &l) in lambdas.iter().enumerate() {
            for j in 0..z.len() {
                z[j] = base[j] + l * eg[j] + (1.0 - l) * ea[j];
            }
            errors[k] += usize::from(problem.classify(&z) != problem.labels[i]);
        }
        s += 1;
    });
    lambdas
        .iter()
        .zip(errors)
        .map(|(&lambda, e)| {
            let mse = mse_curve(&noise.stats, lambda)?;
            let bound = misclassification_bound(problem, mse)?;
            let error_rate = e as f64 / n as f64;
            Ok(CorollaryRow {
                lambda,
                mse,
                bound,
                error_rate,
                holds: error_rate <= bound.unclamped,
            })
        })
        .collect()
}
