use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Gp2fError, Result};
use crate::numerics::{DenseMatrix, SeedStream};

/// Stochastic block model with Gaussian class-centered features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub center_scale: f64,
    pub noise_scale: f64,
    /// Added to every node's features; empty means no shift.
    #[serde(default)]
    pub feature_shift: Vec<f64>,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Gp2fError::Validation(m));
        if self.blocks == 0 || self.nodes_per_block == 0 || self.feature_dim == 0 {
            return bad("blocks, nodes_per_block and feature_dim must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return bad(format!("edge probabilities must lie in [0,1] (p_in={}, p_out={})", self.p_in, self.p_out));
        }
        if self.p_out > self.p_in {
            return bad(format!("p_out ({}) must not exceed p_in ({})", self.p_out, self.p_in));
        }
        if !(self.center_scale > 0.0) || !self.center_scale.is_finite() {
            return bad(format!("center_scale must be positive, got {}", self.center_scale));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return bad(format!("noise_scale must be non-negative, got {}", self.noise_scale));
        }
        if !self.feature_shift.is_empty() && self.feature_shift.len() != self.feature_dim {
            return bad(format!(
                "feature_shift has length {}, expected {}",
                self.feature_shift.len(),
                self.feature_dim
            ));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.blocks * self.nodes_per_block
    }
}

/// Source/target pair as read from a spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmPairSpec {
    pub source: SbmSpec,
    pub target: SbmSpec,
}

/// One SBM graph. Node `i` belongs to block `i / nodes_per_block`.
pub fn generate_sbm(spec: &SbmSpec, rng: &SeedStream) -> Result<Graph> {
    spec.validate()?;
    let n = spec.num_nodes();
    let d = spec.feature_dim;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_block).collect();

    let mut edge_rng = rng.named("edges");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { spec.p_in } else { spec.p_out };
            if edge_rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }

    let centers = rng.named("centers").normal_matrix(spec.blocks, d, spec.center_scale);
    let mut noise = rng.named("noise");
    let shift = |j: usize| spec.feature_shift.get(j).copied().unwrap_or(0.0);
    let features = DenseMatrix::from_fn(n, d, |i, j| {
        centers.get(labels[i], j) + spec.noise_scale * noise.normal() + shift(j)
    });

    Graph::new(features, edges, Some(labels))?.with_num_classes(spec.blocks)
}

/// Source and target graphs drawn from independent child streams of `seed`.
pub fn generate_sbm_pair(source: &SbmSpec, target: &SbmSpec, seed: u64) -> Result<(Graph, Graph)> {
    let root = SeedStream::new(seed);
    Ok((
        generate_sbm(source, &root.named("source"))?,
        generate_sbm(target, &root.named("target"))?,
    ))
}
