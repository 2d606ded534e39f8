//! Downstream training losses: cross-branch contrastive loss, topology-consistent
//! fusion loss, classification cross-entropy and their weighted total.
//!
//! Each loss has a `record_*` form that appends to a [`Tape`] and a matrix form
//! that evaluates the same recording on constants.

use serde::{Deserialize, Serialize};

use crate::error::{Gp2fError, Result};
use crate::graph::Graph;
use crate::numerics::{DenseMatrix, SeedStream, Tape, Var};

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_TAU_CTR: f64 = 0.5;
pub const DEFAULT_TAU_FUS: f64 = 0.05;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MAX_BATCH: usize = 256;

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_tau_ctr() -> f64 {
    DEFAULT_TAU_CTR
}
fn default_tau_fus() -> f64 {
    DEFAULT_TAU_FUS
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    #[serde(default = "default_lambda")]
    pub lambda_ctr: f64,
    #[serde(default = "default_lambda")]
    pub lambda_fus: f64,
    #[serde(default = "default_tau_ctr")]
    pub tau_ctr: f64,
    #[serde(default = "default_tau_fus")]
    pub tau_fus: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Nodes sampled per step for the fusion loss; `None` means `min(N, 256)`.
    #[serde(default)]
    pub batch_size: Option<usize>,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ctr: DEFAULT_LAMBDA,
            lambda_fus: DEFAULT_LAMBDA,
            tau_ctr: DEFAULT_TAU_CTR,
            tau_fus: DEFAULT_TAU_FUS,
            threshold: DEFAULT_THRESHOLD,
            batch_size: None,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_ctr", self.lambda_ctr), ("lambda_fus", self.lambda_fus)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Gp2fError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        check_tau("tau_ctr", self.tau_ctr)?;
        check_tau("tau_fus", self.tau_fus)?;
        check_threshold(self.threshold)?;
        if self.batch_size == Some(0) {
            return Err(Gp2fError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_batch(&self, n: usize) -> usize {
        self.batch_size.unwrap_or(DEFAULT_MAX_BATCH).min(n)
    }
}

fn check_tau(name: &str, tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Gp2fError::Config(format!("{name} must be positive, got {tau}")))
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > -1.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Gp2fError::Config(format!("threshold must lie in (-1, 1), got {t}")))
    }
}

/// Gradient norm of each loss term with respect to all trainable tensors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermGradNorms {
    pub cls: f64,
    pub ctr: f64,
    pub fus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_cls: f64,
    pub l_ctr: f64,
    pub l_fus: f64,
    pub l_total: f64,
    /// Filled only when the trainer is asked to track them.
    pub grad_norms: Option<TermGradNorms>,
    pub fusion_mask_empty: bool,
}

pub fn total_loss(l_cls: f64, l_ctr: f64, l_fus: f64, w: &LossWeights) -> Result<LossReport> {
    for (op, v) in [("L_cls", l_cls), ("L_ctr", l_ctr), ("L_fus", l_fus)] {
        if !v.is_finite() {
            return Err(Gp2fError::Numeric { op: op.into() });
        }
    }
    Ok(LossReport {
        l_cls,
        l_ctr,
        l_fus,
        l_total: l_cls + w.lambda_ctr * l_ctr + w.lambda_fus * l_fus,
        grad_norms: None,
        fusion_mask_empty: false,
    })
}

/// Boolean pair mask over `n x n` node pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsistencyMask {
    n: usize,
    cells: Vec<bool>,
}

impl ConsistencyMask {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    fn weights(&self, scale: f64) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| if self.get(i, j) { scale } else { 0.0 })
    }
}

/// Pairs whose similarity agrees with the topology: `S > t` on edges,
/// `S <= t` on non-edges. The diagonal is never included.
pub fn consistency_mask(s_mix: &DenseMatrix, adjacency: &DenseMatrix, t: f64) -> Result<ConsistencyMask> {
    check_threshold(t)?;
    s_mix.expect_same_shape(adjacency, "consistency_mask")?;
    let n = s_mix.rows();
    if s_mix.cols() != n {
        return Err(Gp2fError::dim("consistency_mask", "similarity matrix must be square"));
    }
    let mut cells = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let edge = adjacency.get(i, j) == 1.0;
                let high = s_mix.get(i, j) > t;
                cells[i * n + j] = high == edge;
            }
        }
    }
    Ok(ConsistencyMask { n, cells })
}

/// Cosine similarity `H̃ H̃ᵀ` of the row-normalized embeddings.
pub fn record_similarity(tape: &mut Tape, h: Var) -> Result<Var> {
    let z = tape.row_l2_normalize(h)?;
    tape.matmul_t(z, z)
}

pub fn self_similarity(h: &DenseMatrix) -> Result<DenseMatrix> {
    let mut t = Tape::new();
    let hv = t.constant(h.clone());
    let s = record_similarity(&mut t, hv)?;
    Ok(t.value(s).clone())
}

/// `α·S_pre + (1−α)·S_adp`, using the same arithmetic as the encoder fusion.
pub fn mix_similarity(s_pre: &DenseMatrix, s_adp: &DenseMatrix, alpha: f64) -> Result<DenseMatrix> {
    s_pre.expect_same_shape(s_adp, "mix_similarity")?;
    let mut t = Tape::new();
    let (p, q) = (t.constant(s_pre.clone()), t.constant(s_adp.clone()));
    let mix = crate::encoder::forward::fuse(&mut t, p, q, &crate::encoder::forward::AlphaVar::Fixed(alpha))?;
    Ok(t.value(mix).clone())
}

fn psi(tape: &mut Tape, a: Var, b: Var, inv_tau: f64) -> Result<Var> {
    let dots = tape.matmul_t(a, b)?;
    let scaled = tape.scale(dots, inv_tau)?;
    tape.exp(scaled)
}

/// Per-anchor `log(denominator) − log(numerator)` for anchors in `za`.
fn contrastive_direction(tape: &mut Tape, za: Var, zb: Var, adj: &DenseMatrix, inv_tau: f64) -> Result<Var> {
    let n = adj.rows();
    let same = psi(tape, za, za, inv_tau)?;
    let cross = psi(tape, za, zb, inv_tau)?;
    let adj_self = DenseMatrix::from_fn(n, n, |i, j| adj.get(i, j) + if i == j { 1.0 } else { 0.0 });
    let off_diag = DenseMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });

    let pos_same = tape.row_weighted_sum(same, adj.clone())?;
    let pos_cross = tape.row_weighted_sum(cross, adj_self)?;
    let num = tape.add(pos_same, pos_cross)?;

    let all_same = tape.row_weighted_sum(same, off_diag)?;
    let all_cross = tape.row_weighted_sum(cross, DenseMatrix::filled(n, n, 1.0))?;
    let den = tape.add(all_same, all_cross)?;

    let log_den = tape.log(den)?;
    let log_num = tape.log(num)?;
    tape.sub(log_den, log_num)
}

/// Cross-branch contrastive loss averaged over both anchor directions.
/// `adjacency` is the raw binary adjacency without self-loops.
pub fn record_contrastive(tape: &mut Tape, pre: Var, adp: Var, adjacency: &DenseMatrix, tau: f64) -> Result<Var> {
    check_tau("tau_ctr", tau)?;
    let n = tape.value(pre).rows();
    if tape.value(pre).shape() != tape.value(adp).shape() || adjacency.shape() != (n, n) {
        return Err(Gp2fError::dim(
            "contrastive_loss",
            format!(
                "{:?} vs {:?} with adjacency {:?}",
                tape.value(pre).shape(),
                tape.value(adp).shape(),
                adjacency.shape()
            ),
        ));
    }
    let zg = tape.row_l2_normalize(pre)?;
    let za = tape.row_l2_normalize(adp)?;
    let lg = contrastive_direction(tape, zg, za, adjacency, 1.0 / tau)?;
    let la = contrastive_direction(tape, za, zg, adjacency, 1.0 / tau)?;
    let both = tape.add(lg, la)?;
    tape.weighted_sum(both, DenseMatrix::filled(n, 1, 1.0 / (2 * n) as f64))
}

pub fn contrastive_loss(h_pre: &DenseMatrix, h_adp: &DenseMatrix, g: &Graph, tau: f64) -> Result<f64> {
    let mut t = Tape::new();
    let (p, q) = (t.constant(h_pre.clone()), t.constant(h_adp.clone()));
    let l = record_contrastive(&mut t, p, q, &g.adjacency(), tau)?;
    Ok(t.scalar(l))
}

#[derive(Clone, Copy, Debug)]
pub struct FusionTerm {
    pub loss: Var,
    pub mask_size: usize,
}

impl FusionTerm {
    pub fn is_degenerate(&self) -> bool {
        self.mask_size == 0
    }
}

/// Mean logit-space BCE of `S/τ` against the adjacency over the mask.
/// An empty mask yields a constant zero.
pub fn record_fusion(
    tape: &mut Tape,
    s_mix: Var,
    adjacency: &DenseMatrix,
    mask: &ConsistencyMask,
    tau: f64,
) -> Result<FusionTerm> {
    check_tau("tau_fus", tau)?;
    let n = mask.size();
    if tape.value(s_mix).shape() != (n, n) || adjacency.shape() != (n, n) {
        return Err(Gp2fError::dim("fusion_loss", "similarity, adjacency and mask sizes differ"));
    }
    let mask_size = mask.count();
    if mask_size == 0 {
        let zero = tape.constant(DenseMatrix::scalar(0.0));
        return Ok(FusionTerm { loss: zero, mask_size });
    }
    let w = mask.weights(1.0 / mask_size as f64);
    let wa = w.hadamard(adjacency)?;
    let x = tape.scale(s_mix, 1.0 / tau)?;
    let sp = tape.softplus(x)?;
    let a = tape.weighted_sum(sp, w)?;
    let b = tape.weighted_sum(x, wa)?;
    Ok(FusionTerm {
        loss: tape.sub(a, b)?,
        mask_size,
    })
}

/// Fusion loss value and whether the mask was empty. With `batch`, the
/// similarity, adjacency and mask are restricted to those nodes.
pub fn fusion_loss(
    s_mix: &DenseMatrix,
    adjacency: &DenseMatrix,
    mask: &ConsistencyMask,
    tau: f64,
    batch: Option<&[usize]>,
) -> Result<(f64, bool)> {
    let (s, a, m) = match batch {
        None => (s_mix.clone(), adjacency.clone(), mask.clone()),
        Some(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= mask.size()) {
                return Err(Gp2fError::Validation(format!("batch node {bad} out of range")));
            }
            let k = idx.len();
            let pick = |m: &DenseMatrix| DenseMatrix::from_fn(k, k, |i, j| m.get(idx[i], idx[j]));
            let cells = (0..k * k).map(|c| mask.get(idx[c / k], idx[c % k])).collect();
            (pick(s_mix), pick(adjacency), ConsistencyMask { n: k, cells })
        }
    };
    let mut t = Tape::new();
    let sv = t.constant(s);
    let term = record_fusion(&mut t, sv, &a, &m, tau)?;
    Ok((t.scalar(term.loss), term.is_degenerate()))
}

/// Uniform node subset of size `min(batch, n)`, sorted; `None` when it covers every node.
pub fn sample_batch(n: usize, batch: usize, rng: &mut SeedStream) -> Option<Vec<usize>> {
    if batch >= n {
        return None;
    }
    let all: Vec<usize> = (0..n).collect();
    let mut idx = rng.sample_without_replacement(&all, batch);
    idx.sort_unstable();
    Some(idx)
}

/// Restrict a square matrix to the listed nodes.
pub fn induced(m: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(idx.len(), idx.len(), |i, j| m.get(idx[i], idx[j]))
}

/// Mean softmax cross-entropy of every row of `logits`.
pub fn cross_entropy(logits: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    let mut t = Tape::new();
    let z = t.constant(logits.clone());
    let l = t.softmax_cross_entropy(z, (0..logits.rows()).collect(), labels.to_vec())?;
    Ok(t.scalar(l))
}
