//! Dual-branch encoder: projector, frozen GCN branch, adapter branch, fusion
//! and the linear head.

mod checkpoint;
pub mod forward;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use params::{
    AdapterLayer, AdapterParams, ClassifierParams, EncoderParams, FusionParams, ProjectorParams, DEFAULT_ALPHA_LOGIT,
    DEFAULT_BETA_INIT, DEFAULT_BOTTLENECK, DEFAULT_HIDDEN_DIM,
};

use serde::{Deserialize, Serialize};

use crate::error::{Gp2fError, Result};
use crate::graph::{Graph, NormalizedAdjacency};
use crate::numerics::{DenseMatrix, Tape};
use forward::{AdapterVars, AlphaVar, ClassifierVars, EncoderVars, ProjectorVars};

/// How the branch weight α is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// `α = logistic(a)` with trainable `a`.
    #[default]
    Learned,
    /// α pinned to a constant in `[0, 1]`.
    Fixed(f64),
}

/// Outputs of both branches and their fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchOutputs {
    pub pre: DenseMatrix,
    pub adp: DenseMatrix,
    pub mix: DenseMatrix,
    pub alpha: f64,
}

pub fn gcn_layer(h: &DenseMatrix, adj: &NormalizedAdjacency, w: &DenseMatrix, activate: bool) -> Result<DenseMatrix> {
    let mut t = Tape::new();
    let (h, a, w) = (t.constant(h.clone()), t.constant(adj.matrix().clone()), t.constant(w.clone()));
    let out = forward::gcn(&mut t, h, a, w, activate)?;
    Ok(t.value(out).clone())
}

fn check_input(g: &Graph, adj: &NormalizedAdjacency, proj: &ProjectorParams, enc: &EncoderParams) -> Result<()> {
    if adj.matrix().rows() != g.num_nodes() {
        return Err(Gp2fError::dim(
            "encode",
            format!("adjacency of {} nodes for a graph of {}", adj.matrix().rows(), g.num_nodes()),
        ));
    }
    if proj.input_dim() != g.feature_dim() {
        return Err(Gp2fError::dim(
            "encode",
            format!("projector expects {} features, graph has {}", proj.input_dim(), g.feature_dim()),
        ));
    }
    if proj.output_dim() != enc.hidden_dim() {
        return Err(Gp2fError::dim(
            "encode",
            format!("projector width {} vs encoder width {}", proj.output_dim(), enc.hidden_dim()),
        ));
    }
    Ok(())
}

/// Frozen branch `g_θ*(Â, Proj(X))`.
pub fn encode_frozen(
    g: &Graph,
    adj: &NormalizedAdjacency,
    enc: &EncoderParams,
    proj: &ProjectorParams,
) -> Result<DenseMatrix> {
    enc.require_frozen()?;
    check_input(g, adj, proj, enc)?;
    let mut t = Tape::new();
    let x = t.constant(g.features().clone());
    let a = t.constant(adj.matrix().clone());
    let pv = ProjectorVars::record(&mut t, proj, false);
    let ev = EncoderVars::record(&mut t, enc);
    let h0 = forward::project(&mut t, x, &pv)?;
    let out = forward::frozen_branch(&mut t, h0, a, &ev)?;
    Ok(t.value(out).clone())
}

/// Adapter branch over the same frozen layers.
pub fn encode_adapted(
    g: &Graph,
    adj: &NormalizedAdjacency,
    enc: &EncoderParams,
    adapters: &AdapterParams,
    proj: &ProjectorParams,
) -> Result<DenseMatrix> {
    Ok(encode_branches(g, adj, enc, proj, adapters, &FusionParams::default(), AlphaMode::Learned)?.adp)
}

/// Both branches and `H_mix` in one pass.
pub fn encode_branches(
    g: &Graph,
    adj: &NormalizedAdjacency,
    enc: &EncoderParams,
    proj: &ProjectorParams,
    adapters: &AdapterParams,
    fusion: &FusionParams,
    mode: AlphaMode,
) -> Result<BranchOutputs> {
    enc.require_frozen()?;
    check_input(g, adj, proj, enc)?;
    if adapters.layers[0].down.rows() != enc.hidden_dim() {
        return Err(Gp2fError::dim("encode_adapted", "adapter width differs from encoder width"));
    }
    let mut t = Tape::new();
    let x = t.constant(g.features().clone());
    let a = t.constant(adj.matrix().clone());
    let pv = ProjectorVars::record(&mut t, proj, false);
    let ev = EncoderVars::record(&mut t, enc);
    let av = AdapterVars::record(&mut t, adapters, false);
    let alpha = match mode {
        AlphaMode::Learned => AlphaVar::learned(&mut t, fusion, false)?,
        AlphaMode::Fixed(v) => AlphaVar::Fixed(v),
    };
    let h0 = forward::project(&mut t, x, &pv)?;
    let pre = forward::frozen_branch(&mut t, h0, a, &ev)?;
    let adp = forward::adapted_branch(&mut t, h0, a, &ev, &av)?;
    let mix = forward::fuse(&mut t, pre, adp, &alpha)?;
    Ok(BranchOutputs {
        pre: t.value(pre).clone(),
        adp: t.value(adp).clone(),
        mix: t.value(mix).clone(),
        alpha: alpha.value(&t),
    })
}

/// `α·H_pre + (1−α)·H_adp` with `α = logistic(a)`.
pub fn fuse(pre: &DenseMatrix, adp: &DenseMatrix, fusion: &FusionParams) -> Result<DenseMatrix> {
    pre.expect_same_shape(adp, "fuse")?;
    let mut t = Tape::new();
    let (p, q) = (t.constant(pre.clone()), t.constant(adp.clone()));
    let alpha = AlphaVar::learned(&mut t, fusion, false)?;
    let out = forward::fuse(&mut t, p, q, &alpha)?;
    Ok(t.value(out).clone())
}

/// Logits `H W_c + b_c`.
pub fn classify(h: &DenseMatrix, classifier: &ClassifierParams) -> Result<DenseMatrix> {
    let mut t = Tape::new();
    let hv = t.constant(h.clone());
    let cv = ClassifierVars::record(&mut t, classifier, false);
    let out = forward::classify(&mut t, hv, &cv)?;
    Ok(t.value(out).clone())
}

#[cfg(test)]
mod tests;
