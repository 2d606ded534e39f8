//! Self-supervised source-domain pre-training with two augmented views and a
//! node-level InfoNCE objective, plus the linear-probe and fine-tuning baselines.

use serde::{Deserialize, Serialize};

use crate::encoder::forward::{self, EncoderVars, ProjectorVars};
use crate::encoder::{Checkpoint, EncoderParams, ProjectorParams};
use crate::error::{Gp2fError, Result};
use crate::graph::{augment_view, normalize_adjacency, FewShotSplit, Graph};
use crate::numerics::{AdamConfig, AdamState, DenseMatrix, SeedStream, Tape, Var};
use crate::trainer::{adapt, evaluate, TrainConfig, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRates {
    pub p_edge_drop: f64,
    pub p_feat_mask: f64,
}

impl Default for ViewRates {
    fn default() -> Self {
        Self {
            p_edge_drop: 0.2,
            p_feat_mask: 0.2,
        }
    }
}

fn d_epochs() -> usize {
    1000
}
fn d_lr() -> f64 {
    1e-3
}
fn d_wd() -> f64 {
    1e-5
}
fn d_tau() -> f64 {
    0.5
}
fn d_hidden() -> usize {
    crate::encoder::DEFAULT_HIDDEN_DIM
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default)]
    pub views: [ViewRates; 2],
    #[serde(default = "d_hidden")]
    pub hidden_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Gp2fError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0 && self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("lr and weight_decay must be finite and >= 0".into());
        }
        for v in &self.views {
            for p in [v.p_edge_drop, v.p_feat_mask] {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("augmentation rate {p} outside [0, 1]"));
                }
            }
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    /// Loss at every epoch, before that epoch's update.
    pub losses: Vec<f64>,
}

impl PretrainOutcome {
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (e, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{e},{l:.16e}\n"));
        }
        s
    }
}

fn info_nce_direction(tape: &mut Tape, zu: Var, zv: Var, n: usize, inv_tau: f64) -> Result<Var> {
    let sim = |tape: &mut Tape, a: Var, b: Var| -> Result<Var> {
        let d = tape.matmul_t(a, b)?;
        let d = tape.scale(d, inv_tau)?;
        tape.exp(d)
    };
    let cross = sim(tape, zu, zv)?;
    let same = sim(tape, zu, zu)?;
    let pos = tape.row_weighted_sum(cross, DenseMatrix::identity(n))?;
    let inter = tape.row_weighted_sum(cross, DenseMatrix::filled(n, n, 1.0))?;
    let intra = tape.row_weighted_sum(same, DenseMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 }))?;
    let den = tape.add(inter, intra)?;
    let log_den = tape.log(den)?;
    let log_pos = tape.log(pos)?;
    tape.sub(log_den, log_pos)
}

/// Two-view InfoNCE: the positive of node `i` is node `i` in the other view;
/// the denominator adds every other node from both views.
pub fn record_info_nce(tape: &mut Tape, u: Var, v: Var, tau: f64) -> Result<Var> {
    let n = tape.value(u).rows();
    let zu = tape.row_l2_normalize(u)?;
    let zv = tape.row_l2_normalize(v)?;
    let a = info_nce_direction(tape, zu, zv, n, 1.0 / tau)?;
    let b = info_nce_direction(tape, zv, zu, n, 1.0 / tau)?;
    let both = tape.add(a, b)?;
    tape.weighted_sum(both, DenseMatrix::filled(n, 1, 1.0 / (2 * n) as f64))
}

fn encode_view(tape: &mut Tape, view: &Graph, pv: &ProjectorVars, ev: &EncoderVars) -> Result<Var> {
    let x = tape.constant(view.features().clone());
    let a = tape.constant(normalize_adjacency(view).into_matrix());
    let h0 = forward::project(tape, x, pv)?;
    forward::frozen_branch(tape, h0, a, ev)
}

/// Train encoder and projector on `source`, then freeze the encoder.
pub fn grace_pretrain(
    source: &Graph,
    mut projector: ProjectorParams,
    mut encoder: EncoderParams,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if encoder.is_frozen() {
        return Err(Gp2fError::Contract("pre-training needs an unfrozen encoder".into()));
    }
    if projector.input_dim() != source.feature_dim() || projector.output_dim() != encoder.hidden_dim() {
        return Err(Gp2fError::dim("pretrain", "projector does not match source features or encoder width"));
    }
    let root = SeedStream::new(cfg.seed).named("pretrain");
    let mut opt = {
        let mut ps: Vec<&DenseMatrix> = vec![&encoder.w1, &encoder.w2];
        ps.extend(projector.tensors());
        AdamState::new(AdamConfig::new(cfg.lr, cfg.weight_decay), ps)
    };
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let ctx = |e: Gp2fError| e.with_context(&format!("pretrain epoch {epoch}"));
        let stream = root.child(epoch as u64);
        let mut views = Vec::with_capacity(2);
        for (k, rates) in cfg.views.iter().enumerate() {
            let seed = stream.named(&format!("view{k}")).seed();
            views.push(augment_view(source, rates.p_edge_drop, rates.p_feat_mask, seed)?);
        }
        let mut tape = Tape::new();
        let pv = ProjectorVars::record(&mut tape, &projector, true);
        let ev = EncoderVars::record(&mut tape, &encoder);
        let u = encode_view(&mut tape, &views[0], &pv, &ev).map_err(ctx)?;
        let v = encode_view(&mut tape, &views[1], &pv, &ev).map_err(ctx)?;
        let loss = record_info_nce(&mut tape, u, v, cfg.tau).map_err(ctx)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(ctx(Gp2fError::Numeric { op: "info_nce".into() }));
        }
        losses.push(value);

        let grads = tape.backward(loss).map_err(ctx)?;
        let vars: Vec<Var> = ev.weights().into_iter().chain(pv.vars()).collect();
        let g: Vec<DenseMatrix> = vars.iter().map(|&v| grads.get_or_zeros(v)).collect();
        let mut ps: Vec<&mut DenseMatrix> = vec![&mut encoder.w1, &mut encoder.w2];
        ps.extend(projector.tensors_mut());
        opt.step(&mut ps, &g.iter().collect::<Vec<_>>());
    }
    encoder.freeze();
    Ok(PretrainOutcome {
        checkpoint: Checkpoint {
            encoder,
            projector,
            pretrain_seed: cfg.seed,
        },
        losses,
    })
}

/// Fresh encoder and projector for `source`, then pre-train.
pub fn pretrain_from_scratch(source: &Graph, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let root = SeedStream::new(cfg.seed).named("init");
    let projector = ProjectorParams::init(source.feature_dim(), cfg.hidden_dim, &mut root.named("projector"));
    let encoder = EncoderParams::init(cfg.hidden_dim, &mut root.named("encoder"));
    grace_pretrain(source, projector, encoder, cfg)
}

/// Test accuracy of a linear head trained on the frozen branch.
pub fn linear_probe(g: &Graph, ck: &Checkpoint, split: &FewShotSplit, cfg: &TrainConfig, init_seed: u64) -> Result<f64> {
    let out = adapt(g, ck, cfg, Variant::Lp, split, init_seed)?;
    evaluate(&out.model, g, &split.test_idx)
}

/// Test accuracy after training a copy of the encoder with projector and head.
/// `ck` is left untouched.
pub fn full_finetune(g: &Graph, ck: &Checkpoint, split: &FewShotSplit, cfg: &TrainConfig, init_seed: u64) -> Result<f64> {
    let out = adapt(g, ck, cfg, Variant::Ft, split, init_seed)?;
    evaluate(&out.model, g, &split.test_idx)
}
