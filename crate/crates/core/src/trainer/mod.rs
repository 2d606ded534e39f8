//! Downstream adaptation, evaluation and the multi-seed protocol.

mod adapt;
mod protocol;

pub use adapt::{adapt, evaluate, objective_grad_check, predict, AdaptOutcome, AdaptedModel, EpochLog};
pub use protocol::{run_protocol, split_seeds, RunRecord, RunReport, ProtocolReport};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::{DEFAULT_ALPHA_LOGIT, DEFAULT_BETA_INIT, DEFAULT_BOTTLENECK};
use crate::error::{Gp2fError, Result};
use crate::losses::LossWeights;

pub const DEFAULT_SEEDS: [u64; 5] = [12345, 23456, 34567, 45678, 56789];

/// Training path compared in one protocol run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoCtr,
    NoFus,
    NoBoth,
    /// Classification reads the adapted branch only (α pinned to 0).
    PromptOnly,
    /// Linear probe on the frozen branch.
    Lp,
    /// Fine-tune a copy of the encoder together with projector and head.
    Ft,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::NoCtr,
        Variant::NoFus,
        Variant::NoBoth,
        Variant::PromptOnly,
        Variant::Lp,
        Variant::Ft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoCtr => "no_ctr",
            Variant::NoFus => "no_fus",
            Variant::NoBoth => "no_both",
            Variant::PromptOnly => "prompt_only",
            Variant::Lp => "lp",
            Variant::Ft => "ft",
        }
    }

    /// Whether the adapter branch takes part.
    pub fn uses_adapters(self) -> bool {
        !matches!(self, Variant::Lp | Variant::Ft)
    }

    /// `(λ_ctr, λ_fus)` after the variant's ablation.
    pub fn loss_weights(self, w: &LossWeights) -> (f64, f64) {
        match self {
            Variant::Full | Variant::PromptOnly => (w.lambda_ctr, w.lambda_fus),
            Variant::NoCtr => (0.0, w.lambda_fus),
            Variant::NoFus => (w.lambda_ctr, 0.0),
            Variant::NoBoth | Variant::Lp | Variant::Ft => (0.0, 0.0),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Gp2fError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| {
                let valid: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Gp2fError::Config(format!("unknown variant {s:?} (valid: {})", valid.join(", ")))
            })
    }
}

/// Parse a comma-separated variant list.
pub fn parse_variants(list: &str) -> Result<Vec<Variant>> {
    let out = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Gp2fError::Config("empty variant list".into()));
    }
    Ok(out)
}

fn d_epochs() -> usize {
    500
}
fn d_patience() -> usize {
    20
}
fn d_up_lr() -> f64 {
    5e-4
}
fn d_down_lr() -> f64 {
    1e-3
}
fn d_wd() -> f64 {
    5e-4
}
fn d_k() -> usize {
    1
}
fn d_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn d_samplings() -> usize {
    10
}
fn d_variants() -> Vec<Variant> {
    vec![Variant::Full]
}
fn d_bottleneck() -> usize {
    DEFAULT_BOTTLENECK
}
fn d_beta() -> f64 {
    DEFAULT_BETA_INIT
}
fn d_logit() -> f64 {
    DEFAULT_ALPHA_LOGIT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_up_lr")]
    pub up_lr: f64,
    #[serde(default = "d_down_lr")]
    pub down_lr: f64,
    #[serde(default = "d_wd")]
    pub up_wd: f64,
    #[serde(default = "d_wd")]
    pub down_wd: f64,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_samplings")]
    pub samplings: usize,
    #[serde(default = "d_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "d_bottleneck")]
    pub bottleneck: usize,
    #[serde(default = "d_beta")]
    pub beta_init: f64,
    #[serde(default = "d_logit")]
    pub alpha_logit_init: f64,
    /// Pin α to this value instead of learning it.
    #[serde(default)]
    pub alpha_override: Option<f64>,
    /// Start from a fresh projector instead of the pre-trained one.
    #[serde(default)]
    pub reinit_projector: bool,
    /// Compute each loss term's gradient norm every epoch (one extra backward pass per term).
    #[serde(default)]
    pub track_term_gradients: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Gp2fError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        for (name, v) in [
            ("up_lr", self.up_lr),
            ("down_lr", self.down_lr),
            ("up_wd", self.up_wd),
            ("down_wd", self.down_wd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.seeds.is_empty() || self.samplings == 0 {
            return bad("need at least one seed and one sampling".into());
        }
        if let Some(a) = self.alpha_override {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("alpha_override must lie in [0, 1], got {a}"));
            }
        }
        if !self.beta_init.is_finite() || !self.alpha_logit_init.is_finite() {
            return bad("beta_init and alpha_logit_init must be finite".into());
        }
        self.loss.validate()
    }
}
