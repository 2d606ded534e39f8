use serde::{Deserialize, Serialize};

use super::{TrainConfig, Variant};
use crate::encoder::forward::{self, AdapterVars, AlphaVar, ClassifierVars, EncoderVars, ProjectorVars};
use crate::encoder::{AdapterParams, AlphaMode, Checkpoint, ClassifierParams, EncoderParams, FusionParams, ProjectorParams};
use crate::error::{Gp2fError, Result};
use crate::graph::{normalize_adjacency, FewShotSplit, Graph};
use crate::losses::{self, LossReport, TermGradNorms};
use crate::numerics::{finite_diff_check, AdamConfig, AdamState, DenseMatrix, GradCheckReport, NamedMatrix, SeedStream, Tape, Var};

/// Downstream parameters for one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedModel {
    pub variant: Variant,
    pub encoder: EncoderParams,
    pub projector: ProjectorParams,
    pub adapters: Option<AdapterParams>,
    pub fusion: FusionParams,
    pub alpha_mode: AlphaMode,
    pub classifier: ClassifierParams,
}

impl AdaptedModel {
    /// Fresh downstream parameters. Streams are derived from `init_seed`
    /// only, so every variant sharing a seed starts from the same head.
    pub fn init(ck: &Checkpoint, target: &Graph, cfg: &TrainConfig, variant: Variant, init_seed: u64) -> Result<Self> {
        ck.encoder.require_frozen()?;
        let root = SeedStream::new(init_seed);
        let d_h = ck.encoder.hidden_dim();
        let projector = if cfg.reinit_projector {
            ProjectorParams::init(target.feature_dim(), d_h, &mut root.named("projector"))
        } else {
            ck.projector.clone()
        };
        if projector.input_dim() != target.feature_dim() {
            return Err(Gp2fError::Config(format!(
                "pre-trained projector expects {} features but the target has {}; set reinit_projector",
                projector.input_dim(),
                target.feature_dim()
            )));
        }
        let adapters = if variant.uses_adapters() {
            Some(AdapterParams::init(d_h, cfg.bottleneck, cfg.beta_init, &mut root.named("adapters"))?)
        } else {
            None
        };
        let alpha_mode = match (variant, cfg.alpha_override) {
            (Variant::Lp | Variant::Ft, _) => AlphaMode::Fixed(1.0),
            (Variant::PromptOnly, _) => AlphaMode::Fixed(0.0),
            (_, Some(a)) => AlphaMode::Fixed(a),
            (_, None) => AlphaMode::Learned,
        };
        let encoder = if variant == Variant::Ft {
            ck.encoder.unfrozen_copy()
        } else {
            ck.encoder.clone()
        };
        Ok(Self {
            variant,
            encoder,
            projector,
            adapters,
            fusion: FusionParams::new(cfg.alpha_logit_init),
            alpha_mode,
            classifier: ClassifierParams::init(d_h, target.num_classes(), &mut root.named("classifier")),
        })
    }

    pub fn alpha(&self) -> f64 {
        match self.alpha_mode {
            AlphaMode::Learned => self.fusion.alpha(),
            AlphaMode::Fixed(a) => a,
        }
    }

    pub fn betas(&self) -> Option<[f64; 2]> {
        self.adapters.as_ref().map(AdapterParams::betas)
    }

    fn trains_projector(&self) -> bool {
        self.variant != Variant::Lp
    }

    fn trains_logit(&self) -> bool {
        self.adapters.is_some() && self.alpha_mode == AlphaMode::Learned
    }

    fn up_tensors(&self) -> Vec<&DenseMatrix> {
        let mut out = vec![];
        if !self.encoder.is_frozen() {
            out.extend([&self.encoder.w1, &self.encoder.w2]);
        }
        if self.trains_projector() {
            out.extend(self.projector.tensors());
        }
        if let Some(a) = &self.adapters {
            out.extend(a.tensors());
        }
        if self.trains_logit() {
            out.push(&self.fusion.logit);
        }
        out
    }

    /// Every tensor the optimizers update, up group first, with stable names.
    pub fn trainable_tensors(&self) -> Vec<NamedMatrix> {
        let mut names: Vec<String> = vec![];
        if !self.encoder.is_frozen() {
            names.extend(["encoder.w1".into(), "encoder.w2".into()]);
        }
        if self.trains_projector() {
            names.extend(["w1", "b1", "w2", "b2"].map(|t| format!("projector.{t}")));
        }
        if self.adapters.is_some() {
            for l in 0..2 {
                names.extend(["down", "up", "beta"].map(|t| format!("adapter{l}.{t}")));
            }
        }
        if self.trains_logit() {
            names.push("fusion.logit".into());
        }
        names.extend(["classifier.w".into(), "classifier.b".into()]);
        let tensors = self.up_tensors().into_iter().chain([&self.classifier.w, &self.classifier.b]);
        names.into_iter().zip(tensors).map(|(n, t)| NamedMatrix::new(n, t.clone())).collect()
    }

    fn up_tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let trains_projector = self.trains_projector();
        let trains_logit = self.trains_logit();
        let mut out = vec![];
        if !self.encoder.is_frozen() {
            out.extend([&mut self.encoder.w1, &mut self.encoder.w2]);
        }
        if trains_projector {
            out.extend(self.projector.tensors_mut());
        }
        if let Some(a) = &mut self.adapters {
            out.extend(a.tensors_mut());
        }
        if trains_logit {
            out.push(&mut self.fusion.logit);
        }
        out
    }
}

struct Inputs {
    features: DenseMatrix,
    norm_adj: DenseMatrix,
    adjacency: DenseMatrix,
    /// Frozen-branch output, precomputed when nothing upstream of it trains.
    cached_pre: Option<DenseMatrix>,
}

struct Recorded {
    logits: Var,
    pre: Var,
    adp: Option<Var>,
    alpha: AlphaVar,
    up: Vec<Var>,
    down: Vec<Var>,
}

/// Where leaf variables come from: fresh leaves built from the model, or
/// caller-supplied variables standing in for the trainable tensors (in the
/// order of `AdaptedModel::trainable_tensors`).
enum Leaves<'a> {
    Fresh,
    Given(std::slice::Iter<'a, Var>),
}

impl Leaves<'_> {
    fn take(&mut self, tape: &mut Tape, m: &DenseMatrix, trainable: bool) -> Var {
        match (self, trainable) {
            (_, false) => tape.constant(m.clone()),
            (Leaves::Fresh, true) => tape.param(m.clone()),
            (Leaves::Given(it), true) => *it.next().expect("one variable per trainable tensor"),
        }
    }
}

fn record(tape: &mut Tape, m: &AdaptedModel, inp: &Inputs, train: bool, mut leaves: Leaves) -> Result<Recorded> {
    let mut up = vec![];
    let enc_train = train && !m.encoder.is_frozen();
    let ev = EncoderVars {
        w1: leaves.take(tape, &m.encoder.w1, enc_train),
        w2: leaves.take(tape, &m.encoder.w2, enc_train),
    };
    if enc_train {
        up.extend(ev.weights());
    }
    let a = tape.constant(inp.norm_adj.clone());

    let (pre, adp) = match &inp.cached_pre {
        Some(h) => (tape.constant(h.clone()), None),
        None => {
            let pt = train && m.trains_projector();
            let p = &m.projector;
            let pv = ProjectorVars {
                w1: leaves.take(tape, &p.w1, pt),
                b1: leaves.take(tape, &p.b1, pt),
                w2: leaves.take(tape, &p.w2, pt),
                b2: leaves.take(tape, &p.b2, pt),
            };
            if pt {
                up.extend(pv.vars());
            }
            let x = tape.constant(inp.features.clone());
            let h0 = forward::project(tape, x, &pv)?;
            let pre = forward::frozen_branch(tape, h0, a, &ev)?;
            let adp = match &m.adapters {
                Some(ad) => {
                    let mut layer = |l: usize| {
                        let t = &ad.layers[l];
                        (
                            leaves.take(tape, &t.down, train),
                            leaves.take(tape, &t.up, train),
                            leaves.take(tape, &t.beta, train),
                        )
                    };
                    let (d0, u0, b0) = layer(0);
                    let (d1, u1, b1) = layer(1);
                    let av = AdapterVars {
                        down: [d0, d1],
                        up: [u0, u1],
                        beta: [b0, b1],
                    };
                    if train {
                        up.extend(av.vars());
                    }
                    Some(forward::adapted_branch(tape, h0, a, &ev, &av)?)
                }
                None => None,
            };
            (pre, adp)
        }
    };

    let alpha = match m.alpha_mode {
        AlphaMode::Learned => {
            let lt = train && m.trains_logit();
            let logit = leaves.take(tape, &m.fusion.logit, lt);
            if lt {
                up.push(logit);
            }
            AlphaVar::Learned {
                logit,
                alpha: tape.sigmoid(logit)?,
            }
        }
        AlphaMode::Fixed(v) => AlphaVar::Fixed(v),
    };
    let readout = match adp {
        Some(adp) => forward::fuse(tape, pre, adp, &alpha)?,
        None => pre,
    };
    let cv = ClassifierVars {
        w: leaves.take(tape, &m.classifier.w, train),
        b: leaves.take(tape, &m.classifier.b, train),
    };
    let logits = forward::classify(tape, readout, &cv)?;
    let down = if train { vec![cv.w, cv.b] } else { vec![] };
    Ok(Recorded {
        logits,
        pre,
        adp,
        alpha,
        up,
        down,
    })
}

fn inputs(g: &Graph, m: &AdaptedModel) -> Result<Inputs> {
    let norm_adj = normalize_adjacency(g);
    let cached_pre = if m.variant == Variant::Lp {
        Some(crate::encoder::encode_frozen(g, &norm_adj, &m.encoder, &m.projector)?)
    } else {
        None
    };
    Ok(Inputs {
        features: g.features().clone(),
        norm_adj: norm_adj.into_matrix(),
        adjacency: g.adjacency(),
        cached_pre,
    })
}

/// One epoch's training losses, recorded before that epoch's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossReport,
    pub alpha: f64,
    pub betas: Option<[f64; 2]>,
}

#[derive(Clone, Debug)]
pub struct AdaptOutcome {
    /// Parameters at the epoch with the lowest training loss.
    pub model: AdaptedModel,
    pub epochs_ran: usize,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub log: Vec<EpochLog>,
}

fn check_split(g: &Graph, split: &FewShotSplit) -> Result<()> {
    let n = g.num_nodes();
    if split.train_idx.is_empty() {
        return Err(Gp2fError::Validation("empty training set".into()));
    }
    if let Some(&i) = split.train_idx.iter().chain(&split.test_idx).find(|&&i| i >= n) {
        return Err(Gp2fError::Validation(format!("split node {i} out of range for {n} nodes")));
    }
    if split.train_idx.iter().any(|i| split.test_idx.contains(i)) {
        return Err(Gp2fError::Validation("train and test nodes overlap".into()));
    }
    Ok(())
}

fn grad_norm(tape: &Tape, out: Var, vars: &[Var]) -> Result<f64> {
    let grads = tape.backward(out)?;
    Ok(vars
        .iter()
        .filter_map(|&v| grads.get(v))
        .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt())
}

/// Train one variant's downstream parameters on the labeled nodes of `split`
/// with early stopping on the total training loss.
pub fn adapt(
    target: &Graph,
    ck: &Checkpoint,
    cfg: &TrainConfig,
    variant: Variant,
    split: &FewShotSplit,
    init_seed: u64,
) -> Result<AdaptOutcome> {
    cfg.validate()?;
    check_split(target, split)?;
    let labels = target.require_labels()?;
    let train_labels: Vec<usize> = split.train_idx.iter().map(|&i| labels[i]).collect();
    let mut model = AdaptedModel::init(ck, target, cfg, variant, init_seed)?;
    let inp = inputs(target, &model)?;
    let n = target.num_nodes();
    let (lambda_ctr, lambda_fus) = variant.loss_weights(&cfg.loss);
    let weights = losses::LossWeights {
        lambda_ctr,
        lambda_fus,
        ..cfg.loss.clone()
    };
    let batch = cfg.loss.effective_batch(n);
    let mut batch_rng = SeedStream::new(init_seed).named("fusion_batch");

    let mut up_opt = AdamState::new(AdamConfig::new(cfg.up_lr, cfg.up_wd), model.up_tensors());
    let mut down_opt = AdamState::new(
        AdamConfig::new(cfg.down_lr, cfg.down_wd),
        [&model.classifier.w, &model.classifier.b],
    );

    let mut best = model.clone();
    let (mut best_loss, mut best_epoch, mut wait) = (f64::INFINITY, 0, 0);
    let mut log = Vec::new();
    let mut epochs_ran = 0;

    for epoch in 0..cfg.epochs {
        let ctx = |e: Gp2fError| e.with_context(&format!("epoch {epoch}"));
        let mut tape = Tape::new();
        let rec = record(&mut tape, &model, &inp, true, Leaves::Fresh).map_err(ctx)?;
        let idx = if lambda_fus > 0.0 && rec.adp.is_some() {
            losses::sample_batch(n, batch, &mut batch_rng)
        } else {
            None
        };
        let Objective {
            cls,
            ctr,
            fus,
            total,
            mask_empty,
        } = objective(&mut tape, &rec, &inp, split, &train_labels, (lambda_ctr, lambda_fus), cfg, idx).map_err(ctx)?;
        let value = |v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v));
        let mut report = losses::total_loss(tape.scalar(cls), value(ctr), value(fus), &weights).map_err(ctx)?;
        report.fusion_mask_empty = mask_empty;
        if cfg.track_term_gradients {
            let vars: Vec<Var> = rec.up.iter().chain(&rec.down).copied().collect();
            let norm = |v: Option<Var>| v.map_or(Ok(0.0), |v| grad_norm(&tape, v, &vars));
            report.grad_norms = Some(TermGradNorms {
                cls: norm(Some(cls))?,
                ctr: norm(ctr)?,
                fus: norm(fus)?,
            });
        }
        epochs_ran = epoch + 1;
        log.push(EpochLog {
            epoch,
            loss: report.clone(),
            alpha: model.alpha(),
            betas: model.betas(),
        });

        if report.l_total < best_loss {
            best_loss = report.l_total;
            best_epoch = epoch;
            best = model.clone();
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                break;
            }
        }

        let grads = tape.backward(total).map_err(ctx)?;
        let up_grads: Vec<DenseMatrix> = rec.up.iter().map(|&v| grads.get_or_zeros(v)).collect();
        let down_grads: Vec<DenseMatrix> = rec.down.iter().map(|&v| grads.get_or_zeros(v)).collect();
        up_opt.step(&mut model.up_tensors_mut(), &up_grads.iter().collect::<Vec<_>>());
        down_opt.step(
            &mut [&mut model.classifier.w, &mut model.classifier.b],
            &down_grads.iter().collect::<Vec<_>>(),
        );
    }

    Ok(AdaptOutcome {
        model: best,
        epochs_ran,
        best_epoch,
        best_loss,
        log,
    })
}

struct Objective {
    cls: Var,
    ctr: Option<Var>,
    fus: Option<Var>,
    total: Var,
    mask_empty: bool,
}

/// Cross-entropy on the labeled nodes plus the weighted structural terms.
/// Terms with zero weight are not recorded.
#[allow(clippy::too_many_arguments)]
fn objective(
    tape: &mut Tape,
    rec: &Recorded,
    inp: &Inputs,
    split: &FewShotSplit,
    train_labels: &[usize],
    (lambda_ctr, lambda_fus): (f64, f64),
    cfg: &TrainConfig,
    batch_idx: Option<Vec<usize>>,
) -> Result<Objective> {
    let cls = tape.softmax_cross_entropy(rec.logits, split.train_idx.clone(), train_labels.to_vec())?;
    let mut ctr = None;
    let mut fus = None;
    let mut mask_empty = false;
    if let Some(adp) = rec.adp {
        if lambda_ctr > 0.0 {
            ctr = Some(losses::record_contrastive(tape, rec.pre, adp, &inp.adjacency, cfg.loss.tau_ctr)?);
        }
        if lambda_fus > 0.0 {
            let term = fusion_term(tape, rec.pre, adp, &rec.alpha, &inp.adjacency, batch_idx, cfg)?;
            mask_empty = term.is_degenerate();
            fus = Some(term.loss);
        }
    }
    let mut total = cls;
    for (term, w) in [(ctr, lambda_ctr), (fus, lambda_fus)] {
        if let Some(v) = term {
            let s = tape.scale(v, w)?;
            total = tape.add(total, s)?;
        }
    }
    Ok(Objective {
        cls,
        ctr,
        fus,
        total,
        mask_empty,
    })
}

fn fusion_term(
    tape: &mut Tape,
    pre: Var,
    adp: Var,
    alpha: &AlphaVar,
    adjacency: &DenseMatrix,
    idx: Option<Vec<usize>>,
    cfg: &TrainConfig,
) -> Result<losses::FusionTerm> {
    let (pre, adp, adj) = match idx {
        Some(idx) => {
            let adj = losses::induced(adjacency, &idx);
            (tape.select_rows(pre, idx.clone())?, tape.select_rows(adp, idx)?, adj)
        }
        None => (pre, adp, adjacency.clone()),
    };
    let s_pre = losses::record_similarity(tape, pre)?;
    let s_adp = losses::record_similarity(tape, adp)?;
    let s_mix = forward::fuse(tape, s_pre, s_adp, alpha)?;
    let mask = losses::consistency_mask(tape.value(s_mix), &adj, cfg.loss.threshold)?;
    losses::record_fusion(tape, s_mix, &adj, &mask, cfg.loss.tau_fus)
}

/// Central-difference check of the full training objective (as evaluated in
/// the first epoch of [`adapt`]) with respect to every trainable tensor.
pub fn objective_grad_check(
    target: &Graph,
    model: &AdaptedModel,
    split: &FewShotSplit,
    cfg: &TrainConfig,
    h: f64,
) -> Result<GradCheckReport> {
    check_split(target, split)?;
    let labels = target.require_labels()?;
    let train_labels: Vec<usize> = split.train_idx.iter().map(|&i| labels[i]).collect();
    let inp = inputs(target, model)?;
    let weights = model.variant.loss_weights(&cfg.loss);
    let n = target.num_nodes();
    let idx = losses::sample_batch(n, cfg.loss.effective_batch(n), &mut SeedStream::new(0).named("fusion_batch"));
    let program = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let rec = record(tape, model, &inp, true, Leaves::Given(vars.iter()))?;
        Ok(objective(tape, &rec, &inp, split, &train_labels, weights, cfg, idx.clone())?.total)
    };
    finite_diff_check(&program, &model.trainable_tensors(), h)
}

/// Predicted class per node: argmax of the logits, ties to the lowest index.
pub fn predict(model: &AdaptedModel, g: &Graph) -> Result<Vec<usize>> {
    let inp = inputs(g, model)?;
    let mut tape = Tape::new();
    let rec = record(&mut tape, model, &inp, false, Leaves::Fresh)?;
    let z = tape.value(rec.logits);
    Ok((0..z.rows())
        .map(|i| {
            let row = z.row(i);
            (1..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
        })
        .collect())
}

pub fn evaluate(model: &AdaptedModel, g: &Graph, test_idx: &[usize]) -> Result<f64> {
    let labels = g.require_labels()?;
    if test_idx.is_empty() {
        return Err(Gp2fError::Validation("empty test set".into()));
    }
    let pred = predict(model, g)?;
    let mut hits = 0usize;
    for &i in test_idx {
        if i >= pred.len() {
            return Err(Gp2fError::Validation(format!("test node {i} out of range")));
        }
        hits += usize::from(pred[i] == labels[i]);
    }
    Ok(hits as f64 / test_idx.len() as f64)
}
