use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adapt, evaluate, EpochLog, TrainConfig, Variant};
use crate::encoder::Checkpoint;
use crate::error::{Gp2fError, Result};
use crate::graph::{sample_few_shot, Graph};
use crate::numerics::{derive_seed, label_tag};

/// `(split_seed, init_seed)` for one `(seed, sampling)` cell. Every variant
/// in a protocol run uses the same pair.
pub fn split_seeds(seed: u64, sampling: usize) -> (u64, u64) {
    let s = sampling as u64;
    (
        derive_seed(derive_seed(seed, label_tag("split")), s),
        derive_seed(derive_seed(seed, label_tag("init")), s),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    pub sampling: usize,
    pub accuracy: f64,
    pub epochs_ran: usize,
    pub best_epoch: usize,
    pub final_alpha: f64,
    pub final_betas: Option<[f64; 2]>,
    pub log: Vec<EpochLog>,
}

/// Accuracy summary of one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub std: f64,
}

impl RunReport {
    pub fn from_accuracies(variant: Variant, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = if accuracies.len() > 1 {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            variant,
            accuracies,
            mean,
            std,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    /// Ordered by seed, then sampling, then variant as configured.
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<RunReport>,
}

impl ProtocolReport {
    pub fn summary(&self, variant: Variant) -> Option<&RunReport> {
        self.summaries.iter().find(|s| s.variant == variant)
    }

    pub fn results_csv(&self) -> String {
        let mut out = String::from("variant,seed,sampling,accuracy,epochs_ran,final_alpha\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{},{:.16e},{},{:.16e}",
                r.variant, r.seed, r.sampling, r.accuracy, r.epochs_ran, r.final_alpha
            );
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Entry<'a> {
            variant: &'a str,
            runs: usize,
            mean: f64,
            std: f64,
        }
        let entries: Vec<Entry> = self
            .summaries
            .iter()
            .map(|s| Entry {
                variant: s.variant.name(),
                runs: s.accuracies.len(),
                mean: s.mean,
                std: s.std,
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&entries).map_err(|e| Gp2fError::json("summary", e))?;
        s.push('\n');
        Ok(s)
    }
}

fn run_cell(target: &Graph, ck: &Checkpoint, cfg: &TrainConfig, seed: u64, sampling: usize) -> Result<Vec<RunRecord>> {
    let (split_seed, init_seed) = split_seeds(seed, sampling);
    let split = sample_few_shot(target, cfg.k, split_seed)?;
    cfg.variants
        .iter()
        .map(|&variant| {
            let out = adapt(target, ck, cfg, variant, &split, init_seed)
                .map_err(|e| e.with_context(&format!("variant {variant}")))?;
            Ok(RunRecord {
                variant,
                seed,
                sampling,
                accuracy: evaluate(&out.model, target, &split.test_idx)?,
                epochs_ran: out.epochs_ran,
                best_epoch: out.best_epoch,
                final_alpha: out.model.alpha(),
                final_betas: out.model.betas(),
                log: out.log,
            })
        })
        .collect()
}

/// Every configured variant on every `(seed, sampling)` split. Cells run on
/// up to `workers` threads; results are assembled in key order.
pub fn run_protocol(target: &Graph, ck: &Checkpoint, cfg: &TrainConfig, workers: usize) -> Result<ProtocolReport> {
    cfg.validate()?;
    if cfg.variants.is_empty() {
        return Err(Gp2fError::Config("need at least one variant".into()));
    }
    ck.encoder.require_frozen()?;
    let cells: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..cfg.samplings).map(move |k| (s, k)))
        .collect();
    let job = |&(seed, sampling): &(u64, usize)| {
        run_cell(target, ck, cfg, seed, sampling).map_err(|e| e.with_context(&format!("seed {seed} sampling {sampling}")))
    };
    let results: Vec<Result<Vec<RunRecord>>> = if workers <= 1 {
        cells.iter().map(job).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Gp2fError::Config(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| cells.par_iter().map(job).collect())
    };
    let mut runs = Vec::with_capacity(cells.len() * cfg.variants.len());
    for r in results {
        runs.extend(r?);
    }
    let summaries = cfg
        .variants
        .iter()
        .map(|&v| {
            let acc = runs.iter().filter(|r| r.variant == v).map(|r| r.accuracy).collect();
            RunReport::from_accuracies(v, acc)
        })
        .collect();
    Ok(ProtocolReport { runs, summaries })
}
