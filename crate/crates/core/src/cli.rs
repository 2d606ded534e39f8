//! Command-line front end: `gen`, `pretrain`, `adapt` and `theory`.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::Checkpoint;
use crate::error::{Gp2fError, Result};
use crate::graph::{generate_sbm_pair, load_graph, write_graph, Graph, GraphFiles, SbmPairSpec, SbmSpec};
use crate::pretrain::{pretrain_from_scratch, PretrainConfig};
use crate::theory::{
    corollary_check, lambda_sweep, optimal_lambda, verify_improvement, CorollaryRow, ErrorStats, ImprovementReport,
    MarginProblem, NoiseModel, DEFAULT_NOISE_DIM,
};
use crate::trainer::{parse_variants, run_protocol, TrainConfig};

pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PRETRAIN_LOSS_FILE: &str = "pretrain_loss.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RUNS_FILE: &str = "runs.json";
pub const SWEEP_FILE: &str = "theory_sweep.csv";
pub const VERDICT_FILE: &str = "theory_verdict.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INGESTION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_ASSUMPTION: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "gp2f", version, about = "Dual-branch graph prompt learning for few-shot node classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic source/target SBM pair.
    Gen(GenArgs),
    /// Contrastively pre-train the encoder on the source graph.
    Pretrain(PretrainArgs),
    /// Adapt a frozen checkpoint to the target graph and evaluate.
    Adapt(AdaptArgs),
    /// Check the fusion-estimator theory numerically.
    Theory(TheoryArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// SBM pair spec (JSON); a built-in pair is used when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Directory holding `source_*.txt`.
    #[arg(long, env = "GP2F_DATA_DIR")]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding `target_*.txt`.
    #[arg(long, env = "GP2F_DATA_DIR")]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated variants; overrides the config.
    #[arg(long)]
    pub variant: Option<String>,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn d_dim() -> usize {
    DEFAULT_NOISE_DIM
}
fn d_samples() -> usize {
    200_000
}
fn d_grid() -> usize {
    11
}
fn d_classes() -> usize {
    3
}
fn d_radius() -> f64 {
    1.0
}
fn d_gamma() -> f64 {
    0.5
}
fn d_points() -> usize {
    100
}
fn d_margin_samples() -> usize {
    50_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginConfig {
    #[serde(default = "d_classes")]
    pub classes: usize,
    #[serde(default = "d_radius")]
    pub radius: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_points")]
    pub points: usize,
    #[serde(default = "d_margin_samples")]
    pub samples: usize,
}

impl Default for MarginConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default = "d_sg")]
    pub sigma_g2: f64,
    #[serde(default = "d_sa")]
    pub sigma_a2: f64,
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_samples")]
    pub samples: usize,
    /// Evenly spaced λ values on [0, 1].
    #[serde(default = "d_grid")]
    pub grid_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub margin: MarginConfig,
}

fn d_sg() -> f64 {
    2.0
}
fn d_sa() -> f64 {
    1.0
}
fn d_rho() -> f64 {
    0.3
}

impl Default for TheoryConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl TheoryConfig {
    pub fn stats(&self) -> ErrorStats {
        ErrorStats {
            sigma_g2: self.sigma_g2,
            sigma_a2: self.sigma_a2,
            rho: self.rho,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points;
        (0..n).map(|k| if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 }).collect()
    }
}

/// Source and target used when `gen` gets no spec: three blocks of 60 nodes,
/// with a sparser, noisier, shifted target.
pub fn default_pair_spec() -> SbmPairSpec {
    let source = SbmSpec {
        blocks: 3,
        nodes_per_block: 60,
        p_in: 0.3,
        p_out: 0.02,
        feature_dim: 16,
        center_scale: 1.0,
        noise_scale: 0.5,
        feature_shift: vec![],
    };
    let target = SbmSpec {
        p_in: 0.2,
        p_out: 0.03,
        noise_scale: 0.8,
        feature_shift: vec![0.5; 16],
        ..source.clone()
    };
    SbmPairSpec { source, target }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub version: String,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Gp2fError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Gp2fError::json(path.display().to_string(), e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Gp2fError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digests(paths: &[&Path]) -> Result<Vec<InputDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(InputDigest {
                path: p.to_path_buf(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn parse_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Gp2fError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Gp2fError::Config(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), parse_config)
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Gp2fError::json("manifest config", e))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Gp2fError::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Gp2fError::io(path, e))
}

fn pretty<T: Serialize>(v: &T, context: &str) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Gp2fError::json(context, e))?;
    s.push('\n');
    Ok(s)
}

struct ManifestDraft {
    command: &'static str,
    config: serde_json::Value,
    seeds: Vec<u64>,
    inputs: Vec<InputDigest>,
    started: Instant,
}

impl ManifestDraft {
    fn finish(self, out: &Path, outputs: &[&str]) -> Result<RunManifest> {
        let m = RunManifest {
            command: self.command.into(),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").into(),
        };
        write(&out.join(MANIFEST), &pretty(&m, "manifest")?)?;
        Ok(m)
    }
}

fn graph_file_names(prefix: &str) -> [String; 3] {
    ["features", "edges", "labels"].map(|k| format!("{prefix}_{k}.txt"))
}

pub fn cmd_gen(args: &GenArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let spec: SbmPairSpec = match &args.config {
        Some(p) => parse_config(p)?,
        None => default_pair_spec(),
    };
    spec.source.validate().map_err(|e| e.with_context("source spec"))?;
    spec.target.validate().map_err(|e| e.with_context("target spec"))?;
    let inputs = match &args.config {
        Some(p) => digests(&[p])?,
        None => vec![],
    };
    let (source, target) = generate_sbm_pair(&spec.source, &spec.target, args.seed)?;
    prepare_out(&args.out)?;
    write_graph(&source, &GraphFiles::in_dir(&args.out, "source"))?;
    write_graph(&target, &GraphFiles::in_dir(&args.out, "target"))?;
    let names: Vec<String> = graph_file_names("source").into_iter().chain(graph_file_names("target")).collect();
    let outputs: Vec<&str> = names.iter().map(String::as_str).collect();
    ManifestDraft {
        command: "gen",
        config: to_value(&spec)?,
        seeds: vec![args.seed],
        inputs,
        started,
    }
    .finish(&args.out, &outputs)
}

fn load_prefixed(dir: &Path, prefix: &str) -> Result<(Graph, Vec<PathBuf>)> {
    let files = GraphFiles::in_dir(dir, prefix);
    let labels = files.labels.clone().expect("in_dir sets labels");
    let g = load_graph(&files.features, &files.edges, Some(&labels))?;
    Ok((g, vec![files.features, files.edges, labels]))
}

pub fn cmd_pretrain(args: &PretrainArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let mut cfg: PretrainConfig = read_json(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let (source, mut paths) = load_prefixed(&args.data, "source")?;
    paths.extend(args.config.clone());
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    let inputs = digests(&refs)?;
    let outcome = pretrain_from_scratch(&source, &cfg).map_err(|e| e.with_context("pretrain"))?;
    prepare_out(&args.out)?;
    outcome.checkpoint.save(&args.out.join(CHECKPOINT_FILE))?;
    write(&args.out.join(PRETRAIN_LOSS_FILE), &outcome.loss_csv())?;
    ManifestDraft {
        command: "pretrain",
        config: to_value(&cfg)?,
        seeds: vec![cfg.seed],
        inputs,
        started,
    }
    .finish(&args.out, &[CHECKPOINT_FILE, PRETRAIN_LOSS_FILE])
}

#[derive(Serialize)]
struct AdaptManifestConfig<'a> {
    train: &'a TrainConfig,
    workers: usize,
}

pub fn cmd_adapt(args: &AdaptArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let mut cfg: TrainConfig = read_json(args.config.as_deref())?;
    if let Some(list) = &args.variant {
        cfg.variants = parse_variants(list)?;
    }
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    if args.workers == 0 {
        return Err(Gp2fError::Config("--workers must be at least 1".into()));
    }
    cfg.validate()?;
    let ck = Checkpoint::load(&args.checkpoint)?;
    let (target, mut paths) = load_prefixed(&args.data, "target")?;
    paths.insert(0, args.checkpoint.clone());
    paths.extend(args.config.clone());
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    let inputs = digests(&refs)?;
    let report = run_protocol(&target, &ck, &cfg, args.workers).map_err(|e| e.with_context("adapt"))?;
    prepare_out(&args.out)?;
    write(&args.out.join(RESULTS_FILE), &report.results_csv())?;
    write(&args.out.join(SUMMARY_FILE), &report.summary_json()?)?;
    write(&args.out.join(RUNS_FILE), &pretty(&report.runs, "runs")?)?;
    ManifestDraft {
        command: "adapt",
        config: to_value(&AdaptManifestConfig {
            train: &cfg,
            workers: args.workers,
        })?,
        seeds: cfg.seeds.clone(),
        inputs,
        started,
    }
    .finish(&args.out, &[RESULTS_FILE, SUMMARY_FILE, RUNS_FILE])
}

#[derive(Clone, Debug, Serialize)]
pub struct CorollaryVerdict {
    pub classes: usize,
    pub radius: f64,
    pub gamma: f64,
    pub samples: usize,
    pub rows: Vec<CorollaryRow>,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoryVerdict {
    pub stats: ErrorStats,
    pub improvement: ImprovementReport,
    pub corollary: Option<CorollaryVerdict>,
}

pub fn sweep_csv(rows: &[crate::theory::SweepRow]) -> String {
    let mut s = String::from("lambda,analytic_mse,empirical_mse,std_error\n");
    for r in rows {
        let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e}", r.lambda, r.analytic, r.empirical, r.std_error);
    }
    s
}

/// Writes the verdict even when the stats violate the assumptions; the
/// returned error then carries the violated condition.
pub fn cmd_theory(args: &TheoryArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let mut cfg: TheoryConfig = read_json(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if cfg.grid_points == 0 {
        return Err(Gp2fError::Config("grid_points must be at least 1".into()));
    }
    let inputs = match &args.config {
        Some(p) => digests(&[p])?,
        None => vec![],
    };
    let stats = cfg.stats();
    let improvement = verify_improvement(&stats, cfg.dim, cfg.seed, cfg.samples)?;
    prepare_out(&args.out)?;
    let draft = ManifestDraft {
        command: "theory",
        config: to_value(&cfg)?,
        seeds: vec![cfg.seed],
        inputs,
        started,
    };
    if !improvement.applicable {
        let verdict = TheoryVerdict {
            stats,
            improvement,
            corollary: None,
        };
        write(&args.out.join(VERDICT_FILE), &pretty(&verdict, "verdict")?)?;
        draft.finish(&args.out, &[VERDICT_FILE])?;
        let reason = verdict.improvement.reason.unwrap_or_default();
        return Err(Gp2fError::Assumption(reason));
    }
    let noise = NoiseModel::new(stats, cfg.dim, cfg.seed)?;
    let grid = cfg.grid();
    let rows = lambda_sweep(&noise, &grid, cfg.samples)?;
    let mc = &cfg.margin;
    let problem = MarginProblem::generate(mc.classes, cfg.dim, mc.radius, mc.gamma, mc.points, cfg.seed)?;
    let mut lambdas = grid.clone();
    lambdas.push(optimal_lambda(&stats)?);
    let crow = corollary_check(&problem, &noise, &lambdas, mc.samples)?;
    let verdict = TheoryVerdict {
        stats,
        improvement,
        corollary: Some(CorollaryVerdict {
            classes: mc.classes,
            radius: mc.radius,
            gamma: mc.gamma,
            samples: mc.samples,
            holds: crow.iter().all(|r| r.holds),
            rows: crow,
        }),
    };
    write(&args.out.join(SWEEP_FILE), &sweep_csv(&rows))?;
    write(&args.out.join(VERDICT_FILE), &pretty(&verdict, "verdict")?)?;
    draft.finish(&args.out, &[SWEEP_FILE, VERDICT_FILE])
}

pub fn run(cli: &Cli) -> Result<RunManifest> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Adapt(a) => cmd_adapt(a),
        Command::Theory(a) => cmd_theory(a),
    }
}

pub fn exit_code(e: &Gp2fError) -> i32 {
    match e {
        Gp2fError::Config(_) => EXIT_USAGE,
        Gp2fError::Parse { .. } | Gp2fError::Io { .. } | Gp2fError::Json { .. } | Gp2fError::Validation(_) => {
            EXIT_INGESTION
        }
        Gp2fError::Numeric { .. } => EXIT_NUMERIC,
        Gp2fError::Assumption(_) => EXIT_ASSUMPTION,
        Gp2fError::Dimension { .. } | Gp2fError::Protocol(_) | Gp2fError::Contract(_) => EXIT_OTHER,
    }
}

/// Parse `argv`, run, and return the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(m) => {
            eprintln!("{}: wrote {}", m.command, m.outputs.join(", "));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
