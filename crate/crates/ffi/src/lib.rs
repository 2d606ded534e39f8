//! C ABI over `gp2f`.
//!
//! Every fallible function returns a [`Gp2fStatus`] and writes results
//! through out-pointers. On failure the message is kept per thread and can be
//! read with [`gp2f_last_error`]. Handles are opaque and must be released with
//! their matching `_free` function; strings returned to the caller are
//! released with [`gp2f_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use libc::{c_char, c_double, size_t};

use gp2f::cli::{default_pair_spec, exit_code};
use gp2f::encoder::Checkpoint;
use gp2f::graph::{generate_sbm_pair, load_graph, Graph, SbmPairSpec};
use gp2f::pretrain::{pretrain_from_scratch, PretrainConfig};
use gp2f::theory::{self, ErrorStats, NoiseModel};
use gp2f::trainer::{run_protocol, ProtocolReport, TrainConfig, Variant};
use gp2f::Gp2fError;

/// Result code of every fallible call. Values 1 to 5 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gp2fStatus {
    Ok = 0,
    Other = 1,
    Usage = 2,
    Ingestion = 3,
    Numeric = 4,
    Assumption = 5,
    NullPointer = 6,
    Panic = 7,
}

pub struct Gp2fGraph(Graph);

pub struct Gp2fCheckpoint(Checkpoint);

pub struct Gp2fReport(ProtocolReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Gp2fError) -> Gp2fStatus {
    match exit_code(e) {
        2 => Gp2fStatus::Usage,
        3 => Gp2fStatus::Ingestion,
        4 => Gp2fStatus::Numeric,
        5 => Gp2fStatus::Assumption,
        _ => Gp2fStatus::Other,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Gp2fError),
}

impl From<Gp2fError> for Failure {
    fn from(e: Gp2fError) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Gp2fStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => Gp2fStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            Gp2fStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            Gp2fStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn text(p: *const c_char, what: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Gp2fError::Config(format!("{what} is not valid UTF-8")).into())
}

unsafe fn optional_text(p: *const c_char, what: &'static str) -> Result<Option<String>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(json: Option<String>, what: &str) -> Result<T, Failure> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(&s).map_err(|e| Gp2fError::Config(format!("{what}: {e}")).into()),
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gp2f_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gp2f_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gp2f_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// theory

/// # Safety
/// `lambda_star` must be a valid pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn gp2f_optimal_lambda(
    sigma_g2: c_double,
    sigma_a2: c_double,
    rho: c_double,
    lambda_star: *mut c_double,
) -> Gp2fStatus {
    guard(|| {
        let o = out(lambda_star, "lambda_star")?;
        *o = theory::optimal_lambda(&ErrorStats::new(sigma_g2, sigma_a2, rho)?)?;
        Ok(())
    })
}

/// # Safety
/// `mse` must be a valid pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn gp2f_mse_curve(
    sigma_g2: c_double,
    sigma_a2: c_double,
    rho: c_double,
    lambda: c_double,
    mse: *mut c_double,
) -> Gp2fStatus {
    guard(|| {
        let o = out(mse, "mse")?;
        *o = theory::mse_curve(&ErrorStats::new(sigma_g2, sigma_a2, rho)?, lambda)?;
        Ok(())
    })
}

/// # Safety
/// `mse` must be a valid pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn gp2f_mse_at_optimum(
    sigma_g2: c_double,
    sigma_a2: c_double,
    rho: c_double,
    mse: *mut c_double,
) -> Gp2fStatus {
    guard(|| {
        let o = out(mse, "mse")?;
        *o = theory::mse_at_optimum(&ErrorStats::new(sigma_g2, sigma_a2, rho)?)?;
        Ok(())
    })
}

/// Monte Carlo MSE of the mixed estimator at `lambda` from `samples` draws.
///
/// # Safety
/// `mean` and `std_error` must be valid pointers to writable memory.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn gp2f_monte_carlo_mse(
    sigma_g2: c_double,
    sigma_a2: c_double,
    rho: c_double,
    dim: size_t,
    seed: u64,
    lambda: c_double,
    samples: size_t,
    mean: *mut c_double,
    std_error: *mut c_double,
) -> Gp2fStatus {
    guard(|| {
        let m = out(mean, "mean")?;
        let se = out(std_error, "std_error")?;
        let model = NoiseModel::new(ErrorStats::new(sigma_g2, sigma_a2, rho)?, dim, seed)?;
        let est = theory::monte_carlo_mse(&model, lambda, samples)?;
        *m = est.mean;
        *se = est.std_error;
        Ok(())
    })
}

/// Misclassification bound for `classes` classes, norm bound `radius`,
/// margin `gamma` and embedding MSE `mse`.
///
/// # Safety
/// `unclamped` and `clamped` must be valid pointers to writable memory.
#[no_mangle]
pub unsafe extern "C" fn gp2f_corollary_bound(
    classes: size_t,
    radius: c_double,
    gamma: c_double,
    mse: c_double,
    unclamped: *mut c_double,
    clamped: *mut c_double,
) -> Gp2fStatus {
    guard(|| {
        let u = out(unclamped, "unclamped")?;
        let c = out(clamped, "clamped")?;
        let b = theory::corollary_bound(classes, radius, gamma, mse)?;
        *u = b.unclamped;
        *c = b.clamped;
        Ok(())
    })
}

// graphs

/// Load a graph from whitespace-separated text files. `labels_path` may be null.
///
/// # Safety
/// Paths must be null or NUL-terminated strings; `graph` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp2f_graph_load(
    features_path: *const c_char,
    edges_path: *const c_char,
    labels_path: *const c_char,
    graph: *mut *mut Gp2fGraph,
) -> Gp2fStatus {
    guard(|| {
        let o = out(graph, "graph")?;
        let f = PathBuf::from(text(features_path, "features_path")?);
        let e = PathBuf::from(text(edges_path, "edges_path")?);
        let l = optional_text(labels_path, "labels_path")?.map(PathBuf::from);
        *o = boxed(Gp2fGraph(load_graph(&f, &e, l.as_deref())?));
        Ok(())
    })
}

/// Generate a source/target SBM pair. A null `spec_json` uses the built-in spec.
///
/// # Safety
/// `spec_json` must be null or a NUL-terminated string; `source` and `target` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp2f_graph_generate_pair(
    spec_json: *const c_char,
    seed: u64,
    source: *mut *mut Gp2fGraph,
    target: *mut *mut Gp2fGraph,
) -> Gp2fStatus {
    guard(|| {
        let so = out(source, "source")?;
        let to = out(target, "target")?;
        let spec: SbmPairSpec = match optional_text(spec_json, "spec_json")? {
            None => default_pair_spec(),
            Some(s) => serde_json::from_str(&s).map_err(|e| Gp2fError::Config(format!("spec_json: {e}")))?,
        };
        let (s, t) = generate_sbm_pair(&spec.source, &spec.target, seed)?;
        *so = boxed(Gp2fGraph(s));
        *to = boxed(Gp2fGraph(t));
        Ok(())
    })
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp2f_graph_num_nodes(graph: *const Gp2fGraph) -> size_t {
    graph.as_ref().map_or(0, |g| g.0.num_nodes())
}

/// Undirected edge count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp2f_graph_num_edges(graph: *const Gp2fGraph) -> size_t {
    graph.as_ref().map_or(0, |g| g.0.num_edges())
}

/// # Safety
/// `graph` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn gp2f_graph_free(graph: *mut Gp2fGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

// checkpoints

/// Pre-train an encoder on `source`. A null `config_json` uses defaults.
///
/// # Safety
/// `source` must be a live handle, `config_json` null or NUL-terminated, `checkpoint` writable.
#[no_mangle]
pub unsafe extern "C" fn gp2f_pretrain(
    source: *const Gp2fGraph,
    config_json: *const c_char,
    checkpoint: *mut *mut Gp2fCheckpoint,
) -> Gp2fStatus {
    guard(|| {
        let o = out(checkpoint, "checkpoint")?;
        let g = handle(source, "source")?;
        let cfg: PretrainConfig = parse_json(optional_text(config_json, "config_json")?, "config_json")?;
        *o = boxed(Gp2fCheckpoint(pretrain_from_scratch(&g.0, &cfg)?.checkpoint));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `checkpoint` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gp2f_checkpoint_load(path: *const c_char, checkpoint: *mut *mut Gp2fCheckpoint) -> Gp2fStatus {
    guard(|| {
        let o = out(checkpoint, "checkpoint")?;
        let p = PathBuf::from(text(path, "path")?);
        *o = boxed(Gp2fCheckpoint(Checkpoint::load(&p)?));
        Ok(())
    })
}

/// # Safety
/// `checkpoint` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gp2f_checkpoint_save(checkpoint: *const Gp2fCheckpoint, path: *const c_char) -> Gp2fStatus {
    guard(|| {
        let ck = handle(checkpoint, "checkpoint")?;
        let p = PathBuf::from(text(path, "path")?);
        ck.0.save(&p)?;
        Ok(())
    })
}

/// Encoder width, or 0 for a null handle.
///
/// # Safety
/// `checkpoint` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp2f_checkpoint_hidden_dim(checkpoint: *const Gp2fCheckpoint) -> size_t {
    checkpoint.as_ref().map_or(0, |c| c.0.encoder.hidden_dim())
}

/// # Safety
/// `checkpoint` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn gp2f_checkpoint_free(checkpoint: *mut Gp2fCheckpoint) {
    if !checkpoint.is_null() {
        drop(Box::from_raw(checkpoint));
    }
}

// protocol

/// Run the few-shot protocol on `target`. A null `config_json` uses defaults.
///
/// # Safety
/// `target` and `checkpoint` must be live handles, `config_json` null or
/// NUL-terminated, `report` writable.
#[no_mangle]
pub unsafe extern "C" fn gp2f_run_protocol(
    target: *const Gp2fGraph,
    checkpoint: *const Gp2fCheckpoint,
    config_json: *const c_char,
    workers: size_t,
    report: *mut *mut Gp2fReport,
) -> Gp2fStatus {
    guard(|| {
        let o = out(report, "report")?;
        let g = handle(target, "target")?;
        let ck = handle(checkpoint, "checkpoint")?;
        let cfg: TrainConfig = parse_json(optional_text(config_json, "config_json")?, "config_json")?;
        *o = boxed(Gp2fReport(run_protocol(&g.0, &ck.0, &cfg, workers)?));
        Ok(())
    })
}

/// Number of individual runs in the report, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp2f_report_num_runs(report: *const Gp2fReport) -> size_t {
    report.as_ref().map_or(0, |r| r.0.runs.len())
}

/// Mean and sample standard deviation of a variant's accuracy.
///
/// # Safety
/// `report` must be a live handle, `variant` NUL-terminated, `mean` and `std` writable.
#[no_mangle]
pub unsafe extern "C" fn gp2f_report_accuracy(
    report: *const Gp2fReport,
    variant: *const c_char,
    mean: *mut c_double,
    std: *mut c_double,
) -> Gp2fStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let m = out(mean, "mean")?;
        let s = out(std, "std")?;
        let v: Variant = text(variant, "variant")?.parse()?;
        let summary = r
            .0
            .summary(v)
            .ok_or_else(|| Gp2fError::Config(format!("variant {} was not run", v.name())))?;
        *m = summary.mean;
        *s = summary.std;
        Ok(())
    })
}

/// Per-run results as CSV. Free with [`gp2f_string_free`]. Null on a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp2f_report_results_csv(report: *const Gp2fReport) -> *mut c_char {
    report.as_ref().map_or(ptr::null_mut(), |r| into_c_string(r.0.results_csv()))
}

/// Per-variant summary as JSON. Free with [`gp2f_string_free`]. Null on failure.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gp2f_report_summary_json(report: *const Gp2fReport) -> *mut c_char {
    let Some(r) = report.as_ref() else {
        set_error("null pointer passed for report".into());
        return ptr::null_mut();
    };
    match r.0.summary_json() {
        Ok(s) => into_c_string(s),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `report` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn gp2f_report_free(report: *mut Gp2fReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
