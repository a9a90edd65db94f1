//! C ABI over the fedcredit simulator.
//!
//! Every fallible call returns an [`FcStatus`]; on failure the message is
//! available from [`fc_last_error_message`] on the same thread. Datasets,
//! plans, experiments and summaries are opaque handles written through an
//! out-pointer and released with the matching `*_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use fedcredit::data::{load_csv, synthesize, CsvSchema, Dataset, SyntheticSpec};
use fedcredit::eval::{auc, ModelKind};
use fedcredit::fed::weighted_average;
use fedcredit::harness::{run_grid, Baseline, ExperimentConfig, Summary};
use fedcredit::numerics::RngStream;
use fedcredit::partition::{plan_from_named, PartitionPlan, Scheme};
use fedcredit::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    NotFound = 5,
    Runtime = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FcScheme {
    Balanced = 0,
    Dominant60 = 1,
    Dominant80 = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FcModel {
    Mlp = 0,
    Gbdt = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FcBaseline {
    LocalNonDominant = 0,
    LocalDominant = 1,
    Centralised = 2,
}

impl From<FcScheme> for Scheme {
    fn from(s: FcScheme) -> Self {
        match s {
            FcScheme::Balanced => Scheme::Balanced,
            FcScheme::Dominant60 => Scheme::Dominant60,
            FcScheme::Dominant80 => Scheme::Dominant80,
        }
    }
}

impl From<FcModel> for ModelKind {
    fn from(m: FcModel) -> Self {
        match m {
            FcModel::Mlp => ModelKind::Mlp,
            FcModel::Gbdt => ModelKind::Gbdt,
        }
    }
}

impl From<FcBaseline> for Baseline {
    fn from(b: FcBaseline) -> Self {
        match b {
            FcBaseline::LocalNonDominant => Baseline::LocalNonDominant,
            FcBaseline::LocalDominant => Baseline::LocalDominant,
            FcBaseline::Centralised => Baseline::Centralised,
        }
    }
}

/// A dataset held by the library.
pub struct FcDataset(Dataset);

/// A client partition plan.
pub struct FcPlan(PartitionPlan);

/// A loaded experiment configuration.
pub struct FcExperiment(ExperimentConfig);

/// Per-cell results of a finished experiment.
pub struct FcSummary(Summary);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config { .. } => FcStatus::Config,
            Error::Io(_) | Error::Csv { .. } | Error::Record { .. } => FcStatus::Io,
            Error::InvalidInput(_)
            | Error::Shape { .. }
            | Error::SingleClass(_)
            | Error::TooFewSamples { .. }
            | Error::AllMissingColumn(_)
            | Error::ArchitectureMismatch => FcStatus::InvalidArgument,
            _ => FcStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: FcStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            FcStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(FcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FcStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(FcStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(FcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(FcStatus::NullPointer, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(FcStatus::NullPointer, "output pointer is null"));
    }
    *out = value;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next status-returning call on this thread.
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Synthetic class-conditional Gaussian data. `priors` holds `n_classes`
/// class probabilities.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_synthesize(
    n_samples: usize,
    n_features: usize,
    priors: *const f64,
    n_classes: usize,
    separation: f64,
    seed: u64,
    out: *mut *mut FcDataset,
) -> FcStatus {
    guard(|| {
        let spec = SyntheticSpec {
            n_samples,
            n_features,
            n_classes,
            class_priors: slice(priors, n_classes, "priors")?.to_vec(),
            class_separation: separation,
            noise_std: 1.0,
        };
        let ds = synthesize(&spec, &mut RngStream::new(seed, 0))?;
        emit(out, FcDataset(ds))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fc_dataset_load_csv(
    path: *const c_char,
    label_column: *const c_char,
    out: *mut *mut FcDataset,
) -> FcStatus {
    guard(|| {
        let path = cstr(path, "path")?;
        let schema = CsvSchema::new(cstr(label_column, "label_column")?);
        emit(out, FcDataset(load_csv(path, &schema)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fc_dataset_n_samples(ds: *const FcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_samples())
}

#[no_mangle]
pub unsafe extern "C" fn fc_dataset_n_features(ds: *const FcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_features())
}

/// Number of samples of each class, written to `counts[0..n_classes]`.
#[no_mangle]
pub unsafe extern "C" fn fc_dataset_class_counts(
    ds: *const FcDataset,
    counts: *mut usize,
    n_classes: usize,
) -> FcStatus {
    guard(|| {
        let d = handle(ds, "dataset")?;
        let c = d.0.class_counts();
        if n_classes != c.len() {
            return Err(fail(
                FcStatus::InvalidArgument,
                format!("dataset has {} classes, buffer holds {n_classes}", c.len()),
            ));
        }
        if counts.is_null() {
            return Err(fail(FcStatus::NullPointer, "counts is null"));
        }
        std::slice::from_raw_parts_mut(counts, n_classes).copy_from_slice(&c);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fc_dataset_free(ds: *mut FcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Plan for a named scheme. A non-zero `n_samples` also fixes shard counts.
#[no_mangle]
pub unsafe extern "C" fn fc_plan_named(
    n_clients: usize,
    scheme: FcScheme,
    n_samples: usize,
    out: *mut *mut FcPlan,
) -> FcStatus {
    guard(|| {
        let mut plan = plan_from_named(n_clients, scheme.into())?;
        if n_samples > 0 {
            plan = plan.with_counts(n_samples)?;
        }
        emit(out, FcPlan(plan))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fc_plan_n_clients(plan: *const FcPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.n_clients)
}

/// Percentage share of client `i`, or 0 when out of range.
#[no_mangle]
pub unsafe extern "C" fn fc_plan_proportion(plan: *const FcPlan, i: usize) -> u32 {
    plan.as_ref().and_then(|p| p.0.proportions.get(i).copied()).unwrap_or(0)
}

/// Shard size of client `i`, or 0 when the plan has no counts.
#[no_mangle]
pub unsafe extern "C" fn fc_plan_count(plan: *const FcPlan, i: usize) -> usize {
    plan.as_ref()
        .and_then(|p| p.0.counts.as_ref()?.get(i).copied())
        .unwrap_or(0)
}

/// Index of the dominant client, or -1 for balanced plans.
#[no_mangle]
pub unsafe extern "C" fn fc_plan_dominant_index(plan: *const FcPlan) -> i64 {
    plan.as_ref().and_then(|p| p.0.dominant_index).map_or(-1, |i| i as i64)
}

/// Writes the dash-joined label (e.g. `80-10-10`) into `buf`, NUL terminated.
/// Returns the label length; the label is truncated when `len` is too small.
#[no_mangle]
pub unsafe extern "C" fn fc_plan_label(plan: *const FcPlan, buf: *mut c_char, len: usize) -> usize {
    let Some(p) = plan.as_ref() else { return 0 };
    let label = p.0.label();
    if !buf.is_null() && len > 0 {
        let n = label.len().min(len - 1);
        std::ptr::copy_nonoverlapping(label.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
    }
    label.len()
}

#[no_mangle]
pub unsafe extern "C" fn fc_plan_free(plan: *mut FcPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// ROC AUC of `scores` against 0/1 `labels`, ties counted as one half.
#[no_mangle]
pub unsafe extern "C" fn fc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> FcStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l: Vec<bool> = slice(labels, n, "labels")?.iter().map(|&v| v != 0).collect();
        write(out, auc(s, &l)?)
    })
}

/// Sample-weighted FedAvg of `n_updates` row-major vectors of length `len`,
/// clamped to the participants' coordinatewise range. Writes `len` values.
#[no_mangle]
pub unsafe extern "C" fn fc_fedavg(
    updates: *const f64,
    n_updates: usize,
    len: usize,
    sample_counts: *const u64,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let all = slice(updates, n_updates * len, "updates")?;
        let counts = slice(sample_counts, n_updates, "sample_counts")?;
        let rows: Vec<&[f64]> = (0..n_updates).map(|i| &all[i * len..(i + 1) * len]).collect();
        let avg = weighted_average(&rows, counts)?;
        if out.is_null() {
            return Err(fail(FcStatus::NullPointer, "out is null"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&avg);
        Ok(())
    })
}

/// Loads and validates a TOML experiment config.
#[no_mangle]
pub unsafe extern "C" fn fc_experiment_load(path: *const c_char, out: *mut *mut FcExperiment) -> FcStatus {
    guard(|| {
        let cfg = ExperimentConfig::load(cstr(path, "path")?)?;
        emit(out, FcExperiment(cfg))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fc_experiment_set_output_dir(exp: *mut FcExperiment, dir: *const c_char) -> FcStatus {
    guard(|| {
        let dir = PathBuf::from(cstr(dir, "dir")?);
        let e = exp
            .as_mut()
            .ok_or_else(|| fail(FcStatus::NullPointer, "experiment is null"))?;
        e.0.output_dir = dir;
        Ok(())
    })
}

/// Runs the grid, writing records and summaries to the output directory.
#[no_mangle]
pub unsafe extern "C" fn fc_experiment_run(exp: *const FcExperiment, out: *mut *mut FcSummary) -> FcStatus {
    guard(|| {
        let e = handle(exp, "experiment")?;
        let outcome = run_grid(&e.0)?;
        emit(out, FcSummary(outcome.summary))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fc_experiment_free(exp: *mut FcExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

#[no_mangle]
pub unsafe extern "C" fn fc_summary_n_cells(summary: *const FcSummary) -> usize {
    summary.as_ref().map_or(0, |s| s.0.cells.len())
}

/// Mean federated test AUC of one cell. `FC_STATUS_NOT_FOUND` when the cell
/// is absent or has no complete run.
#[no_mangle]
pub unsafe extern "C" fn fc_summary_federated_auc(
    summary: *const FcSummary,
    model: FcModel,
    n_clients: usize,
    scheme: FcScheme,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let s = handle(summary, "summary")?;
        let v =
            s.0.cell(model.into(), n_clients, scheme.into())
                .and_then(|c| c.federated_auc())
                .ok_or_else(|| fail(FcStatus::NotFound, "no complete run for this cell"))?;
        write(out, v)
    })
}

/// Mean relative AUC improvement (percent) of the federated model over a baseline.
#[no_mangle]
pub unsafe extern "C" fn fc_summary_improvement(
    summary: *const FcSummary,
    model: FcModel,
    n_clients: usize,
    scheme: FcScheme,
    baseline: FcBaseline,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let s = handle(summary, "summary")?;
        let v =
            s.0.cell(model.into(), n_clients, scheme.into())
                .and_then(|c| c.improvement(baseline.into()))
                .ok_or_else(|| fail(FcStatus::NotFound, "no complete run for this cell"))?;
        write(out, v)
    })
}

#[no_mangle]
pub unsafe extern "C" fn fc_summary_free(summary: *mut FcSummary) {
    if !summary.is_null() {
        drop(Box::from_raw(summary));
    }
}
