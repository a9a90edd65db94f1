use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataConfig, ExperimentConfig, StandardizeMode};
use super::summary::{summarize, write_summary, Summary};
use crate::data::{load_csv, synthesize, upsample, Dataset, FeatureSelection, ImputeStats, Standardizer};
use crate::error::{Error, Result};
use crate::eval::{evaluate_probs, fold_split, kfold_indices, MetricsRecord, ModelKind, Scenario};
use crate::fed::{make_clients, run_centralized, run_federated, run_local_baseline, GlobalModel, RoundReport, Trainer};
use crate::model::{Mlp, MlpArchitecture};
use crate::numerics::RngStream;
use crate::partition::{apply_plan, plan_from_named, PartitionPlan, Scheme};

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const RECORDS_FILE: &str = "records.jsonl";
pub const ROUNDS_FILE: &str = "rounds.jsonl";

const FOLD_STREAM: u64 = 1;
const PARTITION_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const UPSAMPLE_STREAM: u64 = 3;

/// One line of the record stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fingerprint: String,
    pub version: String,
    pub metrics: MetricsRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PartitionPlan>,
    pub wall_clock_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub fingerprint: String,
    pub model: ModelKind,
    pub n_clients: usize,
    pub scheme: Scheme,
    pub seed: u64,
    pub fold: usize,
    pub report: RoundReport,
}

#[derive(Debug)]
pub struct GridOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// SHA-256 of the canonical JSON form of the config, hex encoded. The output
/// directory and worker count do not change results and are left out.
pub fn fingerprint(cfg: &ExperimentConfig) -> Result<String> {
    let mut cfg = cfg.clone();
    cfg.output_dir = PathBuf::new();
    cfg.workers = 0;
    let canonical = serde_json::to_vec(&cfg)?;
    Ok(hex(&Sha256::digest(&canonical)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of one grid cell. Centralised runs pass `scheme = None` and one client.
pub fn cell_seed(master: u64, model: ModelKind, n_clients: usize, scheme: Option<Scheme>, fold: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(model.as_str().as_bytes());
    h.update((n_clients as u64).to_le_bytes());
    h.update(scheme.map_or("centralised", Scheme::as_str).as_bytes());
    h.update((fold as u64).to_le_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

pub fn load_data(cfg: &DataConfig) -> Result<Dataset> {
    match cfg {
        DataConfig::Synthetic { seed, spec } => synthesize(spec, &mut RngStream::new(*seed, 0)),
        DataConfig::Csv { path, schema } => {
            if !path.is_file() {
                return Err(Error::Config {
                    location: path.display().to_string(),
                    field: "data.csv.path".into(),
                    message: "data file not found".into(),
                });
            }
            load_csv(path, schema)
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Job {
    Centralised {
        model: ModelKind,
    },
    Cell {
        model: ModelKind,
        n_clients: usize,
        scheme: Scheme,
    },
}

struct FoldData {
    seed: u64,
    fold: usize,
    train: Dataset,
    test: Dataset,
}

/// Imputation and feature selection, fitted on the training fold only.
fn prepare_fold(ds: &Dataset, folds: &[Vec<usize>], fold: usize, seed: u64, drop_features: usize) -> Result<FoldData> {
    let (mut train, mut test) = fold_split(ds, folds, fold)?;
    if train.missing_count() > 0 || test.missing_count() > 0 {
        let stats = ImputeStats::fit(&train)?;
        test = stats.apply_holdout(&test)?;
        train = stats.apply(&train)?;
    }
    if drop_features > 0 {
        let sel = FeatureSelection::fit(&train, drop_features)?;
        train = sel.apply(&train);
        test = sel.apply(&test);
    }
    Ok(FoldData {
        seed,
        fold,
        train,
        test,
    })
}

fn trainer(cfg: &ExperimentConfig, model: ModelKind, n_features: usize, n_classes: usize) -> Result<Trainer> {
    Ok(match model {
        ModelKind::Mlp => Trainer::Mlp {
            model: Mlp::new(MlpArchitecture::for_task(
                n_features,
                &cfg.mlp.hidden,
                cfg.mlp.activation,
                n_classes,
            )?),
            sgd: cfg.mlp.sgd(),
        },
        ModelKind::Gbdt => Trainer::Gbdt {
            trees: cfg.gbdt.trees.clone(),
            cnn: cfg.gbdt.cnn(),
        },
    })
}

/// Test-set AUC, plus MSE for multiclass labels.
pub fn evaluate(model: &GlobalModel, test: &Dataset) -> Result<(f64, Option<f64>)> {
    let probs = model.predict_proba(test.features())?;
    evaluate_probs(&probs, test.labels(), test.label_kind())
}

fn fit_stats(mode: StandardizeMode, ds: &Dataset) -> Result<Option<Standardizer>> {
    match mode {
        StandardizeMode::None => Ok(None),
        _ => Standardizer::fit(ds).map(Some),
    }
}

fn transform(stats: &Option<Standardizer>, ds: &Dataset, holdout: bool) -> Result<Dataset> {
    match stats {
        None => Ok(ds.clone()),
        Some(s) if holdout => s.apply_holdout(ds),
        Some(s) => s.apply(ds),
    }
}

struct JobOutput {
    records: Vec<RunRecord>,
    rounds: Vec<RoundRecord>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    fingerprint: &'a str,
}

impl Ctx<'_> {
    fn record(&self, metrics: MetricsRecord, plan: Option<PartitionPlan>, started: Instant) -> RunRecord {
        RunRecord {
            fingerprint: self.fingerprint.to_string(),
            version: SOFTWARE_VERSION.to_string(),
            metrics,
            plan,
            wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }

    fn metrics(
        &self,
        scenario: Scenario,
        model: ModelKind,
        fd: &FoldData,
        auc: f64,
        mse: Option<f64>,
    ) -> MetricsRecord {
        MetricsRecord {
            seed: fd.seed,
            fold: fd.fold,
            mse,
            ..MetricsRecord::new(scenario, model, 1, "100", auc)
        }
    }

    fn run(&self, job: Job, fd: &FoldData) -> Result<JobOutput> {
        match job {
            Job::Centralised { model } => self.centralised(model, fd),
            Job::Cell {
                model,
                n_clients,
                scheme,
            } => self.cell(model, n_clients, scheme, fd),
        }
    }

    fn centralised(&self, model: ModelKind, fd: &FoldData) -> Result<JobOutput> {
        let started = Instant::now();
        let rng = RngStream::new(cell_seed(fd.seed, model, 1, None, fd.fold), 0);
        let stats = fit_stats(self.cfg.preprocess.standardize, &fd.train)?;
        let mut train = transform(&stats, &fd.train, false)?;
        if self.cfg.preprocess.upsample {
            train = upsample(&train, &mut rng.substream(UPSAMPLE_STREAM));
        }
        let test = transform(&stats, &fd.test, true)?;
        let t = trainer(self.cfg, model, train.n_features(), train.n_classes())?;
        let m = run_centralized(&train, &t, self.cfg.federation(model), &rng.substream(TRAIN_STREAM))?;
        let (auc, mse) = evaluate(&m, &test)?;
        let metrics = self.metrics(Scenario::Centralised, model, fd, auc, mse);
        Ok(JobOutput {
            records: vec![self.record(metrics, None, started)],
            rounds: Vec::new(),
        })
    }

    fn cell(&self, model: ModelKind, n_clients: usize, scheme: Scheme, fd: &FoldData) -> Result<JobOutput> {
        let started = Instant::now();
        let pp = &self.cfg.preprocess;
        let rng = RngStream::new(cell_seed(fd.seed, model, n_clients, Some(scheme), fd.fold), 0);
        let plan = plan_from_named(n_clients, scheme)?;
        let (shards, plan) = apply_plan(&fd.train, &plan, &mut rng.substream(PARTITION_STREAM))?;

        let global_stats = match pp.standardize {
            StandardizeMode::Global => fit_stats(pp.standardize, &fd.train)?,
            _ => None,
        };
        let mut client_stats = Vec::with_capacity(n_clients);
        let mut prepared = Vec::with_capacity(n_clients);
        for (i, shard) in shards.iter().enumerate() {
            let stats = match pp.standardize {
                StandardizeMode::PerClient => fit_stats(pp.standardize, shard)?,
                _ => global_stats.clone(),
            };
            let mut ds = transform(&stats, shard, false)?;
            if pp.upsample {
                ds = upsample(&ds, &mut rng.substream(UPSAMPLE_STREAM).substream(i as u64));
            }
            prepared.push(ds);
            client_stats.push(stats);
        }
        let server_stats = match pp.standardize {
            StandardizeMode::PerClient => {
                let parts: Vec<Standardizer> = client_stats.iter().flatten().cloned().collect();
                Some(Standardizer::pooled(&parts)?)
            }
            _ => global_stats.clone(),
        };

        let t = trainer(self.cfg, model, fd.train.n_features(), fd.train.n_classes())?;
        let fed_cfg = self.cfg.federation(model);
        let base = rng.substream(TRAIN_STREAM);
        let label = plan.label();
        let tag = |mut m: MetricsRecord| {
            m.n_clients = n_clients;
            m.distribution = label.clone();
            m.scheme = Some(scheme);
            m
        };

        let mut records = Vec::with_capacity(n_clients + 1);
        let mut clients = make_clients(prepared.clone(), &base);
        let locals = run_local_baseline(&mut clients, &t, fed_cfg, &base)?;
        for (i, (m, stats)) in locals.iter().zip(&client_stats).enumerate() {
            let (auc, mse) = evaluate(m, &transform(stats, &fd.test, true)?)?;
            let mut metrics = tag(self.metrics(Scenario::Local, model, fd, auc, mse));
            metrics.client = Some(i);
            records.push(self.record(metrics, Some(plan.clone()), started));
        }

        let mut clients = make_clients(prepared, &base);
        let (global, reports) = run_federated(&mut clients, &t, fed_cfg, &base, None)?;
        let (auc, mse) = evaluate(&global, &transform(&server_stats, &fd.test, true)?)?;
        let metrics = tag(self.metrics(Scenario::Federated, model, fd, auc, mse));
        records.push(self.record(metrics, Some(plan), started));

        let rounds = if self.cfg.record_rounds {
            reports
                .into_iter()
                .map(|report| RoundRecord {
                    fingerprint: self.fingerprint.to_string(),
                    model,
                    n_clients,
                    scheme,
                    seed: fd.seed,
                    fold: fd.fold,
                    report,
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(JobOutput { records, rounds })
    }
}

struct Sink {
    records: File,
    rounds: Option<File>,
    collected: Vec<RunRecord>,
}

impl Sink {
    fn write(&mut self, out: JobOutput) -> Result<()> {
        let mut buf = Vec::new();
        for r in &out.records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        self.records.write_all(&buf)?;
        self.records.flush()?;
        if let Some(f) = self.rounds.as_mut() {
            let mut buf = Vec::new();
            for r in &out.rounds {
                serde_json::to_writer(&mut buf, r)?;
                buf.push(b'\n');
            }
            f.write_all(&buf)?;
            f.flush()?;
        }
        self.collected.extend(out.records);
        Ok(())
    }
}

/// Runs every grid cell under k-fold cross-validation, streaming records to
/// `records.jsonl` in the output directory as each job finishes, then writes
/// the summary tables. The data source is loaded before anything is written.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridOutcome> {
    cfg.validate()?;
    let ds = load_data(&cfg.data)?;
    let fp = fingerprint(cfg)?;

    let mut folds = Vec::new();
    for &seed in &cfg.seeds {
        let split = kfold_indices(ds.n_samples(), cfg.folds, &mut RngStream::new(seed, FOLD_STREAM))?;
        for fold in 0..cfg.n_folds_run() {
            folds.push(prepare_fold(&ds, &split, fold, seed, cfg.preprocess.drop_features)?);
        }
    }
    let mut jobs: Vec<(Job, &FoldData)> = Vec::new();
    for fd in &folds {
        for &model in &cfg.models {
            jobs.push((Job::Centralised { model }, fd));
            for &n_clients in &cfg.client_counts {
                for &scheme in &cfg.schemes {
                    jobs.push((
                        Job::Cell {
                            model,
                            n_clients,
                            scheme,
                        },
                        fd,
                    ));
                }
            }
        }
    }

    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml()?)?;
    let records_path = cfg.output_dir.join(RECORDS_FILE);
    let mut files = vec![records_path.clone()];
    let rounds = if cfg.record_rounds {
        let p = cfg.output_dir.join(ROUNDS_FILE);
        files.push(p.clone());
        Some(File::create(p)?)
    } else {
        None
    };
    let sink = Mutex::new(Sink {
        records: File::create(&records_path)?,
        rounds,
        collected: Vec::new(),
    });
    let ctx = Ctx { cfg, fingerprint: &fp };
    let run_one = |(job, fd): &(Job, &FoldData)| -> Result<()> {
        let out = ctx.run(*job, fd)?;
        sink.lock()
            .map_err(|_| Error::invalid("record writer poisoned"))?
            .write(out)
    };
    if cfg.workers == 1 {
        jobs.iter().try_for_each(run_one)?;
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        pool.install(|| jobs.par_iter().try_for_each(run_one))?;
    }

    let records = sink
        .into_inner()
        .map_err(|_| Error::invalid("record writer poisoned"))?
        .collected;
    let metrics: Vec<MetricsRecord> = records.iter().map(|r| r.metrics.clone()).collect();
    let summary = summarize(&metrics)?;
    files.extend(write_summary(&summary, &cfg.output_dir)?);
    Ok(GridOutcome {
        records,
        summary,
        files,
    })
}

/// Reads a record stream. A truncated final line (from an interrupted run) is
/// ignored; any other malformed line is an error.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => {
                return Err(Error::Record {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}
