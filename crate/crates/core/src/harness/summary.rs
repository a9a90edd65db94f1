use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{improvement, split_dominant_metrics, MetricsRecord, ModelKind, Scenario};
use crate::partition::{PartitionPlan, Scheme};

/// Baselines a federated model is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    LocalNonDominant,
    LocalDominant,
    Centralised,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [
        Baseline::LocalNonDominant,
        Baseline::LocalDominant,
        Baseline::Centralised,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::LocalNonDominant => "local_non_dominant",
            Baseline::LocalDominant => "local_dominant",
            Baseline::Centralised => "centralised",
        }
    }
}

/// Paired metrics of one (seed, fold) run of a grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRun {
    pub seed: u64,
    pub fold: usize,
    pub federated_auc: f64,
    pub dominant_auc: f64,
    pub non_dominant_auc: f64,
    pub centralised_auc: Option<f64>,
    pub federated_mse: Option<f64>,
    pub dominant_mse: Option<f64>,
    pub non_dominant_mse: Option<f64>,
    pub centralised_mse: Option<f64>,
}

impl PairedRun {
    pub fn baseline_auc(&self, b: Baseline) -> Option<f64> {
        match b {
            Baseline::LocalNonDominant => Some(self.non_dominant_auc),
            Baseline::LocalDominant => Some(self.dominant_auc),
            Baseline::Centralised => self.centralised_auc,
        }
    }

    /// Relative AUC improvement of the federated model over `b`, in percent.
    pub fn improvement(&self, b: Baseline) -> Option<f64> {
        improvement(self.federated_auc, self.baseline_auc(b)?).ok()
    }
}

/// One (model, n_clients, scheme) cell. Means are over its complete runs; a
/// cell without any complete run has `runs` empty and no values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: ModelKind,
    pub n_clients: usize,
    pub scheme: Scheme,
    pub distribution: String,
    pub runs: Vec<PairedRun>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

impl CellSummary {
    pub fn federated_auc(&self) -> Option<f64> {
        mean(self.runs.iter().map(|r| Some(r.federated_auc)))
    }

    pub fn baseline_auc(&self, b: Baseline) -> Option<f64> {
        mean(self.runs.iter().map(|r| r.baseline_auc(b)))
    }

    /// Mean over runs of the per-run relative improvement.
    pub fn improvement(&self, b: Baseline) -> Option<f64> {
        mean(self.runs.iter().map(|r| r.improvement(b)))
    }

    fn mse(&self, f: impl Fn(&PairedRun) -> Option<f64>) -> Option<f64> {
        mean(self.runs.iter().map(f))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
}

impl Summary {
    pub fn cell(&self, model: ModelKind, n_clients: usize, scheme: Scheme) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.n_clients == n_clients && c.scheme == scheme)
    }
}

type CellKey = (ModelKind, usize, Scheme);
type RunKey = (u64, usize);

fn plan_from_label(label: &str) -> Result<PartitionPlan> {
    let proportions = label
        .split('-')
        .map(|p| {
            p.parse::<u32>()
                .map_err(|_| Error::invalid(format!("bad distribution label `{label}`")))
        })
        .collect::<Result<Vec<u32>>>()?;
    PartitionPlan::from_proportions(proportions)
}

/// Pairs federated, local and centralised records by cell and (seed, fold).
/// A run missing its federated record or any local record is left out;
/// a missing centralised record only blanks the centralised comparison.
pub fn summarize(records: &[MetricsRecord]) -> Result<Summary> {
    let mut centralised: BTreeMap<(ModelKind, u64, usize), &MetricsRecord> = BTreeMap::new();
    let mut federated: BTreeMap<CellKey, BTreeMap<RunKey, &MetricsRecord>> = BTreeMap::new();
    let mut local: BTreeMap<CellKey, BTreeMap<RunKey, Vec<MetricsRecord>>> = BTreeMap::new();
    let mut labels: BTreeMap<CellKey, String> = BTreeMap::new();
    for r in records {
        let run = (r.seed, r.fold);
        if r.scenario == Scenario::Centralised {
            centralised.insert((r.model, r.seed, r.fold), r);
            continue;
        }
        let scheme = r
            .scheme
            .ok_or_else(|| Error::invalid(format!("{} record without a scheme", r.scenario.as_str())))?;
        let key = (r.model, r.n_clients, scheme);
        labels.entry(key).or_insert_with(|| r.distribution.clone());
        match r.scenario {
            Scenario::Federated => {
                federated.entry(key).or_default().insert(run, r);
            }
            _ => local.entry(key).or_default().entry(run).or_default().push(r.clone()),
        }
    }

    let mut cells = Vec::with_capacity(labels.len());
    for (key, label) in labels {
        let plan = plan_from_label(&label)?;
        let mut runs = Vec::new();
        let fed_runs = federated.get(&key);
        for (run, locals) in local.get(&key).into_iter().flatten() {
            let Some(fed) = fed_runs.and_then(|f| f.get(run)) else {
                continue;
            };
            if locals.len() != key.1 {
                continue;
            }
            let (dom, non) = split_dominant_metrics(locals, &plan)?;
            let cent = centralised.get(&(key.0, run.0, run.1));
            runs.push(PairedRun {
                seed: run.0,
                fold: run.1,
                federated_auc: fed.auc,
                dominant_auc: dom.auc,
                non_dominant_auc: non.auc,
                centralised_auc: cent.map(|c| c.auc),
                federated_mse: fed.mse,
                dominant_mse: dom.mse,
                non_dominant_mse: non.mse,
                centralised_mse: cent.and_then(|c| c.mse),
            });
        }
        cells.push(CellSummary {
            model: key.0,
            n_clients: key.1,
            scheme: key.2,
            distribution: label,
            runs,
        });
    }
    Ok(Summary { cells })
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    }
}

fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush()?;
    Ok(())
}

/// Heatmap of mean improvement over `baseline`: rows are schemes, columns
/// client counts, `NA` where the cell has no complete run.
pub fn heatmap(summary: &Summary, model: ModelKind, baseline: Baseline) -> Vec<Vec<String>> {
    let cells: Vec<&CellSummary> = summary.cells.iter().filter(|c| c.model == model).collect();
    let mut counts: Vec<usize> = cells.iter().map(|c| c.n_clients).collect();
    counts.sort_unstable();
    counts.dedup();
    let mut schemes: Vec<Scheme> = cells.iter().map(|c| c.scheme).collect();
    schemes.sort_unstable();
    schemes.dedup();
    let mut rows = vec![std::iter::once("distribution".to_string())
        .chain(counts.iter().map(usize::to_string))
        .collect::<Vec<_>>()];
    for s in schemes {
        let mut row = vec![s.to_string()];
        for &n in &counts {
            row.push(fmt(summary.cell(model, n, s).and_then(|c| c.improvement(baseline))));
        }
        rows.push(row);
    }
    rows
}

/// Writes `summary.csv` (one row per cell), `table.csv` (one row per cell and
/// scenario) and one `heatmap_<model>_vs_<baseline>.csv` per model and baseline.
pub fn write_summary(summary: &Summary, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut rows = vec![[
        "model",
        "n_clients",
        "scheme",
        "distribution",
        "runs",
        "federated_auc",
        "local_dominant_auc",
        "local_non_dominant_auc",
        "centralised_auc",
        "improvement_vs_local_non_dominant",
        "improvement_vs_local_dominant",
        "improvement_vs_centralised",
    ]
    .map(String::from)
    .to_vec()];
    let mut table = vec![["model", "n_clients", "distribution", "scenario", "mse", "auc"]
        .map(String::from)
        .to_vec()];
    for c in &summary.cells {
        let mut row = vec![
            c.model.to_string(),
            c.n_clients.to_string(),
            c.scheme.to_string(),
            c.distribution.clone(),
            c.runs.len().to_string(),
            fmt(c.federated_auc()),
        ];
        row.extend(
            [
                Baseline::LocalDominant,
                Baseline::LocalNonDominant,
                Baseline::Centralised,
            ]
            .map(|b| fmt(c.baseline_auc(b))),
        );
        row.extend(Baseline::ALL.iter().map(|&b| fmt(c.improvement(b))));
        rows.push(row);

        let scenarios: [(&str, Option<f64>, Option<f64>); 4] = [
            ("federated", c.mse(|r| r.federated_mse), c.federated_auc()),
            (
                "local_dominant",
                c.mse(|r| r.dominant_mse),
                c.baseline_auc(Baseline::LocalDominant),
            ),
            (
                "local_non_dominant",
                c.mse(|r| r.non_dominant_mse),
                c.baseline_auc(Baseline::LocalNonDominant),
            ),
            (
                "centralised",
                c.mse(|r| r.centralised_mse),
                c.baseline_auc(Baseline::Centralised),
            ),
        ];
        for (name, mse, auc) in scenarios {
            table.push(vec![
                c.model.to_string(),
                c.n_clients.to_string(),
                c.distribution.clone(),
                name.to_string(),
                fmt(mse),
                fmt(auc),
            ]);
        }
    }
    for (name, data) in [("summary.csv", &rows), ("table.csv", &table)] {
        let p = dir.join(name);
        write_rows(&p, data)?;
        written.push(p);
    }

    let mut models: Vec<ModelKind> = summary.cells.iter().map(|c| c.model).collect();
    models.sort_unstable();
    models.dedup();
    for model in models {
        for b in Baseline::ALL {
            let p = dir.join(format!("heatmap_{model}_vs_{}.csv", b.as_str()));
            write_rows(&p, &heatmap(summary, model, b))?;
            written.push(p);
        }
    }
    Ok(written)
}
