use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use fedcredit::data::SyntheticSpec;
use fedcredit::eval::{ModelKind, Scenario};
use fedcredit::harness::{read_records, run_grid, Baseline, DataConfig, ExperimentConfig, RunRecord, RECORDS_FILE};
use fedcredit::partition::Scheme;

fn small_config(dir: &Path, schemes: Vec<Scheme>, n_clients: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_grid();
    cfg.models = vec![ModelKind::Mlp];
    cfg.client_counts = vec![n_clients];
    cfg.schemes = schemes;
    cfg.seeds = vec![1];
    cfg.output_dir = dir.to_path_buf();
    cfg.data = DataConfig::Synthetic {
        seed: 3,
        spec: SyntheticSpec {
            n_samples: 400,
            n_features: 6,
            ..Default::default()
        },
    };
    cfg.mlp.hidden = vec![8];
    cfg.mlp.federation.n_rounds = 3;
    cfg
}

#[test]
fn two_client_balanced_grid_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), vec![Scheme::Balanced], 2);
    let outcome = run_grid(&cfg).unwrap();
    // 5 folds × (centralised + local + federated) scenario runs; local runs log one record per client
    let per_scenario = |s: Scenario| outcome.records.iter().filter(|r| r.metrics.scenario == s).count();
    assert_eq!(per_scenario(Scenario::Centralised), 5);
    assert_eq!(per_scenario(Scenario::Federated), 5);
    assert_eq!(per_scenario(Scenario::Local), 10);
    let local_runs: std::collections::BTreeSet<_> = outcome
        .records
        .iter()
        .filter(|r| r.metrics.scenario == Scenario::Local)
        .map(|r| r.metrics.fold)
        .collect();
    assert_eq!(
        per_scenario(Scenario::Centralised) + per_scenario(Scenario::Federated) + local_runs.len(),
        15
    );
    assert_eq!(outcome.records.len(), 20);
    let mut back = read_records(dir.path().join(RECORDS_FILE)).unwrap();
    let mut ours = outcome.records.clone();
    let order = |r: &RunRecord| serde_json::to_string(&r.metrics).unwrap();
    back.sort_by_key(order);
    ours.sort_by_key(order);
    assert_eq!(back, ours);
}

#[test]
fn identical_configs_reproduce() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, workers| {
        let mut cfg = small_config(dir, vec![Scheme::Dominant60], 3);
        cfg.max_folds = Some(2);
        cfg.workers = workers;
        run_grid(&cfg).unwrap().records
    };
    let (ra, rb) = (run(a.path(), 1), run(b.path(), 0));
    assert_eq!(ra.len(), rb.len());
    let key = |r: &RunRecord| serde_json::to_string(&r.metrics).unwrap();
    let mut ma: Vec<_> = ra.iter().map(key).collect();
    let mut mb: Vec<_> = rb.iter().map(key).collect();
    ma.sort();
    mb.sort();
    assert_eq!(ma, mb);
    assert!(ra.iter().chain(&rb).all(|r| r.fingerprint == ra[0].fingerprint));
}

#[test]
fn summary_improvement_matches_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), vec![Scheme::Dominant80], 3);
    cfg.max_folds = Some(3);
    let outcome = run_grid(&cfg).unwrap();
    let records = read_records(dir.path().join(RECORDS_FILE)).unwrap();

    let mut fed = BTreeMap::new();
    let mut local: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    let mut central = BTreeMap::new();
    for r in &records {
        let m = &r.metrics;
        match m.scenario {
            Scenario::Federated => {
                fed.insert(m.fold, m.auc);
            }
            Scenario::Local => local.entry(m.fold).or_default().push((m.client.unwrap(), m.auc)),
            Scenario::Centralised => {
                central.insert(m.fold, m.auc);
            }
        }
    }
    // 80-10-10: client 0 dominates
    let mut non_dom = Vec::new();
    let mut dom = Vec::new();
    let mut cen = Vec::new();
    for (fold, f) in &fed {
        let l = &local[fold];
        let others: Vec<f64> = l.iter().filter(|(c, _)| *c != 0).map(|p| p.1).collect();
        let nd = others.iter().sum::<f64>() / others.len() as f64;
        let d = l.iter().find(|(c, _)| *c == 0).unwrap().1;
        non_dom.push(100.0 * (f - nd) / nd);
        dom.push(100.0 * (f - d) / d);
        cen.push(100.0 * (f - central[fold]) / central[fold]);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cell = outcome.summary.cell(ModelKind::Mlp, 3, Scheme::Dominant80).unwrap();
    assert_eq!(cell.runs.len(), 3);
    assert_eq!(cell.distribution, "80-10-10");
    assert!((cell.improvement(Baseline::LocalNonDominant).unwrap() - mean(&non_dom)).abs() < 1e-12);
    assert!((cell.improvement(Baseline::LocalDominant).unwrap() - mean(&dom)).abs() < 1e-12);
    assert!((cell.improvement(Baseline::Centralised).unwrap() - mean(&cen)).abs() < 1e-12);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fedcredit"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_partition_prints_plan() {
    let out = cli(&[
        "partition",
        "--n-clients",
        "10",
        "--scheme",
        "dominant80",
        "--n-samples",
        "1000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["label"], "80-3-3-2-2-2-2-2-2-2");
    assert_eq!(plan["dominant_index"], 0);
    assert_eq!(plan["counts"][0], 800);

    let out = cli(&["partition", "--proportions", "50-30-20"]);
    assert_eq!(out.status.code(), Some(0));
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["label"], "50-30-20");
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
    assert_eq!(
        cli(&["partition", "--scheme", "lopsided", "--n-clients", "3"])
            .status
            .code(),
        Some(1)
    );

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "version = 1\nmodels = [\"mlp\"]\nclient_counts = [2]\nschemes = [\"balanced\"]\nseeds = [1]\nfold = 3\n",
    )
    .unwrap();
    let out = cli(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:6") && err.contains("fold"), "{err}");

    let missing = dir.path().join("none.jsonl");
    let out = cli(&[
        "summarize",
        "--records",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_synth_run_and_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("synth.csv");
    let out = cli(&[
        "synth",
        "--out",
        csv.to_str().unwrap(),
        "--n-samples",
        "300",
        "--n-features",
        "4",
        "--seed",
        "9",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 301);

    let results = dir.path().join("results");
    let config = dir.path().join("grid.toml");
    std::fs::write(
        &config,
        format!(
            "version = 1\nmodels = [\"mlp\"]\nclient_counts = [2]\nschemes = [\"dominant60\"]\nseeds = [1]\nmax_folds = 1\n\
             [data.csv]\npath = {:?}\n[data.csv.schema]\nlabel_column = \"label\"\n[mlp]\nhidden = [4]\n[mlp.federation]\nn_rounds = 2\n",
            csv.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = cli(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        results.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dominant60"));
    let original = std::fs::read_to_string(results.join("summary.csv")).unwrap();

    let again = dir.path().join("again");
    let out = cli(&[
        "summarize",
        "--records",
        results.join(RECORDS_FILE).to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(again.join("summary.csv")).unwrap(), original);
}

#[test]
#[ignore = "full desk grid, several minutes"]
fn desk_grid_fits_time_budget() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::desk_grid();
    cfg.output_dir = dir.path().to_path_buf();
    let start = std::time::Instant::now();
    let outcome = run_grid(&cfg).unwrap();
    assert_eq!(outcome.summary.cells.len(), 2 * 4 * 3);
    assert!(start.elapsed().as_secs() < 600, "{:?}", start.elapsed());
}
