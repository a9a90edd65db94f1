use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedcredit::data::{synthesize, write_csv, SyntheticSpec};
use fedcredit::harness::{read_records, run_grid, summarize, write_summary, Baseline, ExperimentConfig};
use fedcredit::numerics::RngStream;
use fedcredit::partition::{plan_from_named, PartitionPlan, Scheme};
use fedcredit::Error;

#[derive(Parser)]
#[command(
    name = "fedcredit",
    version,
    about = "Federated learning simulator for credit-risk models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        n_samples: usize,
        #[arg(long, default_value_t = 20)]
        n_features: usize,
        /// Comma-separated class priors; their count sets the number of classes.
        #[arg(long, value_delimiter = ',', default_value = "0.8,0.2")]
        priors: Vec<f64>,
        #[arg(long, default_value_t = 1.5)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
    /// Print a partition plan as JSON.
    Partition {
        #[arg(long, required_unless_present = "proportions")]
        n_clients: Option<usize>,
        #[arg(long, default_value = "balanced")]
        scheme: Scheme,
        /// Explicit percentages such as `50-30-20`; overrides the scheme.
        #[arg(long)]
        proportions: Option<String>,
        /// Also compute shard counts for this many samples.
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Run an experiment grid from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Rebuild summary tables and heatmaps from a record stream.
    Summarize {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Command) -> fedcredit::Result<()> {
    match cmd {
        Command::Synth {
            out,
            seed,
            n_samples,
            n_features,
            priors,
            separation,
            noise,
        } => {
            let spec = SyntheticSpec {
                n_samples,
                n_features,
                n_classes: priors.len(),
                class_priors: priors,
                class_separation: separation,
                noise_std: noise,
            };
            let ds = synthesize(&spec, &mut RngStream::new(seed, 0))?;
            write_csv(&ds, &out, "")?;
            eprintln!("wrote {} rows to {}", ds.n_samples(), out.display());
        }
        Command::Partition {
            n_clients,
            scheme,
            proportions,
            n_samples,
        } => {
            let mut plan = match (proportions, n_clients) {
                (Some(p), _) => {
                    let parts = p
                        .split('-')
                        .map(|v| {
                            v.trim()
                                .parse::<u32>()
                                .map_err(|_| Error::InvalidInput(format!("bad percentage `{v}`")))
                        })
                        .collect::<fedcredit::Result<Vec<u32>>>()?;
                    PartitionPlan::from_proportions(parts)?
                }
                (None, Some(n)) => plan_from_named(n, scheme)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            if let Some(n) = n_samples {
                plan = plan.with_counts(n)?;
            }
            let mut out = serde_json::to_value(&plan)?;
            out["label"] = plan.label().into();
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Run {
            config,
            output_dir,
            workers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let outcome = run_grid(&cfg)?;
            for c in &outcome.summary.cells {
                let show = |b| c.improvement(b).map_or("NA".to_string(), |v| format!("{v:+.2}%"));
                println!(
                    "{:<5} n={:<3} {:<11} fed AUC {:.4}  vs non-dominant {}  vs dominant {}  vs centralised {}",
                    c.model,
                    c.n_clients,
                    c.scheme,
                    c.federated_auc().unwrap_or(f64::NAN),
                    show(Baseline::LocalNonDominant),
                    show(Baseline::LocalDominant),
                    show(Baseline::Centralised),
                );
            }
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::Summarize { records, out } => {
            let recs = read_records(&records)?;
            let metrics: Vec<_> = recs.into_iter().map(|r| r.metrics).collect();
            for f in write_summary(&summarize(&metrics)?, &out)? {
                eprintln!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
