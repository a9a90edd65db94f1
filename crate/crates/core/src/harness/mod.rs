//! Configuration-driven experiment grid, record stream and summary tables.

mod config;
mod grid;
mod summary;

pub use config::{
    DataConfig, ExperimentConfig, GbdtTrainerConfig, MlpConfig, PreprocessConfig, StandardizeMode, CONFIG_VERSION,
};
pub use grid::{
    cell_seed, evaluate, fingerprint, load_data, read_records, run_grid, GridOutcome, RoundRecord, RunRecord,
    RECORDS_FILE, ROUNDS_FILE, SOFTWARE_VERSION,
};
pub use summary::{heatmap, summarize, write_summary, Baseline, CellSummary, PairedRun, Summary};
