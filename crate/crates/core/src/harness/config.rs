use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CsvSchema, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::ModelKind;
use crate::fed::FederationConfig;
use crate::gbdt::GbdtConfig;
use crate::model::{Activation, TrainConfig};
use crate::partition::Scheme;

pub const CONFIG_VERSION: u32 = 1;

/// Where the samples come from: `[data.synthetic]` or `[data.csv]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        spec: SyntheticSpec,
    },
    Csv {
        path: PathBuf,
        schema: CsvSchema,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            seed: 0,
            spec: SyntheticSpec::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeMode {
    /// Each client fits its own statistics; the global model is evaluated with
    /// the pooled statistics of all clients.
    #[default]
    PerClient,
    /// One set of statistics fitted on the whole training fold.
    Global,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub standardize: StandardizeMode,
    /// Oversample minority classes on every training shard.
    pub upsample: bool,
    /// Drop this many features with the lowest ANOVA F score.
    pub drop_features: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            standardize: StandardizeMode::PerClient,
            upsample: false,
            drop_features: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub federation: FederationConfig,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            activation: Activation::Relu,
            batch_size: 32,
            learning_rate: 0.002,
            federation: FederationConfig::default(),
        }
    }
}

impl MlpConfig {
    pub fn sgd(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.federation.local_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbdtTrainerConfig {
    pub trees: GbdtConfig,
    pub cnn_batch_size: usize,
    pub cnn_learning_rate: f64,
    /// `n_rounds` counts aggregator rounds after the tree exchange.
    pub federation: FederationConfig,
}

impl Default for GbdtTrainerConfig {
    fn default() -> Self {
        Self {
            trees: GbdtConfig::default(),
            cnn_batch_size: 32,
            cnn_learning_rate: 0.01,
            federation: FederationConfig {
                n_rounds: 10,
                ..Default::default()
            },
        }
    }
}

impl GbdtTrainerConfig {
    pub fn cnn(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.federation.local_epochs,
            batch_size: self.cnn_batch_size,
            learning_rate: self.cnn_learning_rate,
        }
    }
}

/// One experiment grid: every (model, client count, scheme, seed) cell is run
/// under k-fold cross-validation in all three scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub models: Vec<ModelKind>,
    pub client_counts: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Run only the first `n` folds of each split.
    #[serde(default)]
    pub max_folds: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    /// Also write per-round federation reports.
    #[serde(default)]
    pub record_rounds: bool,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub mlp: MlpConfig,
    #[serde(default)]
    pub gbdt: GbdtTrainerConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_folds() -> usize {
    5
}

impl ExperimentConfig {
    /// The full desk-scale grid on the default synthetic data.
    pub fn desk_grid() -> Self {
        Self {
            version: CONFIG_VERSION,
            output_dir: default_output_dir(),
            models: vec![ModelKind::Mlp, ModelKind::Gbdt],
            client_counts: vec![2, 3, 5, 10],
            schemes: Scheme::ALL.to_vec(),
            seeds: vec![1],
            folds: default_folds(),
            max_folds: None,
            workers: 0,
            record_rounds: false,
            data: DataConfig::default(),
            preprocess: PreprocessConfig::default(),
            mlp: MlpConfig::default(),
            gbdt: GbdtTrainerConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        parse(text, "<config>")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            location: path.display().to_string(),
            field: String::new(),
            message: e.to_string(),
        })?;
        parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::Config {
            location: "<config>".into(),
            field: field.into(),
            message,
        };
        if self.version != CONFIG_VERSION {
            return Err(bad(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        for (field, empty) in [
            ("models", self.models.is_empty()),
            ("client_counts", self.client_counts.is_empty()),
            ("schemes", self.schemes.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(bad(field, "must not be empty".into()));
            }
        }
        if let Some(i) = self.client_counts.iter().position(|&n| n == 0) {
            return Err(bad(
                &format!("client_counts[{i}]"),
                "client count must be at least 1".into(),
            ));
        }
        if self.folds < 2 {
            return Err(bad("folds", format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.max_folds == Some(0) {
            return Err(bad("max_folds", "must be at least 1".into()));
        }
        let checks = [
            ("mlp.federation", self.mlp.federation.validate()),
            ("mlp", self.mlp.sgd().validate()),
            ("gbdt.federation", self.gbdt.federation.validate()),
            ("gbdt", self.gbdt.cnn().validate()),
            ("gbdt.trees", self.gbdt.trees.validate()),
        ];
        for (field, r) in checks {
            if let Err(e) = r {
                return Err(bad(field, e.to_string()));
            }
        }
        if let DataConfig::Synthetic { spec, .. } = &self.data {
            spec.validate().map_err(|e| bad("data", e.to_string()))?;
        }
        Ok(())
    }

    pub fn federation(&self, model: ModelKind) -> &FederationConfig {
        match model {
            ModelKind::Mlp => &self.mlp.federation,
            ModelKind::Gbdt => &self.gbdt.federation,
        }
    }

    pub fn n_folds_run(&self) -> usize {
        self.max_folds.map_or(self.folds, |m| m.min(self.folds))
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn parse(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let located = |span: Option<std::ops::Range<usize>>| match span {
        Some(s) => format!("{origin}:{}", line_of(text, s.start)),
        None => origin.to_string(),
    };
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
        location: located(e.span()),
        field: String::new(),
        message: e.message().to_string(),
    })?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::Config {
            location: located(inner.span()),
            field,
            message: inner.message().to_string(),
        }
    })?;
    cfg.validate().map_err(|e| match e {
        Error::Config { field, message, .. } => Error::Config {
            location: located(field_span(text, &field)),
            field,
            message,
        },
        other => other,
    })?;
    Ok(cfg)
}

/// Best-effort span of the key for a dotted field path, for validation errors
/// raised after deserialization.
fn field_span(text: &str, field: &str) -> Option<std::ops::Range<usize>> {
    let key = field.rsplit('.').next()?.split('[').next()?;
    let table = field.rsplit_once('.').map(|(t, _)| t);
    let mut in_table = table.is_none();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if let Some(header) = trimmed.strip_prefix('[') {
            let name = header.trim_end().trim_end_matches(']').trim();
            in_table = Some(name) == table;
        } else if in_table
            && trimmed
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        {
            return Some(offset..offset + line.len());
        }
        offset += line.len();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
models = ["mlp"]
client_counts = [2]
schemes = ["balanced"]
seeds = [7]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.mlp, MlpConfig::default());
        assert_eq!(cfg.gbdt.federation.n_rounds, 10);
        assert_eq!(cfg.data, DataConfig::default());
    }

    #[test]
    fn desk_grid_roundtrips_through_toml() {
        let cfg = ExperimentConfig::desk_grid();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_field_reports_path_and_line() {
        let text = format!("{MINIMAL}\n[mlp]\nhidden = [8]\nlearning_rat = 0.1\n");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        let Error::Config {
            location,
            field,
            message,
        } = &err
        else {
            panic!("{err}")
        };
        assert_eq!(field, "mlp.learning_rat");
        assert!(message.contains("learning_rat"), "{message}");
        assert_eq!(location, "<config>:10");
    }

    #[test]
    fn wrong_type_reports_nested_path() {
        let text = format!("{MINIMAL}\n[gbdt.trees]\nmax_depth = \"deep\"\n");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        let Error::Config { location, field, .. } = &err else {
            panic!("{err}")
        };
        assert_eq!(field, "gbdt.trees.max_depth");
        assert_eq!(location, "<config>:9");
    }

    #[test]
    fn validation_errors_are_config_errors() {
        let text = MINIMAL.replace("seeds = [7]", "seeds = []");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("`seeds`"), "{err}");
        assert!(err.to_string().starts_with("<config>:6"), "{err}");

        let text = MINIMAL.replace("version = 1", "version = 3");
        assert!(ExperimentConfig::from_toml_str(&text).unwrap_err().is_config());

        let text = format!("{MINIMAL}\n[mlp.federation]\nsample_fraction = 0.0\n");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("mlp.federation"), "{err}");
    }

    #[test]
    fn syntax_error_has_line() {
        let err = ExperimentConfig::from_toml_str("version = 1\nmodels = [\n").unwrap_err();
        let Error::Config { location, .. } = &err else {
            panic!("{err}")
        };
        assert!(location.starts_with("<config>:"), "{location}");
    }

    #[test]
    fn csv_source_parses() {
        let text =
            format!("{MINIMAL}\n[data.csv]\npath = \"loans.csv\"\n\n[data.csv.schema]\nlabel_column = \"default\"\n");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let DataConfig::Csv { path, schema } = cfg.data else {
            panic!()
        };
        assert_eq!(path, PathBuf::from("loans.csv"));
        assert_eq!(schema.label_column, "default");
    }
}
