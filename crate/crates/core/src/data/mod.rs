//! Datasets, ingestion, synthetic generation and preprocessing.

mod csv_io;
mod panel;
mod preprocess;
mod synth;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use panel::{load_panel_csv, mean_aggregate, Entity, PanelDataset};
pub use preprocess::{
    anova_f_scores, impute_mean, select_features, standardize, train_test_split, upsample, FeatureSelection,
    ImputeStats, Standardizer,
};
pub use synth::{synthesize, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GRADES;
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelKind {
    Binary,
    /// 22-grade credit rating, AAA = 0 … D = 21.
    Rating,
    Multiclass,
}

impl LabelKind {
    pub fn for_class_count(n_classes: usize) -> Self {
        match n_classes {
            2 => LabelKind::Binary,
            n if n == GRADES.len() => LabelKind::Rating,
            _ => LabelKind::Multiclass,
        }
    }
}

/// Feature matrix plus class labels.
///
/// Missing cells are stored as `NaN` in the feature matrix. `row_ids` track
/// the original row each sample came from; they survive shuffles, splits and
/// upsampling and are how holdout leakage is detected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
    feature_names: Vec<String>,
    label_name: String,
    label_kind: LabelKind,
    row_ids: Vec<u64>,
    provenance: String,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        n_classes: usize,
        feature_names: Vec<String>,
        label_kind: LabelKind,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape(format!("{} labels", features.rows()), labels.len()));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::shape(
                format!("{} feature names", features.cols()),
                feature_names.len(),
            ));
        }
        if n_classes == 0 {
            return Err(Error::invalid("n_classes must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!("label {bad} outside 0..{n_classes}")));
        }
        if features.data().iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("feature matrix contains an infinite value"));
        }
        let n = labels.len() as u64;
        Ok(Self {
            features,
            labels,
            n_classes,
            feature_names,
            label_name: "label".into(),
            label_kind,
            row_ids: (0..n).collect(),
            provenance: String::new(),
        })
    }

    pub fn with_label_name(mut self, name: impl Into<String>) -> Self {
        self.label_name = name.into();
        self
    }

    pub fn with_provenance(mut self, tag: impl Into<String>) -> Self {
        self.provenance = tag.into();
        self
    }

    pub fn with_row_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.n_samples() {
            return Err(Error::shape(format!("{} row ids", self.n_samples()), ids.len()));
        }
        self.row_ids = ids;
        Ok(self)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn label_kind(&self) -> LabelKind {
        self.label_kind
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.features.get(row, col).is_nan()
    }

    pub fn missing_count(&self) -> usize {
        self.features.data().iter().filter(|v| v.is_nan()).count()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows in the given order; row ids travel with their rows.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            label_kind: self.label_kind,
            n_classes: self.n_classes,
            provenance: self.provenance.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_cols(cols),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn with_features(&self, features: Matrix) -> Dataset {
        debug_assert_eq!(features.rows(), self.n_samples());
        debug_assert_eq!(features.cols(), self.n_features());
        Dataset {
            features,
            ..self.clone()
        }
    }

    /// Row-wise concatenation; schemas must agree.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for p in parts {
            if p.feature_names != first.feature_names || p.n_classes != first.n_classes {
                return Err(Error::invalid("cannot concatenate datasets with different schemas"));
            }
            data.extend_from_slice(p.features.data());
            labels.extend_from_slice(&p.labels);
            ids.extend_from_slice(&p.row_ids);
        }
        Ok(Dataset {
            features: Matrix::new(labels.len(), first.n_features(), data)?,
            labels,
            row_ids: ids,
            ..first.clone()
        })
    }
}

#[cfg(test)]
pub(crate) fn toy(rows: &[Vec<f64>], labels: &[usize]) -> Dataset {
    let n_classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    let names = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
    Dataset::new(
        Matrix::from_rows(rows).unwrap(),
        labels.to_vec(),
        n_classes,
        names,
        LabelKind::for_class_count(n_classes),
    )
    .unwrap()
}
