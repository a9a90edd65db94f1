use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::eval::RatingScale;
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    /// `None` selects every column except the label.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    #[serde(default)]
    pub missing_token: String,
    /// Forces the label interpretation; inferred from the values otherwise.
    #[serde(default)]
    pub label_kind: Option<LabelKind>,
}

impl CsvSchema {
    pub fn new(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            feature_columns: None,
            missing_token: String::new(),
            label_kind: None,
        }
    }
}

pub(crate) struct RawTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub raw_labels: Vec<(u64, String)>,
    pub extra: Vec<String>,
}

/// Reads header, features (missing cells become `NaN`) and raw label strings.
/// `extra_column`, when given, is returned verbatim per row.
pub(crate) fn read_table(path: &Path, schema: &CsvSchema, extra_column: Option<&str>) -> Result<RawTable> {
    let csv_err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => csv_err(1, format!("{other:?}")),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_err(1, format!("column `{name}` not in header")))
    };
    let label_idx = find(&schema.label_column)?;
    let extra_idx = extra_column.map(find).transpose()?;
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx && Some(*i) != extra_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let feature_idx = feature_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut table = RawTable {
        feature_names,
        rows: Vec::new(),
        raw_labels: Vec::new(),
        extra: Vec::new(),
    };
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("").trim();

        let label = cell(label_idx);
        if label.is_empty() || label == schema.missing_token {
            return Err(csv_err(line, format!("missing label in `{}`", schema.label_column)));
        }
        let mut row = Vec::with_capacity(feature_idx.len());
        for (&i, name) in feature_idx.iter().zip(&table.feature_names) {
            let raw = cell(i);
            if raw == schema.missing_token || raw.is_empty() {
                row.push(f64::NAN);
                continue;
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => return Err(csv_err(line, format!("cannot parse `{raw}` in column `{name}`"))),
            }
        }
        table.rows.push(row);
        table.raw_labels.push((line, label.to_string()));
        if let Some(e) = extra_idx {
            table.extra.push(cell(e).to_string());
        }
    }
    Ok(table)
}

/// Integer class indices, or rating grade names when they are not integers.
pub(crate) fn parse_labels(
    path: &Path,
    raw: &[(u64, String)],
    forced: Option<LabelKind>,
) -> Result<(Vec<usize>, usize, LabelKind)> {
    let scale = RatingScale::default();
    let as_ints: Option<Vec<usize>> = raw.iter().map(|(_, s)| s.parse::<usize>().ok()).collect();
    if as_ints.is_none() {
        let mut labels = Vec::with_capacity(raw.len());
        for (line, s) in raw {
            match scale.index_of(s) {
                Some(i) => labels.push(i),
                None => {
                    return Err(Error::Csv {
                        path: path.to_path_buf(),
                        line: *line,
                        message: format!("label `{s}` is neither a class index nor a rating grade"),
                    })
                }
            }
        }
        return Ok((labels, scale.len(), LabelKind::Rating));
    }
    let labels = as_ints.unwrap_or_default();
    let kind = forced.unwrap_or_else(|| LabelKind::for_class_count(labels.iter().max().map_or(2, |m| (m + 1).max(2))));
    let n_classes = match kind {
        LabelKind::Binary => 2,
        LabelKind::Rating => scale.len(),
        LabelKind::Multiclass => labels.iter().max().map_or(2, |m| (m + 1).max(2)),
    };
    if let Some(pos) = labels.iter().position(|&l| l >= n_classes) {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            line: raw[pos].0,
            message: format!("label {} outside 0..{n_classes}", labels[pos]),
        });
    }
    Ok((labels, n_classes, kind))
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path, schema, None)?;
    let (labels, n_classes, kind) = parse_labels(path, &table.raw_labels, schema.label_kind)?;
    let n_features = table.feature_names.len();
    let data: Vec<f64> = table.rows.into_iter().flatten().collect();
    let features = Matrix::new(labels.len(), n_features, data)?;
    Ok(Dataset::new(features, labels, n_classes, table.feature_names, kind)?
        .with_label_name(&schema.label_column)
        .with_provenance(format!("csv:{}", path.display())))
}

/// Writes features then the label column. Missing cells are written as
/// `missing_token`; rating labels as grade names.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, missing_token: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_to_io)?;
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(ds.label_name());
    w.write_record(&header).map_err(csv_to_io)?;
    let scale = RatingScale::default();
    let mut record = Vec::with_capacity(header.len());
    for r in 0..ds.n_samples() {
        record.clear();
        for &v in ds.features().row(r) {
            record.push(if v.is_nan() {
                missing_token.to_string()
            } else {
                format!("{v}")
            });
        }
        let label = ds.labels()[r];
        record.push(match ds.label_kind() {
            LabelKind::Rating => scale.grade(label).unwrap_or_default().to_string(),
            _ => label.to_string(),
        });
        w.write_record(&record).map_err(csv_to_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_to_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}
