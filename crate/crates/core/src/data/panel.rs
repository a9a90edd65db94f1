use std::collections::HashMap;
use std::path::Path;

use super::csv_io::{parse_labels, read_table};
use super::{CsvSchema, Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One borrower's monthly observations (rows = months).
#[derive(Clone, Debug, PartialEq)]
pub struct Entity {
    pub id: String,
    pub steps: Matrix,
    pub label: usize,
}

/// Per-entity time series with a fixed feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    entities: Vec<Entity>,
    feature_names: Vec<String>,
    n_classes: usize,
    label_kind: LabelKind,
}

impl PanelDataset {
    pub fn new(
        entities: Vec<Entity>,
        feature_names: Vec<String>,
        n_classes: usize,
        label_kind: LabelKind,
    ) -> Result<Self> {
        for e in &entities {
            if e.steps.cols() != feature_names.len() {
                return Err(Error::shape(
                    format!("{} features", feature_names.len()),
                    format!("{} for entity {}", e.steps.cols(), e.id),
                ));
            }
            if e.label >= n_classes {
                return Err(Error::invalid(format!(
                    "entity {} label {} out of range",
                    e.id, e.label
                )));
            }
        }
        Ok(Self {
            entities,
            feature_names,
            n_classes,
            label_kind,
        })
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }
}

/// One row per entity: each feature averaged over that entity's months.
/// Missing cells are skipped; a feature missing in every month stays missing.
pub fn mean_aggregate(panel: &PanelDataset) -> Result<Dataset> {
    if panel.entities.is_empty() {
        return Err(Error::invalid("empty panel"));
    }
    let f = panel.feature_names.len();
    let mut data = Vec::with_capacity(panel.entities.len() * f);
    for e in &panel.entities {
        if e.steps.rows() == 0 {
            return Err(Error::invalid(format!("entity {} has no time steps", e.id)));
        }
        for c in 0..f {
            let (sum, n) = e
                .steps
                .column(c)
                .filter(|v| !v.is_nan())
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            data.push(if n == 0 { f64::NAN } else { sum / n as f64 });
        }
    }
    let labels = panel.entities.iter().map(|e| e.label).collect();
    let features = Matrix::new(panel.entities.len(), f, data)?;
    Ok(Dataset::new(
        features,
        labels,
        panel.n_classes,
        panel.feature_names.clone(),
        panel.label_kind,
    )?
    .with_provenance("panel-mean"))
}

/// Long-format CSV: one row per (entity, month), grouped by `entity_column`
/// in order of first appearance. Every row of an entity must carry the same label.
pub fn load_panel_csv(path: impl AsRef<Path>, schema: &CsvSchema, entity_column: &str) -> Result<PanelDataset> {
    let path = path.as_ref();
    let table = read_table(path, schema, Some(entity_column))?;
    let (labels, n_classes, kind) = parse_labels(path, &table.raw_labels, schema.label_kind)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Vec<f64>, usize, usize)> = HashMap::new();
    for (i, id) in table.extra.iter().enumerate() {
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (Vec::new(), 0, labels[i])
        });
        if entry.2 != labels[i] {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                line: table.raw_labels[i].0,
                message: format!("entity `{id}` changes label"),
            });
        }
        entry.0.extend_from_slice(&table.rows[i]);
        entry.1 += 1;
    }
    let f = table.feature_names.len();
    let entities = order
        .into_iter()
        .map(|id| {
            let (data, rows, label) = groups.remove(&id).unwrap_or_default();
            Ok(Entity {
                steps: Matrix::new(rows, f, data)?,
                id,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PanelDataset::new(entities, table.feature_names, n_classes, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn entity(id: &str, rows: &[Vec<f64>], label: usize) -> Entity {
        Entity {
            id: id.into(),
            steps: Matrix::from_rows(rows).unwrap(),
            label,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn single_month_and_midpoint() {
        let p = PanelDataset::new(
            vec![
                entity("a", &[vec![1.5, -2.0]], 0),
                entity("b", &[vec![1.0, 2.0], vec![3.0, 4.0]], 1),
            ],
            names(2),
            2,
            LabelKind::Binary,
        )
        .unwrap();
        let ds = mean_aggregate(&p).unwrap();
        assert_eq!(ds.features().row(0), &[1.5, -2.0]);
        assert_eq!(ds.features().row(1), &[2.0, 3.0]);
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn zero_months_rejected() {
        let empty = Entity {
            id: "z".into(),
            steps: Matrix::zeros(0, 2),
            label: 0,
        };
        let p = PanelDataset::new(vec![empty], names(2), 2, LabelKind::Binary).unwrap();
        assert!(mean_aggregate(&p).is_err());
    }

    #[test]
    fn random_panel_matches_loop_oracle() {
        let mut rng = RngStream::new(21, 0);
        let f = 3;
        let entities: Vec<Entity> = (0..5)
            .map(|e| {
                let months = 1 + rng.below(6) as usize;
                let rows: Vec<Vec<f64>> = (0..months)
                    .map(|_| (0..f).map(|_| rng.uniform(-10.0, 10.0)).collect())
                    .collect();
                entity(&format!("e{e}"), &rows, e % 2)
            })
            .collect();
        let p = PanelDataset::new(entities.clone(), names(f), 2, LabelKind::Binary).unwrap();
        let ds = mean_aggregate(&p).unwrap();
        for (r, e) in entities.iter().enumerate() {
            for c in 0..f {
                let mut acc = 0.0;
                for m in 0..e.steps.rows() {
                    acc += e.steps.get(m, c);
                }
                let want = acc / e.steps.rows() as f64;
                assert!((ds.features().get(r, c) - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn panel_csv_groups_entities() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"id,x,y\nb,1,1\na,5,0\nb,3,1\n").unwrap();
        let p = load_panel_csv(f.path(), &CsvSchema::new("y"), "id").unwrap();
        assert_eq!(p.entities().len(), 2);
        assert_eq!(p.entities()[0].id, "b");
        let ds = mean_aggregate(&p).unwrap();
        assert_eq!(ds.features().data(), &[2.0, 5.0]);
        assert_eq!(ds.labels(), &[1, 0]);
    }
}
