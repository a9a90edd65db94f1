use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{PartitionPlan, Scheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Centralised,
    Local,
    Federated,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Centralised => "centralised",
            Scenario::Local => "local",
            Scenario::Federated => "federated",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Gbdt,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Gbdt => "gbdt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "gbdt" => Ok(ModelKind::Gbdt),
            _ => Err(Error::invalid(format!("unknown model `{s}` (mlp, gbdt)"))),
        }
    }
}

/// One evaluated model: scenario, model family, distribution and fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: Scenario,
    pub model: ModelKind,
    pub n_clients: usize,
    /// Dash-joined percentages, e.g. `80-10-10`; `100` for centralised runs.
    pub distribution: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fold: usize,
    /// Set for per-client local records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    pub auc: f64,
}

impl MetricsRecord {
    pub fn new(
        scenario: Scenario,
        model: ModelKind,
        n_clients: usize,
        distribution: impl Into<String>,
        auc: f64,
    ) -> Self {
        Self {
            scenario,
            model,
            n_clients,
            distribution: distribution.into(),
            scheme: None,
            seed: 0,
            fold: 0,
            client: None,
            mse: None,
            auc,
        }
    }
}

/// AUC and optional MSE for one side of a dominant/non-dominant comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideMetrics {
    pub auc: f64,
    pub mse: Option<f64>,
}

fn mean_side(records: &[&MetricsRecord]) -> SideMetrics {
    let n = records.len() as f64;
    let auc = records.iter().map(|r| r.auc).sum::<f64>() / n;
    let mse = records
        .iter()
        .map(|r| r.mse)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / n);
    SideMetrics { auc, mse }
}

/// Dominant side = the dominant client's record, non-dominant = unweighted
/// mean of the others. Balanced plans (and single clients) report the
/// unweighted mean over all clients on both sides. Records are matched to
/// clients by their `client` field, or by position when it is absent.
pub fn split_dominant_metrics(
    per_client: &[MetricsRecord],
    plan: &PartitionPlan,
) -> Result<(SideMetrics, SideMetrics)> {
    if per_client.len() != plan.n_clients {
        return Err(Error::shape(
            format!("{} client records", plan.n_clients),
            per_client.len(),
        ));
    }
    let mut by_client: Vec<Option<&MetricsRecord>> = vec![None; plan.n_clients];
    for (pos, r) in per_client.iter().enumerate() {
        let idx = r.client.unwrap_or(pos);
        match by_client.get_mut(idx) {
            Some(slot @ None) => *slot = Some(r),
            _ => return Err(Error::invalid(format!("duplicate or out-of-range client {idx}"))),
        }
    }
    let all: Vec<&MetricsRecord> = by_client.into_iter().flatten().collect();
    match plan.dominant_index {
        Some(d) if plan.n_clients > 1 => {
            let rest: Vec<&MetricsRecord> = all
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != d)
                .map(|(_, r)| *r)
                .collect();
            Ok((mean_side(&[all[d]]), mean_side(&rest)))
        }
        _ => {
            let m = mean_side(&all);
            Ok((m, m))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(aucs: &[f64]) -> Vec<MetricsRecord> {
        aucs.iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut r = MetricsRecord::new(Scenario::Local, ModelKind::Mlp, aucs.len(), "x", a);
                r.client = Some(i);
                r
            })
            .collect()
    }

    #[test]
    fn dominant_and_mean_of_rest() {
        let plan = PartitionPlan::from_proportions(vec![80, 10, 10]).unwrap();
        let (d, nd) = split_dominant_metrics(&recs(&[0.9, 0.7, 0.5]), &plan).unwrap();
        assert_eq!(d.auc, 0.9);
        assert!((nd.auc - 0.6).abs() < 1e-15);
    }

    #[test]
    fn balanced_averages_both_sides() {
        let plan = PartitionPlan::from_proportions(vec![50, 50]).unwrap();
        let (d, nd) = split_dominant_metrics(&recs(&[0.8, 0.6]), &plan).unwrap();
        assert!((d.auc - 0.7).abs() < 1e-15);
        assert_eq!(d, nd);
    }

    #[test]
    fn single_client_collapses() {
        let plan = PartitionPlan::from_proportions(vec![100]).unwrap();
        let mut r = recs(&[0.66]);
        r[0].mse = Some(1.5);
        let (d, nd) = split_dominant_metrics(&r, &plan).unwrap();
        assert_eq!(
            d,
            SideMetrics {
                auc: 0.66,
                mse: Some(1.5)
            }
        );
        assert_eq!(d, nd);
    }

    #[test]
    fn count_mismatch_rejected() {
        let plan = PartitionPlan::from_proportions(vec![50, 50]).unwrap();
        assert!(split_dominant_metrics(&recs(&[0.8]), &plan).is_err());
    }

    #[test]
    fn record_json_shape() {
        let r = MetricsRecord::new(Scenario::Federated, ModelKind::Gbdt, 3, "60-20-20", 0.8);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"scenario\":\"federated\""));
        assert!(!s.contains("mse"));
        assert_eq!(serde_json::from_str::<MetricsRecord>(&s).unwrap(), r);
    }
}
