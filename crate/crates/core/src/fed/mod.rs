//! Virtual clients, FedAvg, client sampling and the round loops, plus the
//! local and centralised baselines that share their training code.

mod runner;

pub use runner::{
    make_clients, run_centralized, run_federated, run_federated_gbdt, run_federated_nn, run_local_baseline,
    ClientState, GbdtModel, GlobalModel, RoundReport, Trainer,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    /// Aggregation rounds (for tree ensembles: aggregator rounds after the tree exchange).
    pub n_rounds: usize,
    pub sample_fraction: f64,
    pub min_clients: usize,
    pub local_epochs: usize,
    pub full_participation: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            n_rounds: 50,
            sample_fraction: 0.5,
            min_clients: 2,
            local_epochs: 5,
            full_participation: false,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "sample_fraction {} outside (0, 1]",
                self.sample_fraction
            )));
        }
        if self.min_clients == 0 {
            return Err(Error::invalid("min_clients must be at least 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::invalid("local_epochs must be at least 1"));
        }
        Ok(())
    }

    /// Participants per round: `max(min_clients, round(fraction · n))`, capped at `n`.
    pub fn participants(&self, n_clients: usize) -> usize {
        if self.full_participation {
            return n_clients;
        }
        let by_fraction = (self.sample_fraction * n_clients as f64).round() as usize;
        by_fraction.max(self.min_clients).min(n_clients)
    }
}

/// Uniform sample without replacement, ascending. Full participation (or a
/// sample covering every client) returns `0..n` without drawing.
pub fn sample_clients(n_clients: usize, cfg: &FederationConfig, rng: &mut RngStream) -> Vec<usize> {
    let k = cfg.participants(n_clients);
    if k >= n_clients {
        return (0..n_clients).collect();
    }
    rng.sample_without_replacement(n_clients, k)
}

/// Sample-count-weighted mean `Σ (n_i / Σ n_j) · θ_i`, clamped coordinatewise
/// into the participants' range so rounding never leaves their convex hull.
/// The result is tagged with `Σ n_i`.
pub fn fedavg_aggregate(updates: &[ParamVector]) -> Result<ParamVector> {
    let first = updates
        .first()
        .ok_or_else(|| Error::invalid("no updates to aggregate"))?;
    if updates.iter().any(|u| u.arch() != first.arch()) {
        return Err(Error::ArchitectureMismatch);
    }
    let values: Vec<&[f64]> = updates.iter().map(ParamVector::values).collect();
    let counts: Vec<u64> = updates.iter().map(ParamVector::sample_count).collect();
    let out = weighted_average(&values, &counts)?;
    ParamVector::new(out, first.arch().clone(), counts.iter().sum())
}

/// The arithmetic of [`fedavg_aggregate`] on bare vectors.
pub fn weighted_average(values: &[&[f64]], counts: &[u64]) -> Result<Vec<f64>> {
    let first = *values
        .first()
        .ok_or_else(|| Error::invalid("no updates to aggregate"))?;
    if counts.len() != values.len() {
        return Err(Error::shape(format!("{} sample counts", values.len()), counts.len()));
    }
    if let Some(u) = values.iter().position(|v| v.len() != first.len()) {
        return Err(Error::shape(format!("{} parameters", first.len()), values[u].len()));
    }
    if let Some(u) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("update {u} has a zero sample count")));
    }
    let total = counts.iter().sum::<u64>() as f64;
    let mut sum = vec![0.0; first.len()];
    let mut comp = vec![0.0; first.len()];
    let mut lo = first.to_vec();
    let mut hi = first.to_vec();
    for (u, &n) in values.iter().zip(counts) {
        let n = n as f64;
        for (k, &v) in u.iter().enumerate() {
            // Neumaier summation of n_i · θ_i, carrying each product's rounding error
            let x = n * v;
            let t = sum[k] + x;
            comp[k] += if sum[k].abs() >= x.abs() {
                (sum[k] - t) + x
            } else {
                (x - t) + sum[k]
            };
            comp[k] += n.mul_add(v, -x);
            sum[k] = t;
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let out = sum
        .iter()
        .zip(&comp)
        .zip(lo.iter().zip(&hi))
        .map(|((&s, &c), (l, h))| {
            let q = s / total;
            let r = (-q).mul_add(total, s) + c;
            (q + r / total).clamp(*l, *h)
        })
        .collect();
    Ok(out)
}
