//! Quantity-skew client partitions: percentage plans and their application to a training set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Balanced,
    Dominant60,
    Dominant80,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Balanced, Scheme::Dominant60, Scheme::Dominant80];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Balanced => "balanced",
            Scheme::Dominant60 => "dominant60",
            Scheme::Dominant80 => "dominant80",
        }
    }

    fn dominant_share(self) -> Option<u32> {
        match self {
            Scheme::Balanced => None,
            Scheme::Dominant60 => Some(60),
            Scheme::Dominant80 => Some(80),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scheme `{s}` (balanced, dominant60, dominant80)")))
    }
}

/// Per-client integer percentages, plus shard counts once applied to a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub n_clients: usize,
    pub proportions: Vec<u32>,
    pub dominant_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
}

impl PartitionPlan {
    /// Plan from explicit percentages. A plan whose shares differ by at most one
    /// point (e.g. `34-33-33`) is balanced; otherwise the dominant client is the
    /// strict maximum, if there is one.
    pub fn from_proportions(proportions: Vec<u32>) -> Result<Self> {
        if proportions.is_empty() {
            return Err(Error::invalid("a plan needs at least one client"));
        }
        let total: u32 = proportions.iter().sum();
        if total != 100 {
            return Err(Error::invalid(format!("proportions sum to {total}, not 100")));
        }
        if proportions.contains(&0) {
            return Err(Error::invalid("every client needs a positive share"));
        }
        let max = proportions.iter().copied().max().unwrap_or(0);
        let min = proportions.iter().copied().min().unwrap_or(0);
        let dominant_index = if max - min > 1 && proportions.iter().filter(|&&p| p == max).count() == 1 {
            proportions.iter().position(|&p| p == max)
        } else {
            None
        };
        Ok(Self {
            n_clients: proportions.len(),
            proportions,
            dominant_index,
            counts: None,
            scheme: None,
        })
    }

    /// Shard counts for `n_samples` rows.
    pub fn with_counts(mut self, n_samples: usize) -> Result<Self> {
        if n_samples < self.n_clients {
            return Err(Error::TooFewSamples {
                needed: self.n_clients,
                actual: n_samples,
            });
        }
        let counts = apportion(&self.proportions, n_samples);
        if counts.contains(&0) {
            return Err(Error::invalid(format!(
                "{n_samples} samples leave a client of plan {} empty",
                self.label()
            )));
        }
        self.counts = Some(counts);
        Ok(self)
    }

    /// Dash-joined percentages, e.g. `80-10-10`.
    pub fn label(&self) -> String {
        self.proportions
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn is_balanced(&self) -> bool {
        self.dominant_index.is_none()
    }
}

/// Largest-remainder split of `total` into parts proportional to `weights`.
/// Leftover units go to the largest fractional remainders, ties to the lower index.
pub fn apportion(weights: &[u32], total: usize) -> Vec<usize> {
    let sum: u64 = weights.iter().map(|&w| u64::from(w)).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let total = total as u64;
    let mut counts: Vec<usize> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(u64, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let num = u64::from(w) * total;
        counts.push((num / sum) as usize);
        remainders.push((num % sum, i));
    }
    let assigned: usize = counts.iter().sum();
    let mut left = total as usize - assigned;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Percentages for a named scheme: balanced splits 100 evenly; dominant schemes
/// give client 0 its share and split the remainder evenly over the others.
pub fn plan_from_named(n_clients: usize, scheme: Scheme) -> Result<PartitionPlan> {
    if n_clients == 0 {
        return Err(Error::invalid("n_clients must be at least 1"));
    }
    let proportions: Vec<u32> = match scheme.dominant_share() {
        None => {
            if n_clients > 100 {
                return Err(Error::invalid("at most 100 clients fit integer percentages"));
            }
            apportion(&vec![1; n_clients], 100)
                .into_iter()
                .map(|c| c as u32)
                .collect()
        }
        Some(share) => {
            if n_clients < 2 {
                return Err(Error::invalid(format!("{scheme} needs at least two clients")));
            }
            let rest = 100 - share as usize;
            if n_clients - 1 > rest {
                return Err(Error::invalid(format!(
                    "{scheme} cannot give {} clients a positive share",
                    n_clients - 1
                )));
            }
            std::iter::once(share)
                .chain(apportion(&vec![1; n_clients - 1], rest).into_iter().map(|c| c as u32))
                .collect()
        }
    };
    let mut plan = PartitionPlan::from_proportions(proportions)?;
    plan.scheme = Some(scheme);
    Ok(plan)
}

/// Shuffles the rows and cuts them into consecutive shards of the apportioned sizes.
/// Returns the shards and the plan with its counts filled in.
pub fn apply_plan(ds: &Dataset, plan: &PartitionPlan, rng: &mut RngStream) -> Result<(Vec<Dataset>, PartitionPlan)> {
    let plan = plan.clone().with_counts(ds.n_samples())?;
    let order = rng.permutation(ds.n_samples());
    let mut shards = Vec::with_capacity(plan.n_clients);
    let mut start = 0;
    for &c in plan.counts.as_deref().unwrap_or_default() {
        shards.push(ds.select_rows(&order[start..start + c]));
        start += c;
    }
    Ok((shards, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn named_small_cases() {
        assert_eq!(plan_from_named(1, Scheme::Balanced).unwrap().proportions, vec![100]);
        assert!(plan_from_named(1, Scheme::Dominant80).is_err());
        assert_eq!(plan_from_named(4, Scheme::Balanced).unwrap().proportions, vec![25; 4]);
        let p = plan_from_named(4, Scheme::Dominant60).unwrap();
        assert_eq!(p.proportions, vec![60, 14, 13, 13]);
        assert_eq!(p.dominant_index, Some(0));
        assert!(plan_from_named(3, Scheme::Balanced).unwrap().is_balanced());
    }

    #[test]
    fn seven_rows_two_halves() {
        assert_eq!(apportion(&[50, 50], 7), vec![4, 3]);
    }

    #[test]
    fn rejects_bad_proportions() {
        assert!(PartitionPlan::from_proportions(vec![50, 40]).is_err());
        assert!(PartitionPlan::from_proportions(vec![100, 0]).is_err());
        assert!(PartitionPlan::from_proportions(vec![]).is_err());
    }

    #[test]
    fn too_small_dataset() {
        let ds = crate::data::toy(&[vec![1.0], vec![2.0]], &[0, 1]);
        let plan = plan_from_named(3, Scheme::Balanced).unwrap();
        assert!(apply_plan(&ds, &plan, &mut RngStream::new(0, 0)).is_err());
        // 80-10-10 of 3 rows would leave a client empty
        let ds3 = crate::data::toy(&[vec![1.0], vec![2.0], vec![3.0]], &[0, 1, 0]);
        let plan = plan_from_named(3, Scheme::Dominant80).unwrap();
        assert!(apply_plan(&ds3, &plan, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn plan_json_roundtrip() {
        let plan = plan_from_named(5, Scheme::Dominant80)
            .unwrap()
            .with_counts(1000)
            .unwrap();
        let s = serde_json::to_string(&plan).unwrap();
        assert!(s.contains("\"scheme\":\"dominant80\""));
        assert_eq!(serde_json::from_str::<PartitionPlan>(&s).unwrap(), plan);
    }

    proptest! {
        #[test]
        fn apportion_is_exact_and_close(
            weights in proptest::collection::vec(1u32..50, 1..12),
            total in 0usize..5000,
        ) {
            let counts = apportion(&weights, total);
            prop_assert_eq!(counts.iter().sum::<usize>(), total);
            let sum: f64 = weights.iter().map(|&w| w as f64).sum();
            for (c, w) in counts.iter().zip(&weights) {
                let ideal = *w as f64 * total as f64 / sum;
                prop_assert!((*c as f64 - ideal).abs() < 1.0);
            }
        }
    }
}
