use serde::{Deserialize, Serialize};

use super::MetricsRecord;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Test-row indices of each fold after one seeded shuffle. Fold `i` holds
/// `n / k` rows plus one more for the first `n % k` folds.
pub fn kfold_indices(n: usize, k: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("k-fold needs k >= 2"));
    }
    if n < k {
        return Err(Error::TooFewSamples { needed: k, actual: n });
    }
    let order = rng.permutation(n);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = n / k + usize::from(i < n % k);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// The train/test datasets of fold `fold`; both keep the original row order.
pub fn fold_split(ds: &Dataset, folds: &[Vec<usize>], fold: usize) -> Result<(Dataset, Dataset)> {
    let test_rows = folds
        .get(fold)
        .ok_or_else(|| Error::invalid(format!("fold {fold} of {}", folds.len())))?;
    let mut in_test = vec![false; ds.n_samples()];
    for &r in test_rows {
        in_test[r] = true;
    }
    let mut test: Vec<usize> = test_rows.clone();
    test.sort_unstable();
    let train: Vec<usize> = (0..ds.n_samples()).filter(|&r| !in_test[r]).collect();
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub records: Vec<MetricsRecord>,
    pub mean_auc: f64,
    /// Sample standard deviation (n − 1) across records; 0 for a single record.
    pub std_auc: f64,
}

impl CvReport {
    pub fn from_records(records: Vec<MetricsRecord>) -> Result<Self> {
        let (mean_auc, std_auc) = mean_std(&records.iter().map(|r| r.auc).collect::<Vec<_>>())?;
        Ok(Self {
            records,
            mean_auc,
            std_auc,
        })
    }
}

pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("mean of no values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, std))
}

/// Runs `runner(fold, train, test)` on each of `k` folds. Records returned by
/// the runner get their `fold` field set.
pub fn kfold_cv<F>(ds: &Dataset, k: usize, rng: &mut RngStream, mut runner: F) -> Result<CvReport>
where
    F: FnMut(usize, &Dataset, &Dataset) -> Result<Vec<MetricsRecord>>,
{
    let folds = kfold_indices(ds.n_samples(), k, rng)?;
    let mut records = Vec::new();
    for fold in 0..k {
        let (train, test) = fold_split(ds, &folds, fold)?;
        for mut r in runner(fold, &train, &test)? {
            r.fold = fold;
            records.push(r);
        }
    }
    CvReport::from_records(records)
}
