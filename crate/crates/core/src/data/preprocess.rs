use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Sorted set of the row ids a statistic was fitted on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct FittedRows(Vec<u64>);

impl FittedRows {
    fn of(ds: &Dataset) -> Self {
        let mut ids = ds.row_ids().to_vec();
        ids.sort_unstable();
        ids.dedup();
        FittedRows(ids)
    }

    fn union(parts: impl IntoIterator<Item = FittedRows>) -> Self {
        let mut ids: Vec<u64> = parts.into_iter().flat_map(|p| p.0).collect();
        ids.sort_unstable();
        ids.dedup();
        FittedRows(ids)
    }

    /// Errors if any row of `holdout` was part of the fit.
    fn check_disjoint(&self, holdout: &Dataset) -> Result<()> {
        let mut leaked: Vec<u64> = holdout
            .row_ids()
            .iter()
            .copied()
            .filter(|id| self.0.binary_search(id).is_ok())
            .collect();
        if leaked.is_empty() {
            return Ok(());
        }
        leaked.sort_unstable();
        leaked.dedup();
        leaked.truncate(8);
        Err(Error::Leakage(leaked))
    }
}

/// Per-column means of the non-missing values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub means: Vec<f64>,
    fitted_on: FittedRows,
}

impl ImputeStats {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let x = ds.features();
        let mut means = Vec::with_capacity(x.cols());
        for c in 0..x.cols() {
            let (sum, n) = x
                .column(c)
                .filter(|v| !v.is_nan())
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                return Err(Error::AllMissingColumn(ds.feature_names()[c].clone()));
            }
            means.push(sum / n as f64);
        }
        Ok(Self {
            means,
            fitted_on: FittedRows::of(ds),
        })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if self.means.len() != ds.n_features() {
            return Err(Error::shape(format!("{} columns", self.means.len()), ds.n_features()));
        }
        if ds.missing_count() == 0 {
            return Ok(ds.clone());
        }
        let mut x = ds.features().clone();
        let cols = x.cols();
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            if v.is_nan() {
                *v = self.means[i % cols];
            }
        }
        Ok(ds.with_features(x))
    }

    /// [`apply`](Self::apply) for rows that must not have contributed to the fit.
    pub fn apply_holdout(&self, ds: &Dataset) -> Result<Dataset> {
        self.fitted_on.check_disjoint(ds)?;
        self.apply(ds)
    }
}

/// Fills each missing cell with its column's mean over non-missing cells.
pub fn impute_mean(ds: &Dataset) -> Result<Dataset> {
    ImputeStats::fit(ds)?.apply(ds)
}

/// Per-feature z-score parameters. A zero `std` marks a constant column,
/// which maps to all zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    n_fitted: usize,
    fitted_on: FittedRows,
}

const CONSTANT_REL_STD: f64 = 1e-12;

impl Standardizer {
    /// Population (divide-by-n) statistics.
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.missing_count() > 0 {
            return Err(Error::invalid("standardize requires a dataset without missing values"));
        }
        if ds.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, actual: 0 });
        }
        let x = ds.features();
        let n = x.rows() as f64;
        let mut mean = vec![0.0; x.cols()];
        let mut std = vec![0.0; x.cols()];
        for c in 0..x.cols() {
            let m = x.column(c).sum::<f64>() / n;
            let var = x.column(c).map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[c] = m;
            std[c] = Self::nonconstant(m, var.sqrt());
        }
        Ok(Self {
            mean,
            std,
            n_fitted: x.rows(),
            fitted_on: FittedRows::of(ds),
        })
    }

    fn nonconstant(mean: f64, std: f64) -> f64 {
        if std <= CONSTANT_REL_STD * mean.abs().max(1.0) {
            0.0
        } else {
            std
        }
    }

    /// Exact pooled statistics of the union of the fitted sets, combining
    /// each part's count, mean and variance.
    pub fn pooled(parts: &[Standardizer]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::invalid("no statistics to pool"))?;
        let cols = first.mean.len();
        if parts.iter().any(|p| p.mean.len() != cols) {
            return Err(Error::invalid("cannot pool statistics of different widths"));
        }
        let total: usize = parts.iter().map(|p| p.n_fitted).sum();
        let mut mean = vec![0.0; cols];
        let mut std = vec![0.0; cols];
        for c in 0..cols {
            let m = parts.iter().map(|p| p.n_fitted as f64 * p.mean[c]).sum::<f64>() / total as f64;
            let second = parts
                .iter()
                .map(|p| {
                    let d = p.mean[c] - m;
                    p.n_fitted as f64 * (p.std[c] * p.std[c] + d * d)
                })
                .sum::<f64>()
                / total as f64;
            mean[c] = m;
            std[c] = Self::nonconstant(m, second.sqrt());
        }
        Ok(Self {
            mean,
            std,
            n_fitted: total,
            fitted_on: FittedRows::union(parts.iter().map(|p| p.fitted_on.clone())),
        })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if self.mean.len() != ds.n_features() {
            return Err(Error::shape(format!("{} columns", self.mean.len()), ds.n_features()));
        }
        let mut x = ds.features().clone();
        let cols = x.cols();
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            let c = i % cols;
            *v = if self.std[c] == 0.0 {
                0.0
            } else {
                (*v - self.mean[c]) / self.std[c]
            };
        }
        Ok(ds.with_features(x))
    }

    pub fn apply_holdout(&self, ds: &Dataset) -> Result<Dataset> {
        self.fitted_on.check_disjoint(ds)?;
        self.apply(ds)
    }
}

pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    let stats = Standardizer::fit(ds)?;
    Ok((stats.apply(ds)?, stats))
}

/// Relative size below which the within-group sum of squares counts as zero.
const ZERO_WITHIN_REL: f64 = 1e-12;

/// One-way ANOVA F statistic of each feature against the class label.
///
/// `F = (SSB / (k-1)) / (SSW / (n-k))` over the `k` classes present. A feature
/// with zero within-group variance gets `+inf` when the group means differ and
/// `0` when they do not.
pub fn anova_f_scores(ds: &Dataset) -> Result<Vec<f64>> {
    if ds.missing_count() > 0 {
        return Err(Error::invalid("anova requires a dataset without missing values"));
    }
    let counts = ds.class_counts();
    let present: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
    let k = present.len();
    if k < 2 {
        return Err(Error::SingleClass(k));
    }
    let n = ds.n_samples();
    if n <= k {
        return Err(Error::TooFewSamples {
            needed: k + 1,
            actual: n,
        });
    }
    let x = ds.features();
    let labels = ds.labels();
    let mut scores = Vec::with_capacity(x.cols());
    let mut sums = vec![0.0; counts.len()];
    for c in 0..x.cols() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let mut total = 0.0;
        for (v, &l) in x.column(c).zip(labels) {
            sums[l] += v;
            total += v;
        }
        let grand = total / n as f64;
        let mut ssb = 0.0;
        for &g in &present {
            let d = sums[g] / counts[g] as f64 - grand;
            ssb += counts[g] as f64 * d * d;
        }
        let mut ssw = 0.0;
        for (v, &l) in x.column(c).zip(labels) {
            let d = v - sums[l] / counts[l] as f64;
            ssw += d * d;
        }
        let f = if ssw <= ZERO_WITHIN_REL * (ssb + ssw) {
            if ssb > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            (ssb / (k - 1) as f64) / (ssw / (n - k) as f64)
        };
        scores.push(f);
    }
    Ok(scores)
}

/// Columns kept after dropping the lowest-scoring features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub keep: Vec<usize>,
    pub scores: Vec<f64>,
}

impl FeatureSelection {
    /// Drops the `drop_k_lowest` smallest F scores; ties drop the lower column first.
    pub fn fit(ds: &Dataset, drop_k_lowest: usize) -> Result<Self> {
        if drop_k_lowest >= ds.n_features() {
            return Err(Error::invalid(format!(
                "cannot drop {drop_k_lowest} of {} features",
                ds.n_features()
            )));
        }
        if drop_k_lowest == 0 {
            return Ok(Self {
                keep: (0..ds.n_features()).collect(),
                scores: Vec::new(),
            });
        }
        let scores = anova_f_scores(ds)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut keep: Vec<usize> = order[drop_k_lowest..].to_vec();
        keep.sort_unstable();
        Ok(Self { keep, scores })
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        if self.keep.len() == ds.n_features() {
            return ds.clone();
        }
        ds.select_columns(&self.keep)
    }
}

pub fn select_features(ds: &Dataset, drop_k_lowest: usize) -> Result<Dataset> {
    Ok(FeatureSelection::fit(ds, drop_k_lowest)?.apply(ds))
}

/// Random oversampling with replacement until every present class matches
/// the majority count. Original rows are all kept; the result is shuffled.
pub fn upsample(ds: &Dataset, rng: &mut RngStream) -> Dataset {
    let counts = ds.class_counts();
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut idx: Vec<usize> = (0..ds.n_samples()).collect();
    for members in by_class.iter().filter(|m| !m.is_empty()) {
        for _ in members.len()..target {
            idx.push(members[rng.below(members.len() as u64) as usize]);
        }
    }
    rng.shuffle(&mut idx);
    ds.select_rows(&idx)
}

/// Shuffled split with `round(train_fraction · n)` training rows (kept within `1..n`).
pub fn train_test_split(ds: &Dataset, train_fraction: f64, rng: &mut RngStream) -> Result<(Dataset, Dataset)> {
    let n = ds.n_samples();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, actual: n });
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let perm = rng.permutation(n);
    Ok((ds.select_rows(&perm[..n_train]), ds.select_rows(&perm[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy;

    #[test]
    fn impute_midpoint_and_mean() {
        let ds = toy(
            &[vec![1.0, 2.0], vec![f64::NAN, 4.0], vec![3.0, f64::NAN], vec![7.0, 6.0]],
            &[0, 1, 0, 1],
        );
        let out = impute_mean(&ds).unwrap();
        assert_eq!(out.missing_count(), 0);
        // column 0 mean of [1, 3, 7]; column 1 mean of [2, 4, 6]
        assert_eq!(out.features().get(1, 0), 11.0 / 3.0);
        assert_eq!(out.features().get(2, 1), 4.0);
        assert_eq!(out.features().get(0, 0), 1.0);

        let mid = toy(&[vec![1.0], vec![f64::NAN], vec![3.0]], &[0, 1, 0]);
        assert_eq!(impute_mean(&mid).unwrap().features().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn impute_identity_without_missing() {
        let ds = toy(&[vec![0.1, -0.0], vec![0.3, 5.0]], &[0, 1]);
        assert_eq!(impute_mean(&ds).unwrap(), ds);
    }

    #[test]
    fn impute_all_missing_names_column() {
        let ds = toy(&[vec![1.0, f64::NAN], vec![2.0, f64::NAN]], &[0, 1]);
        match impute_mean(&ds) {
            Err(Error::AllMissingColumn(name)) => assert_eq!(name, "f1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zscore_fixture() {
        let ds = toy(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]], &[0, 1, 0]);
        let (z, stats) = standardize(&ds).unwrap();
        // population std of [1,2,3] is sqrt(2/3); z = ±1/sqrt(2/3) = ±1.2247448713915890
        assert!((z.features().get(0, 0) + 1.224744871391589).abs() < 1e-12);
        assert_eq!(z.features().get(1, 0), 0.0);
        assert!((z.features().get(2, 0) - 1.224744871391589).abs() < 1e-12);
        assert!(z.features().column(1).all(|v| v == 0.0));
        assert_eq!(stats.apply(&ds).unwrap(), z);
    }

    #[test]
    fn holdout_rows_must_be_unseen() {
        let ds = toy(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]], &[0, 1, 0, 1]);
        let train = ds.select_rows(&[0, 1, 2]);
        let test = ds.select_rows(&[3]);
        let stats = Standardizer::fit(&train).unwrap();
        assert!(stats.apply_holdout(&test).is_ok());
        assert!(matches!(stats.apply_holdout(&ds), Err(Error::Leakage(_))));
    }

    #[test]
    fn pooled_equals_global_fit() {
        let ds = toy(
            &[
                vec![1.0, 0.5],
                vec![2.0, 0.1],
                vec![4.0, 0.7],
                vec![8.0, 0.2],
                vec![3.0, 0.9],
            ],
            &[0, 1, 0, 1, 0],
        );
        let a = Standardizer::fit(&ds.select_rows(&[0, 1])).unwrap();
        let b = Standardizer::fit(&ds.select_rows(&[2, 3, 4])).unwrap();
        let pooled = Standardizer::pooled(&[a, b]).unwrap();
        let global = Standardizer::fit(&ds).unwrap();
        for c in 0..2 {
            assert!((pooled.mean[c] - global.mean[c]).abs() < 1e-12);
            assert!((pooled.std[c] - global.std[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn anova_fixtures() {
        // groups A=[1,2,3], B=[4,5,6]: SSB 13.5 on 1 df, SSW 4 on 4 df
        let ds = toy(
            &[
                vec![1.0, 7.0],
                vec![2.0, 7.0],
                vec![3.0, 7.0],
                vec![4.0, 7.0],
                vec![5.0, 7.0],
                vec![6.0, 7.0],
            ],
            &[0, 0, 0, 1, 1, 1],
        );
        let f = anova_f_scores(&ds).unwrap();
        assert_eq!(f[0], 13.5);
        assert_eq!(f[1], 0.0);

        let sep = toy(&[vec![0.0], vec![0.0], vec![1.0], vec![1.0]], &[0, 0, 1, 1]);
        assert_eq!(anova_f_scores(&sep).unwrap(), vec![f64::INFINITY]);
    }

    #[test]
    fn anova_errors() {
        let one = toy(&[vec![0.0], vec![1.0]], &[1, 1]);
        assert!(matches!(anova_f_scores(&one), Err(Error::SingleClass(1))));
        let tiny = toy(&[vec![0.0], vec![1.0]], &[0, 1]);
        assert!(anova_f_scores(&tiny).is_err());
    }

    #[test]
    fn select_drops_lowest_with_index_ties() {
        let ds = toy(
            &[
                vec![1.0, 0.0, 0.0, 0.5],
                vec![2.0, 0.0, 0.0, 0.4],
                vec![3.0, 0.0, 0.0, 0.1],
                vec![9.0, 0.0, 0.0, 0.2],
            ],
            &[0, 0, 1, 1],
        );
        // columns 1 and 2 tie at F = 0; the lower index goes first
        let out = select_features(&ds, 1).unwrap();
        assert_eq!(out.feature_names(), &["f0", "f2", "f3"]);
        assert_eq!(select_features(&ds, 0).unwrap(), ds);
        assert!(select_features(&ds, 4).is_err());
    }

    #[test]
    fn upsample_matches_majority() {
        let rows: Vec<Vec<f64>> = (0..14).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..14).map(|i| usize::from(i >= 10)).collect();
        let ds = toy(&rows, &labels);
        let mut rng = RngStream::new(1, 1);
        let up = upsample(&ds, &mut rng);
        assert_eq!(up.class_counts(), vec![10, 10]);
        let mut ids = up.row_ids().to_vec();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 14, "every original row retained");

        let balanced = toy(&[vec![0.0], vec![1.0]], &[0, 1]);
        assert_eq!(upsample(&balanced, &mut rng).class_counts(), vec![1, 1]);
    }

    #[test]
    fn split_sizes_and_partition() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ds = toy(&rows, &[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let (tr, te) = train_test_split(&ds, 0.8, &mut RngStream::new(4, 0)).unwrap();
        assert_eq!((tr.n_samples(), te.n_samples()), (8, 2));
        let mut all: Vec<u64> = tr.row_ids().iter().chain(te.row_ids()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let (tr2, _) = train_test_split(&ds, 0.8, &mut RngStream::new(4, 0)).unwrap();
        assert_eq!(tr, tr2);
    }
}
