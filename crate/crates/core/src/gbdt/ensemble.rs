use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, RegressionTree, TreeParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{clamp_prob, sigmoid, softmax_in_place, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_rounds: 20,
            max_depth: 3,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::invalid("n_rounds must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0 && self.min_child_weight >= 0.0) {
            return Err(Error::invalid(
                "lambda, gamma and min_child_weight must be non-negative",
            ));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
        }
    }
}

/// Boosted trees. Binary models have one margin channel; multiclass models
/// have one channel per class and store, for each round, one tree per class
/// (tree `r * n_channels + c` belongs to round `r`, channel `c`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<RegressionTree>,
    pub n_classes: usize,
    pub n_features: usize,
    pub learning_rate: f64,
    /// Initial margin per channel.
    pub base_score: Vec<f64>,
}

pub fn channels_for(n_classes: usize) -> usize {
    if n_classes == 2 {
        1
    } else {
        n_classes
    }
}

impl TreeEnsemble {
    pub fn n_channels(&self) -> usize {
        channels_for(self.n_classes)
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len() / self.n_channels()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ens: TreeEnsemble = serde_json::from_str(s)?;
        ens.validate()?;
        Ok(ens)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::SingleClass(self.n_classes));
        }
        if self.base_score.len() != self.n_channels() {
            return Err(Error::shape(
                format!("{} base scores", self.n_channels()),
                self.base_score.len(),
            ));
        }
        if self.trees.len() % self.n_channels() != 0 {
            return Err(Error::invalid(format!(
                "{} trees do not fill whole rounds of {} classes",
                self.trees.len(),
                self.n_channels()
            )));
        }
        for (i, t) in self.trees.iter().enumerate() {
            if !t.is_well_formed() {
                return Err(Error::invalid(format!("tree {i} is malformed")));
            }
            for node in &t.nodes {
                if let super::Node::Split { feature, .. } = node {
                    if *feature >= self.n_features {
                        return Err(Error::invalid(format!("tree {i} splits on feature {feature}")));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.n_features {
            return Err(Error::shape(format!("{} features", self.n_features), batch.cols()));
        }
        Ok(())
    }

    /// `base + η · Σ leaf` per channel, accumulated in round order.
    pub fn predict_margin(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_batch(batch)?;
        let c = self.n_channels();
        let mut out = Matrix::zeros(batch.rows(), c);
        for i in 0..batch.rows() {
            out.row_mut(i).copy_from_slice(&self.base_score);
        }
        for (t, tree) in self.trees.iter().enumerate() {
            let ch = t % c;
            for i in 0..batch.rows() {
                let v = self.learning_rate * tree.predict_row(batch.row(i));
                out.row_mut(i)[ch] += v;
            }
        }
        Ok(out)
    }

    /// Class probabilities: `[1 - p, p]` for binary, softmax otherwise.
    pub fn predict_proba(&self, batch: &Matrix) -> Result<Matrix> {
        margins_to_proba(&self.predict_margin(batch)?, self.n_classes)
    }

    /// Unscaled leaf value of every tree for one sample, channel-major:
    /// entry `c * n_rounds + r` is the tree of round `r`, channel `c`.
    pub fn tree_prediction_vector(&self, row: &[f64]) -> Result<Vec<f64>> {
        if self.trees.is_empty() {
            return Err(Error::invalid("empty ensemble"));
        }
        if row.len() != self.n_features {
            return Err(Error::shape(format!("{} features", self.n_features), row.len()));
        }
        let c = self.n_channels();
        let r = self.n_rounds();
        let mut out = vec![0.0; self.trees.len()];
        for (t, tree) in self.trees.iter().enumerate() {
            out[(t % c) * r + t / c] = tree.predict_row(row);
        }
        Ok(out)
    }

    /// [`Self::tree_prediction_vector`] for every row of `batch`.
    pub fn tree_prediction_matrix(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_batch(batch)?;
        let mut out = Matrix::zeros(batch.rows(), self.trees.len());
        for i in 0..batch.rows() {
            out.row_mut(i)
                .copy_from_slice(&self.tree_prediction_vector(batch.row(i))?);
        }
        Ok(out)
    }

    /// Appends the rounds of every part in order. Parts must share classes,
    /// features and learning rate; the base score is the `weights`-weighted mean.
    pub fn concat(parts: &[TreeEnsemble], weights: &[f64]) -> Result<TreeEnsemble> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        if weights.len() != parts.len() {
            return Err(Error::shape(format!("{} weights", parts.len()), weights.len()));
        }
        let total: f64 = weights.iter().sum();
        let mut base = vec![0.0; first.n_channels()];
        let mut trees = Vec::new();
        for (p, &w) in parts.iter().zip(weights) {
            if p.n_classes != first.n_classes || p.n_features != first.n_features {
                return Err(Error::invalid("ensembles disagree on classes or features"));
            }
            if p.learning_rate != first.learning_rate {
                return Err(Error::invalid("ensembles disagree on learning rate"));
            }
            for (b, &pb) in base.iter_mut().zip(&p.base_score) {
                *b += w / total * pb;
            }
            trees.extend(p.trees.iter().cloned());
        }
        Ok(TreeEnsemble {
            trees,
            base_score: base,
            ..first.clone()
        })
    }
}

pub(crate) fn margins_to_proba(margins: &Matrix, n_classes: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(margins.rows(), n_classes);
    for i in 0..margins.rows() {
        let m = margins.row(i);
        let o = out.row_mut(i);
        if n_classes == 2 {
            let p = sigmoid(m[0]);
            o[0] = 1.0 - p;
            o[1] = p;
        } else {
            o.copy_from_slice(m);
            softmax_in_place(o);
        }
    }
    Ok(out)
}

/// Per-channel starting margin: log-odds of the positive rate (binary) or log class priors.
fn default_base_score(ds: &Dataset) -> Vec<f64> {
    let counts = ds.class_counts();
    let n = ds.n_samples() as f64;
    let clamp = |p: f64| p.clamp(1e-6, 1.0 - 1e-6);
    if ds.n_classes() == 2 {
        let p = clamp(counts[1] as f64 / n);
        vec![(p / (1.0 - p)).ln()]
    } else {
        counts.iter().map(|&c| clamp(c as f64 / n).ln()).collect()
    }
}

/// Mean training log-loss of the given margins.
pub fn margin_log_loss(margins: &Matrix, labels: &[usize], n_classes: usize) -> f64 {
    let probs = margins_to_proba(margins, n_classes).unwrap_or_else(|_| Matrix::zeros(0, 0));
    let n = labels.len().max(1) as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -clamp_prob(probs.get(i, l)).ln())
        .sum::<f64>()
        / n
}

pub fn train_trees(ds: &Dataset, cfg: &GbdtConfig, init_margin: Option<&[f64]>) -> Result<TreeEnsemble> {
    train_trees_traced(ds, cfg, init_margin).map(|(e, _)| e)
}

/// Like [`train_trees`], also returning the mean training log-loss before the
/// first round and after every round.
pub fn train_trees_traced(
    ds: &Dataset,
    cfg: &GbdtConfig,
    init_margin: Option<&[f64]>,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if ds.n_classes() < 2 {
        return Err(Error::SingleClass(ds.n_classes()));
    }
    let c = channels_for(ds.n_classes());
    let base = match init_margin {
        Some(m) if m.len() != c => return Err(Error::shape(format!("{c} initial margins"), m.len())),
        Some(m) => m.to_vec(),
        None => default_base_score(ds),
    };
    let x = ds.features();
    let n = ds.n_samples();
    let labels = ds.labels();
    let params = cfg.tree_params();

    let mut margins = Matrix::zeros(n, c);
    for i in 0..n {
        margins.row_mut(i).copy_from_slice(&base);
    }
    let mut trace = vec![margin_log_loss(&margins, labels, ds.n_classes())];
    let mut trees = Vec::with_capacity(cfg.n_rounds * c);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut probs = vec![0.0; c];
    for _ in 0..cfg.n_rounds {
        let round_margins = margins.clone();
        for ch in 0..c {
            for i in 0..n {
                let m = round_margins.row(i);
                let (p, y, h_scale) = if c == 1 {
                    (sigmoid(m[0]), (labels[i] == 1) as u8 as f64, 1.0)
                } else {
                    probs.copy_from_slice(m);
                    softmax_in_place(&mut probs);
                    (probs[ch], (labels[i] == ch) as u8 as f64, 2.0)
                };
                grad[i] = p - y;
                hess[i] = (h_scale * p * (1.0 - p)).max(1e-16);
            }
            let tree = grow_tree(x, &grad, &hess, &params);
            for i in 0..n {
                margins.row_mut(i)[ch] += cfg.learning_rate * tree.predict_row(x.row(i));
            }
            trees.push(tree);
        }
        trace.push(margin_log_loss(&margins, labels, ds.n_classes()));
    }
    Ok((
        TreeEnsemble {
            trees,
            n_classes: ds.n_classes(),
            n_features: ds.n_features(),
            learning_rate: cfg.learning_rate,
            base_score: base,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy;
    use crate::gbdt::Node;
    use crate::numerics::RngStream;

    fn stump(feature: usize, threshold: f64, lo: f64, hi: f64) -> RegressionTree {
        RegressionTree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                },
                Node::Leaf { weight: lo },
                Node::Leaf { weight: hi },
            ],
            max_depth: 1,
        }
    }

    #[test]
    fn constant_label_fits_in_one_round() {
        let ds = toy(&[vec![1.0], vec![2.0], vec![3.0]], &[1, 1, 1]);
        let cfg = GbdtConfig {
            n_rounds: 1,
            ..Default::default()
        };
        let ens = train_trees(&ds, &cfg, None).unwrap();
        let p = ens.predict_proba(ds.features()).unwrap();
        assert!((0..3).all(|i| p.get(i, 1) >= 0.99));
    }

    #[test]
    fn threshold_rule_recovered() {
        let rows: Vec<Vec<f64>> = (-10..10).map(|v| vec![v as f64 + 0.5]).collect();
        let labels: Vec<usize> = rows.iter().map(|r| (r[0] >= 0.0) as usize).collect();
        let ds = toy(&rows, &labels);
        let ens = train_trees(&ds, &GbdtConfig::default(), None).unwrap();
        match ens.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.0);
            }
            _ => panic!("root should split"),
        }
        let p = ens.predict_proba(ds.features()).unwrap();
        assert!((0..20).all(|i| (p.get(i, 1) >= 0.5) == (labels[i] == 1)));
    }

    #[test]
    fn hand_built_margins() {
        let ens = TreeEnsemble {
            trees: vec![stump(0, 0.0, -1.0, 2.0)],
            n_classes: 2,
            n_features: 1,
            learning_rate: 0.5,
            base_score: vec![0.25],
        };
        let x = Matrix::from_rows(&[vec![-3.0], vec![3.0]]).unwrap();
        let m = ens.predict_margin(&x).unwrap();
        assert_eq!(m.data(), &[0.25 - 0.5, 0.25 + 1.0]);
        assert_eq!(ens.tree_prediction_vector(&[3.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn base_only_margin() {
        let ens = TreeEnsemble {
            trees: vec![],
            n_classes: 3,
            n_features: 2,
            learning_rate: 0.3,
            base_score: vec![0.1, 0.2, 0.3],
        };
        let m = ens.predict_margin(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(m.row(1), &[0.1, 0.2, 0.3]);
        assert!(ens.tree_prediction_vector(&[0.0, 0.0]).is_err());
        assert!(ens.predict_margin(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn multiclass_layout_is_channel_major() {
        // 3 rounds x 3 classes; tree (r, c) is a constant leaf 10r + c
        let mut trees = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                trees.push(RegressionTree::leaf((10 * r + c) as f64));
            }
        }
        let ens = TreeEnsemble {
            trees,
            n_classes: 3,
            n_features: 1,
            learning_rate: 1.0,
            base_score: vec![0.0; 3],
        };
        let v = ens.tree_prediction_vector(&[0.0]).unwrap();
        assert_eq!(v, vec![0.0, 10.0, 20.0, 1.0, 11.0, 21.0, 2.0, 12.0, 22.0]);
    }

    #[test]
    fn margin_is_linear_in_trees() {
        let spec = crate::data::SyntheticSpec {
            n_samples: 300,
            n_features: 4,
            ..Default::default()
        };
        let ds = crate::data::synthesize(&spec, &mut RngStream::new(3, 0)).unwrap();
        let ens = train_trees(&ds, &GbdtConfig::default(), None).unwrap();
        let m = ens.predict_margin(ds.features()).unwrap();
        for i in 0..ds.n_samples() {
            let v = ens.tree_prediction_vector(ds.features().row(i)).unwrap();
            let mut acc = ens.base_score[0];
            for leaf in v {
                acc += ens.learning_rate * leaf;
            }
            assert_eq!(acc, m.get(i, 0));
        }
    }

    #[test]
    fn multiclass_tree_count_and_descent() {
        let spec = crate::data::SyntheticSpec {
            n_samples: 300,
            n_features: 4,
            n_classes: 4,
            class_priors: vec![0.25; 4],
            ..Default::default()
        };
        let ds = crate::data::synthesize(&spec, &mut RngStream::new(6, 0)).unwrap();
        let cfg = GbdtConfig {
            n_rounds: 7,
            ..Default::default()
        };
        let (ens, trace) = train_trees_traced(&ds, &cfg, None).unwrap();
        assert_eq!(ens.trees.len(), 28);
        assert_eq!(ens.n_rounds(), 7);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");
        let p = ens.predict_proba(ds.features()).unwrap();
        assert!((0..p.rows()).all(|i| (p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let ds = toy(
            &[vec![1.0, 0.0], vec![2.0, 1.0], vec![3.0, 0.0], vec![4.0, 1.0]],
            &[0, 0, 1, 1],
        );
        let cfg = GbdtConfig {
            n_rounds: 3,
            min_child_weight: 0.0,
            ..Default::default()
        };
        let ens = train_trees(&ds, &cfg, None).unwrap();
        let back = TreeEnsemble::from_json(&ens.to_json().unwrap()).unwrap();
        assert_eq!(back, ens);
        let mut bad = ens.clone();
        bad.base_score.push(0.0);
        assert!(TreeEnsemble::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn concat_keeps_order() {
        let a = TreeEnsemble {
            trees: vec![RegressionTree::leaf(1.0), RegressionTree::leaf(2.0)],
            n_classes: 2,
            n_features: 1,
            learning_rate: 0.3,
            base_score: vec![1.0],
        };
        let b = TreeEnsemble {
            trees: vec![RegressionTree::leaf(3.0)],
            base_score: vec![-1.0],
            ..a.clone()
        };
        let g = TreeEnsemble::concat(&[a.clone(), b], &[3.0, 1.0]).unwrap();
        assert_eq!(g.tree_prediction_vector(&[0.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(g.base_score, vec![0.5]);
        let c = TreeEnsemble {
            learning_rate: 0.1,
            ..a.clone()
        };
        assert!(TreeEnsemble::concat(&[a, c], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn init_margin_overrides_base() {
        let ds = toy(&[vec![1.0], vec![2.0]], &[0, 1]);
        let ens = train_trees(&ds, &GbdtConfig::default(), Some(&[0.7])).unwrap();
        assert_eq!(ens.base_score, vec![0.7]);
        assert!(train_trees(&ds, &GbdtConfig::default(), Some(&[0.7, 0.1])).is_err());
    }
}
