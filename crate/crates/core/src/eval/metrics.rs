use super::RatingScale;
use crate::data::LabelKind;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Probability that a random positive outranks a random negative, ties counted ½.
///
/// Counted exactly in integers (twice the Mann-Whitney U) over sorted tie
/// groups, then divided once.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::shape(format!("{} labels", scores.len()), positive.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("AUC scores contain NaN"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as u128;
    let n_neg = positive.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(1));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if positive[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Mean squared difference of integer grades.
pub fn mse_rating(pred: &[usize], truth: &[usize], scale: &RatingScale) -> Result<f64> {
    mse_classes(pred, truth, scale.len())
}

pub(crate) fn mse_classes(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions", truth.len()), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::invalid("MSE of no predictions"));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&c| c >= n_classes) {
        return Err(Error::invalid(format!("class {bad} outside 0..{n_classes}")));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Probability mass on investment grades (AAA through BBB-).
pub fn investment_score(class_probs: &[f64], scale: &RatingScale) -> Result<f64> {
    if class_probs.len() != scale.len() {
        return Err(Error::shape(
            format!("{} grade probabilities", scale.len()),
            class_probs.len(),
        ));
    }
    let total: f64 = class_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 || class_probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::invalid(format!("grade probabilities sum to {total}")));
    }
    let s: f64 = class_probs[..=scale.investment_cutoff()].iter().sum();
    Ok(s.clamp(0.0, 1.0))
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}

/// AUC and, for multiclass labels, ordinal MSE of argmax predictions.
///
/// Binary: score = P(class 1). Rating: score = investment-grade probability
/// mass, positive = investment grade. Other multiclass: macro one-vs-rest AUC
/// over classes present with both outcomes.
pub fn evaluate_probs(probs: &Matrix, labels: &[usize], kind: LabelKind) -> Result<(f64, Option<f64>)> {
    if probs.rows() != labels.len() {
        return Err(Error::shape(format!("{} probability rows", labels.len()), probs.rows()));
    }
    let k = probs.cols();
    match kind {
        LabelKind::Binary => {
            let scores: Vec<f64> = (0..probs.rows()).map(|i| probs.get(i, 1)).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            Ok((auc(&scores, &pos)?, None))
        }
        LabelKind::Rating => {
            let scale = RatingScale::default();
            let scores = (0..probs.rows())
                .map(|i| investment_score(probs.row(i), &scale))
                .collect::<Result<Vec<_>>>()?;
            let pos: Vec<bool> = labels.iter().map(|&l| scale.is_investment_grade(l)).collect();
            let pred: Vec<usize> = (0..probs.rows()).map(|i| argmax(probs.row(i))).collect();
            Ok((auc(&scores, &pos)?, Some(mse_rating(&pred, labels, &scale)?)))
        }
        LabelKind::Multiclass => {
            let mut aucs = Vec::new();
            for c in 0..k {
                let scores: Vec<f64> = (0..probs.rows()).map(|i| probs.get(i, c)).collect();
                let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                if let Ok(a) = auc(&scores, &pos) {
                    aucs.push(a);
                }
            }
            if aucs.is_empty() {
                return Err(Error::SingleClass(1));
            }
            let pred: Vec<usize> = (0..probs.rows()).map(|i| argmax(probs.row(i))).collect();
            let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
            Ok((mean, Some(mse_classes(&pred, labels, k)?)))
        }
    }
}

/// `100 · (fed − baseline) / baseline`.
pub fn improvement(fed: f64, baseline: f64) -> Result<f64> {
    if baseline.is_nan() || baseline <= 0.0 {
        return Err(Error::invalid(format!("baseline {baseline} must be positive")));
    }
    Ok(100.0 * (fed - baseline) / baseline)
}
