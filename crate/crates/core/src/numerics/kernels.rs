//! Activations and losses shared by the MLP, the tree aggregator and GBDT.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-12;

pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("softmax input contains {bad}")));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Unchecked variant for hot loops; input must be finite.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Elementwise `-(t ln p + (1-t) ln(1-p))`, summed.
    BinaryCrossEntropy,
    /// `-Σ t_k ln p_k` with `t` one-hot (or any distribution).
    MulticlassCrossEntropy,
    /// `½ Σ (p - t)²`.
    SquaredError,
}

/// Loss of one prediction vector against its target and the gradient with
/// respect to the prediction.
pub fn loss_and_grad(kind: LossKind, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(format!("{} targets", pred.len()), target.len()));
    }
    let mut grad = vec![0.0; pred.len()];
    let loss = match kind {
        LossKind::BinaryCrossEntropy => {
            let mut loss = 0.0;
            for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(target) {
                let pc = clamp_prob(p);
                loss -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
                *g = -t / pc + (1.0 - t) / (1.0 - pc);
            }
            loss
        }
        LossKind::MulticlassCrossEntropy => {
            let mut loss = 0.0;
            for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(target) {
                let pc = clamp_prob(p);
                loss -= t * pc.ln();
                *g = -t / pc;
            }
            loss
        }
        LossKind::SquaredError => {
            let mut loss = 0.0;
            for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(target) {
                let d = p - t;
                loss += 0.5 * d * d;
                *g = d;
            }
            loss
        }
    };
    Ok((loss, grad))
}

/// Loss only, with the same conventions as [`loss_and_grad`] and no checks.
pub fn loss_value(kind: LossKind, pred: &[f64], target: &[f64]) -> f64 {
    match kind {
        LossKind::BinaryCrossEntropy => pred
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let pc = clamp_prob(p);
                -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln())
            })
            .sum(),
        LossKind::MulticlassCrossEntropy => pred
            .iter()
            .zip(target)
            .filter(|(_, &t)| t != 0.0)
            .map(|(&p, &t)| -t * clamp_prob(p).ln())
            .sum(),
        LossKind::SquaredError => pred.iter().zip(target).map(|(&p, &t)| 0.5 * (p - t) * (p - t)).sum(),
    }
}
