use serde::{Deserialize, Serialize};

use super::ensemble::channels_for;
use crate::error::{Error, Result};
use crate::model::{check_inputs, sgd_train, Architecture, Objective, ParamVector, TrainConfig};
use crate::numerics::{sigmoid, softmax_in_place, Matrix, RngStream};

/// Aggregator over tree-prediction vectors.
///
/// A kernel-1 convolution along the tree axis gives every tree of every
/// channel its own scalar weight (a learnable per-tree learning rate); the
/// weighted sum per channel plus a channel bias feeds a dense layer to the
/// logits. Binary models have one channel and one sigmoid output; multiclass
/// models have one channel per class and a softmax head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnArchitecture {
    pub n_trees: usize,
    pub n_classes: usize,
}

impl CnnArchitecture {
    pub fn new(n_trees: usize, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::SingleClass(n_classes));
        }
        if n_trees == 0 {
            return Err(Error::invalid("the aggregator needs at least one tree"));
        }
        Ok(Self { n_trees, n_classes })
    }

    pub fn n_channels(&self) -> usize {
        channels_for(self.n_classes)
    }

    pub fn n_outputs(&self) -> usize {
        channels_for(self.n_classes)
    }

    /// Input length: trees per channel times channels.
    pub fn input_width(&self) -> usize {
        self.n_trees * self.n_channels()
    }

    /// Conv weights (`channels × trees`), channel biases, dense weights
    /// (`channels × outputs`, input-major), dense biases.
    pub fn param_count(&self) -> usize {
        let c = self.n_channels();
        let o = self.n_outputs();
        c * self.n_trees + c + c * o + o
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let c = self.n_channels();
        let conv_b = c * self.n_trees;
        let dense_w = conv_b + c;
        let dense_b = dense_w + c * self.n_outputs();
        (0, conv_b, dense_w, dense_b)
    }
}

#[derive(Clone, Debug)]
pub struct Cnn {
    arch: CnnArchitecture,
}

impl Cnn {
    pub fn new(arch: CnnArchitecture) -> Self {
        Self { arch }
    }

    pub fn architecture(&self) -> &CnnArchitecture {
        &self.arch
    }

    /// Channel sums and output logits for every row.
    fn forward_parts(&self, params: &[f64], x: &Matrix) -> (Matrix, Matrix) {
        let r = self.arch.n_trees;
        let c = self.arch.n_channels();
        let o = self.arch.n_outputs();
        let (conv_w, conv_b, dense_w, dense_b) = self.arch.offsets();
        let mut h = Matrix::zeros(x.rows(), c);
        let mut z = Matrix::zeros(x.rows(), o);
        for i in 0..x.rows() {
            let row = x.row(i);
            let hr = h.row_mut(i);
            for ch in 0..c {
                let mut acc = params[conv_b + ch];
                let w = &params[conv_w + ch * r..conv_w + (ch + 1) * r];
                for (wt, xt) in w.iter().zip(&row[ch * r..(ch + 1) * r]) {
                    acc += wt * xt;
                }
                hr[ch] = acc;
            }
            let zr = z.row_mut(i);
            zr.copy_from_slice(&params[dense_b..dense_b + o]);
            for ch in 0..c {
                for k in 0..o {
                    zr[k] += h.get(i, ch) * params[dense_w + ch * o + k];
                }
            }
        }
        (h, z)
    }

    /// Output logits (margins) per row.
    pub fn margins(&self, params: &[f64], x: &Matrix) -> Result<Matrix> {
        check_inputs(self.arch.input_width(), x, None)?;
        Ok(self.forward_parts(params, x).1)
    }
}

impl Objective for Cnn {
    fn arch(&self) -> Architecture {
        Architecture::Cnn(self.arch.clone())
    }

    fn n_inputs(&self) -> usize {
        self.arch.input_width()
    }

    fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    fn loss_and_gradient(&self, params: &[f64], x: &Matrix, labels: &[usize], grad: &mut [f64]) -> Result<f64> {
        check_inputs(self.n_inputs(), x, Some((labels, self.arch.n_classes)))?;
        if params.len() != self.arch.param_count() || grad.len() != params.len() {
            return Err(Error::shape(
                format!("{} parameters", self.arch.param_count()),
                params.len(),
            ));
        }
        let r = self.arch.n_trees;
        let c = self.arch.n_channels();
        let o = self.arch.n_outputs();
        let (conv_w, conv_b, dense_w, dense_b) = self.arch.offsets();
        let (h, z) = self.forward_parts(params, x);
        let scale = 1.0 / x.rows().max(1) as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let mut dz = vec![0.0; o];
        for i in 0..x.rows() {
            let zr = z.row(i);
            if o == 1 {
                let p = sigmoid(zr[0]);
                let y = (labels[i] == 1) as u8 as f64;
                loss += crate::numerics::loss_value(crate::numerics::LossKind::BinaryCrossEntropy, &[p], &[y]);
                dz[0] = (p - y) * scale;
            } else {
                dz.copy_from_slice(zr);
                softmax_in_place(&mut dz);
                loss -= crate::numerics::clamp_prob(dz[labels[i]]).ln();
                dz[labels[i]] -= 1.0;
                dz.iter_mut().for_each(|d| *d *= scale);
            }
            let row = x.row(i);
            for k in 0..o {
                grad[dense_b + k] += dz[k];
            }
            for ch in 0..c {
                let hc = h.get(i, ch);
                let mut dh = 0.0;
                for k in 0..o {
                    grad[dense_w + ch * o + k] += hc * dz[k];
                    dh += params[dense_w + ch * o + k] * dz[k];
                }
                grad[conv_b + ch] += dh;
                let gw = &mut grad[conv_w + ch * r..conv_w + (ch + 1) * r];
                for (g, xt) in gw.iter_mut().zip(&row[ch * r..(ch + 1) * r]) {
                    *g += dh * xt;
                }
            }
        }
        Ok(loss * scale)
    }

    fn predict(&self, params: &[f64], x: &Matrix) -> Result<Matrix> {
        let z = self.margins(params, x)?;
        let mut out = Matrix::zeros(x.rows(), self.arch.n_classes);
        for i in 0..x.rows() {
            let o = out.row_mut(i);
            if self.arch.n_outputs() == 1 {
                let p = sigmoid(z.get(i, 0));
                o[0] = 1.0 - p;
                o[1] = p;
            } else {
                o.copy_from_slice(z.row(i));
                softmax_in_place(o);
            }
        }
        Ok(out)
    }
}

/// Trained (or warm-started) aggregator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnAggregator {
    pub params: ParamVector,
}

impl CnnAggregator {
    /// Conv weight of every tree in round `r` set to `round_weights[r]`,
    /// channel biases to `base`, identity dense layer. With `round_weights`
    /// all equal to the ensemble learning rate the output margins equal the
    /// ensemble's own margins.
    pub fn warm_start(arch: CnnArchitecture, round_weights: &[f64], base: &[f64]) -> Result<Self> {
        let c = arch.n_channels();
        if round_weights.len() != arch.n_trees {
            return Err(Error::shape(
                format!("{} round weights", arch.n_trees),
                round_weights.len(),
            ));
        }
        if base.len() != c {
            return Err(Error::shape(format!("{c} base scores"), base.len()));
        }
        let (conv_w, conv_b, dense_w, _) = arch.offsets();
        let o = arch.n_outputs();
        let mut values = vec![0.0; arch.param_count()];
        for ch in 0..c {
            values[conv_w + ch * arch.n_trees..conv_w + (ch + 1) * arch.n_trees].copy_from_slice(round_weights);
            values[conv_b + ch] = base[ch];
            values[dense_w + ch * o + ch] = 1.0;
        }
        Ok(Self {
            params: ParamVector::new(values, Architecture::Cnn(arch), 0)?,
        })
    }

    pub fn architecture(&self) -> Result<&CnnArchitecture> {
        match self.params.arch() {
            Architecture::Cnn(a) => Ok(a),
            Architecture::Mlp(_) => Err(Error::ArchitectureMismatch),
        }
    }

    pub fn objective(&self) -> Result<Cnn> {
        Ok(Cnn::new(self.architecture()?.clone()))
    }

    pub fn margins(&self, inputs: &Matrix) -> Result<Matrix> {
        self.objective()?.margins(self.params.values(), inputs)
    }

    pub fn predict_proba(&self, inputs: &Matrix) -> Result<Matrix> {
        self.objective()?.predict(self.params.values(), inputs)
    }
}

/// Mini-batch SGD on (tree-prediction vector, label) pairs.
pub fn cnn_train(
    agg: &CnnAggregator,
    inputs: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(CnnAggregator, Vec<f64>)> {
    let cnn = agg.objective()?;
    let (params, trace) = sgd_train(&cnn, &agg.params, inputs, labels, cfg, rng)?;
    Ok((CnnAggregator { params }, trace))
}
