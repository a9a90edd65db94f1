use serde::{Deserialize, Serialize};

use super::{check_inputs, sgd_train, Architecture, Objective, ParamVector, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{
    axpy, dense_forward, loss_and_grad, loss_value, sigmoid, softmax_in_place, LossKind, Matrix, RngStream,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Softmax,
    /// Single output: probability of class 1.
    Sigmoid,
}

impl Head {
    pub fn natural_loss(self) -> LossKind {
        match self {
            Head::Softmax => LossKind::MulticlassCrossEntropy,
            Head::Sigmoid => LossKind::BinaryCrossEntropy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpArchitecture {
    /// Input width, hidden widths, output width.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl MlpArchitecture {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, head: Head) -> Result<Self> {
        let arch = Self {
            layer_widths,
            activation,
            head,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Sigmoid head for two classes, softmax otherwise.
    pub fn for_task(n_features: usize, hidden: &[usize], activation: Activation, n_classes: usize) -> Result<Self> {
        let (head, out) = if n_classes == 2 {
            (Head::Sigmoid, 1)
        } else {
            (Head::Softmax, n_classes)
        };
        let mut widths = vec![n_features];
        widths.extend_from_slice(hidden);
        widths.push(out);
        Self::new(widths, activation, head)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::invalid("an MLP needs at least an input and an output layer"));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let out = self.output_width();
        match self.head {
            Head::Sigmoid if out != 1 => Err(Error::invalid("a sigmoid head has exactly one output")),
            Head::Softmax if out < 2 => Err(Error::invalid("a softmax head needs at least two outputs")),
            _ => Ok(()),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        self.layer_widths[self.layer_widths.len() - 1]
    }

    pub fn n_classes(&self) -> usize {
        match self.head {
            Head::Sigmoid => 2,
            Head::Softmax => self.output_width(),
        }
    }

    /// Per layer: weights (`in × out`, input-major) followed by biases (`out`).
    pub fn param_count(&self) -> usize {
        self.layer_widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let entry = (off, off + w[0] * w[1], w[0], w[1]);
                off += (w[0] + 1) * w[1];
                entry
            })
            .collect()
    }
}

/// Feed-forward network bound to a loss.
#[derive(Clone, Debug)]
pub struct Mlp {
    arch: MlpArchitecture,
    loss: LossKind,
}

impl Mlp {
    /// Uses the head's natural loss (cross-entropy).
    pub fn new(arch: MlpArchitecture) -> Self {
        let loss = arch.head.natural_loss();
        Self { arch, loss }
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, drawn layer by
    /// layer in storage order; biases zero.
    pub fn init(&self, rng: &mut RngStream) -> ParamVector {
        let mut values = vec![0.0; self.arch.param_count()];
        for (w_off, b_off, fan_in, fan_out) in self.arch.layer_offsets() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut values[w_off..b_off] {
                *v = rng.uniform(-bound, bound);
            }
        }
        ParamVector {
            values,
            arch: Architecture::Mlp(self.arch.clone()),
            sample_count: 0,
        }
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        match params.arch() {
            Architecture::Mlp(a) if *a == self.arch => Ok(()),
            _ => Err(Error::ArchitectureMismatch),
        }
    }

    /// Head outputs: softmax rows, or a single sigmoid column.
    pub fn forward(&self, params: &ParamVector, batch: &Matrix) -> Result<Matrix> {
        self.check_params(params)?;
        check_inputs(self.n_inputs(), batch, None)?;
        Ok(self.activations(params.values(), batch).1)
    }

    /// Gradient of the batch-mean loss against class labels.
    pub fn gradient(&self, params: &ParamVector, batch: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let mut grad = vec![0.0; params.len()];
        self.loss_and_gradient(params.values(), batch, labels, &mut grad)?;
        Ok(grad)
    }

    /// Gradient of the batch-mean loss against explicit output targets (`rows × output width`).
    pub fn gradient_for_targets(
        &self,
        params: &ParamVector,
        batch: &Matrix,
        targets: &Matrix,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        check_inputs(self.arch.input_width(), batch, None)?;
        if targets.rows() != batch.rows() || targets.cols() != self.arch.output_width() {
            return Err(Error::shape(
                format!("{}x{} targets", batch.rows(), self.arch.output_width()),
                format!("{}x{}", targets.rows(), targets.cols()),
            ));
        }
        let mut grad = vec![0.0; params.len()];
        let loss = self.backprop(params.values(), batch, targets, &mut grad)?;
        Ok((loss, grad))
    }

    pub fn train(
        &self,
        params: &ParamVector,
        ds: &Dataset,
        cfg: &TrainConfig,
        rng: &mut RngStream,
    ) -> Result<(ParamVector, Vec<f64>)> {
        sgd_train(self, params, ds.features(), ds.labels(), cfg, rng)
    }

    fn targets(&self, labels: &[usize]) -> Matrix {
        let out = self.arch.output_width();
        let mut t = Matrix::zeros(labels.len(), out);
        for (i, &l) in labels.iter().enumerate() {
            match self.arch.head {
                Head::Sigmoid => t.set(i, 0, l as f64),
                Head::Softmax => t.set(i, l, 1.0),
            }
        }
        t
    }

    /// Hidden activations for every layer plus output probabilities.
    fn activations(&self, params: &[f64], input: &Matrix) -> (Vec<Matrix>, Matrix) {
        let layers = self.arch.layer_offsets();
        let mut hidden = Vec::with_capacity(layers.len() - 1);
        let mut out = Matrix::zeros(0, 0);
        for (l, &(w_off, b_off, _, fan_out)) in layers.iter().enumerate() {
            let prev = if l == 0 { input } else { &hidden[l - 1] };
            let mut z = dense_forward(prev, &params[w_off..b_off], &params[b_off..b_off + fan_out]);
            if l + 1 < layers.len() {
                self.arch.activation.apply(z.data_mut());
                hidden.push(z);
            } else {
                match self.arch.head {
                    Head::Sigmoid => z.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
                    Head::Softmax => {
                        for r in 0..z.rows() {
                            softmax_in_place(z.row_mut(r));
                        }
                    }
                }
                out = z;
            }
        }
        (hidden, out)
    }

    fn backprop(&self, params: &[f64], input: &Matrix, targets: &Matrix, grad: &mut [f64]) -> Result<f64> {
        let (hidden, probs) = self.activations(params, input);
        let rows = input.rows();
        let out_w = probs.cols();
        let scale = 1.0 / rows.max(1) as f64;
        let natural = self.loss == self.arch.head.natural_loss();
        let mut delta = Matrix::zeros(rows, out_w);
        let mut loss = 0.0;
        for i in 0..rows {
            let p = probs.row(i);
            let t = targets.row(i);
            let d = delta.row_mut(i);
            if natural {
                loss += loss_value(self.loss, p, t);
                for k in 0..out_w {
                    d[k] = (p[k] - t[k]) * scale;
                }
            } else {
                let (l, g) = loss_and_grad(self.loss, p, t)?;
                loss += l;
                match self.arch.head {
                    Head::Sigmoid => {
                        for k in 0..out_w {
                            d[k] = g[k] * p[k] * (1.0 - p[k]) * scale;
                        }
                    }
                    Head::Softmax => {
                        let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                        for k in 0..out_w {
                            d[k] = p[k] * (g[k] - dot) * scale;
                        }
                    }
                }
            }
        }

        grad.iter_mut().for_each(|g| *g = 0.0);
        let layers = self.arch.layer_offsets();
        for l in (0..layers.len()).rev() {
            let (w_off, b_off, fan_in, fan_out) = layers[l];
            let prev = if l == 0 { input } else { &hidden[l - 1] };
            let (gw, gb) = grad[w_off..b_off + fan_out].split_at_mut(b_off - w_off);
            for i in 0..rows {
                let d = delta.row(i);
                axpy(1.0, d, gb);
                for (k, &x) in prev.row(i).iter().enumerate() {
                    if x != 0.0 {
                        axpy(x, d, &mut gw[k * fan_out..(k + 1) * fan_out]);
                    }
                }
            }
            if l > 0 {
                let w = &params[w_off..b_off];
                let mut next = Matrix::zeros(rows, fan_in);
                for i in 0..rows {
                    let d = delta.row(i);
                    let a = prev.row(i);
                    let nr = next.row_mut(i);
                    for k in 0..fan_in {
                        let deriv = self.arch.activation.derivative_from_output(a[k]);
                        if deriv != 0.0 {
                            let wk = &w[k * fan_out..(k + 1) * fan_out];
                            let s: f64 = wk.iter().zip(d).map(|(a, b)| a * b).sum();
                            nr[k] = s * deriv;
                        }
                    }
                }
                delta = next;
            }
        }
        Ok(loss * scale)
    }
}

impl Objective for Mlp {
    fn arch(&self) -> Architecture {
        Architecture::Mlp(self.arch.clone())
    }

    fn n_inputs(&self) -> usize {
        self.arch.input_width()
    }

    fn n_classes(&self) -> usize {
        self.arch.n_classes()
    }

    fn loss_and_gradient(&self, params: &[f64], inputs: &Matrix, labels: &[usize], grad: &mut [f64]) -> Result<f64> {
        check_inputs(self.n_inputs(), inputs, Some((labels, self.n_classes())))?;
        if params.len() != self.arch.param_count() || grad.len() != params.len() {
            return Err(Error::shape(
                format!("{} parameters", self.arch.param_count()),
                params.len(),
            ));
        }
        let targets = self.targets(labels);
        self.backprop(params, inputs, &targets, grad)
    }

    fn predict(&self, params: &[f64], inputs: &Matrix) -> Result<Matrix> {
        check_inputs(self.n_inputs(), inputs, None)?;
        if params.len() != self.arch.param_count() {
            return Err(Error::shape(
                format!("{} parameters", self.arch.param_count()),
                params.len(),
            ));
        }
        let out = self.activations(params, inputs).1;
        if self.arch.head == Head::Softmax {
            return Ok(out);
        }
        let mut probs = Matrix::zeros(out.rows(), 2);
        for i in 0..out.rows() {
            let p = out.get(i, 0);
            probs.row_mut(i).copy_from_slice(&[1.0 - p, p]);
        }
        Ok(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{finite_difference_gradient, max_relative_error};

    fn net(widths: &[usize], act: Activation, head: Head) -> Mlp {
        Mlp::new(MlpArchitecture::new(widths.to_vec(), act, head).unwrap())
    }

    #[test]
    fn init_biases_zero_and_deterministic() {
        let m = net(&[4, 5, 3], Activation::Relu, Head::Softmax);
        let a = m.init(&mut RngStream::new(1, 0));
        let b = m.init(&mut RngStream::new(1, 0));
        assert_eq!(a, b);
        assert_eq!(a.len(), 5 * 5 + 6 * 3);
        assert!(a.values()[20..25].iter().all(|&v| v == 0.0));
        assert!(a.values()[40..43].iter().all(|&v| v == 0.0));
        let bound = (6.0f64 / 9.0).sqrt();
        assert!(a.values()[..20].iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn init_variance_matches_scheme() {
        let m = net(&[1000, 1000, 2], Activation::Relu, Head::Softmax);
        let p = m.init(&mut RngStream::new(2, 0));
        let w = &p.values()[..1_000_000];
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        // uniform(-a, a) has variance a²/3 = 2 / (fan_in + fan_out)
        let want = 2.0 / 2000.0;
        assert!((var / want - 1.0).abs() < 0.1, "{var} vs {want}");
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let m = net(&[3, 4, 5], Activation::Tanh, Head::Softmax);
        let p = ParamVector::new(vec![0.0; m.arch.param_count()], Objective::arch(&m), 0).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let out = m.forward(&p, &x).unwrap();
        assert_eq!((out.rows(), out.cols()), (2, 5));
        assert!(out.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn hand_computed_forward() {
        // x=2: hidden = relu(1.5*2 - 1) = 2; out = sigmoid(-0.5*2 + 0.25) = sigmoid(-0.75)
        let m = net(&[1, 1, 1], Activation::Relu, Head::Sigmoid);
        let p = ParamVector::new(vec![1.5, -1.0, -0.5, 0.25], Objective::arch(&m), 0).unwrap();
        let out = m.forward(&p, &Matrix::from_rows(&[vec![2.0]]).unwrap()).unwrap();
        let want = 1.0 / (1.0 + 0.75f64.exp());
        assert!((out.get(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = net(&[3, 2, 1], Activation::Relu, Head::Sigmoid);
        let p = m.init(&mut RngStream::new(0, 0));
        assert!(m.forward(&p, &Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn architecture_validation() {
        assert!(MlpArchitecture::new(vec![3], Activation::Relu, Head::Softmax).is_err());
        assert!(MlpArchitecture::new(vec![3, 2], Activation::Relu, Head::Sigmoid).is_err());
        assert!(MlpArchitecture::new(vec![3, 1], Activation::Relu, Head::Softmax).is_err());
        let a = MlpArchitecture::for_task(20, &[64], Activation::Relu, 2).unwrap();
        assert_eq!(a.layer_widths, vec![20, 64, 1]);
        assert_eq!(a.param_count(), 21 * 64 + 65);
    }

    #[test]
    fn perfect_fit_squared_error_is_stationary() {
        // sigmoid output equals the target exactly, so the squared-error gradient vanishes
        let m = net(&[2, 3, 1], Activation::Tanh, Head::Sigmoid).with_loss(LossKind::SquaredError);
        let p = m.init(&mut RngStream::new(9, 0));
        let x = Matrix::from_rows(&[vec![0.3, -0.2], vec![1.0, 2.0]]).unwrap();
        let targets = m.forward(&p, &x).unwrap();
        let (loss, g) = m.gradient_for_targets(&p, &x, &targets).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-10);
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let m = net(&[3, 4, 3], Activation::Relu, Head::Softmax);
        let p = m.init(&mut RngStream::new(4, 0));
        let rows = vec![vec![0.1, 0.2, -0.3], vec![1.0, -1.0, 0.5]];
        let x = Matrix::from_rows(&rows).unwrap();
        let xx = Matrix::from_rows(&[rows.clone(), rows].concat()).unwrap();
        let g1 = m.gradient(&p, &x, &[0, 2]).unwrap();
        let g2 = m.gradient(&p, &xx, &[0, 2, 0, 2]).unwrap();
        assert!(max_relative_error(&g2, &g1) < 1e-14);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(77, 0);
        for case in 0..24 {
            let n_in = 1 + rng.below(4) as usize;
            let depth = 1 + rng.below(2) as usize;
            let mut widths = vec![n_in];
            widths.extend((0..depth).map(|_| 1 + rng.below(4) as usize));
            let softmax = case % 2 == 0;
            let head = if softmax { Head::Softmax } else { Head::Sigmoid };
            widths.push(if softmax { 2 + rng.below(3) as usize } else { 1 });
            let act = if case % 3 == 0 {
                Activation::Relu
            } else {
                Activation::Tanh
            };
            let mut m = net(&widths, act, head);
            if case % 4 == 1 {
                m = m.with_loss(LossKind::SquaredError);
            }
            // random biases too, so no relu sits exactly on its kink
            let values = (0..m.arch.param_count()).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let p = ParamVector::new(values, Objective::arch(&m), 0).unwrap();
            let rows = 1 + rng.below(5) as usize;
            let x = Matrix::new(rows, n_in, (0..rows * n_in).map(|_| rng.uniform(-2.0, 2.0)).collect()).unwrap();
            let labels: Vec<usize> = (0..rows)
                .map(|_| rng.below(m.arch.n_classes() as u64) as usize)
                .collect();
            let g = m.gradient(&p, &x, &labels).unwrap();
            let fd = finite_difference_gradient(&m, p.values(), &x, &labels, 1e-5).unwrap();
            let err = max_relative_error(&g, &fd);
            assert!(err < 1e-5, "case {case} {widths:?}: {err}");
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let ds = crate::data::toy(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]], &[0, 1, 1]);
        let m = Mlp::new(MlpArchitecture::for_task(2, &[4], Activation::Relu, 2).unwrap());
        let p = m.init(&mut RngStream::new(0, 0));
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 2,
            learning_rate: 0.0,
        };
        let (out, trace) = m.train(&p, &ds, &cfg, &mut RngStream::new(0, 1)).unwrap();
        assert_eq!(out.values(), p.values());
        assert_eq!(out.sample_count(), 3);
        assert!(trace.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn separable_blobs_are_learned() {
        let spec = crate::data::SyntheticSpec {
            n_samples: 600,
            n_features: 5,
            class_priors: vec![0.5, 0.5],
            class_separation: 5.0,
            ..Default::default()
        };
        let ds = crate::data::synthesize(&spec, &mut RngStream::new(8, 0)).unwrap();
        let m = Mlp::new(MlpArchitecture::for_task(5, &[16], Activation::Relu, 2).unwrap());
        let p = m.init(&mut RngStream::new(8, 1));
        let (out, _) = m
            .train(&p, &ds, &TrainConfig::default(), &mut RngStream::new(8, 2))
            .unwrap();
        let probs = m.forward(&out, ds.features()).unwrap();
        let correct = (0..ds.n_samples())
            .filter(|&i| (probs.get(i, 0) >= 0.5) == (ds.labels()[i] == 1))
            .count();
        assert!(correct as f64 / ds.n_samples() as f64 > 0.95);
    }

    #[test]
    fn full_batch_descent() {
        let spec = crate::data::SyntheticSpec {
            n_samples: 200,
            n_features: 4,
            n_classes: 3,
            class_priors: vec![0.3, 0.3, 0.4],
            ..Default::default()
        };
        let ds = crate::data::synthesize(&spec, &mut RngStream::new(5, 0)).unwrap();
        let m = Mlp::new(MlpArchitecture::for_task(4, &[8], Activation::Tanh, 3).unwrap());
        let p = m.init(&mut RngStream::new(5, 1));
        let cfg = TrainConfig {
            epochs: 100,
            batch_size: 200,
            learning_rate: 0.05,
        };
        let (_, trace) = m.train(&p, &ds, &cfg, &mut RngStream::new(5, 2)).unwrap();
        let down = trace.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(down as f64 >= 0.9 * (trace.len() - 1) as f64);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = crate::data::toy(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.2]], &[0, 1, 1]);
        let m = Mlp::new(MlpArchitecture::for_task(2, &[3], Activation::Relu, 2).unwrap());
        let p = m.init(&mut RngStream::new(0, 0));
        let cfg = TrainConfig::default();
        let a = m.train(&p, &ds, &cfg, &mut RngStream::new(1, 1)).unwrap();
        let b = m.train(&p, &ds, &cfg, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
