//! Flat parameter vectors and the mini-batch SGD loop shared by the MLP and the tree aggregator.

mod mlp;

pub use mlp::{Activation, Head, Mlp, MlpArchitecture};

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::CnnArchitecture;
use crate::numerics::{Matrix, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Mlp(MlpArchitecture),
    Cnn(CnnArchitecture),
}

impl Architecture {
    pub fn param_count(&self) -> usize {
        match self {
            Architecture::Mlp(a) => a.param_count(),
            Architecture::Cnn(a) => a.param_count(),
        }
    }
}

/// Model parameters with the architecture they belong to and the number of
/// samples they were fitted on (the aggregation weight).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    arch: Architecture,
    sample_count: u64,
}

impl PartialEq for ParamVector {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.sample_count == other.sample_count
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

const BLOB_MAGIC: &[u8; 4] = b"FCPV";
const BLOB_VERSION: u32 = 1;

impl ParamVector {
    pub fn new(values: Vec<f64>, arch: Architecture, sample_count: u64) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::shape(format!("{} parameters", arch.param_count()), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("parameter {i} is not finite")));
        }
        Ok(Self {
            values,
            arch,
            sample_count,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn with_sample_count(mut self, n: u64) -> Self {
        self.sample_count = n;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Little-endian blob: magic, version, sample count, length-prefixed
    /// architecture JSON, length-prefixed f64 values.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let arch = serde_json::to_vec(&self.arch)?;
        let mut out = Vec::with_capacity(32 + arch.len() + 8 * self.values.len());
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        out.extend_from_slice(&self.sample_count.to_le_bytes());
        out.extend_from_slice(&(arch.len() as u64).to_le_bytes());
        out.extend_from_slice(&arch);
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Checkpoint("truncated blob".into()));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != BLOB_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap_or_default());
        if version != BLOB_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let read_u64 = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap_or_default());
        let sample_count = read_u64(take(8)?);
        let arch_len = read_u64(take(8)?) as usize;
        let arch: Architecture =
            serde_json::from_slice(take(arch_len)?).map_err(|e| Error::Checkpoint(format!("architecture: {e}")))?;
        let n = read_u64(take(8)?) as usize;
        let raw = take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("length overflow".into()))?,
        )?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap_or_default()))
            .collect();
        if !cur.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", cur.len())));
        }
        ParamVector::new(values, arch, sample_count).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            learning_rate: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and non-negative"));
        }
        Ok(())
    }
}

/// A differentiable model over a flat parameter vector: mean loss over the
/// batch rows and its gradient.
pub trait Objective: Sync {
    fn arch(&self) -> Architecture;

    fn n_inputs(&self) -> usize;

    fn n_classes(&self) -> usize;

    /// Writes the gradient of the batch-mean loss into `grad` and returns that loss.
    fn loss_and_gradient(&self, params: &[f64], inputs: &Matrix, labels: &[usize], grad: &mut [f64]) -> Result<f64>;

    /// Class probabilities (`rows × n_classes`).
    fn predict(&self, params: &[f64], inputs: &Matrix) -> Result<Matrix>;

    /// Mean cross-entropy `−ln p[label]` of [`Objective::predict`], without a gradient.
    fn mean_loss(&self, params: &[f64], inputs: &Matrix, labels: &[usize]) -> Result<f64> {
        check_inputs(self.n_inputs(), inputs, Some((labels, self.n_classes())))?;
        if labels.is_empty() {
            return Err(Error::invalid("loss of an empty dataset"));
        }
        let probs = self.predict(params, inputs)?;
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -crate::numerics::clamp_prob(probs.get(i, l)).ln())
            .sum();
        Ok(total / labels.len() as f64)
    }
}

pub(crate) fn check_inputs(n_inputs: usize, inputs: &Matrix, labels: Option<(&[usize], usize)>) -> Result<()> {
    if inputs.cols() != n_inputs {
        return Err(Error::shape(format!("{n_inputs} input columns"), inputs.cols()));
    }
    if let Some((labels, n_classes)) = labels {
        if labels.len() != inputs.rows() {
            return Err(Error::shape(format!("{} labels", inputs.rows()), labels.len()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!("label {l} outside 0..{n_classes}")));
        }
    }
    Ok(())
}

/// Shuffled mini-batch gradient descent. Each epoch draws one permutation from
/// `rng`; the trace holds, per epoch, the sample-weighted mean of the batch
/// losses measured before each update. The returned vector is tagged with the
/// number of training rows.
pub fn sgd_train(
    obj: &dyn Objective,
    init: &ParamVector,
    inputs: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(ParamVector, Vec<f64>)> {
    cfg.validate()?;
    if *init.arch() != obj.arch() {
        return Err(Error::ArchitectureMismatch);
    }
    check_inputs(obj.n_inputs(), inputs, Some((labels, obj.n_classes())))?;
    let n = inputs.rows();
    if n == 0 {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut params = init.values().to_vec();
    let mut grad = vec![0.0; params.len()];
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        let order = rng.permutation(n);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = inputs.select_rows(idx);
            batch_labels.clear();
            batch_labels.extend(idx.iter().map(|&i| labels[i]));
            let loss = obj.loss_and_gradient(&params, &batch, &batch_labels, &mut grad)?;
            total += loss * idx.len() as f64;
            axpy_neg(cfg.learning_rate, &grad, &mut params);
        }
        trace.push(total / n as f64);
    }
    if let Some(i) = params.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "training diverged (parameter {i} is not finite)"
        )));
    }
    Ok((ParamVector::new(params, obj.arch(), n as u64)?, trace))
}

fn axpy_neg(lr: f64, grad: &[f64], params: &mut [f64]) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Central finite differences of the batch-mean loss, for gradient checks.
pub fn finite_difference_gradient(
    obj: &dyn Objective,
    params: &[f64],
    inputs: &Matrix,
    labels: &[usize],
    step: f64,
) -> Result<Vec<f64>> {
    let mut scratch = vec![0.0; params.len()];
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = obj.loss_and_gradient(&p, inputs, labels, &mut scratch)?;
        p[i] = orig - step;
        let down = obj.loss_and_gradient(&p, inputs, labels, &mut scratch)?;
        p[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Largest coordinate error relative to the largest reference magnitude.
pub fn max_relative_error(got: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    got.iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamVector {
        let arch = MlpArchitecture::new(vec![2, 3, 1], Activation::Relu, Head::Sigmoid).unwrap();
        let mut rng = RngStream::new(3, 0);
        Mlp::new(arch).init(&mut rng).with_sample_count(17)
    }

    #[test]
    fn blob_roundtrip() {
        let p = sample();
        let bytes = p.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"FCPV");
        assert_eq!(ParamVector::from_bytes(&bytes).unwrap(), p);
    }

    #[test]
    fn blob_rejects_corruption() {
        let bytes = sample().to_bytes().unwrap();
        assert!(ParamVector::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ParamVector::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(ParamVector::from_bytes(&extra).is_err());
    }

    #[test]
    fn blob_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = sample();
        p.save(&path).unwrap();
        assert_eq!(ParamVector::load(&path).unwrap(), p);
    }

    #[test]
    fn length_must_match_arch() {
        let p = sample();
        assert!(ParamVector::new(vec![0.0; 3], p.arch().clone(), 1).is_err());
        let mut v = p.values().to_vec();
        v[0] = f64::NAN;
        assert!(ParamVector::new(v, p.arch().clone(), 1).is_err());
    }
}
