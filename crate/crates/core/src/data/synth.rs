use serde::{Deserialize, Serialize};

use super::{Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Class-conditional Gaussian data.
///
/// Class centres sit on a line through the origin along a random unit
/// direction, evenly spaced so that the first and last class are
/// `class_separation` apart; samples add isotropic noise of `noise_std`.
/// For two classes the Bayes AUC is `Φ(separation / (√2 · noise_std))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_priors: Vec<f64>,
    pub class_separation: f64,
    pub noise_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            n_features: 20,
            n_classes: 2,
            class_priors: vec![0.8, 0.2],
            class_separation: 1.5,
            noise_std: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("synthetic data needs at least two classes"));
        }
        if self.class_priors.len() != self.n_classes {
            return Err(Error::invalid(format!(
                "{} class priors for {} classes",
                self.class_priors.len(),
                self.n_classes
            )));
        }
        if self.class_priors.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("class priors must lie in [0, 1]"));
        }
        let total: f64 = self.class_priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("class priors sum to {total}, not 1")));
        }
        if self.n_features == 0 || self.n_samples == 0 {
            return Err(Error::invalid("synthetic data needs samples and features"));
        }
        if !(self.class_separation >= 0.0 && self.noise_std >= 0.0)
            || !self.class_separation.is_finite()
            || !self.noise_std.is_finite()
        {
            return Err(Error::invalid("separation and noise must be finite and non-negative"));
        }
        Ok(())
    }
}

pub fn synthesize(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<Dataset> {
    spec.validate()?;
    let f = spec.n_features;
    let mut direction: Vec<f64> = (0..f).map(|_| rng.normal()).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let span = (spec.n_classes - 1) as f64;
    let centres: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|c| {
            let offset = spec.class_separation * (c as f64 / span - 0.5);
            direction.iter().map(|d| offset * d).collect()
        })
        .collect();

    let mut cdf = Vec::with_capacity(spec.n_classes);
    let mut acc = 0.0;
    for p in &spec.class_priors {
        acc += p;
        cdf.push(acc);
    }

    let mut labels = Vec::with_capacity(spec.n_samples);
    let mut data = Vec::with_capacity(spec.n_samples * f);
    for _ in 0..spec.n_samples {
        let u = rng.next_f64();
        let class = cdf.iter().position(|&c| u < c).unwrap_or(spec.n_classes - 1);
        labels.push(class);
        for centre in &centres[class] {
            data.push(centre + spec.noise_std * rng.normal());
        }
    }
    let names = (0..f).map(|j| format!("x{j}")).collect();
    let features = Matrix::new(spec.n_samples, f, data)?;
    Ok(Dataset::new(
        features,
        labels,
        spec.n_classes,
        names,
        LabelKind::for_class_count(spec.n_classes),
    )?
    .with_provenance(format!("synthetic:seed={}:stream={}", rng.seed(), rng.stream_id())))
}
