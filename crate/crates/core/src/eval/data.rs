use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::iforest::{value_range, Label};

/// Parameters of the synthetic normal-conditions source and the test-set
/// perturbations. Temperatures are in °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub mean: f64,
    pub sd: f64,
    /// Gaussian noise added to resampled training values in test sets.
    pub noise_sigma: f64,
    /// Closest an anomaly may sit to the training range. Defaults to `3 * noise_sigma`.
    pub anomaly_gap: Option<f64>,
    /// Farthest an anomaly may sit from the training range.
    pub anomaly_span: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { mean: 22.0, sd: 2.0, noise_sigma: 0.5, anomaly_gap: None, anomaly_span: 10.0 }
    }
}

impl DataConfig {
    pub fn gap(&self) -> f64 {
        self.anomaly_gap.unwrap_or(3.0 * self.noise_sigma)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Config(m.to_string()));
        if !(self.mean.is_finite() && self.sd.is_finite() && self.sd > 0.0) {
            return bad("data mean must be finite and sd positive");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        let gap = self.gap();
        if !(gap > 0.0 && gap.is_finite() && self.anomaly_span > gap && self.anomaly_span.is_finite()) {
            return bad("anomaly span must exceed the anomaly gap, which must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub value: f64,
    pub label: Label,
}

pub fn gen_training_set<R: Rng + ?Sized>(
    size: usize,
    cfg: &DataConfig,
    rng: &mut R,
) -> Result<Vec<f64>, EvalError> {
    if size == 0 {
        return Err(EvalError::Config("training set size must be at least 1".into()));
    }
    cfg.validate()?;
    let normal = Normal::new(cfg.mean, cfg.sd).expect("validated");
    Ok((0..size).map(|_| normal.sample(rng)).collect())
}

/// Resamples `train` with noise and swaps `round(anomaly_frac * n_test)`
/// randomly placed readings for values outside the training range.
pub fn gen_test_set<R: Rng + ?Sized>(
    train: &[f64],
    n_test: usize,
    anomaly_frac: f64,
    cfg: &DataConfig,
    rng: &mut R,
) -> Result<Vec<LabeledSample>, EvalError> {
    let (lo, hi) = value_range(train).ok_or(EvalError::EmptyInput)?;
    if !(anomaly_frac > 0.0 && anomaly_frac < 1.0) {
        return Err(EvalError::Config(format!("anomaly_frac {anomaly_frac} outside (0, 1)")));
    }
    cfg.validate()?;
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated");
    let mut out: Vec<LabeledSample> = (0..n_test)
        .map(|_| {
            let base = train[rng.random_range(0..train.len())];
            LabeledSample { value: base + noise.sample(rng), label: Label::Normal }
        })
        .collect();

    let n_anomalies = (anomaly_frac * n_test as f64).round() as usize;
    let (gap, span) = (cfg.gap(), cfg.anomaly_span);
    for idx in rand::seq::index::sample(rng, n_test, n_anomalies) {
        // The two bands have equal width, so a fair coin picks the side.
        let offset = rng.random_range(gap..=span);
        let value = if rng.random_bool(0.5) { lo - offset } else { hi + offset };
        out[idx] = LabeledSample { value, label: Label::Anomaly };
    }
    Ok(out)
}
