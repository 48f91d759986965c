//! Time-based splits, the Adam training loop and grid search.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabeledSample;
use crate::market_data::WindowMatrix;
use crate::model::{ModelConfig, ModelSettings, Quantformer};
use crate::numeric::{AdamConfig, AdamState, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub shuffle_seed: u64,
    /// Last decision period allowed in training; checked on every batch.
    #[serde(skip)]
    pub cutoff: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            shuffle_seed: 0,
            cutoff: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Samples with `decision_time <= cutoff` train; the rest test.
pub fn split_by_time(
    samples: Vec<LabeledSample>,
    cutoff: usize,
) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    let (train, test): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.decision_time <= cutoff);
    if train.is_empty() {
        log::warn!("time split at {cutoff} leaves the training side empty");
    }
    if test.is_empty() {
        log::warn!("time split at {cutoff} leaves the test side empty");
    }
    (train, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub model: Quantformer<T>,
    /// Mean per-sample MSE of each epoch.
    pub loss_history: Vec<f64>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add((epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Trains a freshly initialized model with Adam on minibatches reshuffled
/// every epoch.
pub fn train<T: Scalar>(
    samples: &[LabeledSample],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.target.len() != model_config.classes) {
        return Err(Error::Contract(format!(
            "sample {}@{} has {} label bins, model has {} classes",
            bad.ticker,
            bad.decision_time,
            bad.target.len(),
            model_config.classes
        )));
    }
    let mut model = Quantformer::<T>::new(*model_config)?;
    let mut adam = AdamState::new(config.adam(), model.params.tensors());
    let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.target.to_dense()).collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut epoch_rng(config.shuffle_seed, epoch));
        let mut weighted = 0.0;
        for batch in order.chunks(config.batch_size) {
            if let Some(cutoff) = config.cutoff {
                if let Some(&i) = batch.iter().find(|&&i| samples[i].decision_time > cutoff) {
                    return Err(Error::Contract(format!(
                        "sample at period {} is past the training cutoff {cutoff}",
                        samples[i].decision_time
                    )));
                }
            }
            let windows: Vec<&WindowMatrix> = batch.iter().map(|&i| &samples[i].features.matrix).collect();
            let ys: Vec<Vec<f64>> = batch.iter().map(|&i| targets[i].clone()).collect();
            let (loss, grads) = model
                .loss_and_gradients(&windows, &ys)
                .map_err(|e| match e {
                    Error::Numeric { .. } => Error::Divergence { epoch },
                    other => other,
                })?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            weighted += loss * batch.len() as f64;
            adam.step(&mut model.params.tensors_mut(), grads.as_slice())?;
        }
        let mean = weighted / samples.len() as f64;
        log::debug!("epoch {epoch}: mean mse {mean:.6}");
        history.push(mean);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}

/// MSE and arg-max bin accuracy over labelled samples. Null-labelled
/// samples count toward the MSE only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mse: f64,
    pub accuracy: f64,
    pub labelled: usize,
}

pub fn evaluate<T: Scalar>(model: &Quantformer<T>, samples: &[LabeledSample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty set".into()));
    }
    let windows: Vec<&WindowMatrix> = samples.iter().map(|s| &s.features.matrix).collect();
    let preds = model.forward(&windows)?;
    let mut sq = 0.0;
    let (mut hits, mut labelled) = (0usize, 0usize);
    for (s, p) in samples.iter().zip(&preds) {
        let y = s.target.to_dense();
        sq += p.iter().zip(&y).map(|(a, b)| (a.as_f64() - b).powi(2)).sum::<f64>();
        if let Some(bin) = s.target.active() {
            labelled += 1;
            let best = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(i, _)| i);
            if best == Some(bin) {
                hits += 1;
            }
        }
    }
    Ok(Evaluation {
        mse: sq / samples.len() as f64,
        accuracy: if labelled == 0 { 0.0 } else { hits as f64 / labelled as f64 },
        labelled,
    })
}

/// Splits off the trailing `fraction` of distinct decision times.
pub fn trailing_validation(
    samples: &[LabeledSample],
    fraction: f64,
) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    let times: BTreeSet<usize> = samples.iter().map(|s| s.decision_time).collect();
    if times.len() < 2 {
        return (samples.to_vec(), samples.to_vec());
    }
    let held = ((times.len() as f64 * fraction).ceil() as usize).clamp(1, times.len() - 1);
    let first_held = *times.iter().nth(times.len() - held).expect("in range");
    samples.iter().cloned().partition(|s| s.decision_time < first_held)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: usize,
    /// Validation MSE per candidate (`+inf` when training diverged).
    pub validation_mse: Vec<f64>,
}

pub const VALIDATION_FRACTION: f64 = 0.1;

/// Trains every candidate on the early part of `samples` and keeps the one
/// with the lowest MSE on the trailing tenth. Ties go to the earlier
/// candidate.
pub fn grid_search<T: Scalar>(
    candidates: &[(ModelConfig, TrainConfig)],
    samples: &[LabeledSample],
) -> Result<GridResult> {
    if candidates.is_empty() {
        return Err(Error::Contract("grid search needs at least one candidate".into()));
    }
    if candidates.len() == 1 {
        return Ok(GridResult {
            best: 0,
            validation_mse: vec![f64::NAN],
        });
    }
    let (fit, validation) = trailing_validation(samples, VALIDATION_FRACTION);
    let mut scores = Vec::with_capacity(candidates.len());
    for (i, (model_config, train_config)) in candidates.iter().enumerate() {
        let score = match train::<T>(&fit, model_config, train_config) {
            Ok(out) => evaluate(&out.model, &validation)?.mse,
            Err(Error::Divergence { epoch }) => {
                log::warn!("candidate {i} diverged at epoch {epoch}");
                f64::INFINITY
            }
            Err(e) => return Err(e),
        };
        log::info!("grid candidate {i}: validation mse {score:.6}");
        scores.push(score);
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(GridResult {
        best,
        validation_mse: scores,
    })
}

/// d ∈ {8, 16}, H ∈ {4, 16}, L ∈ {2, 6} around `base`.
pub fn default_grid(
    base: &ModelSettings,
    classes: usize,
    train: &TrainConfig,
) -> Result<Vec<(ModelConfig, TrainConfig)>> {
    let mut out = Vec::new();
    for d_model in [8, 16] {
        for heads in [4, 16] {
            for layers in [2, 6] {
                let s = ModelSettings {
                    d_model,
                    heads,
                    layers,
                    ffn_width: None,
                    ..*base
                };
                out.push((s.resolve(classes)?, *train));
            }
        }
    }
    Ok(out)
}

pub fn write_loss_history<W: Write>(history: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "mean_mse"])?;
    for (epoch, loss) in history.iter().enumerate() {
        w.write_record([(epoch + 1).to_string(), loss.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::LabelVector;
    use crate::market_data::{FeatureWindow, WINDOW_LEN};

    fn sample(t: usize, bin: usize, x: f64) -> LabeledSample {
        LabeledSample {
            ticker: format!("S{t}-{bin}"),
            decision_time: t,
            features: FeatureWindow {
                ticker: "S".into(),
                decision_time: t,
                matrix: [[x, -x]; WINDOW_LEN],
                complete: true,
            },
            target: LabelVector::one_hot(bin, 3),
            next_return: x,
        }
    }

    fn tiny_set() -> Vec<LabeledSample> {
        (0..30)
            .map(|i| {
                let bin = i % 3;
                sample(20 + i / 3, bin, bin as f64 - 1.0)
            })
            .collect()
    }

    fn tiny_model() -> ModelConfig {
        ModelSettings {
            d_model: 4,
            heads: 2,
            layers: 1,
            ..ModelSettings::default()
        }
        .resolve(3)
        .unwrap()
    }

    #[test]
    fn split_respects_cutoff() {
        let (train, test) = split_by_time(tiny_set(), 24);
        assert_eq!(train.len(), 15);
        assert!(train.iter().all(|s| s.decision_time <= 24));
        assert!(test.iter().all(|s| s.decision_time > 24));
        let (train, test) = split_by_time(tiny_set(), 100);
        assert_eq!(train.len(), 30);
        assert!(test.is_empty());
    }

    #[test]
    fn zero_learning_rate_keeps_initial_parameters() {
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 7,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train::<f64>(&tiny_set(), &tiny_model(), &cfg).unwrap();
        assert_eq!(out.model.params, Quantformer::<f64>::new(tiny_model()).unwrap().params);
        assert_eq!(out.loss_history.len(), 3);
        for l in &out.loss_history {
            assert!((l - out.loss_history[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_history() {
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 8,
            learning_rate: 0.01,
            shuffle_seed: 5,
            ..TrainConfig::default()
        };
        let a = train::<f64>(&tiny_set(), &tiny_model(), &cfg).unwrap();
        let b = train::<f64>(&tiny_set(), &tiny_model(), &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn cutoff_audit_rejects_future_samples() {
        let cfg = TrainConfig {
            epochs: 1,
            cutoff: Some(22),
            ..TrainConfig::default()
        };
        assert!(matches!(
            train::<f64>(&tiny_set(), &tiny_model(), &cfg),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(train::<f64>(&[], &tiny_model(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn trailing_validation_takes_last_tenth_of_periods() {
        let (fit, val) = trailing_validation(&tiny_set(), 0.1);
        assert!(val.iter().all(|s| s.decision_time == 29));
        assert_eq!(val.len(), 3);
        assert_eq!(fit.len(), 27);
    }

    #[test]
    fn singleton_grid_returns_candidate() {
        let c = (tiny_model(), TrainConfig::default());
        assert_eq!(grid_search::<f64>(&[c], &tiny_set()).unwrap().best, 0);
    }

    #[test]
    fn grid_ties_keep_first() {
        let frozen = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let c = (tiny_model(), frozen);
        let r = grid_search::<f64>(&[c, c], &tiny_set()).unwrap();
        assert_eq!(r.validation_mse[0], r.validation_mse[1]);
        assert_eq!(r.best, 0);
    }

    #[test]
    fn default_grid_has_eight_candidates() {
        let g = default_grid(&ModelSettings::default(), 3, &TrainConfig::default()).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.iter().all(|(m, _)| m.ffn_width == 4 * m.d_model));
    }

    #[test]
    fn loss_csv_format() {
        let mut buf = Vec::new();
        write_loss_history(&[0.5, 0.25], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,mean_mse\n1,0.5\n2,0.25\n");
    }
}
