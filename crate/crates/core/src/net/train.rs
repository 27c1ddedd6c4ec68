use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Architecture, Inputs, ModelParams, NetError, Scalar};

const PREDICT_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NetError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NetError::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Row-aligned inputs and 0/1 targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub primary: Array2<F>,
    pub secondary: Option<Array2<F>>,
    pub targets: Array2<F>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(primary: Array2<F>, secondary: Option<Array2<F>>, targets: Array2<F>) -> Result<Self, NetError> {
        if primary.nrows() != targets.nrows() {
            return Err(NetError::RowMismatch(primary.nrows(), targets.nrows()));
        }
        if let Some(x2) = &secondary {
            if x2.nrows() != primary.nrows() {
                return Err(NetError::RowMismatch(primary.nrows(), x2.nrows()));
            }
        }
        Ok(Dataset {
            primary,
            secondary,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.primary.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> Inputs<'_, F> {
        Inputs {
            primary: self.primary.view(),
            secondary: self.secondary.as_ref().map(|m| m.view()),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Dataset<F> {
        Dataset {
            primary: self.primary.select(Axis(0), rows),
            secondary: self.secondary.as_ref().map(|m| m.select(Axis(0), rows)),
            targets: self.targets.select(Axis(0), rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Row-weighted mean of the minibatch losses (dropout active).
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub params: ModelParams<F>,
    pub history: Vec<EpochRecord>,
    /// Inference-mode loss on the training rows before the first update.
    pub initial_train_loss: f64,
}

impl<F> TrainOutcome<F> {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.train_loss)
    }
}

/// Minibatch SGD on the mean BCE loss.
///
/// Initialization, shuffling and dropout all draw from one generator seeded
/// by `cfg.seed`, so a run is reproducible bit for bit.
pub fn train_model<F: Scalar>(
    arch: Architecture,
    train: &Dataset<F>,
    validation: Option<&Dataset<F>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<F>, NetError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(NetError::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::<F>::init_with(arch, &mut rng);
    let initial = params.loss(train.inputs(), train.targets.view(), None)?.to_f64();
    if let Some(v) = validation {
        params.check_inputs(&v.inputs())?;
    }
    let lr = F::from_f64(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut last_loss = initial;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            let b = train.select(rows);
            let mask = params.dropout_mask(rows.len(), &mut rng);
            let (loss, grads) = params.loss_and_gradients(b.inputs(), b.targets.view(), mask.as_ref())?;
            let loss = loss.to_f64();
            if !loss.is_finite() {
                return Err(NetError::NonFiniteLoss {
                    epoch,
                    batch: batch + 1,
                    last_loss,
                });
            }
            params.sgd_step(&grads, lr);
            if !params.is_finite() {
                return Err(NetError::NonFiniteLoss {
                    epoch,
                    batch: batch + 1,
                    last_loss: loss,
                });
            }
            last_loss = loss;
            weighted += loss * rows.len() as f64;
        }
        let validation_loss = match validation {
            Some(v) if !v.is_empty() => Some(params.loss(v.inputs(), v.targets.view(), None)?.to_f64()),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: weighted / train.len() as f64,
            validation_loss,
        };
        log::debug!(
            "epoch {epoch}: train loss {:.6}, validation loss {:?}",
            record.train_loss,
            record.validation_loss
        );
        history.push(record);
    }
    Ok(TrainOutcome {
        params,
        history,
        initial_train_loss: initial,
    })
}

/// Inference-mode probabilities, computed in fixed-size row chunks.
pub fn predict_scores<F: Scalar>(params: &ModelParams<F>, inputs: Inputs<F>) -> Result<Array2<F>, NetError> {
    let n = inputs.rows();
    let mut out = Array2::zeros((n, params.arch.outputs));
    let mut start = 0;
    while start < n {
        let end = (start + PREDICT_CHUNK).min(n);
        let chunk = Inputs {
            primary: inputs.primary.slice(s![start..end, ..]),
            secondary: inputs.secondary.map(|m| m.slice_move(s![start..end, ..])),
        };
        let probs = params.predict(chunk)?;
        out.slice_mut(s![start..end, ..]).assign(&probs);
        start = end;
    }
    if n == 0 {
        params.check_inputs(&inputs)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Fusion;
    use rand::Rng;

    fn toy(rows: usize, seed: u64) -> Dataset<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((rows, 8), || rng.random_range(-1.0f32..1.0));
        let mut y = Array2::zeros((rows, 3));
        for (i, row) in x.rows().into_iter().enumerate() {
            y[[i, 0]] = if row[0] > 0.0 { 1.0 } else { 0.0 };
            y[[i, 1]] = if row[1] + row[2] > 0.0 { 1.0 } else { 0.0 };
            y[[i, 2]] = if row[3] * row[4] > 0.0 { 1.0 } else { 0.0 };
        }
        Dataset::new(x, None, y).unwrap()
    }

    fn arch() -> Architecture {
        Architecture {
            input_width: 8,
            fusion: Fusion::Single,
            hidden: vec![32, 16],
            outputs: 3,
            dropout: 0.2,
        }
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let data = toy(256, 1);
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 30,
            batch_size: 16,
            seed: 7,
        };
        let a = train_model(arch(), &data, Some(&toy(64, 2)), &cfg).unwrap();
        let b = train_model(arch(), &data, Some(&toy(64, 2)), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 30);
        assert!(a.final_train_loss().unwrap() < a.initial_train_loss * 0.8);
        assert!(a.history.last().unwrap().validation_loss.is_some());
        let c = train_model(arch(), &data, None, &TrainConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn chunked_prediction_matches_single_pass() {
        let data = toy(1100, 3);
        let p = ModelParams::<f32>::init(arch(), 4);
        let chunked = predict_scores(&p, data.inputs()).unwrap();
        let whole = p.predict(data.inputs()).unwrap();
        let diff = (&chunked - &whole).mapv(f32::abs).fold(0.0f32, |m, &v| m.max(v));
        assert!(diff < 1e-6);
    }

    #[test]
    fn huge_learning_rate_is_reported() {
        let mut data = toy(64, 5);
        data.primary.mapv_inplace(|v| v * 1e3);
        let cfg = TrainConfig {
            learning_rate: 1e30,
            epochs: 3,
            batch_size: 8,
            seed: 1,
        };
        assert!(matches!(
            train_model(arch(), &data, None, &cfg),
            Err(NetError::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let data = toy(8, 5);
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_model(arch(), &data, None, &bad),
            Err(NetError::InvalidConfig(_))
        ));
    }
}
