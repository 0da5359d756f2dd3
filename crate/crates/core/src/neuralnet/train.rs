use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

use super::adam::Adam;
use super::model::Sequential;
use super::tensor::Tensor;

/// Hyperparameters for the Adam / MSE / early-stopping training loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::config("patience must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Per-epoch losses plus which epoch's parameters the model ended up with.
/// Epochs are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean squared error over the output dimensions and its gradient.
fn mse(pred: &Tensor, target: &Tensor) -> (f64, Tensor) {
    let n = pred.data.len() as f64;
    let mut grad = Tensor::zeros(&pred.shape);
    let mut loss = 0.0;
    for (k, (&p, &y)) in pred.data.iter().zip(&target.data).enumerate() {
        let d = p - y;
        loss += d * d / n;
        grad.data[k] = 2.0 * d / n;
    }
    (loss, grad)
}

/// Mean loss of `model` over a set of (input, target) pairs, without
/// touching gradients.
pub fn evaluate_loss(model: &mut Sequential, pairs: &[(Tensor, Tensor)]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (x, y) in pairs {
        let pred = model.predict_one(x)?;
        total += mse(&pred, y).0;
    }
    Ok(total / pairs.len() as f64)
}

/// Train with Adam on MSE, minibatches shuffled per epoch from a seeded RNG,
/// early stopping on validation loss. The parameters of the best-validation
/// epoch are restored before returning.
pub fn train(
    model: &mut Sequential,
    train_pairs: &[(Tensor, Tensor)],
    val_pairs: &[(Tensor, Tensor)],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_val = f64::INFINITY;
    let mut best_params: Vec<Tensor> = model.snapshot();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let (x, y) = &train_pairs[i];
                let pred = model.forward(x)?;
                let (loss, mut grad) = mse(&pred, y);
                batch_loss += loss;
                grad.data.iter_mut().for_each(|g| *g *= scale);
                model.backward(&grad)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!(
                    "NaN loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            train_loss += batch_loss;
            opt.step(&mut model.params_mut());
        }
        train_loss /= train_pairs.len() as f64;
        let val_loss = if val_pairs.is_empty() {
            train_loss
        } else {
            evaluate_loss(model, val_pairs)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Training(format!(
                "NaN validation loss at epoch {epoch}"
            )));
        }
        history.epochs.push(EpochStats {
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            history.best_epoch = epoch;
            best_params = model.snapshot();
        } else if epoch - history.best_epoch >= cfg.patience {
            history.stopped_early = true;
            break;
        }
    }
    model.restore(&best_params)?;
    Ok(history)
}

/// One forward pass per dataset pair, in order; outputs are the raw model
/// vectors (for this pipeline, a (right, left) phase pair).
pub fn predict(model: &mut Sequential, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for x in inputs {
        let pred = model.predict_one(x)?;
        if !pred.is_finite() {
            return Err(Error::Training(
                "non-finite model output during prediction".into(),
            ));
        }
        out.push(pred.data);
    }
    Ok(out)
}
