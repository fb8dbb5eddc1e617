use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Architecture, Network, NnError, Optimizer, OptimizerKind};
use crate::seed::{self, Stream};

pub const BATCH_SIZES: [usize; 5] = [32, 64, 128, 256, 512];
pub const MAX_EPOCHS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("validation split leaves no training rows")]
    NoTrainingRows,
    #[error("invalid training plan: {0}")]
    Plan(String),
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Network(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub use_validation: bool,
    pub validation_fraction: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl TrainingPlan {
    pub fn new(batch_size: usize, optimizer: OptimizerKind, use_validation: bool, seed: u64) -> Self {
        TrainingPlan {
            batch_size,
            optimizer,
            use_validation,
            validation_fraction: 0.1,
            patience: 5,
            max_epochs: MAX_EPOCHS,
            seed,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if !BATCH_SIZES.contains(&self.batch_size) {
            return Err(TrainError::Plan(format!("batch size {} not allowed", self.batch_size)));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(TrainError::Plan(format!("validation fraction {} outside (0, 0.5]", self.validation_fraction)));
        }
        if self.max_epochs == 0 || self.max_epochs > MAX_EPOCHS {
            return Err(TrainError::Plan(format!("max_epochs {} outside 1..={MAX_EPOCHS}", self.max_epochs)));
        }
        if self.patience == 0 {
            return Err(TrainError::Plan("patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network<f32>,
    pub history: Vec<EpochRecord>,
    pub epochs_trained: usize,
}

/// Mini-batch training on `inputs` (rows scaled to [0, 1]) and `labels`.
///
/// With validation enabled, a seeded holdout is split off first; training
/// stops after `patience` epochs without a new best validation loss and the
/// best weights are returned. Without it, exactly `max_epochs` epochs run.
pub fn train(
    architecture: Architecture,
    plan: &TrainingPlan,
    inputs: ArrayView2<f32>,
    labels: &[u8],
) -> Result<TrainedModel, TrainError> {
    plan.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    if inputs.nrows() != n {
        return Err(NnError::LabelCount { rows: inputs.nrows(), labels: n }.into());
    }

    let (train_rows, val_rows) = if plan.use_validation {
        let n_val = (((plan.validation_fraction * n as f64) + 0.5).floor() as usize).max(1);
        if n_val >= n {
            return Err(TrainError::NoTrainingRows);
        }
        let mut rng = seed::rng(plan.seed, Stream::Validation);
        let mut is_val = vec![false; n];
        for i in index::sample(&mut rng, n, n_val) {
            is_val[i] = true;
        }
        let (val, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_val[i]);
        (train, Some(val))
    } else {
        ((0..n).collect(), None)
    };

    let x_train = inputs.select(Axis(0), &train_rows);
    let y_train: Vec<u8> = train_rows.iter().map(|&i| labels[i]).collect();
    let validation = val_rows.map(|rows| {
        let x = inputs.select(Axis(0), &rows);
        let y: Vec<u8> = rows.iter().map(|&i| labels[i]).collect();
        (x, y)
    });

    let mut network = Network::<f32>::init(architecture, plan.seed);
    let mut optimizer = Optimizer::<f32>::new(plan.optimizer);
    let mut shuffle_rng = seed::rng(plan.seed, Stream::Shuffle);
    let mut dropout_rng = seed::rng(plan.seed, Stream::Dropout);

    let mut order: Vec<usize> = (0..y_train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, Network<f32>)> = None;
    let mut stale = 0;
    let mut batch_x = Array2::<f32>::zeros((0, architecture.input_dim));
    let mut batch_y = Vec::with_capacity(plan.batch_size);

    for epoch in 0..plan.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(plan.batch_size) {
            gather(&x_train, chunk, &mut batch_x);
            batch_y.clear();
            batch_y.extend(chunk.iter().map(|&i| y_train[i]));
            let (loss, grads) = network.loss_and_gradients(batch_x.view(), &batch_y, Some(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            loss_sum += loss as f64 * chunk.len() as f64;
            network.apply_gradients(&mut optimizer, &grads);
        }
        let train_loss = loss_sum / y_train.len() as f64;

        let validation_loss = match &validation {
            Some((x, y)) => Some(network.loss(x.view(), y)? as f64),
            None => None,
        };
        history.push(EpochRecord { train_loss, validation_loss });

        if let Some(val) = validation_loss {
            if !val.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            match &best {
                Some((b, _)) if val >= *b => {
                    stale += 1;
                    if stale >= plan.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((val, network.clone()));
                    stale = 0;
                }
            }
        }
    }

    if let Some((_, weights)) = best {
        network = weights;
    }
    let epochs_trained = history.len();
    Ok(TrainedModel { network, history, epochs_trained })
}

fn gather(source: &Array2<f32>, rows: &[usize], out: &mut Array2<f32>) {
    if out.nrows() != rows.len() {
        *out = Array2::zeros((rows.len(), source.ncols()));
    }
    for (mut dst, &r) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&source.row(r));
    }
}
