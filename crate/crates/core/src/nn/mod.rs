//! A small feed-forward classifier engine.
//!
//! Networks are dense `784 -> hidden... -> 10` stacks with a softmax output and
//! categorical cross-entropy loss. Training runs in `f32`; the same code is
//! generic over the float type so gradient checks can run in `f64`.

mod activation;
mod network;
mod optimizer;
mod train;
mod weights;

use std::fmt::{Debug, Display};

pub use activation::{activation, softmax_rows, Activation, UnknownActivation};
pub use network::{evaluate, images_to_matrix, Architecture, Dense, Evaluation, ForwardPass, Gradients, Network, NnError, Prediction};
pub use optimizer::{Hyperparams, Optimizer, OptimizerKind, UnknownOptimizer};
pub use train::{train, EpochRecord, TrainError, TrainedModel, TrainingPlan, BATCH_SIZES, MAX_EPOCHS};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, WeightsError, WEIGHTS_MAGIC};

pub trait Scalar:
    num_traits::Float + ndarray::LinalgScalar + ndarray::ScalarOperand + Send + Sync + Debug + Display + Default + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub(crate) fn lit<F: Scalar>(x: f64) -> F {
    F::from(x).expect("representable constant")
}
