use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{lit, Activation, Optimizer, Scalar};
use crate::mnist::{GrayImage, LabeledSet, CLASSES, PIXELS};
use crate::seed::{self, Stream};

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input has {found} columns, network expects {expected}")]
    Shape { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("label {0} out of range")]
    Label(u8),
    #[error("layer {layer}: expected {expected:?}, found {found:?}")]
    LayerShape { layer: usize, expected: (usize, usize), found: (usize, usize) },
    #[error("expected {expected} layers, found {found}")]
    LayerCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub dropout: bool,
    pub dropout_rate: f64,
}

impl Architecture {
    pub const HIDDEN_WIDTH: usize = 128;
    pub const DROPOUT_RATE: f64 = 0.5;

    /// The digit-classifier shape: 784 inputs, `hidden_layers` x 128 units, 10 outputs.
    pub fn mnist(hidden_layers: usize, activation: Activation, dropout: bool) -> Self {
        Architecture {
            input_dim: PIXELS,
            hidden_layers,
            hidden_width: Self::HIDDEN_WIDTH,
            output_dim: CLASSES,
            activation,
            dropout,
            dropout_rate: Self::DROPOUT_RATE,
        }
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    /// `fan_in x fan_out`, so a layer computes `x W + b` on row-vector batches.
    pub weights: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    pub architecture: Architecture,
    pub layers: Vec<Dense<F>>,
}

/// Everything backpropagation needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<F> {
    /// Input of every dense layer (after dropout for hidden outputs).
    pub inputs: Vec<Array2<F>>,
    /// Pre-activations of the hidden layers.
    pub pre_activations: Vec<Array2<F>>,
    /// Hidden activations before dropout.
    pub activations: Vec<Array2<F>>,
    /// Inverted-dropout multipliers (0 or 1/(1-rate)) per hidden layer.
    pub masks: Vec<Option<Array2<F>>>,
    pub probabilities: Array2<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<(Array2<F>, Array1<F>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub confidence: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

impl<F: Scalar> Network<F> {
    /// Glorot-uniform weights and zero biases.
    pub fn init(architecture: Architecture, seed: u64) -> Self {
        let mut rng = seed::rng(seed, Stream::Init);
        let layers = architecture
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || lit(rng.random_range(-limit..limit)));
                Dense { weights, bias: Array1::zeros(fan_out) }
            })
            .collect();
        Network { architecture, layers }
    }

    /// Builds a network from explicit layers, checking every shape.
    pub fn from_layers(architecture: Architecture, layers: Vec<Dense<F>>) -> Result<Self, NnError> {
        let shapes = architecture.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(NnError::LayerCount { expected: shapes.len(), found: layers.len() });
        }
        for (layer, (expected, dense)) in shapes.iter().zip(&layers).enumerate() {
            let found = dense.weights.dim();
            if found != *expected || dense.bias.len() != expected.1 {
                return Err(NnError::LayerShape { layer, expected: *expected, found });
            }
        }
        Ok(Network { architecture, layers })
    }

    pub fn cast<G: Scalar>(&self) -> Network<G> {
        let conv = |x: &F| G::from(*x).expect("finite cast");
        Network {
            architecture: self.architecture,
            layers: self
                .layers
                .iter()
                .map(|d| Dense { weights: d.weights.map(conv), bias: d.bias.map(conv) })
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|d| d.weights.len() + d.bias.len()).sum()
    }

    fn check_input(&self, batch: &ArrayView2<F>) -> Result<(), NnError> {
        if batch.ncols() != self.architecture.input_dim {
            return Err(NnError::Shape { expected: self.architecture.input_dim, found: batch.ncols() });
        }
        Ok(())
    }

    /// Forward pass keeping intermediates. Dropout is applied to hidden
    /// outputs only when `dropout` supplies a generator and the architecture
    /// enables it.
    pub fn forward_pass<R: Rng>(&self, batch: ArrayView2<F>, mut dropout: Option<&mut R>) -> Result<ForwardPass<F>, NnError> {
        self.check_input(&batch)?;
        let arch = &self.architecture;
        let hidden = self.layers.len() - 1;
        let mut pass = ForwardPass {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(hidden),
            activations: Vec::with_capacity(hidden),
            masks: Vec::with_capacity(hidden),
            probabilities: Array2::zeros((0, 0)),
        };
        let mut current = batch.to_owned();
        for dense in &self.layers[..hidden] {
            let z = current.dot(&dense.weights) + &dense.bias;
            let a = arch.activation.forward(z.view());
            let mask = match dropout.as_deref_mut() {
                Some(rng) if arch.dropout => {
                    let keep = 1.0 - arch.dropout_rate;
                    let scale: F = lit(1.0 / keep);
                    Some(Array2::from_shape_simple_fn(a.raw_dim(), || {
                        if rng.random::<f64>() < keep {
                            scale
                        } else {
                            F::zero()
                        }
                    }))
                }
                _ => None,
            };
            let next = match &mask {
                Some(m) => &a * m,
                None => a.clone(),
            };
            pass.inputs.push(std::mem::replace(&mut current, next));
            pass.pre_activations.push(z);
            pass.activations.push(a);
            pass.masks.push(mask);
        }
        let out = &self.layers[hidden];
        let logits = current.dot(&out.weights) + &out.bias;
        pass.inputs.push(current);
        pass.probabilities = Activation::Softmax.forward(logits.view());
        Ok(pass)
    }

    /// Class probabilities for `batch` (rows of pixels scaled to [0, 1]).
    pub fn forward(&self, batch: ArrayView2<F>, train_mode: bool, seed: u64) -> Result<Array2<F>, NnError> {
        if train_mode {
            let mut rng = seed::rng(seed, Stream::Dropout);
            Ok(self.forward_pass(batch, Some(&mut rng))?.probabilities)
        } else {
            Ok(self.forward_pass::<rand_chacha::ChaCha8Rng>(batch, None)?.probabilities)
        }
    }

    /// Mean cross-entropy of `probabilities` against `labels`, with each true-class
    /// probability floored at 1e-12.
    pub fn cross_entropy(probabilities: &Array2<F>, labels: &[u8]) -> F {
        let floor: F = lit(PROB_FLOOR);
        let total = labels.iter().enumerate().fold(F::zero(), |acc, (i, &l)| {
            let p = probabilities[[i, l as usize]];
            let p = if p.is_nan() { p } else { p.max(floor) };
            acc - p.ln()
        });
        total / lit(labels.len() as f64)
    }

    fn check_labels(&self, rows: usize, labels: &[u8]) -> Result<(), NnError> {
        if rows != labels.len() {
            return Err(NnError::LabelCount { rows, labels: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= self.architecture.output_dim) {
            return Err(NnError::Label(bad));
        }
        Ok(())
    }

    /// Backpropagates the cross-entropy of one forward pass.
    pub fn backward(&self, pass: &ForwardPass<F>, labels: &[u8]) -> Gradients<F> {
        let batch = labels.len();
        let mut delta = pass.probabilities.clone();
        for (i, &l) in labels.iter().enumerate() {
            delta[[i, l as usize]] = delta[[i, l as usize]] - F::one();
        }
        delta.mapv_inplace(|v| v / lit(batch as f64));

        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let gw = pass.inputs[l].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut upstream = delta.dot(&self.layers[l].weights.t());
                if let Some(mask) = &pass.masks[l - 1] {
                    upstream = upstream * mask;
                }
                delta = self.architecture.activation.backward(
                    pass.pre_activations[l - 1].view(),
                    pass.activations[l - 1].view(),
                    upstream.view(),
                );
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Loss and parameter gradients for one batch; `dropout` as in
    /// [`Network::forward_pass`].
    pub fn loss_and_gradients<R: Rng>(
        &self,
        batch: ArrayView2<F>,
        labels: &[u8],
        dropout: Option<&mut R>,
    ) -> Result<(F, Gradients<F>), NnError> {
        self.check_labels(batch.nrows(), labels)?;
        let pass = self.forward_pass(batch, dropout)?;
        let loss = Self::cross_entropy(&pass.probabilities, labels);
        Ok((loss, self.backward(&pass, labels)))
    }

    /// Mean cross-entropy in evaluation mode, computed in chunks.
    pub fn loss(&self, inputs: ArrayView2<F>, labels: &[u8]) -> Result<F, NnError> {
        self.check_labels(inputs.nrows(), labels)?;
        let mut total = F::zero();
        for start in (0..labels.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(labels.len());
            let probs = self.forward(inputs.slice(s![start..end, ..]), false, 0)?;
            total = total + Self::cross_entropy(&probs, &labels[start..end]) * lit((end - start) as f64);
        }
        Ok(total / lit(labels.len().max(1) as f64))
    }

    /// Updates every weight and bias with one optimizer step.
    pub fn apply_gradients(&mut self, optimizer: &mut Optimizer<F>, grads: &Gradients<F>) {
        let mut tensors: Vec<(&mut [F], &[F])> = Vec::with_capacity(self.layers.len() * 2);
        for (dense, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            tensors.push((
                dense.weights.as_slice_mut().expect("standard layout"),
                gw.as_slice().expect("standard layout"),
            ));
            tensors.push((dense.bias.as_slice_mut().expect("contiguous"), gb.as_slice().expect("contiguous")));
        }
        optimizer.step(&mut tensors);
    }

    /// Argmax predictions (lowest class wins ties) in evaluation mode.
    pub fn predict(&self, inputs: ArrayView2<F>) -> Result<Vec<Prediction>, NnError> {
        let mut out = Vec::with_capacity(inputs.nrows());
        for start in (0..inputs.nrows()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(inputs.nrows());
            let probs = self.forward(inputs.slice(s![start..end, ..]), false, 0)?;
            out.extend(probs.rows().into_iter().map(|row| {
                let mut best = 0;
                for (k, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = k;
                    }
                }
                let conf = row[best].to_f32().unwrap_or(0.0);
                Prediction { label: best as u8, confidence: if conf.is_nan() { 0.0 } else { conf.clamp(0.0, 1.0) } }
            }));
        }
        Ok(out)
    }
}

const EVAL_CHUNK: usize = 1000;

/// Flattens images into rows scaled to [0, 1].
pub fn images_to_matrix(images: &[GrayImage]) -> Array2<f32> {
    let mut out = Array2::zeros((images.len(), PIXELS));
    for (mut row, img) in out.rows_mut().into_iter().zip(images) {
        for (o, &p) in row.iter_mut().zip(img.pixels().iter()) {
            *o = p as f32 / 255.0;
        }
    }
    out
}

/// Accuracy and per-sample predictions of `network` on `set`.
pub fn evaluate(network: &Network<f32>, set: &LabeledSet) -> Result<Evaluation, NnError> {
    let inputs = images_to_matrix(&set.images);
    let predictions = network.predict(inputs.view())?;
    let correct = predictions.iter().zip(&set.labels).filter(|(p, &l)| p.label == l).count();
    let accuracy = if set.is_empty() { 0.0 } else { correct as f64 / set.len() as f64 };
    Ok(Evaluation { accuracy, predictions })
}
