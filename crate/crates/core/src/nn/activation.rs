use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::{lit, Scalar};

/// Hidden-layer activation functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Exponential,
    Gelu,
    HardSigmoid,
    Linear,
    Relu,
    Sigmoid,
    Softmax,
    Swish,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown activation '{0}'")]
pub struct UnknownActivation(pub String);

impl Activation {
    pub const ALL: [Activation; 10] = [
        Activation::Elu,
        Activation::Exponential,
        Activation::Gelu,
        Activation::HardSigmoid,
        Activation::Linear,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Softmax,
        Activation::Swish,
        Activation::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Exponential => "exponential",
            Activation::Gelu => "gelu",
            Activation::HardSigmoid => "hard_sigmoid",
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Swish => "swish",
            Activation::Tanh => "tanh",
        }
    }

    /// Applies the activation to a batch (one sample per row). Softmax
    /// normalizes each row; everything else is elementwise.
    pub fn forward<F: Scalar>(self, z: ArrayView2<F>) -> Array2<F> {
        match self {
            Activation::Softmax => softmax_rows(z),
            _ => z.mapv(|x| self.scalar(x)),
        }
    }

    fn scalar<F: Scalar>(self, x: F) -> F {
        let one = F::one();
        let zero = F::zero();
        match self {
            Activation::Elu => {
                if x > zero {
                    x
                } else {
                    x.exp() - one
                }
            }
            Activation::Exponential => x.exp(),
            Activation::Gelu => {
                let inner = lit::<F>(GELU_K) * (x + lit::<F>(0.044715) * x * x * x);
                lit::<F>(0.5) * x * (one + inner.tanh())
            }
            Activation::HardSigmoid => (lit::<F>(0.2) * x + lit::<F>(0.5)).max(zero).min(one),
            Activation::Linear => x,
            Activation::Relu => x.max(zero),
            Activation::Sigmoid => sigmoid(x),
            Activation::Swish => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Softmax => unreachable!("softmax is not elementwise"),
        }
    }

    /// Gradient with respect to the pre-activation `z`, given the upstream
    /// gradient `grad` and the forward output `a = f(z)`.
    pub fn backward<F: Scalar>(self, z: ArrayView2<F>, a: ArrayView2<F>, grad: ArrayView2<F>) -> Array2<F> {
        let one = F::one();
        let zero = F::zero();
        if self == Activation::Softmax {
            // J^T g = a * (g - <g, a>) per row
            let dots = (&grad * &a).sum_axis(Axis(1)).insert_axis(Axis(1));
            return &a * &(&grad - &dots);
        }
        let mut out = Array2::zeros(z.raw_dim());
        Zip::from(&mut out).and(&z).and(&a).and(&grad).for_each(|o, &x, &y, &g| {
            let d = match self {
                Activation::Elu => {
                    if x > zero {
                        one
                    } else {
                        y + one
                    }
                }
                Activation::Exponential => y,
                Activation::Gelu => {
                    let k = lit::<F>(GELU_K);
                    let c = lit::<F>(0.044715);
                    let t = (k * (x + c * x * x * x)).tanh();
                    lit::<F>(0.5) * (one + t) + lit::<F>(0.5) * x * (one - t * t) * k * (one + lit::<F>(3.0) * c * x * x)
                }
                Activation::HardSigmoid => {
                    if x > lit(-2.5) && x < lit(2.5) {
                        lit(0.2)
                    } else {
                        zero
                    }
                }
                Activation::Linear => one,
                Activation::Relu => {
                    if x > zero {
                        one
                    } else {
                        zero
                    }
                }
                Activation::Sigmoid => y * (one - y),
                Activation::Swish => {
                    let s = sigmoid(x);
                    s + x * s * (one - s)
                }
                Activation::Tanh => one - y * y,
                Activation::Softmax => unreachable!(),
            };
            *o = g * d;
        });
        out
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Row-wise softmax with max-subtraction.
pub fn softmax_rows<F: Scalar>(z: ArrayView2<F>) -> Array2<F> {
    let mut out = z.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Applies `kind` to a single vector.
pub fn activation(kind: Activation, x: &[f64]) -> Vec<f64> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("one row");
    kind.forward(view).into_raw_vec_and_offset().0
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = UnknownActivation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| UnknownActivation(s.to_owned()))
    }
}
