use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adadelta,
    Adagrad,
    Adam,
    Adamax,
    Ftrl,
    Nadam,
    Rmsprop,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown optimizer '{0}'")]
pub struct UnknownOptimizer(pub String);

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 8] = [
        OptimizerKind::Adadelta,
        OptimizerKind::Adagrad,
        OptimizerKind::Adam,
        OptimizerKind::Adamax,
        OptimizerKind::Ftrl,
        OptimizerKind::Nadam,
        OptimizerKind::Rmsprop,
        OptimizerKind::Sgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adamax => "adamax",
            OptimizerKind::Ftrl => "ftrl",
            OptimizerKind::Nadam => "nadam",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = UnknownOptimizer;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownOptimizer(s.to_owned()))
    }
}

/// Update-rule constants. Fields a rule does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Decay of the squared-gradient average (rmsprop, adadelta).
    pub rho: f64,
    pub epsilon: f64,
    /// FTRL learning-rate power (-0.5 gives the usual 1/sqrt schedule).
    pub lr_power: f64,
    pub l1: f64,
    pub l2: f64,
}

impl Hyperparams {
    pub fn defaults(kind: OptimizerKind) -> Self {
        let base = Hyperparams {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            epsilon: 1e-7,
            lr_power: -0.5,
            l1: 0.0,
            l2: 0.0,
        };
        match kind {
            OptimizerKind::Sgd | OptimizerKind::Adagrad => Hyperparams { learning_rate: 0.01, ..base },
            OptimizerKind::Adadelta => Hyperparams { learning_rate: 1.0, rho: 0.95, ..base },
            _ => base,
        }
    }
}

/// Per-tensor accumulators; their meaning depends on the rule.
#[derive(Debug, Clone, PartialEq)]
struct Slot<F> {
    first: Vec<F>,
    second: Vec<F>,
}

/// A stateful optimizer over an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<F> {
    pub kind: OptimizerKind,
    pub hyper: Hyperparams,
    iterations: u64,
    slots: Vec<Slot<F>>,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(kind: OptimizerKind) -> Self {
        Self::with_hyperparams(kind, Hyperparams::defaults(kind))
    }

    pub fn with_hyperparams(kind: OptimizerKind, hyper: Hyperparams) -> Self {
        Optimizer { kind, hyper, iterations: 0, slots: Vec::new() }
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// One update of every `(params, gradients)` pair. Accumulators are
    /// zero-initialized on first use and must keep the same tensor order.
    pub fn step(&mut self, tensors: &mut [(&mut [F], &[F])]) {
        if self.slots.is_empty() {
            self.slots = tensors
                .iter()
                .map(|(p, _)| Slot { first: vec![F::zero(); p.len()], second: vec![F::zero(); p.len()] })
                .collect();
        }
        assert_eq!(self.slots.len(), tensors.len(), "tensor list changed between steps");
        self.iterations += 1;
        let t = self.iterations as f64;
        let h = self.hyper;
        let lr: F = lit(h.learning_rate);
        let eps: F = lit(h.epsilon);
        let b1: F = lit(h.beta1);
        let b2: F = lit(h.beta2);
        let rho: F = lit(h.rho);
        let one = F::one();

        for ((params, grads), slot) in tensors.iter_mut().zip(self.slots.iter_mut()) {
            assert_eq!(params.len(), grads.len(), "gradient shape mismatch");
            let it = params.iter_mut().zip(grads.iter()).zip(slot.first.iter_mut().zip(slot.second.iter_mut()));
            match self.kind {
                OptimizerKind::Sgd => {
                    for ((w, &g), _) in it {
                        *w = *w - lr * g;
                    }
                }
                OptimizerKind::Adagrad => {
                    for ((w, &g), (acc, _)) in it {
                        *acc = *acc + g * g;
                        *w = *w - lr * g / (acc.sqrt() + eps);
                    }
                }
                OptimizerKind::Rmsprop => {
                    for ((w, &g), (avg, _)) in it {
                        *avg = rho * *avg + (one - rho) * g * g;
                        *w = *w - lr * g / (avg.sqrt() + eps);
                    }
                }
                OptimizerKind::Adadelta => {
                    for ((w, &g), (avg_g, avg_dx)) in it {
                        *avg_g = rho * *avg_g + (one - rho) * g * g;
                        let dx = (*avg_dx + eps).sqrt() / (*avg_g + eps).sqrt() * g;
                        *avg_dx = rho * *avg_dx + (one - rho) * dx * dx;
                        *w = *w - lr * dx;
                    }
                }
                OptimizerKind::Adam => {
                    let c1: F = lit(1.0 - h.beta1.powf(t));
                    let c2: F = lit(1.0 - h.beta2.powf(t));
                    for ((w, &g), (m, v)) in it {
                        *m = b1 * *m + (one - b1) * g;
                        *v = b2 * *v + (one - b2) * g * g;
                        *w = *w - lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
                OptimizerKind::Adamax => {
                    let c1: F = lit(1.0 - h.beta1.powf(t));
                    for ((w, &g), (m, u)) in it {
                        *m = b1 * *m + (one - b1) * g;
                        *u = (b2 * *u).max(g.abs());
                        *w = *w - lr / c1 * *m / (*u + eps);
                    }
                }
                OptimizerKind::Nadam => {
                    let c1: F = lit(1.0 - h.beta1.powf(t));
                    let c1_next: F = lit(1.0 - h.beta1.powf(t + 1.0));
                    let c2: F = lit(1.0 - h.beta2.powf(t));
                    for ((w, &g), (m, v)) in it {
                        *m = b1 * *m + (one - b1) * g;
                        *v = b2 * *v + (one - b2) * g * g;
                        let m_bar = b1 * *m / c1_next + (one - b1) * g / c1;
                        *w = *w - lr * m_bar / ((*v / c2).sqrt() + eps);
                    }
                }
                OptimizerKind::Ftrl => {
                    // FTRL-Proximal; `n` sums squared gradients, `z` is the
                    // linear term. The weight is the closed-form minimizer.
                    let power: F = lit(-h.lr_power);
                    let l1: F = lit(h.l1);
                    let l2: F = lit(h.l2);
                    for ((w, &g), (n, z)) in it {
                        let n_new = *n + g * g;
                        if n_new == F::zero() {
                            continue;
                        }
                        let sigma = (n_new.powf(power) - n.powf(power)) / lr;
                        *z = *z + g - sigma * *w;
                        *n = n_new;
                        *w = if z.abs() <= l1 {
                            F::zero()
                        } else {
                            -(*z - z.signum() * l1) / (n_new.powf(power) / lr + lit::<F>(2.0) * l2)
                        };
                    }
                }
            }
        }
    }
}
