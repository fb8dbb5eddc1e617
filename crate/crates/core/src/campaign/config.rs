use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::augment::{AugmentationSpec, CONTRAST_FACTORS, PROPORTIONS, ROTATIONS, TRANSLATIONS};
use crate::nn::{Activation, Architecture, OptimizerKind, TrainingPlan, BATCH_SIZES};
use crate::seed::{self, Stream};

pub const POOL_PERCENTAGES: [f64; 6] = PROPORTIONS;
pub const HIDDEN_LAYERS: [usize; 3] = [1, 2, 3];

const MAX_REDRAWS: usize = 1000;

/// One model's complete set of variations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub id: String,
    pub seed: u64,
    pub outlier_pct: f64,
    pub typical_pct: f64,
    pub hidden_layers: usize,
    pub dropout: bool,
    pub activation: Activation,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub use_validation: bool,
    #[serde(flatten)]
    pub augmentation: AugmentationSpec,
}

impl ModelConfig {
    /// Checks the enumerated value sets and the non-empty-pool constraint.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        for (name, v) in [("outlier_pct", self.outlier_pct), ("typical_pct", self.typical_pct)] {
            if !POOL_PERCENTAGES.contains(&v) {
                return Err(format!("{name} {v} not allowed"));
            }
        }
        if self.outlier_pct == 0.0 && self.typical_pct == 0.0 {
            return Err("outlier_pct and typical_pct are both zero".into());
        }
        if !HIDDEN_LAYERS.contains(&self.hidden_layers) {
            return Err(format!("hidden_layers {} not allowed", self.hidden_layers));
        }
        if !BATCH_SIZES.contains(&self.batch_size) {
            return Err(format!("batch_size {} not allowed", self.batch_size));
        }
        self.augmentation.validate().map_err(|e| e.to_string())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::mnist(self.hidden_layers, self.activation, self.dropout)
    }

    pub fn training_plan(&self) -> TrainingPlan {
        TrainingPlan::new(self.batch_size, self.optimizer, self.use_validation, self.seed)
    }

    /// Everything except identity (`id`, `seed`); two configs with equal keys
    /// are the same expert.
    pub fn variation_key(&self) -> String {
        let a = &self.augmentation;
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}",
            self.outlier_pct,
            self.typical_pct,
            self.hidden_layers,
            self.dropout,
            self.activation,
            self.batch_size,
            self.optimizer,
            self.use_validation,
            a.dx,
            a.dy,
            a.rotation_deg,
            a.contrast_factor,
            a.contrast_proportion,
            a.inversion_proportion
        )
    }
}

fn pick<T: Copy, R: Rng>(rng: &mut R, values: &[T]) -> T {
    *values.choose(rng).expect("non-empty value set")
}

/// Draws every variation uniformly and independently; draws with both pool
/// percentages at zero are discarded and redrawn.
pub fn sample_config(seed: u64) -> Result<ModelConfig, CampaignError> {
    let mut rng = seed::rng(seed, Stream::Init);
    for _ in 0..MAX_REDRAWS {
        let config = ModelConfig {
            id: format!("cfg-{seed:016x}"),
            seed,
            outlier_pct: pick(&mut rng, &POOL_PERCENTAGES),
            typical_pct: pick(&mut rng, &POOL_PERCENTAGES),
            hidden_layers: pick(&mut rng, &HIDDEN_LAYERS),
            dropout: rng.random(),
            activation: pick(&mut rng, &Activation::ALL),
            batch_size: pick(&mut rng, &BATCH_SIZES),
            optimizer: pick(&mut rng, &OptimizerKind::ALL),
            use_validation: rng.random(),
            augmentation: AugmentationSpec {
                dx: pick(&mut rng, &TRANSLATIONS),
                dy: pick(&mut rng, &TRANSLATIONS),
                rotation_deg: pick(&mut rng, &ROTATIONS),
                contrast_factor: pick(&mut rng, &CONTRAST_FACTORS),
                contrast_proportion: pick(&mut rng, &PROPORTIONS),
                inversion_proportion: pick(&mut rng, &PROPORTIONS),
            },
        };
        if config.outlier_pct == 0.0 && config.typical_pct == 0.0 {
            continue;
        }
        return Ok(config);
    }
    Err(CampaignError::Sampler(seed))
}
