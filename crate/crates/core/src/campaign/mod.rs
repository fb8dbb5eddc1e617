//! Sampling model configurations, assembling their training data and training
//! the whole population into a metadata registry.

mod config;
mod dataset;
mod registry;
mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::augment::AugmentError;
use crate::nn::WeightsError;

pub use config::{sample_config, ModelConfig, HIDDEN_LAYERS, POOL_PERCENTAGES};
pub use dataset::{build_training_set, AugmentedDataset};
pub use registry::{
    append_entry, load_registry, parse_entry, sha256_hex, write_registry, Integrity, ModelMetadata, Registry, RegistryEntry,
    Status,
};
pub use run::{run_campaign, sample_campaign_configs, CampaignPlan, JOURNAL_FILE, REGISTRY_FILE, WEIGHTS_DIR};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("config sampler for seed {0} exceeded its redraw cap")]
    Sampler(u64),
    #[error("outlier partition: {0}")]
    Partition(String),
    #[error("config {0} selects no training images")]
    EmptyDataset(String),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("invalid campaign plan: {0}")]
    Plan(String),
    #[error("registry line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("model '{id}' is unusable: {message}")]
    Corrupt { id: String, message: String },
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CampaignError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CampaignError::Io { path: path.to_owned(), source }
    }
}
