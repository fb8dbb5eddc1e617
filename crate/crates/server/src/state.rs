//! Immutable service state: registry, resident networks, prediction matrix and
//! the test split.

use std::collections::BTreeMap;
use std::path::PathBuf;

use log::{info, warn};
use thiserror::Error;

use council_core::campaign::{load_registry, CampaignError, Integrity, Registry};
use council_core::mnist::{load_split, DataPaths, Split};
use council_core::nn::Network;
use council_core::rashomon::{
    build_prediction_matrix, identify_rashomon_set, load_matrix, save_matrix, PredictionMatrix, RashomonError, RashomonSet,
};
use council_core::LabeledSet;

use crate::feedback::FeedbackJournal;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub registry: PathBuf,
    /// Built from the registry and saved here when absent.
    pub matrix: PathBuf,
    pub data: DataPaths,
    pub feedback: PathBuf,
    pub epsilon: f64,
    pub floor: f64,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("port must be in 1..=65535")]
    Port,
    #[error("registry has no usable models")]
    NoModels,
    #[error("prediction matrix does not match the registry: {0}")]
    StaleMatrix(String),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Rashomon(#[from] RashomonError),
    #[error(transparent)]
    Data(#[from] council_core::mnist::IdxError),
}

#[derive(Debug)]
pub struct AppState {
    pub registry: Registry,
    /// Every usable model, keyed by id.
    pub models: BTreeMap<String, Network<f32>>,
    pub matrix: PredictionMatrix,
    pub test: LabeledSet,
    pub epsilon: f64,
    pub floor: f64,
    pub feedback: FeedbackJournal,
}

impl AppState {
    pub fn load(config: &ServiceConfig) -> Result<AppState, StartupError> {
        if config.port == 0 {
            return Err(StartupError::Port);
        }
        for path in [&config.registry, &config.data.test_images, &config.data.test_labels] {
            if !path.is_file() {
                return Err(StartupError::MissingFile(path.clone()));
            }
        }
        let registry = load_registry(&config.registry)?;
        for entry in &registry.entries {
            if let Integrity::Corrupt(why) = &entry.integrity {
                warn!("skipping {}: {why}", entry.metadata.id());
            }
        }
        let test = load_split(&config.data.test_images, &config.data.test_labels, Split::Test)?;
        let matrix = if config.matrix.is_file() {
            load_matrix(&config.matrix)?
        } else {
            info!("building prediction matrix at {}", config.matrix.display());
            let m = build_prediction_matrix(&registry, &test)?;
            save_matrix(&m, &config.matrix)?;
            m
        };
        let mut models = BTreeMap::new();
        for entry in registry.usable() {
            models.insert(entry.metadata.id().to_owned(), registry.load_network(entry)?);
        }
        info!("{} models resident, {} test samples", models.len(), test.len());
        AppState::from_parts(registry, models, matrix, test, config.epsilon, config.floor, FeedbackJournal::new(&config.feedback))
    }

    pub fn from_parts(
        registry: Registry,
        models: BTreeMap<String, Network<f32>>,
        matrix: PredictionMatrix,
        test: LabeledSet,
        epsilon: f64,
        floor: f64,
        feedback: FeedbackJournal,
    ) -> Result<AppState, StartupError> {
        if models.is_empty() {
            return Err(StartupError::NoModels);
        }
        if matrix.sample_count != test.len() {
            return Err(StartupError::StaleMatrix(format!(
                "{} samples in the matrix, {} in the test set",
                matrix.sample_count,
                test.len()
            )));
        }
        if let Some(id) = models.keys().find(|id| matrix.row_of(id).is_none()) {
            return Err(StartupError::StaleMatrix(format!("no row for {id}")));
        }
        let state = AppState { registry, models, matrix, test, epsilon, floor, feedback };
        state.rashomon(state.epsilon, state.floor)?;
        Ok(state)
    }

    /// The Rashomon set among the resident models.
    pub fn rashomon(&self, epsilon: f64, floor: f64) -> Result<RashomonSet, RashomonError> {
        let usable = self.registry.usable().map(|e| &e.metadata).filter(|m| self.models.contains_key(m.id()));
        identify_rashomon_set(usable, epsilon, floor)
    }
}
