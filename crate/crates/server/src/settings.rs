//! Command-line settings, optionally pre-filled from a JSON file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use council_core::rashomon::{DEFAULT_EPSILON, DEFAULT_FLOOR};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MODELS: usize = 20;

/// Every field is optional; flags given on the command line win over the
/// values read from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub epsilon: Option<f64>,
    pub floor: Option<f64>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub port: Option<u16>,
    pub host: Option<String>,
    pub max_epochs: Option<usize>,
    pub train_limit: Option<usize>,
    pub registry: Option<PathBuf>,
    pub matrix: Option<PathBuf>,
    pub feedback: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        Settings { $($field: $top.$field.or($base.$field)),* }
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Settings, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        let base = self;
        overlay!(
            base, top, seed, n, epsilon, floor, data_dir, out_dir, parallelism, port, host, max_epochs, train_limit,
            registry, matrix, feedback
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn models(&self) -> usize {
        self.n.unwrap_or(DEFAULT_MODELS)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(DEFAULT_EPSILON)
    }

    pub fn floor(&self) -> f64 {
        self.floor.unwrap_or(DEFAULT_FLOOR)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| PathBuf::from("data/mnist"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs/default"))
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism.unwrap_or(1)
    }

    pub fn port(&self) -> u16 {
        self.port.unwrap_or(DEFAULT_PORT)
    }

    pub fn host(&self) -> String {
        self.host.clone().unwrap_or_else(|| "127.0.0.1".into())
    }

    pub fn max_epochs(&self) -> usize {
        self.max_epochs.unwrap_or(council_core::nn::MAX_EPOCHS)
    }

    pub fn registry(&self) -> PathBuf {
        self.registry.clone().unwrap_or_else(|| self.out_dir().join(council_core::campaign::REGISTRY_FILE))
    }

    pub fn matrix(&self) -> PathBuf {
        self.matrix.clone().unwrap_or_else(|| self.out_dir().join("predictions.bin"))
    }

    pub fn feedback(&self) -> PathBuf {
        self.feedback.clone().unwrap_or_else(|| self.out_dir().join("feedback.ndjson"))
    }

    pub fn rashomon_manifest(&self) -> PathBuf {
        self.out_dir().join("rashomon.json")
    }
}
