//! The model metadata registry: newline-delimited JSON, one model per line.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CampaignError, ModelConfig};
use crate::nn::{load_weights, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// A registry record: the config plus training outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(flatten)]
    pub config: ModelConfig,
    pub test_accuracy: f64,
    pub epochs_trained: usize,
    /// Relative to the registry's directory. Empty for failed models.
    pub weights_path: String,
    /// Lowercase hex SHA-256 of the weights file.
    pub weights_hash: String,
    pub status: Status,
    pub created_at: String,
}

impl ModelMetadata {
    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    fn validate(&self) -> Result<(), String> {
        self.config.validate()?;
        if !(0.0..=1.0).contains(&self.test_accuracy) {
            return Err(format!("test_accuracy {} outside [0, 1]", self.test_accuracy));
        }
        if self.epochs_trained > crate::nn::MAX_EPOCHS {
            return Err(format!("epochs_trained {} above the cap", self.epochs_trained));
        }
        if chrono::DateTime::parse_from_rfc3339(&self.created_at).is_err() {
            return Err(format!("created_at '{}' is not ISO-8601", self.created_at));
        }
        if self.is_ok() && (self.weights_path.is_empty() || self.weights_hash.is_empty()) {
            return Err("ok entry without weights".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Integrity {
    Verified,
    /// Failed models carry no weights to verify.
    NoWeights,
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub metadata: ModelMetadata,
    pub integrity: Integrity,
}

impl RegistryEntry {
    /// Trained, evaluated and with intact weights.
    pub fn is_usable(&self) -> bool {
        self.metadata.is_ok() && self.integrity == Integrity::Verified
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    pub root: PathBuf,
    pub entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn get(&self, id: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.metadata.id() == id)
    }

    pub fn usable(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.iter().filter(|e| e.is_usable())
    }

    pub fn weights_file(&self, metadata: &ModelMetadata) -> PathBuf {
        self.root.join(&metadata.weights_path)
    }

    pub fn metadata(&self) -> impl Iterator<Item = &ModelMetadata> {
        self.entries.iter().map(|e| &e.metadata)
    }

    /// Loads the weights of a verified `ok` entry.
    pub fn load_network(&self, entry: &RegistryEntry) -> Result<Network<f32>, CampaignError> {
        let corrupt = |message: String| CampaignError::Corrupt { id: entry.metadata.id().to_owned(), message };
        match &entry.integrity {
            Integrity::Verified => {}
            Integrity::NoWeights => return Err(corrupt("model has no weights (status failed)".into())),
            Integrity::Corrupt(why) => return Err(corrupt(why.clone())),
        }
        load_weights(&self.weights_file(&entry.metadata), entry.metadata.config.architecture()).map_err(|e| corrupt(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses one registry line and checks it against the config invariants.
pub fn parse_entry(line: &str) -> Result<ModelMetadata, String> {
    let meta: ModelMetadata = serde_json::from_str(line).map_err(|e| e.to_string())?;
    meta.validate().map_err(|e| format!("entry '{}': {e}", meta.config.id))?;
    Ok(meta)
}

/// Reads and validates a registry. Weight files are resolved relative to the
/// registry's directory and checked against their recorded hash; mismatches
/// mark the entry corrupt instead of failing the load.
pub fn load_registry(path: &Path) -> Result<Registry, CampaignError> {
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let file = File::open(path).map_err(|e| CampaignError::io(path, e))?;
    let mut entries = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CampaignError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let metadata = parse_entry(&line).map_err(|message| CampaignError::Schema { line: n + 1, message })?;
        if !ids.insert(metadata.id().to_owned()) {
            return Err(CampaignError::Schema { line: n + 1, message: format!("duplicate id '{}'", metadata.id()) });
        }
        let integrity = if metadata.is_ok() {
            match fs::read(root.join(&metadata.weights_path)) {
                Ok(bytes) if sha256_hex(&bytes) == metadata.weights_hash => Integrity::Verified,
                Ok(_) => Integrity::Corrupt("weights hash mismatch".into()),
                Err(e) => Integrity::Corrupt(format!("weights unreadable: {e}")),
            }
        } else {
            Integrity::NoWeights
        };
        entries.push(RegistryEntry { metadata, integrity });
    }
    Ok(Registry { root, entries })
}

/// Appends one record as a single flushed line.
pub fn append_entry(path: &Path, metadata: &ModelMetadata) -> Result<(), CampaignError> {
    let mut line = serde_json::to_string(metadata)?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CampaignError::io(path, e))?;
    file.write_all(line.as_bytes()).map_err(|e| CampaignError::io(path, e))?;
    file.sync_data().map_err(|e| CampaignError::io(path, e))
}

/// Replaces the registry at `path` with `entries` via a temp file and rename.
pub fn write_registry(path: &Path, entries: &[ModelMetadata]) -> Result<(), CampaignError> {
    let mut body = String::new();
    for meta in entries {
        body.push_str(&serde_json::to_string(meta)?);
        body.push('\n');
    }
    let tmp = path.with_extension("ndjson.tmp");
    {
        let mut file = File::create(&tmp).map_err(|e| CampaignError::io(&tmp, e))?;
        file.write_all(body.as_bytes()).map_err(|e| CampaignError::io(&tmp, e))?;
        file.sync_all().map_err(|e| CampaignError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| CampaignError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::sample_config;

    fn meta(dir: &Path, seed: u64) -> ModelMetadata {
        let mut config = sample_config(seed).unwrap();
        config.id = format!("model-{seed:04}");
        let rel = format!("{}.bin", config.id);
        let bytes = format!("weights of {seed}").into_bytes();
        fs::write(dir.join(&rel), &bytes).unwrap();
        ModelMetadata {
            config,
            test_accuracy: 0.9,
            epochs_trained: 12,
            weights_path: rel,
            weights_hash: sha256_hex(&bytes),
            status: Status::Ok,
            created_at: "2026-10-15T10:00:00+00:00".into(),
        }
    }

    #[test]
    fn empty_file_is_empty_registry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.ndjson");
        fs::write(&path, "").unwrap();
        assert!(load_registry(&path).unwrap().entries.is_empty());
    }

    #[test]
    fn append_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.ndjson");
        let a = meta(dir.path(), 1);
        let b = meta(dir.path(), 2);
        append_entry(&path, &a).unwrap();
        append_entry(&path, &b).unwrap();
        let reg = load_registry(&path).unwrap();
        assert_eq!(reg.entries.len(), 2);
        assert_eq!(reg.entries[0].metadata, a);
        assert_eq!(reg.entries[1].integrity, Integrity::Verified);
        assert_eq!(reg.get("model-0002").unwrap().metadata, b);
    }

    #[test]
    fn tampered_weights_are_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.ndjson");
        let a = meta(dir.path(), 3);
        append_entry(&path, &a).unwrap();
        fs::write(dir.path().join(&a.weights_path), b"tampered").unwrap();
        let reg = load_registry(&path).unwrap();
        assert!(matches!(reg.entries[0].integrity, Integrity::Corrupt(_)));
        assert!(!reg.entries[0].is_usable());
    }

    #[test]
    fn schema_violations_name_the_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.ndjson");
        let mut bad = meta(dir.path(), 4);
        bad.config.outlier_pct = 0.0;
        bad.config.typical_pct = 0.0;
        append_entry(&path, &bad).unwrap();
        match load_registry(&path) {
            Err(CampaignError::Schema { line: 1, message }) => assert!(message.contains("model-0004"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, "{\"id\": 3}\n").unwrap();
        assert!(matches!(load_registry(&path), Err(CampaignError::Schema { line: 1, .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.ndjson");
        let a = meta(dir.path(), 5);
        write_registry(&path, &[a.clone(), a]).unwrap();
        assert!(matches!(load_registry(&path), Err(CampaignError::Schema { line: 2, .. })));
    }

    #[test]
    fn exact_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let v = serde_json::to_value(meta(dir.path(), 6)).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        let mut expected = vec![
            "id", "seed", "outlier_pct", "typical_pct", "hidden_layers", "dropout", "activation", "batch_size", "optimizer",
            "use_validation", "dx", "dy", "rotation_deg", "contrast_factor", "contrast_proportion", "inversion_proportion",
            "test_accuracy", "epochs_trained", "weights_path", "weights_hash", "status", "created_at",
        ];
        expected.sort_unstable();
        assert_eq!(keys, expected);
        assert_eq!(v["status"], "ok");
    }
}
