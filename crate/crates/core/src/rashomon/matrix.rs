//! Model x sample grid of predicted labels and confidences.
//!
//! ```text
//! "AISPECP1" | n_models u32 | n_samples u32
//! n_models*n_samples u8 labels (model-major)
//! n_models*n_samples f32 confidences (model-major)
//! crc32 u32 over every preceding byte
//! ```
//! Little-endian throughout. Model ids live in a JSON index next to the file.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RashomonError;
use crate::binfmt::{self, Reader};
use crate::campaign::Registry;
use crate::mnist::{LabeledSet, CLASSES};
use crate::nn::{evaluate, Network};

pub const MATRIX_MAGIC: &[u8; 8] = b"AISPECP1";

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub model_ids: Vec<String>,
    pub sample_count: usize,
    labels: Vec<u8>,
    confidences: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixIndex {
    pub model_ids: Vec<String>,
    pub sample_count: usize,
}

impl PredictionMatrix {
    pub fn new(model_ids: Vec<String>, sample_count: usize, labels: Vec<u8>, confidences: Vec<f32>) -> Result<Self, RashomonError> {
        let cells = model_ids.len() * sample_count;
        if labels.len() != cells || confidences.len() != cells {
            return Err(RashomonError::Format(format!(
                "{} x {sample_count} grid needs {cells} cells, got {} labels and {} confidences",
                model_ids.len(),
                labels.len(),
                confidences.len()
            )));
        }
        if let Some(pos) = labels.iter().position(|&l| l as usize >= CLASSES) {
            return Err(RashomonError::Format(format!("label {} at cell {pos} is not a digit", labels[pos])));
        }
        if let Some(pos) = confidences.iter().position(|c| !(0.0..=1.0).contains(c)) {
            return Err(RashomonError::Format(format!("confidence {} at cell {pos} outside [0, 1]", confidences[pos])));
        }
        Ok(PredictionMatrix { model_ids, sample_count, labels, confidences })
    }

    pub fn model_count(&self) -> usize {
        self.model_ids.len()
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.model_ids.iter().position(|m| m == id)
    }

    pub fn label(&self, row: usize, sample: usize) -> u8 {
        self.labels[row * self.sample_count + sample]
    }

    pub fn confidence(&self, row: usize, sample: usize) -> f32 {
        self.confidences[row * self.sample_count + sample]
    }

    pub fn labels_row(&self, row: usize) -> &[u8] {
        &self.labels[row * self.sample_count..(row + 1) * self.sample_count]
    }

    pub fn confidences_row(&self, row: usize) -> &[f32] {
        &self.confidences[row * self.sample_count..(row + 1) * self.sample_count]
    }

    /// Fraction of `truth` matched by the row's labels.
    pub fn row_accuracy(&self, row: usize, truth: &[u8]) -> f64 {
        let hits = self.labels_row(row).iter().zip(truth).filter(|(a, b)| a == b).count();
        if self.sample_count == 0 {
            0.0
        } else {
            hits as f64 / self.sample_count as f64
        }
    }

    pub fn index(&self) -> MatrixIndex {
        MatrixIndex { model_ids: self.model_ids.clone(), sample_count: self.sample_count }
    }
}

/// Evaluates each network on `test`, one row per network, in order.
pub fn matrix_from_networks(ids: Vec<String>, networks: &[Network<f32>], test: &LabeledSet) -> Result<PredictionMatrix, RashomonError> {
    let rows = ids
        .par_iter()
        .zip(networks)
        .map(|(id, net)| evaluate(net, test).map_err(|e| RashomonError::Corrupt { id: id.clone(), message: e.to_string() }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut labels = Vec::with_capacity(ids.len() * test.len());
    let mut confidences = Vec::with_capacity(ids.len() * test.len());
    for eval in rows {
        labels.extend(eval.predictions.iter().map(|p| p.label));
        confidences.extend(eval.predictions.iter().map(|p| p.confidence));
    }
    PredictionMatrix::new(ids, test.len(), labels, confidences)
}

/// One row per `ok` registry entry, in registry order.
pub fn build_prediction_matrix(registry: &Registry, test: &LabeledSet) -> Result<PredictionMatrix, RashomonError> {
    let entries: Vec<_> = registry.entries.iter().filter(|e| e.metadata.is_ok()).collect();
    let networks = entries
        .par_iter()
        .map(|e| {
            registry
                .load_network(e)
                .map_err(|err| RashomonError::Corrupt { id: e.metadata.id().to_owned(), message: err.to_string() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ids = entries.iter().map(|e| e.metadata.id().to_owned()).collect();
    matrix_from_networks(ids, &networks, test)
}

pub fn encode_matrix(matrix: &PredictionMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + matrix.labels.len() * 5);
    out.extend_from_slice(MATRIX_MAGIC);
    binfmt::put_u32(&mut out, matrix.model_count() as u32);
    binfmt::put_u32(&mut out, matrix.sample_count as u32);
    out.extend_from_slice(&matrix.labels);
    binfmt::put_f32s(&mut out, matrix.confidences.iter().copied());
    binfmt::seal(out)
}

/// Decodes a matrix file; `model_ids` comes from the companion index and must
/// have one id per row.
pub fn decode_matrix(bytes: &[u8], model_ids: Vec<String>) -> Result<PredictionMatrix, RashomonError> {
    if bytes.len() < 8 || &bytes[..8] != MATRIX_MAGIC {
        return Err(RashomonError::Format("bad magic".into()));
    }
    let format = |e: binfmt::ReadError| RashomonError::Format(e.to_string());
    let mut reader = Reader::new(&bytes[8..]);
    let n_models = reader.u32().map_err(format)? as usize;
    let n_samples = reader.u32().map_err(format)? as usize;
    let cells = n_models
        .checked_mul(n_samples)
        .ok_or_else(|| RashomonError::Format("grid size overflows".into()))?;
    let expected = cells.checked_mul(5).and_then(|b| b.checked_add(8 + 8 + 4));
    if expected != Some(bytes.len()) {
        return Err(RashomonError::Format(format!(
            "header declares {n_models} x {n_samples}, file has {} bytes",
            bytes.len()
        )));
    }
    match binfmt::unseal(bytes) {
        Some(Ok(_)) => {}
        Some(Err((stored, computed))) => return Err(RashomonError::Checksum { stored, computed }),
        None => return Err(RashomonError::Format("missing checksum".into())),
    }
    if model_ids.len() != n_models {
        return Err(RashomonError::Format(format!("index lists {} models, matrix has {n_models}", model_ids.len())));
    }
    let labels = reader.take(cells).map_err(format)?.to_vec();
    let confidences = reader.f32s(cells).map_err(format)?;
    PredictionMatrix::new(model_ids, n_samples, labels, confidences)
}

fn index_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the matrix to `path` and its index to `path` with a `.json` extension.
pub fn save_matrix(matrix: &PredictionMatrix, path: &Path) -> Result<(), RashomonError> {
    std::fs::write(path, encode_matrix(matrix)).map_err(|e| RashomonError::io(path, e))?;
    let index = index_path(path);
    std::fs::write(&index, serde_json::to_string_pretty(&matrix.index())?).map_err(|e| RashomonError::io(&index, e))
}

pub fn load_matrix(path: &Path) -> Result<PredictionMatrix, RashomonError> {
    let index_file = index_path(path);
    let text = std::fs::read_to_string(&index_file).map_err(|e| RashomonError::io(&index_file, e))?;
    let index: MatrixIndex = serde_json::from_str(&text)?;
    let bytes = std::fs::read(path).map_err(|e| RashomonError::io(path, e))?;
    let matrix = decode_matrix(&bytes, index.model_ids)?;
    if matrix.sample_count != index.sample_count {
        return Err(RashomonError::Format("index and matrix disagree on the sample count".into()));
    }
    Ok(matrix)
}
