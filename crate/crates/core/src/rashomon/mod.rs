//! Prediction matrix over the test set, Rashomon-set selection and per-sample
//! grouping of member predictions by label.

mod matrix;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::ModelMetadata;
use crate::mnist::CLASSES;

pub use matrix::{
    build_prediction_matrix, decode_matrix, encode_matrix, load_matrix, matrix_from_networks, save_matrix, MatrixIndex,
    PredictionMatrix, MATRIX_MAGIC,
};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_FLOOR: f64 = 0.85;

#[derive(Debug, Error)]
pub enum RashomonError {
    #[error("registry has no evaluated models")]
    EmptyRegistry,
    #[error("epsilon {0} must be finite and non-negative")]
    Epsilon(f64),
    #[error("floor {0} must be finite and non-negative")]
    Floor(f64),
    #[error("sample {index} out of range ({count} samples)")]
    SampleIndex { index: usize, count: usize },
    #[error("model '{0}' is not in the prediction matrix")]
    MissingModel(String),
    #[error("model '{id}' could not be evaluated: {message}")]
    Corrupt { id: String, message: String },
    #[error("prediction matrix: {0}")]
    Format(String),
    #[error("prediction matrix checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

impl RashomonError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RashomonError::Io { path: path.to_owned(), source }
    }
}

/// The models whose test accuracy is within `epsilon` of the best model and
/// not below `floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RashomonSet {
    pub members: Vec<String>,
    pub epsilon: f64,
    pub floor: f64,
    pub reference_accuracy: f64,
}

impl RashomonSet {
    pub fn threshold(&self) -> f64 {
        (self.reference_accuracy - self.epsilon).max(self.floor)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m == id)
    }

    pub fn save(&self, path: &Path) -> Result<(), RashomonError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| RashomonError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, RashomonError> {
        let text = std::fs::read_to_string(path).map_err(|e| RashomonError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Applies `accuracy >= max(best - epsilon, floor)` to the `ok` entries.
/// Members keep registry order. An empty set is a valid outcome, e.g. for a
/// floor above 1.
pub fn identify_rashomon_set<'a>(
    entries: impl IntoIterator<Item = &'a ModelMetadata>,
    epsilon: f64,
    floor: f64,
) -> Result<RashomonSet, RashomonError> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(RashomonError::Epsilon(epsilon));
    }
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(RashomonError::Floor(floor));
    }
    let evaluated: Vec<&ModelMetadata> = entries.into_iter().filter(|m| m.is_ok()).collect();
    let reference_accuracy = evaluated
        .iter()
        .map(|m| m.test_accuracy)
        .reduce(f64::max)
        .ok_or(RashomonError::EmptyRegistry)?;
    let threshold = (reference_accuracy - epsilon).max(floor);
    let members = evaluated.iter().filter(|m| m.test_accuracy >= threshold).map(|m| m.id().to_owned()).collect();
    Ok(RashomonSet { members, epsilon, floor, reference_accuracy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub model_id: String,
    pub confidence: f32,
}

/// Member predictions for one sample, one bar per digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGrouping {
    pub sample_index: usize,
    /// Keyed by digit; all ten digits are present, empty bars included.
    pub groups: BTreeMap<u8, Vec<Vote>>,
}

impl LabelGrouping {
    pub fn heights(&self) -> [usize; CLASSES] {
        let mut out = [0; CLASSES];
        for (&label, votes) in &self.groups {
            out[label as usize] = votes.len();
        }
        out
    }
}

fn member_rows(matrix: &PredictionMatrix, set: &RashomonSet) -> Result<Vec<(usize, String)>, RashomonError> {
    let rows: HashMap<&str, usize> = matrix.model_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    set.members
        .iter()
        .map(|id| rows.get(id.as_str()).map(|&r| (r, id.clone())).ok_or_else(|| RashomonError::MissingModel(id.clone())))
        .collect()
}

/// Stacks every member on the bar of the label it predicts for `sample_index`,
/// highest confidence first, ties broken by model id.
pub fn group_by_label(matrix: &PredictionMatrix, sample_index: usize, set: &RashomonSet) -> Result<LabelGrouping, RashomonError> {
    if sample_index >= matrix.sample_count {
        return Err(RashomonError::SampleIndex { index: sample_index, count: matrix.sample_count });
    }
    let mut groups: BTreeMap<u8, Vec<Vote>> = (0..CLASSES as u8).map(|d| (d, Vec::new())).collect();
    for (row, id) in member_rows(matrix, set)? {
        let label = matrix.label(row, sample_index);
        let confidence = matrix.confidence(row, sample_index);
        groups.entry(label).or_default().push(Vote { model_id: id, confidence });
    }
    for votes in groups.values_mut() {
        votes.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.model_id.cmp(&b.model_id)));
    }
    Ok(LabelGrouping { sample_index, groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub sample_index: usize,
    /// Size of the tallest bar over the set size.
    pub ratio: f64,
    pub majority_label: u8,
}

/// Per-sample agreement among the members, least agreed-upon first
/// (ties by sample index). Empty when the set is empty.
pub fn disagreement_report(matrix: &PredictionMatrix, set: &RashomonSet) -> Result<Vec<Agreement>, RashomonError> {
    let rows = member_rows(matrix, set)?;
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let mut report: Vec<Agreement> = (0..matrix.sample_count)
        .map(|s| {
            let mut counts = [0usize; CLASSES];
            for &(row, _) in &rows {
                counts[matrix.label(row, s) as usize] += 1;
            }
            let mut best = 0;
            for d in 1..CLASSES {
                if counts[d] > counts[best] {
                    best = d;
                }
            }
            Agreement { sample_index: s, ratio: counts[best] as f64 / rows.len() as f64, majority_label: best as u8 }
        })
        .collect();
    report.sort_by(|a, b| a.ratio.total_cmp(&b.ratio).then(a.sample_index.cmp(&b.sample_index)));
    Ok(report)
}
