//! Per-digit outlier detection with isolation forests.
//!
//! Each class of the training set gets its own forest; the highest-scoring
//! fraction of a class is labelled as outliers and the rest as typicals.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mnist::{LabeledSet, CLASSES};
use crate::seed::{self, Stream};

#[derive(Debug, Error)]
pub enum OutlierError {
    #[error("an isolation forest needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("digit class {class} has {size} members (need at least 2)")]
    ClassTooSmall { class: u8, size: usize },
    #[error("invalid forest parameters: {0}")]
    Params(&'static str),
    #[error("partition does not match the training set: {0}")]
    Mismatch(String),
    #[error("partition file: {0}")]
    Io(#[from] std::io::Error),
    #[error("partition file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestParams {
    pub tree_count: usize,
    pub subsample_size: usize,
    pub seed: u64,
    pub outlier_fraction: f64,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        IsolationForestParams { tree_count: 100, subsample_size: 256, seed: 0, outlier_fraction: 0.10 }
    }
}

impl IsolationForestParams {
    fn validate(&self) -> Result<(), OutlierError> {
        if self.tree_count == 0 {
            return Err(OutlierError::Params("tree_count must be positive"));
        }
        if self.subsample_size < 2 {
            return Err(OutlierError::Params("subsample_size must be at least 2"));
        }
        if !(self.outlier_fraction > 0.0 && self.outlier_fraction < 1.0) {
            return Err(OutlierError::Params("outlier_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Average path length of an unsuccessful binary-search-tree lookup among
/// `n` points: `2 H(n-1) - 2 (n-1) / n`, with `c(0) = c(1) = 0`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let harmonic: f64 = (1..n).map(|i| 1.0 / i as f64).sum();
    2.0 * harmonic - 2.0 * (n - 1) as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split { feature: usize, threshold: f32, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    fn grow<P: AsRef<[f32]>>(points: &[P], sample: Vec<usize>, max_depth: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = IsolationTree { nodes: Vec::new() };
        let dims = points[sample[0]].as_ref().len();
        let mut candidates: Vec<usize> = Vec::with_capacity(dims);
        tree.build(points, sample, 0, max_depth, rng, &mut candidates, dims);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn build<P: AsRef<[f32]>>(
        &mut self,
        points: &[P],
        members: Vec<usize>,
        depth: usize,
        max_depth: usize,
        rng: &mut ChaCha8Rng,
        candidates: &mut Vec<usize>,
        dims: usize,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: members.len() });
        if members.len() <= 1 || depth >= max_depth {
            return id;
        }
        // Uniform over the features that actually vary inside this node:
        // draw without replacement until a non-constant one turns up.
        candidates.clear();
        candidates.extend(0..dims);
        let mut split = None;
        while !candidates.is_empty() {
            let pick = rng.random_range(0..candidates.len());
            let feature = candidates.swap_remove(pick);
            let (lo, hi) = members.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &m| {
                let v = points[m].as_ref()[feature];
                (lo.min(v), hi.max(v))
            });
            if hi > lo {
                split = Some((feature, rng.random_range(lo..hi)));
                break;
            }
        }
        let Some((feature, threshold)) = split else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            members.into_iter().partition(|&m| points[m].as_ref()[feature] < threshold);
        let left = self.build(points, left, depth + 1, max_depth, rng, candidates, dims);
        let right = self.build(points, right, depth + 1, max_depth, rng, candidates, dims);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    /// Edges traversed to reach a leaf, plus the expected remaining depth of
    /// the points that leaf still holds.
    pub fn path_length(&self, point: &[f32]) -> f64 {
        let mut id = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[id] {
                Node::Split { feature, threshold, left, right } => {
                    id = if point[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    trees: Vec<IsolationTree>,
    subsample_size: usize,
    normalizer: f64,
}

/// Grows `params.tree_count` isolation trees, each on its own seeded subsample.
///
/// The subsample size is capped at the number of points.
pub fn build_forest<P: AsRef<[f32]> + Sync>(points: &[P], params: &IsolationForestParams) -> Result<IsolationForest, OutlierError> {
    if points.len() < 2 {
        return Err(OutlierError::TooFewPoints(points.len()));
    }
    params.validate()?;
    let psi = params.subsample_size.min(points.len());
    let max_depth = (psi as f64).log2().ceil() as usize;
    let trees = (0..params.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(params.seed, t as u64), Stream::Forest);
            let sample = index::sample(&mut rng, points.len(), psi).into_vec();
            IsolationTree::grow(points, sample, max_depth, &mut rng)
        })
        .collect();
    Ok(IsolationForest { trees, subsample_size: psi, normalizer: average_path_length(psi) })
}

impl IsolationForest {
    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn mean_path_length(&self, point: &[f32]) -> f64 {
        self.trees.iter().map(|t| t.path_length(point)).sum::<f64>() / self.trees.len() as f64
    }

    /// `2^(-E[h(x)] / c(psi))`: near 1 for easily isolated points, 0.5 at the
    /// average depth.
    pub fn anomaly_score(&self, point: &[f32]) -> f64 {
        score_from_path_length(self.mean_path_length(point), self.normalizer)
    }
}

pub fn score_from_path_length(mean_path_length: f64, normalizer: f64) -> f64 {
    2f64.powf(-mean_path_length / normalizer)
}

pub fn anomaly_score(forest: &IsolationForest, point: &[f32]) -> f64 {
    forest.anomaly_score(point)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub outliers: Vec<usize>,
    pub typicals: Vec<usize>,
}

/// Outlier and typical indices into the training set, for every digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierPartition {
    pub classes: BTreeMap<u8, ClassPartition>,
    pub params: IsolationForestParams,
    pub seed: u64,
}

impl OutlierPartition {
    pub fn class(&self, digit: u8) -> Option<&ClassPartition> {
        self.classes.get(&digit)
    }

    pub fn save(&self, path: &Path) -> Result<(), OutlierError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, OutlierError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Checks that the partition is a disjoint cover of every class of `set`.
    pub fn check_covers(&self, set: &LabeledSet) -> Result<(), OutlierError> {
        let by_class = set.class_indices();
        for (digit, members) in by_class.iter().enumerate() {
            let part = self
                .classes
                .get(&(digit as u8))
                .ok_or_else(|| OutlierError::Mismatch(format!("class {digit} missing")))?;
            let mut union: Vec<usize> = part.outliers.iter().chain(&part.typicals).copied().collect();
            union.sort_unstable();
            if union != *members {
                return Err(OutlierError::Mismatch(format!("class {digit} is not covered exactly")));
            }
        }
        Ok(())
    }
}

/// Splits scored members into outliers (top `fraction`, ties to the lower
/// index) and typicals; both lists come back in ascending index order.
pub fn split_by_score(members: &[usize], scores: &[f64], fraction: f64) -> ClassPartition {
    let k = ((fraction * members.len() as f64) + 0.5).floor() as usize;
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(members[a].cmp(&members[b])));
    let mut outliers: Vec<usize> = order[..k].iter().map(|&i| members[i]).collect();
    let mut typicals: Vec<usize> = order[k..].iter().map(|&i| members[i]).collect();
    outliers.sort_unstable();
    typicals.sort_unstable();
    ClassPartition { outliers, typicals }
}

/// Runs one isolation forest per digit over raw pixel values.
pub fn partition_by_label(set: &LabeledSet, params: &IsolationForestParams) -> Result<OutlierPartition, OutlierError> {
    params.validate()?;
    let by_class = set.class_indices();
    for (digit, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(OutlierError::ClassTooSmall { class: digit as u8, size: members.len() });
        }
    }
    let classes = by_class
        .par_iter()
        .enumerate()
        .map(|(digit, members)| {
            let points: Vec<Vec<f32>> = members
                .iter()
                .map(|&i| set.images[i].pixels().iter().map(|&p| p as f32).collect())
                .collect();
            let class_params = IsolationForestParams { seed: seed::derive(params.seed, digit as u64), ..*params };
            let forest = build_forest(&points, &class_params)?;
            let scores: Vec<f64> = points.iter().map(|p| forest.anomaly_score(p)).collect();
            Ok((digit as u8, split_by_score(members, &scores, params.outlier_fraction)))
        })
        .collect::<Result<BTreeMap<_, _>, OutlierError>>()?;
    debug_assert_eq!(classes.len(), CLASSES);
    Ok(OutlierPartition { classes, params: *params, seed: params.seed })
}
