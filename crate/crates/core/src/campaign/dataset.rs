use ndarray::Array2;
use rand::seq::{index, SliceRandom};

use super::{CampaignError, ModelConfig};
use crate::augment::{apply_spec, proportion_count};
use crate::mnist::{GrayImage, LabeledSet, CLASSES};
use crate::nn::images_to_matrix;
use crate::outliers::OutlierPartition;
use crate::seed::{self, Stream};

/// A model's training data after pool selection and augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
    /// Indices into the source training set, aligned with `images`.
    pub source_indices: Vec<usize>,
    pub config_id: String,
}

impl AugmentedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> Array2<f32> {
        images_to_matrix(&self.images)
    }
}

fn draw(pool: &[usize], pct: f64, rng: &mut impl rand::Rng) -> Vec<usize> {
    let k = proportion_count(pct, pool.len());
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}

/// Selects `outlier_pct` of every class's outliers and `typical_pct` of its
/// typicals, shuffles them and applies the config's augmentation.
pub fn build_training_set(
    config: &ModelConfig,
    train: &LabeledSet,
    partition: &OutlierPartition,
) -> Result<AugmentedDataset, CampaignError> {
    let mut rng = seed::rng(config.seed, Stream::PoolSelection);
    let mut indices = Vec::new();
    for digit in 0..CLASSES as u8 {
        let part = partition
            .class(digit)
            .ok_or_else(|| CampaignError::Partition(format!("class {digit} missing from partition")))?;
        if let Some(&bad) = part.outliers.iter().chain(&part.typicals).find(|&&i| i >= train.len()) {
            return Err(CampaignError::Partition(format!("index {bad} outside the training set")));
        }
        indices.extend(draw(&part.outliers, config.outlier_pct, &mut rng));
        indices.extend(draw(&part.typicals, config.typical_pct, &mut rng));
    }
    if indices.is_empty() {
        return Err(CampaignError::EmptyDataset(config.id.clone()));
    }
    indices.shuffle(&mut seed::rng(config.seed, Stream::DatasetShuffle));

    let selected: Vec<GrayImage> = indices.iter().map(|&i| train.images[i].clone()).collect();
    let images = apply_spec(&selected, &config.augmentation, config.seed)?;
    Ok(AugmentedDataset {
        images,
        labels: indices.iter().map(|&i| train.labels[i]).collect(),
        source_indices: indices,
        config_id: config.id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::AugmentationSpec;
    use crate::campaign::sample_config;
    use crate::mnist::Split;
    use crate::outliers::ClassPartition;
    use std::collections::BTreeMap;

    /// 10 classes x 110 images; in each class the first 10 are "outliers".
    fn fixture() -> (LabeledSet, OutlierPartition) {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        let mut classes = BTreeMap::new();
        for digit in 0..10u8 {
            let base = images.len();
            for k in 0..110 {
                let mut img = GrayImage::black();
                img.set(digit as usize, k % 28, 200);
                img.set(27, (k / 28) + 10, 100);
                images.push(img);
                labels.push(digit);
            }
            classes.insert(
                digit,
                ClassPartition { outliers: (base..base + 10).collect(), typicals: (base + 10..base + 110).collect() },
            );
        }
        let set = LabeledSet::new(images, labels, Split::Train).unwrap();
        (set, OutlierPartition { classes, params: Default::default(), seed: 0 })
    }

    fn config(outlier_pct: f64, typical_pct: f64) -> ModelConfig {
        ModelConfig { outlier_pct, typical_pct, augmentation: AugmentationSpec::IDENTITY, ..sample_config(4).unwrap() }
    }

    #[test]
    fn full_inclusion_is_a_permutation() {
        let (train, part) = fixture();
        let ds = build_training_set(&config(1.0, 1.0), &train, &part).unwrap();
        let mut idx = ds.source_indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..train.len()).collect::<Vec<_>>());
        for (k, &i) in ds.source_indices.iter().enumerate() {
            assert_eq!(ds.images[k], train.images[i]);
            assert_eq!(ds.labels[k], train.labels[i]);
        }
    }

    #[test]
    fn pool_counts() {
        let (train, part) = fixture();
        let ds = build_training_set(&config(0.0, 0.2), &train, &part).unwrap();
        for digit in 0..10u8 {
            let p = part.class(digit).unwrap();
            let from_typicals = ds.source_indices.iter().filter(|i| p.typicals.contains(i)).count();
            let from_outliers = ds.source_indices.iter().filter(|i| p.outliers.contains(i)).count();
            assert_eq!(from_typicals, 20);
            assert_eq!(from_outliers, 0);
        }
        let ds = build_training_set(&config(0.4, 0.0), &train, &part).unwrap();
        assert_eq!(ds.len(), 40);
    }

    #[test]
    fn deterministic() {
        let (train, part) = fixture();
        let c = ModelConfig { outlier_pct: 0.6, typical_pct: 0.4, ..sample_config(9).unwrap() };
        assert_eq!(build_training_set(&c, &train, &part).unwrap(), build_training_set(&c, &train, &part).unwrap());
    }

    #[test]
    fn empty_pools_are_an_error() {
        let (train, mut part) = fixture();
        for cp in part.classes.values_mut() {
            cp.outliers.clear();
        }
        let err = build_training_set(&config(1.0, 0.0), &train, &part).unwrap_err();
        assert!(matches!(err, CampaignError::EmptyDataset(_)));
    }
}
