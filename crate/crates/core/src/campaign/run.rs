use std::collections::HashSet;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use log::{info, warn};
use rayon::prelude::*;

use super::{append_entry, build_training_set, sample_config, sha256_hex, write_registry, CampaignError, ModelConfig, ModelMetadata, Status};
use crate::mnist::LabeledSet;
use crate::nn::{encode_weights, evaluate, train, MAX_EPOCHS};
use crate::outliers::OutlierPartition;
use crate::seed;

pub const REGISTRY_FILE: &str = "registry.ndjson";
pub const JOURNAL_FILE: &str = "registry.journal.ndjson";
pub const WEIGHTS_DIR: &str = "weights";

/// Draw budget per requested model before duplicate resampling gives up.
const DRAWS_PER_MODEL: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignPlan {
    pub models: usize,
    pub master_seed: u64,
    pub parallelism: usize,
    /// Upper bound on epochs per model, at most [`MAX_EPOCHS`].
    pub max_epochs: usize,
    pub out_dir: PathBuf,
}

impl CampaignPlan {
    pub fn new(models: usize, master_seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        CampaignPlan { models, master_seed, parallelism: 1, max_epochs: MAX_EPOCHS, out_dir: out_dir.into() }
    }
}

/// Samples `n` pairwise-distinct configs with ids `model-0000`, `model-0001`, ...
///
/// Draw `k` uses the seed `derive(master_seed, k)`; a draw equal to an earlier
/// one is skipped and the next counter value is tried.
pub fn sample_campaign_configs(n: usize, master_seed: u64) -> Result<Vec<ModelConfig>, CampaignError> {
    let mut seen = HashSet::new();
    let mut configs = Vec::with_capacity(n);
    let budget = (n as u64).saturating_mul(DRAWS_PER_MODEL).max(DRAWS_PER_MODEL);
    let mut k = 0u64;
    while configs.len() < n {
        if k >= budget {
            return Err(CampaignError::Plan(format!("could not find {n} distinct configs in {budget} draws")));
        }
        let mut config = sample_config(seed::derive(master_seed, k))?;
        k += 1;
        if seen.insert(config.variation_key()) {
            config.id = format!("model-{:04}", configs.len());
            configs.push(config);
        }
    }
    Ok(configs)
}

fn failed(config: &ModelConfig, epochs_trained: usize) -> ModelMetadata {
    ModelMetadata {
        config: config.clone(),
        test_accuracy: 0.0,
        epochs_trained,
        weights_path: String::new(),
        weights_hash: String::new(),
        status: Status::Failed,
        created_at: now(),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn train_one(
    config: &ModelConfig,
    plan: &CampaignPlan,
    train_set: &LabeledSet,
    test_set: &LabeledSet,
    partition: &OutlierPartition,
) -> Result<ModelMetadata, CampaignError> {
    let data = match build_training_set(config, train_set, partition) {
        Ok(data) => data,
        Err(err @ (CampaignError::EmptyDataset(_) | CampaignError::Augment(_))) => {
            warn!("{}: {err}", config.id);
            return Ok(failed(config, 0));
        }
        Err(err) => return Err(err),
    };
    let mut training = config.training_plan();
    training.max_epochs = plan.max_epochs;
    let model = match train(config.architecture(), &training, data.inputs().view(), &data.labels) {
        Ok(model) => model,
        Err(err) => {
            warn!("{}: training failed: {err}", config.id);
            return Ok(failed(config, 0));
        }
    };
    let evaluation = evaluate(&model.network, test_set).map_err(|e| CampaignError::Plan(e.to_string()))?;

    let bytes = encode_weights(&model.network);
    let rel = format!("{WEIGHTS_DIR}/{}.bin", config.id);
    let path = plan.out_dir.join(&rel);
    fs::write(&path, &bytes).map_err(|e| CampaignError::io(&path, e))?;
    info!(
        "{}: {} images, {} epochs, test accuracy {:.4}",
        config.id,
        data.len(),
        model.epochs_trained,
        evaluation.accuracy
    );
    Ok(ModelMetadata {
        config: config.clone(),
        test_accuracy: evaluation.accuracy,
        epochs_trained: model.epochs_trained,
        weights_path: rel,
        weights_hash: sha256_hex(&bytes),
        status: Status::Ok,
        created_at: now(),
    })
}

/// Trains `plan.models` distinct configurations and writes
/// `out_dir/registry.ndjson` plus one weights file per successful model.
///
/// Every finished model is appended to `out_dir/registry.journal.ndjson` as it
/// completes; the registry itself is written once, in id order, at the end.
/// A model whose training fails is recorded with status `failed`.
pub fn run_campaign(
    plan: &CampaignPlan,
    train_set: &LabeledSet,
    test_set: &LabeledSet,
    partition: &OutlierPartition,
) -> Result<Vec<ModelMetadata>, CampaignError> {
    if plan.models == 0 {
        return Err(CampaignError::Plan("model count must be at least 1".into()));
    }
    if plan.parallelism == 0 {
        return Err(CampaignError::Plan("parallelism must be at least 1".into()));
    }
    if plan.max_epochs == 0 || plan.max_epochs > MAX_EPOCHS {
        return Err(CampaignError::Plan(format!("max_epochs {} outside 1..={MAX_EPOCHS}", plan.max_epochs)));
    }
    partition.check_covers(train_set).map_err(|e| CampaignError::Partition(e.to_string()))?;

    let configs = sample_campaign_configs(plan.models, plan.master_seed)?;
    let weights_dir = plan.out_dir.join(WEIGHTS_DIR);
    fs::create_dir_all(&weights_dir).map_err(|e| CampaignError::io(&weights_dir, e))?;
    let journal = plan.out_dir.join(JOURNAL_FILE);
    fs::write(&journal, "").map_err(|e| CampaignError::io(&journal, e))?;
    let writer = Mutex::new(journal);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallelism)
        .build()
        .map_err(|e| CampaignError::Plan(e.to_string()))?;
    let results: Vec<Result<ModelMetadata, CampaignError>> = pool.install(|| {
        configs
            .par_iter()
            .map(|config| {
                let meta = train_one(config, plan, train_set, test_set, partition)?;
                let journal = writer.lock().unwrap_or_else(|e| e.into_inner());
                append_entry(&journal, &meta)?;
                Ok(meta)
            })
            .collect()
    });
    let entries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_registry(&plan.out_dir.join(REGISTRY_FILE), &entries)?;
    Ok(entries)
}
