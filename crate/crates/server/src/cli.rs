//! `council train | rashomon | render | serve`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

use council_core::campaign::{load_registry, run_campaign, CampaignPlan};
use council_core::glyph::{map_features, render_svg};
use council_core::mnist::{load_dataset, load_split, DataPaths, Split};
use council_core::outliers::{partition_by_label, IsolationForestParams};
use council_core::rashomon::{build_prediction_matrix, identify_rashomon_set, save_matrix};

use crate::settings::Settings;
use crate::state::{AppState, ServiceConfig, StartupError};

#[derive(Debug, Parser)]
#[command(name = "council", version, about = "Train, inspect and serve a population of digit classifiers")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// JSON file with defaults for any of the flags below.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of models to train.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Accuracy slack below the best model.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Minimum accuracy for Rashomon membership.
    #[arg(long, global = true)]
    pub floor: Option<f64>,
    /// Directory with the four MNIST IDX files.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Directory for the registry, weights and derived files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for training.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true)]
    pub port: Option<u16>,
    #[arg(long, global = true)]
    pub host: Option<String>,
    /// Epoch cap per model.
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    /// Train on the first N training images only.
    #[arg(long, global = true)]
    pub train_limit: Option<usize>,
    /// Registry file (defaults to OUT_DIR/registry.ndjson).
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// Prediction matrix file (defaults to OUT_DIR/predictions.bin).
    #[arg(long, global = true)]
    pub matrix: Option<PathBuf>,
    /// Feedback journal (defaults to OUT_DIR/feedback.ndjson).
    #[arg(long, global = true)]
    pub feedback: Option<PathBuf>,
}

impl Flags {
    pub fn settings(&self) -> Result<Settings, CliError> {
        let base = match &self.config {
            Some(path) => Settings::from_file(path).map_err(CliError::Other)?,
            None => Settings::default(),
        };
        Ok(base.overlay(Settings {
            seed: self.seed,
            n: self.n,
            epsilon: self.epsilon,
            floor: self.floor,
            data_dir: self.data_dir.clone(),
            out_dir: self.out_dir.clone(),
            parallelism: self.parallelism,
            port: self.port,
            host: self.host.clone(),
            max_epochs: self.max_epochs,
            train_limit: self.train_limit,
            registry: self.registry.clone(),
            matrix: self.matrix.clone(),
            feedback: self.feedback.clone(),
        }))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition the training set and train a campaign of models.
    Train,
    /// Build the prediction matrix and select the Rashomon set.
    Rashomon,
    /// Write one model's glyph as SVG.
    Render {
        /// Model id from the registry.
        #[arg(long)]
        model: String,
        /// Output file (defaults to OUT_DIR/glyphs/<id>.svg).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing data file {}", .0.display())]
    MissingData(PathBuf),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingData(_) => 2,
            CliError::UnknownModel(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn require(paths: &[&Path]) -> Result<(), CliError> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(CliError::MissingData(p.to_path_buf())),
        None => Ok(()),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let settings = cli.flags.settings()?;
    match cli.command {
        Command::Train => train(&settings),
        Command::Rashomon => rashomon(&settings),
        Command::Render { model, output } => render(&settings, &model, output),
        Command::Serve => serve(&settings),
    }
}

fn train(s: &Settings) -> Result<(), CliError> {
    let paths = DataPaths::in_dir(&s.data_dir());
    require(&paths.all())?;
    let (mut train, test) = load_dataset(&paths).map_err(other)?;
    if let Some(k) = s.train_limit {
        train = train.head(k);
    }
    let out_dir = s.out_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Other(format!("{}: {e}", out_dir.display())))?;

    info!("partitioning {} training images", train.len());
    let params = IsolationForestParams { seed: s.seed(), ..Default::default() };
    let partition = partition_by_label(&train, &params).map_err(other)?;
    partition.save(&out_dir.join("partition.json")).map_err(other)?;

    let plan = CampaignPlan {
        models: s.models(),
        master_seed: s.seed(),
        parallelism: s.parallelism(),
        max_epochs: s.max_epochs(),
        out_dir: out_dir.clone(),
    };
    let entries = run_campaign(&plan, &train, &test, &partition).map_err(other)?;
    for e in &entries {
        println!("{}  {:?}  accuracy {:.4}  epochs {}", e.id(), e.status, e.test_accuracy, e.epochs_trained);
    }
    println!("registry written to {}", out_dir.join(council_core::campaign::REGISTRY_FILE).display());
    Ok(())
}

fn rashomon(s: &Settings) -> Result<(), CliError> {
    let registry_path = s.registry();
    require(&[&registry_path])?;
    let paths = DataPaths::in_dir(&s.data_dir());
    require(&[&paths.test_images, &paths.test_labels])?;
    let registry = load_registry(&registry_path).map_err(other)?;
    let test = load_split(&paths.test_images, &paths.test_labels, Split::Test).map_err(other)?;

    let matrix = build_prediction_matrix(&registry, &test).map_err(other)?;
    save_matrix(&matrix, &s.matrix()).map_err(other)?;
    let set = identify_rashomon_set(registry.metadata(), s.epsilon(), s.floor()).map_err(other)?;
    set.save(&s.rashomon_manifest()).map_err(other)?;

    if set.is_empty() {
        println!(
            "empty set: no model reaches accuracy {:.4} (best {:.4}, epsilon {}, floor {})",
            set.threshold(),
            set.reference_accuracy,
            set.epsilon,
            set.floor
        );
        return Ok(());
    }
    println!("{} of {} models in the Rashomon set (threshold {:.4})", set.len(), registry.entries.len(), set.threshold());
    for id in &set.members {
        let acc = registry.get(id).map(|e| e.metadata.test_accuracy).unwrap_or(f64::NAN);
        println!("{id}  {acc:.4}");
    }
    Ok(())
}

fn render(s: &Settings, id: &str, output: Option<PathBuf>) -> Result<(), CliError> {
    let registry_path = s.registry();
    require(&[&registry_path])?;
    let registry = load_registry(&registry_path).map_err(other)?;
    let entry = registry.get(id).ok_or_else(|| CliError::UnknownModel(id.to_owned()))?;
    let svg = render_svg(&map_features(&entry.metadata.config, None).map_err(other)?);
    let path = output.unwrap_or_else(|| s.out_dir().join("glyphs").join(format!("{id}.svg")));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(&path, svg).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    println!("{}", path.display());
    Ok(())
}

pub fn service_config(s: &Settings) -> ServiceConfig {
    ServiceConfig {
        host: s.host(),
        port: s.port(),
        registry: s.registry(),
        matrix: s.matrix(),
        data: DataPaths::in_dir(&s.data_dir()),
        feedback: s.feedback(),
        epsilon: s.epsilon(),
        floor: s.floor(),
    }
}

fn serve(s: &Settings) -> Result<(), CliError> {
    let config = service_config(s);
    let state = AppState::load(&config).map_err(|e| match e {
        StartupError::MissingFile(p) => CliError::MissingData(p),
        other => CliError::Other(other.to_string()),
    })?;
    let app = crate::api::router(Arc::new(state));
    let runtime = tokio::runtime::Runtime::new().map_err(other)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port)).await.map_err(other)?;
        println!("listening on http://{}", listener.local_addr().map_err(other)?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(other)
    })
}
