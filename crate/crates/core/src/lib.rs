//! Model-multiplicity workbench for handwritten-digit classifiers.
//!
//! The crate covers the full offline pipeline:
//!
//! * [`mnist`] reads the IDX containers of the MNIST distribution,
//! * [`augment`] holds the deterministic image transforms used to vary training data,
//! * [`outliers`] splits every digit class into typical and outlying images with isolation forests,
//! * [`nn`] is a small feed-forward network engine (forward/backward passes, optimizers, training),
//! * [`campaign`] samples model configurations, trains the population and keeps the metadata registry,
//! * [`rashomon`] builds the prediction matrix and the Rashomon set of equally accurate models,
//! * [`glyph`] turns a model's configuration into a Chernoff-bot SVG.

pub mod augment;
pub mod campaign;
pub mod glyph;
pub mod mnist;
pub mod nn;
pub mod outliers;
pub mod rashomon;
pub mod seed;

pub(crate) mod binfmt;

pub use mnist::{GrayImage, LabeledSet, Split};
