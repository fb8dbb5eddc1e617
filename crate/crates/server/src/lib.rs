//! Command-line pipeline and HTTP service around `council-core`.

pub mod api;
pub mod cli;
pub mod feedback;
pub mod settings;
pub mod state;
