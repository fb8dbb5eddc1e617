//! Binary weights file.
//!
//! ```text
//! "AISPECW1" | layer_count u32
//! per layer: rows u32 | cols u32 | rows*cols f32 (row-major) | bias_len u32 | bias_len f32
//! crc32 u32 over every preceding byte
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use super::{Architecture, Dense, Network, NnError};
use crate::binfmt::{self, Reader};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"AISPECW1";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("not a weights file (bad magic)")]
    Magic,
    #[error("weights file length does not match its header: {0}")]
    Length(String),
    #[error("weights checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error(transparent)]
    Shape(#[from] NnError),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

pub fn encode_weights(network: &Network<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + network.parameter_count() * 4 + network.layers.len() * 12);
    out.extend_from_slice(WEIGHTS_MAGIC);
    binfmt::put_u32(&mut out, network.layers.len() as u32);
    for dense in &network.layers {
        let (rows, cols) = dense.weights.dim();
        binfmt::put_u32(&mut out, rows as u32);
        binfmt::put_u32(&mut out, cols as u32);
        binfmt::put_f32s(&mut out, dense.weights.iter().copied());
        binfmt::put_u32(&mut out, dense.bias.len() as u32);
        binfmt::put_f32s(&mut out, dense.bias.iter().copied());
    }
    binfmt::seal(out)
}

/// Decodes the raw layer stack; shapes are checked against an architecture
/// by [`load_weights`].
pub fn decode_weights(bytes: &[u8]) -> Result<Vec<Dense<f32>>, WeightsError> {
    if bytes.len() < WEIGHTS_MAGIC.len() || &bytes[..8] != WEIGHTS_MAGIC {
        return Err(WeightsError::Magic);
    }
    let mut reader = Reader::new(bytes);
    let length = |e: binfmt::ReadError| WeightsError::Length(e.to_string());
    reader.take(8).map_err(length)?;
    let count = reader.u32().map_err(length)? as usize;
    let mut layers = Vec::new();
    for _ in 0..count {
        let rows = reader.u32().map_err(length)? as usize;
        let cols = reader.u32().map_err(length)? as usize;
        let weights = reader.f32s(rows.saturating_mul(cols)).map_err(length)?;
        let bias_len = reader.u32().map_err(length)? as usize;
        let bias = reader.f32s(bias_len).map_err(length)?;
        layers.push(Dense {
            weights: Array2::from_shape_vec((rows, cols), weights).expect("length checked"),
            bias: Array1::from(bias),
        });
    }
    let expected = reader.position() + 4;
    if bytes.len() != expected {
        return Err(WeightsError::Length(format!("header implies {expected} bytes, file has {}", bytes.len())));
    }
    match binfmt::unseal(bytes) {
        Some(Ok(_)) => Ok(layers),
        Some(Err((stored, computed))) => Err(WeightsError::Checksum { stored, computed }),
        None => Err(WeightsError::Length("missing checksum".into())),
    }
}

pub fn save_weights(network: &Network<f32>, path: &Path) -> Result<(), WeightsError> {
    std::fs::write(path, encode_weights(network)).map_err(|source| WeightsError::Io { path: path.to_owned(), source })
}

/// Reads a weights file and attaches it to `architecture` (which the file does
/// not record).
pub fn load_weights(path: &Path, architecture: Architecture) -> Result<Network<f32>, WeightsError> {
    let bytes = std::fs::read(path).map_err(|source| WeightsError::Io { path: path.to_owned(), source })?;
    Ok(Network::from_layers(architecture, decode_weights(&bytes)?)?)
}
