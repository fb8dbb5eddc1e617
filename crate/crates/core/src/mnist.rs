//! Reading and writing the MNIST IDX containers.
//!
//! ```text
//! images: 0x00000803 | n (u32 BE) | 28 (u32 BE) | 28 (u32 BE) | n * 784 bytes
//! labels: 0x00000801 | n (u32 BE) | n bytes
//! ```
//!
//! gzip-compressed files (the usual distribution form) are detected by their
//! `1F 8B` prefix and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROWS: usize = 28;
pub const COLS: usize = 28;
pub const PIXELS: usize = ROWS * COLS;
pub const CLASSES: usize = 10;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

const IMAGE_HEADER: usize = 16;
const LABEL_HEADER: usize = 8;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic number 0x{found:08X} (expected 0x{expected:08X})")]
    Format { expected: u32, found: u32 },
    #[error("expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("unsupported image dimensions {rows}x{cols} (only 28x28 is accepted)")]
    Dimension { rows: u32, cols: u32 },
    #[error("label {value} at index {index} is not a digit")]
    Value { index: usize, value: u8 },
    #[error("{images} images but {labels} labels")]
    Pairing { images: usize, labels: usize },
    #[error("gzip stream: {0}")]
    Gzip(std::io::Error),
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<IdxError>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IdxError {
    /// The innermost error, with any path context removed.
    pub fn root(&self) -> &IdxError {
        match self {
            IdxError::File { source, .. } => source.root(),
            other => other,
        }
    }
}

/// A 28x28 grayscale image, row-major, 0 = black and 255 = white.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage(Box<[u8; PIXELS]>);

impl GrayImage {
    pub fn new(pixels: [u8; PIXELS]) -> Self {
        GrayImage(Box::new(pixels))
    }

    pub fn black() -> Self {
        GrayImage::filled(0)
    }

    pub fn filled(value: u8) -> Self {
        GrayImage(Box::new([value; PIXELS]))
    }

    pub fn from_slice(pixels: &[u8]) -> Option<Self> {
        let arr: [u8; PIXELS] = pixels.try_into().ok()?;
        Some(GrayImage::new(arr))
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0[row * COLS + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.0[row * COLS + col] = value;
    }

    pub fn pixels(&self) -> &[u8; PIXELS] {
        &self.0
    }

    pub fn pixels_mut(&mut self) -> &mut [u8; PIXELS] {
        &mut self.0
    }

    pub fn map(&self, f: impl Fn(u8) -> u8) -> GrayImage {
        let mut out = self.clone();
        out.0.iter_mut().for_each(|p| *p = f(*p));
        out
    }
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lit = self.0.iter().filter(|&&p| p > 0).count();
        write!(f, "GrayImage({lit} lit pixels)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Images paired with their digit labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSet {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl LabeledSet {
    pub fn new(images: Vec<GrayImage>, labels: Vec<u8>, split: Split) -> Result<Self, IdxError> {
        if images.len() != labels.len() {
            return Err(IdxError::Pairing { images: images.len(), labels: labels.len() });
        }
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= CLASSES) {
            return Err(IdxError::Value { index, value });
        }
        Ok(LabeledSet { images, labels, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` items (or all of them if there are fewer).
    pub fn head(&self, n: usize) -> LabeledSet {
        let n = n.min(self.len());
        LabeledSet {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    pub fn select(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }

    /// Indices of every item, grouped by digit.
    pub fn class_indices(&self) -> [Vec<usize>; CLASSES] {
        let mut out: [Vec<usize>; CLASSES] = Default::default();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::Length { expected: 4, found: bytes.len() });
    }
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(IdxError::Format { expected, found });
    }
    Ok(())
}

/// Parses an (uncompressed) IDX image container.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>, IdxError> {
    check_magic(bytes, IMAGE_MAGIC)?;
    if bytes.len() < IMAGE_HEADER {
        return Err(IdxError::Length { expected: IMAGE_HEADER, found: bytes.len() });
    }
    let n = be_u32(bytes, 4) as usize;
    let (rows, cols) = (be_u32(bytes, 8), be_u32(bytes, 12));
    if rows as usize != ROWS || cols as usize != COLS {
        return Err(IdxError::Dimension { rows, cols });
    }
    let expected = n
        .checked_mul(PIXELS)
        .and_then(|p| p.checked_add(IMAGE_HEADER))
        .ok_or(IdxError::Length { expected: usize::MAX, found: bytes.len() })?;
    if bytes.len() != expected {
        return Err(IdxError::Length { expected, found: bytes.len() });
    }
    Ok(bytes[IMAGE_HEADER..]
        .chunks_exact(PIXELS)
        .map(|c| GrayImage::from_slice(c).expect("chunk is exactly one image"))
        .collect())
}

/// Parses an (uncompressed) IDX label container.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    check_magic(bytes, LABEL_MAGIC)?;
    if bytes.len() < LABEL_HEADER {
        return Err(IdxError::Length { expected: LABEL_HEADER, found: bytes.len() });
    }
    let n = be_u32(bytes, 4) as usize;
    let expected = LABEL_HEADER + n;
    if bytes.len() != expected {
        return Err(IdxError::Length { expected, found: bytes.len() });
    }
    let labels = &bytes[LABEL_HEADER..];
    if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= CLASSES) {
        return Err(IdxError::Value { index, value });
    }
    Ok(labels.to_vec())
}

pub fn encode_idx_images(images: &[GrayImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(IMAGE_HEADER + images.len() * PIXELS);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(ROWS as u32).to_be_bytes());
    out.extend_from_slice(&(COLS as u32).to_be_bytes());
    for img in images {
        out.extend_from_slice(img.pixels());
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(LABEL_HEADER + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Inflates `bytes` when they carry a gzip header, otherwise returns them as-is.
pub fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>, IdxError> {
    if bytes.starts_with(&[0x1F, 0x8B]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out).map_err(IdxError::Gzip)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    let raw = fs::read(path).map_err(|source| IdxError::Io { path: path.to_owned(), source })?;
    maybe_gunzip(raw).map_err(|e| IdxError::File { path: path.to_owned(), source: Box::new(e) })
}

pub fn read_images(path: &Path) -> Result<Vec<GrayImage>, IdxError> {
    parse_idx_images(&read_file(path)?)
        .map_err(|e| IdxError::File { path: path.to_owned(), source: Box::new(e) })
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    parse_idx_labels(&read_file(path)?)
        .map_err(|e| IdxError::File { path: path.to_owned(), source: Box::new(e) })
}

/// Locations of the four MNIST files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl DataPaths {
    /// Standard file names inside `dir`. A `.gz` variant is used when only the
    /// compressed file exists.
    pub fn in_dir(dir: &Path) -> DataPaths {
        let pick = |stem: &str| {
            let plain = dir.join(stem);
            let gz = dir.join(format!("{stem}.gz"));
            if !plain.exists() && gz.exists() {
                gz
            } else {
                plain
            }
        };
        DataPaths {
            train_images: pick("train-images-idx3-ubyte"),
            train_labels: pick("train-labels-idx1-ubyte"),
            test_images: pick("t10k-images-idx3-ubyte"),
            test_labels: pick("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.train_images, &self.train_labels, &self.test_images, &self.test_labels]
    }

    pub fn first_missing(&self) -> Option<&Path> {
        self.all().into_iter().find(|p| !p.is_file())
    }
}

/// Loads one image file and its label file as a split.
pub fn load_split(images: &Path, labels: &Path, split: Split) -> Result<LabeledSet, IdxError> {
    let imgs = read_images(images)?;
    let lbls = read_labels(labels)?;
    LabeledSet::new(imgs, lbls, split)
        .map_err(|e| IdxError::File { path: labels.to_owned(), source: Box::new(e) })
}

/// Loads the train and test splits in file order.
pub fn load_dataset(paths: &DataPaths) -> Result<(LabeledSet, LabeledSet), IdxError> {
    let train = load_split(&paths.train_images, &paths.train_labels, Split::Train)?;
    let test = load_split(&paths.test_images, &paths.test_labels, Split::Test)?;
    Ok((train, test))
}
