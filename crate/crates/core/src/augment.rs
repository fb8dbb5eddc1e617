//! Deterministic image transforms used to vary a model's training data.
//!
//! Translation and rotation shift a model's whole training distribution and are
//! applied to every image. Contrast and inversion are applied to a seeded
//! subset whose size is a proportion of the dataset.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mnist::{GrayImage, COLS, ROWS};
use crate::seed::{self, Stream};

pub const TRANSLATIONS: [i32; 5] = [-2, -1, 0, 1, 2];
pub const ROTATIONS: [i32; 9] = [-20, -15, -10, -5, 0, 5, 10, 15, 20];
pub const CONTRAST_FACTORS: [f64; 9] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8];
pub const PROPORTIONS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

pub const MIN_CONTRAST: f64 = 0.2;
pub const MAX_CONTRAST: f64 = 1.8;

const CENTER: f64 = (ROWS as f64 - 1.0) / 2.0;
const PIVOT: f64 = 127.5;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("translation ({dx}, {dy}) exceeds two pixels")]
    Translation { dx: i32, dy: i32 },
    #[error("rotation of {0} degrees is not one of the allowed angles")]
    Rotation(i32),
    #[error("contrast factor {0} outside [0.2, 1.8]")]
    Contrast(f64),
    #[error("{name} {value} is not an allowed proportion")]
    Proportion { name: &'static str, value: f64 },
}

/// The dataset-dependent variations of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub dx: i32,
    pub dy: i32,
    pub rotation_deg: i32,
    pub contrast_factor: f64,
    pub contrast_proportion: f64,
    pub inversion_proportion: f64,
}

impl AugmentationSpec {
    pub const IDENTITY: AugmentationSpec = AugmentationSpec {
        dx: 0,
        dy: 0,
        rotation_deg: 0,
        contrast_factor: 1.0,
        contrast_proportion: 0.0,
        inversion_proportion: 0.0,
    };

    /// Checks every field against its enumerated value set.
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !TRANSLATIONS.contains(&self.dx) || !TRANSLATIONS.contains(&self.dy) {
            return Err(AugmentError::Translation { dx: self.dx, dy: self.dy });
        }
        if !ROTATIONS.contains(&self.rotation_deg) {
            return Err(AugmentError::Rotation(self.rotation_deg));
        }
        if !CONTRAST_FACTORS.contains(&self.contrast_factor) {
            return Err(AugmentError::Contrast(self.contrast_factor));
        }
        for (name, value) in [
            ("contrast_proportion", self.contrast_proportion),
            ("inversion_proportion", self.inversion_proportion),
        ] {
            if !PROPORTIONS.contains(&value) {
                return Err(AugmentError::Proportion { name, value });
            }
        }
        Ok(())
    }
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self::IDENTITY
    }
}

#[inline]
fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

#[inline]
fn to_pixel(v: f64) -> u8 {
    round_half_up(v).clamp(0.0, 255.0) as u8
}

/// Shifts content by `dx` columns and `dy` rows; vacated cells become black.
pub fn translate(image: &GrayImage, dx: i32, dy: i32) -> Result<GrayImage, AugmentError> {
    if dx.abs() > 2 || dy.abs() > 2 {
        return Err(AugmentError::Translation { dx, dy });
    }
    Ok(shift(image, dx, dy))
}

fn shift(image: &GrayImage, dx: i32, dy: i32) -> GrayImage {
    let mut out = GrayImage::black();
    for r in 0..ROWS as i32 {
        let tr = r + dy;
        if !(0..ROWS as i32).contains(&tr) {
            continue;
        }
        for c in 0..COLS as i32 {
            let tc = c + dx;
            if (0..COLS as i32).contains(&tc) {
                out.set(tr as usize, tc as usize, image.get(r as usize, c as usize));
            }
        }
    }
    out
}

/// Rotates counter-clockwise (as displayed, rows pointing down) about the
/// image center by one of the allowed angles.
pub fn rotate(image: &GrayImage, degrees: i32) -> Result<GrayImage, AugmentError> {
    if !ROTATIONS.contains(&degrees) {
        return Err(AugmentError::Rotation(degrees));
    }
    if degrees == 0 {
        return Ok(image.clone());
    }
    Ok(rotate_by(image, degrees as f64))
}

/// Where the center of pixel `(row, col)` lands after rotating by `degrees`.
pub fn rotated_position(row: f64, col: f64, degrees: f64) -> (f64, f64) {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (x, y) = (col - CENTER, row - CENTER);
    let xr = x * cos + y * sin;
    let yr = -x * sin + y * cos;
    (yr + CENTER, xr + CENTER)
}

fn rotate_by(image: &GrayImage, degrees: f64) -> GrayImage {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let sample = |r: i64, c: i64| -> f64 {
        if (0..ROWS as i64).contains(&r) && (0..COLS as i64).contains(&c) {
            image.get(r as usize, c as usize) as f64
        } else {
            0.0
        }
    };
    let mut out = GrayImage::black();
    for r in 0..ROWS {
        for c in 0..COLS {
            // inverse mapping: rotate the output coordinate back by -degrees
            let (xo, yo) = (c as f64 - CENTER, r as f64 - CENTER);
            let sx = xo * cos - yo * sin + CENTER;
            let sy = xo * sin + yo * cos + CENTER;
            let (c0, r0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - c0, sy - r0);
            let (c0, r0) = (c0 as i64, r0 as i64);
            let v = sample(r0, c0) * (1.0 - fx) * (1.0 - fy)
                + sample(r0, c0 + 1) * fx * (1.0 - fy)
                + sample(r0 + 1, c0) * (1.0 - fx) * fy
                + sample(r0 + 1, c0 + 1) * fx * fy;
            out.set(r, c, to_pixel(v));
        }
    }
    out
}

/// Linear contrast scaling about mid-gray, rounded half up and clamped.
#[inline]
pub fn contrast_pixel(p: u8, factor: f64) -> u8 {
    to_pixel((p as f64 - PIVOT) * factor + PIVOT)
}

pub fn adjust_contrast(image: &GrayImage, factor: f64) -> Result<GrayImage, AugmentError> {
    if !(MIN_CONTRAST - 1e-9..=MAX_CONTRAST + 1e-9).contains(&factor) {
        return Err(AugmentError::Contrast(factor));
    }
    Ok(image.map(|p| contrast_pixel(p, factor)))
}

pub fn invert(image: &GrayImage) -> GrayImage {
    image.map(|p| 255 - p)
}

/// Number of items a proportion selects out of `n`, rounded half up.
pub fn proportion_count(proportion: f64, n: usize) -> usize {
    (round_half_up(proportion * n as f64) as usize).min(n)
}

fn chosen(n: usize, proportion: f64, seed: u64, stream: Stream) -> Vec<bool> {
    let k = proportion_count(proportion, n);
    let mut mask = vec![false; n];
    if k > 0 {
        let mut rng = seed::rng(seed, stream);
        for i in index::sample(&mut rng, n, k) {
            mask[i] = true;
        }
    }
    mask
}

/// Applies a model's augmentation to its training images, preserving order.
pub fn apply_spec(images: &[GrayImage], spec: &AugmentationSpec, seed: u64) -> Result<Vec<GrayImage>, AugmentError> {
    spec.validate()?;
    let n = images.len();
    let contrast = chosen(n, spec.contrast_proportion, seed, Stream::Contrast);
    let inversion = chosen(n, spec.inversion_proportion, seed, Stream::Inversion);
    let out = images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let mut img = if spec.dx != 0 || spec.dy != 0 { shift(img, spec.dx, spec.dy) } else { img.clone() };
            if spec.rotation_deg != 0 {
                img = rotate_by(&img, spec.rotation_deg as f64);
            }
            if contrast[i] && spec.contrast_factor != 1.0 {
                img = img.map(|p| contrast_pixel(p, spec.contrast_factor));
            }
            if inversion[i] {
                img = invert(&img);
            }
            img
        })
        .collect();
    Ok(out)
}
