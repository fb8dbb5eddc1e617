//! Chernoff-bot glyphs: a small robot face whose parts encode one model's
//! configuration.
//!
//! | config                  | feature                                    |
//! |-------------------------|--------------------------------------------|
//! | outlier_pct             | antenna curvature                          |
//! | typical_pct             | antenna straightness (tip offset)          |
//! | activation              | antenna color                              |
//! | hidden_layers           | number of eyes                             |
//! | dropout                 | holes in the body                          |
//! | batch_size              | lines in the teeth, `log2(batch) - 5`      |
//! | use_validation          | checkmark badge                            |
//! | dx, dy                  | pupil displacement                         |
//! | rotation_deg            | mouth rotation                             |
//! | contrast factor / share | earpiece tones / adjusted band height      |
//! | inversion_proportion    | eye and pupil color inversion              |
//!
//! The optimizer is not drawn. A prediction confidence, when given, shows up
//! as red cheeks with opacity `1 - confidence`.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::contrast_pixel;
use crate::campaign::ModelConfig;
use crate::nn::{Activation, BATCH_SIZES};

pub const VIEW_BOX: &str = "0 0 120 140";

pub const EYE_Y: f64 = 50.0;
pub const EYE_RADIUS: f64 = 8.0;
pub const PUPIL_RADIUS: f64 = 3.0;
/// Glyph units per pixel of translation.
pub const PUPIL_STEP: f64 = 2.0;
pub const ANTENNA_BASE: (f64, f64) = (60.0, 30.0);
pub const ANTENNA_CURVE: f64 = 20.0;
pub const ANTENNA_TIP: f64 = 12.0;
pub const MOUTH_BOX: (f64, f64, f64, f64) = (40.0, 70.0, 40.0, 10.0);
pub const MOUTH_CENTER: (f64, f64) = (60.0, 75.0);
pub const HOLES: [(f64, f64); 3] = [(45.0, 114.0), (60.0, 114.0), (75.0, 114.0)];
pub const CHEEKS: [(f64, f64); 2] = [(32.0, 74.0), (88.0, 74.0)];
pub const EARPIECE_TONES: (u8, u8) = (96, 160);
pub const EARPIECE_HEIGHT: f64 = 24.0;
pub const EYE_BASE: [u8; 3] = [250, 250, 240];
pub const PUPIL_BASE: [u8; 3] = [20, 30, 60];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GlyphError {
    #[error("batch size {0} has no teeth encoding (expected one of 32, 64, 128, 256, 512)")]
    BatchSize(usize),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(String),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Antenna color for each activation function.
pub fn palette(activation: Activation) -> &'static str {
    match activation {
        Activation::Elu => "#7FD4E8",
        Activation::Exponential => "#CF5B23",
        Activation::Gelu => "#D72E34",
        Activation::HardSigmoid => "#F27398",
        Activation::Linear => "#F3C620",
        Activation::Relu => "#3B6FB6",
        Activation::Sigmoid => "#1CA9C9",
        Activation::Softmax => "#7C3E8F",
        Activation::Swish => "#6FBE44",
        Activation::Tanh => "#E8651A",
    }
}

/// `log2(batch_size) - 5`: 32 gives no lines, 512 gives four.
pub fn teeth_lines(batch_size: usize) -> Result<u32, GlyphError> {
    if !BATCH_SIZES.contains(&batch_size) {
        return Err(GlyphError::BatchSize(batch_size));
    }
    Ok(batch_size.trailing_zeros() - 5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphFeatures {
    pub antenna_curvature: f64,
    pub antenna_tip_offset: f64,
    pub antenna_color: String,
    pub eye_count: usize,
    pub body_holes: bool,
    pub teeth_lines: u32,
    pub validation_badge: bool,
    pub pupil_dx: i32,
    pub pupil_dy: i32,
    pub mouth_rotation_deg: i32,
    pub earpiece_contrast: f64,
    /// Share of images the contrast change was applied to.
    pub earpiece_share: f64,
    pub eye_inversion: f64,
    pub cheek_redness: Option<f64>,
}

pub fn map_features(config: &ModelConfig, confidence: Option<f64>) -> Result<GlyphFeatures, GlyphError> {
    config.validate().map_err(GlyphError::Config)?;
    if let Some(c) = confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(GlyphError::Confidence(c.to_string()));
        }
    }
    let aug = &config.augmentation;
    Ok(GlyphFeatures {
        antenna_curvature: config.outlier_pct,
        antenna_tip_offset: 1.0 - config.typical_pct,
        antenna_color: palette(config.activation).to_owned(),
        eye_count: config.hidden_layers,
        body_holes: config.dropout,
        teeth_lines: teeth_lines(config.batch_size)?,
        validation_badge: config.use_validation,
        pupil_dx: aug.dx,
        pupil_dy: aug.dy,
        mouth_rotation_deg: aug.rotation_deg,
        earpiece_contrast: aug.contrast_factor,
        earpiece_share: aug.contrast_proportion,
        eye_inversion: aug.inversion_proportion,
        cheek_redness: confidence.map(|c| 1.0 - c),
    })
}

/// Up to three decimals, trailing zeros trimmed, never `-0`.
fn num(v: f64) -> String {
    let mut s = format!("{:.3}", v);
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_owned();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn hex(rgb: [u8; 3]) -> String {
    format!("#{:02X}{:02X}{:02X}", rgb[0], rgb[1], rgb[2])
}

fn gray(v: u8) -> String {
    hex([v, v, v])
}

/// Moves each channel from `base` toward `255 - base` by `t`.
pub fn invert_toward(base: [u8; 3], t: f64) -> [u8; 3] {
    base.map(|c| {
        let c = c as f64;
        (c + (255.0 - 2.0 * c) * t).round().clamp(0.0, 255.0) as u8
    })
}

/// Horizontal eye centers, evenly spread across the face.
pub fn eye_positions(count: usize) -> Vec<f64> {
    (0..count).map(|i| 20.0 + 80.0 * (i + 1) as f64 / (count + 1) as f64).collect()
}

/// The contrast-adjusted earpiece tones (outer, band).
pub fn earpiece_tones(factor: f64) -> (u8, u8) {
    (contrast_pixel(EARPIECE_TONES.0, factor), contrast_pixel(EARPIECE_TONES.1, factor))
}

pub fn render_svg(f: &GlyphFeatures) -> String {
    let mut s = String::with_capacity(3072);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="{VIEW_BOX}" width="120" height="140">"#
    );

    let (bx, by) = ANTENNA_BASE;
    let ctrl_x = bx + ANTENNA_CURVE * f.antenna_curvature;
    let tip_x = bx + ANTENNA_TIP * f.antenna_tip_offset;
    let _ = writeln!(
        s,
        r#"  <path class="antenna" d="M {} {} Q {} 16 {} 6" fill="none" stroke="{}" stroke-width="3" stroke-linecap="round"/>"#,
        num(bx),
        num(by),
        num(ctrl_x),
        num(tip_x),
        f.antenna_color
    );
    let _ = writeln!(s, r#"  <circle class="antenna-tip" cx="{}" cy="6" r="3" fill="{}"/>"#, num(tip_x), f.antenna_color);

    let (outer, band) = earpiece_tones(f.earpiece_contrast);
    let band_h = 4.0 + 16.0 * f.earpiece_share;
    for x in [12.0, 100.0] {
        let _ = writeln!(
            s,
            r#"  <rect class="earpiece" x="{}" y="48" width="8" height="{}" rx="2" fill="{}"/>"#,
            num(x),
            num(EARPIECE_HEIGHT),
            gray(outer)
        );
        let _ = writeln!(
            s,
            r#"  <rect class="earpiece-band" x="{}" y="{}" width="4" height="{}" fill="{}"/>"#,
            num(x + 2.0),
            num(60.0 - band_h / 2.0),
            num(band_h),
            gray(band)
        );
    }

    let _ = writeln!(s, r##"  <rect class="head" x="20" y="30" width="80" height="60" rx="8" fill="#CFD8DC" stroke="#455A64" stroke-width="1.5"/>"##);

    let eye_fill = hex(invert_toward(EYE_BASE, f.eye_inversion));
    let pupil_fill = hex(invert_toward(PUPIL_BASE, f.eye_inversion));
    for x in eye_positions(f.eye_count) {
        let _ = writeln!(
            s,
            r##"  <circle class="eye" cx="{}" cy="{}" r="{}" fill="{eye_fill}" stroke="#263238" stroke-width="1"/>"##,
            num(x),
            num(EYE_Y),
            num(EYE_RADIUS)
        );
        let _ = writeln!(
            s,
            r#"  <circle class="pupil" cx="{}" cy="{}" r="{}" fill="{pupil_fill}"/>"#,
            num(x + PUPIL_STEP * f.pupil_dx as f64),
            num(EYE_Y + PUPIL_STEP * f.pupil_dy as f64),
            num(PUPIL_RADIUS)
        );
    }

    if let Some(red) = f.cheek_redness {
        for (cx, cy) in CHEEKS {
            let _ = writeln!(
                s,
                r##"  <circle class="cheek" cx="{}" cy="{}" r="6" fill="#E53935" fill-opacity="{}"/>"##,
                num(cx),
                num(cy),
                num(red)
            );
        }
    }

    let (mx, my, mw, mh) = MOUTH_BOX;
    let _ = writeln!(
        s,
        r#"  <g class="mouth" transform="rotate({} {} {})">"#,
        f.mouth_rotation_deg,
        num(MOUTH_CENTER.0),
        num(MOUTH_CENTER.1)
    );
    let _ = writeln!(
        s,
        r##"    <rect class="mouth-box" x="{}" y="{}" width="{}" height="{}" rx="2" fill="#FAFAFA" stroke="#263238" stroke-width="1.5"/>"##,
        num(mx),
        num(my),
        num(mw),
        num(mh)
    );
    for k in 0..f.teeth_lines {
        let x = mx + mw * (k + 1) as f64 / (f.teeth_lines + 1) as f64;
        let _ = writeln!(
            s,
            r##"    <line class="tooth-line" x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#263238" stroke-width="1"/>"##,
            num(x),
            num(my),
            num(my + mh)
        );
    }
    s.push_str("  </g>\n");

    let _ = writeln!(s, r##"  <rect class="body" x="30" y="96" width="60" height="36" rx="6" fill="#B0BEC5" stroke="#455A64" stroke-width="1.5"/>"##);
    if f.body_holes {
        for (cx, cy) in HOLES {
            let _ = writeln!(s, r##"  <circle class="hole" cx="{}" cy="{}" r="4" fill="#37474F"/>"##, num(cx), num(cy));
        }
    }
    if f.validation_badge {
        s.push_str(r##"  <g class="badge-validation" transform="translate(82 104)">"##);
        s.push('\n');
        s.push_str(r##"    <circle cx="0" cy="0" r="7" fill="#2E7D32"/>"##);
        s.push('\n');
        s.push_str(r##"    <polyline points="-3.5,0 -1,3 4,-3" fill="none" stroke="#FFFFFF" stroke-width="2"/>"##);
        s.push('\n');
        s.push_str("  </g>\n");
    }
    s.push_str("</svg>\n");
    s
}
