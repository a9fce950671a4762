//! Visual encodings shared with the UI: palettes and glyph mappings.
//!
//! Every mapping is monotone in its input so that glyphs preserve order.

use serde::Serialize;

use crate::effectiveness::EffectivenessLabel;
use crate::feature::Emotion;

/// Diverging scale from low (dark red) to high (dark blue) effectiveness.
pub const DIVERGING_PALETTE: [&str; 11] = [
    "#67001f", "#b2182b", "#d6604d", "#f4a582", "#fddbc7", "#f7f7f7", "#d1e5f0", "#92c5de",
    "#4393c3", "#2166ac", "#053061",
];

/// Factors not significantly related to contest level.
pub const NOT_SIGNIFICANT_GRAY: &str = "#c8c8c8";

/// Emotion fills in category order (neutral first).
pub const EMOTION_COLORS: [&str; 7] = [
    "#d9d9d9", "#fdd835", "#1e88e5", "#fb8c00", "#8e24aa", "#43a047", "#e53935",
];

/// Colorblind-safe alternative with the same category order.
pub const EMOTION_COLORS_COLORBLIND: [&str; 7] = [
    "#bbbbbb", "#f0e442", "#0072b2", "#e69f00", "#cc79a7", "#009e73", "#d55e00",
];

/// Smallest face radius, relative to the glyph cell, so faces stay legible.
pub const MIN_FACE_RADIUS: f64 = 0.3;
pub const MAX_FACE_RADIUS: f64 = 0.45;
/// Longest arousal spike, relative to the face radius.
pub const MAX_SPIKE_LENGTH: f64 = 0.6;
/// Loudness range mapped onto the mouth width.
pub const VOLUME_RANGE_DB: (f64, f64) = (30.0, 90.0);
/// Stand-in loudness when a span has no audio.
pub const NEUTRAL_VOLUME_DB: f64 = 60.0;
pub const MIN_MOUTH_WIDTH: f64 = 0.2;
pub const MAX_MOUTH_WIDTH: f64 = 0.9;
/// Largest eye rotation in degrees.
pub const MAX_EYE_ANGLE_DEG: f64 = 45.0;
/// Opacity of the least-weighted representative gesture.
pub const MIN_GESTURE_OPACITY: f64 = 0.15;

/// Spike protrusion for arousal in `[-1, 1]`.
pub fn spike_length(arousal: f64) -> f64 {
    (arousal.clamp(-1.0, 1.0) + 1.0) / 2.0 * MAX_SPIKE_LENGTH
}

/// Signed mouth curvature in `[-1, 1]`: negative frowns, positive smiles.
pub fn mouth_curvature(valence: f64) -> f64 {
    valence.clamp(-1.0, 1.0)
}

/// Mouth width (relative to the face) for a mean loudness in dB.
pub fn mouth_width(volume_db: f64) -> f64 {
    let (lo, hi) = VOLUME_RANGE_DB;
    let t = ((volume_db - lo) / (hi - lo)).clamp(0.0, 1.0);
    MIN_MOUTH_WIDTH + t * (MAX_MOUTH_WIDTH - MIN_MOUTH_WIDTH)
}

/// Eye rotation in degrees for a gaze angle in radians, clamped to ±90°.
pub fn eye_angle_deg(gaze_rad: f64) -> f64 {
    let g = gaze_rad.clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    g / std::f64::consts::FRAC_PI_2 * MAX_EYE_ANGLE_DEG
}

/// Face radius grows with the share of frames with a detected face.
pub fn face_radius(face_coverage: f64) -> f64 {
    MIN_FACE_RADIUS + face_coverage.clamp(0.0, 1.0) * (MAX_FACE_RADIUS - MIN_FACE_RADIUS)
}

/// Opacity of a representative gesture drawn with cluster weight `w`.
pub fn gesture_opacity(weight: f64) -> f64 {
    MIN_GESTURE_OPACITY + weight.clamp(0.0, 1.0) * (1.0 - MIN_GESTURE_OPACITY)
}

/// Palette color of a display score in `[0, 1]`, or gray when the factor is
/// not significant.
pub fn effectiveness_color(display_score: f64, significant: bool) -> &'static str {
    if !significant {
        return NOT_SIGNIFICANT_GRAY;
    }
    let n = DIVERGING_PALETTE.len();
    let i = (display_score.clamp(0.0, 1.0) * (n - 1) as f64).round() as usize;
    DIVERGING_PALETTE[i]
}

pub fn emotion_color(e: Emotion, colorblind: bool) -> &'static str {
    let table = if colorblind { &EMOTION_COLORS_COLORBLIND } else { &EMOTION_COLORS };
    table[e as usize]
}

#[derive(Debug, Clone, Serialize)]
pub struct EncodingTable {
    pub diverging_palette: [&'static str; 11],
    pub not_significant: &'static str,
    pub emotion_names: [&'static str; 7],
    pub emotion_colors: [&'static str; 7],
    pub emotion_colors_colorblind: [&'static str; 7],
    pub labels: [&'static str; 6],
    pub min_face_radius: f64,
    pub max_face_radius: f64,
    pub max_spike_length: f64,
    pub volume_range_db: [f64; 2],
    pub mouth_width: [f64; 2],
    pub max_eye_angle_deg: f64,
    pub min_gesture_opacity: f64,
}

/// All constants the UI needs to draw glyphs and color scales.
pub fn encoding_table() -> EncodingTable {
    EncodingTable {
        diverging_palette: DIVERGING_PALETTE,
        not_significant: NOT_SIGNIFICANT_GRAY,
        emotion_names: Emotion::ALL.map(Emotion::name),
        emotion_colors: EMOTION_COLORS,
        emotion_colors_colorblind: EMOTION_COLORS_COLORBLIND,
        labels: [
            EffectivenessLabel::VeryLow,
            EffectivenessLabel::Low,
            EffectivenessLabel::Medium,
            EffectivenessLabel::High,
            EffectivenessLabel::VeryHigh,
            EffectivenessLabel::Gray,
        ]
        .map(EffectivenessLabel::as_str),
        min_face_radius: MIN_FACE_RADIUS,
        max_face_radius: MAX_FACE_RADIUS,
        max_spike_length: MAX_SPIKE_LENGTH,
        volume_range_db: [VOLUME_RANGE_DB.0, VOLUME_RANGE_DB.1],
        mouth_width: [MIN_MOUTH_WIDTH, MAX_MOUTH_WIDTH],
        max_eye_angle_deg: MAX_EYE_ANGLE_DEG,
        min_gesture_opacity: MIN_GESTURE_OPACITY,
    }
}
