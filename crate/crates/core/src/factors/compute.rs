use serde::{Deserialize, Serialize};

use super::gesture::{gesture_diversity, gesture_energy_series, MassTable};
use super::stats::{
    average, dispersion, dispersion_2d, emotion_diversity, emotion_entropy, volatility,
    volatility_2d, watching_camera_ratio, StatError,
};
use super::{FactorId, FactorValue, FactorVector};
use crate::feature::BundleView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityFormula {
    /// `sum_i r_i ln r_i` over samples.
    #[default]
    PerSample,
    /// `-sum_k p_k ln p_k` over categories.
    ShannonEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    pub mass: MassTable,
    pub watching_threshold_deg: f64,
    pub diversity: DiversityFormula,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            mass: MassTable::default(),
            watching_threshold_deg: 5.0,
            diversity: DiversityFormula::PerSample,
        }
    }
}

fn coverage<T>(series: &[Option<T>]) -> f64 {
    if series.is_empty() {
        0.0
    } else {
        series.iter().filter(|x| x.is_some()).count() as f64 / series.len() as f64
    }
}

fn entry(value: Result<f64, StatError>, coverage: f64) -> FactorValue {
    FactorValue {
        value: value.ok(),
        coverage,
    }
}

/// Duration per syllable of every word overlapping the span.
pub(crate) fn speaking_rate_series(view: &BundleView<'_>) -> Vec<Option<f64>> {
    view.sentences()
        .flat_map(|(_, s)| view.words_of(s))
        .map(|w| Some(w.duration() / f64::from(w.syllable_count())))
        .collect()
}

/// Gaps between consecutive words within a sentence and between consecutive
/// sentences, chronologically. Overlaps clamp to zero.
pub(crate) fn pause_series(view: &BundleView<'_>) -> Vec<Option<f64>> {
    let mut out = Vec::new();
    let mut prev_sentence_end: Option<f64> = None;
    for (_, s) in view.sentences() {
        if let Some(end) = prev_sentence_end {
            out.push(Some((s.start_s - end).max(0.0)));
        }
        let mut prev_word_end: Option<f64> = None;
        for w in view.words_of(s) {
            if let Some(end) = prev_word_end {
                out.push(Some((w.start_s - end).max(0.0)));
            }
            prev_word_end = Some(w.end_s);
        }
        prev_sentence_end = Some(s.end_s);
    }
    out
}

/// Computes all factors of a span with the default configuration.
pub fn compute_factors(view: &BundleView<'_>) -> FactorVector {
    compute_factors_with(view, &FactorConfig::default())
}

pub fn compute_factors_with(view: &BundleView<'_>, config: &FactorConfig) -> FactorVector {
    use FactorId::*;
    let mut v = FactorVector::default();

    let emotion = view.emotion();
    let diversity = match config.diversity {
        DiversityFormula::PerSample => emotion_diversity(emotion),
        DiversityFormula::ShannonEntropy => emotion_entropy(emotion),
    };
    v.set(EmotionDiversity, entry(diversity, coverage(emotion)));

    let valence = view.valence();
    v.set(ValenceVolatility, entry(volatility(valence), coverage(valence)));
    v.set(ValenceAverage, entry(average(valence), coverage(valence)));
    let arousal = view.arousal();
    v.set(ArousalVolatility, entry(volatility(arousal), coverage(arousal)));
    v.set(ArousalAverage, entry(average(arousal), coverage(arousal)));

    let gaze = view.gaze_angles();
    v.set(GazeVolatility, entry(volatility_2d(gaze), coverage(gaze)));
    v.set(GazeDispersion, entry(dispersion_2d(gaze), coverage(gaze)));
    let cam = view.camera_angle_deg();
    v.set(
        WatchingCameraRatio,
        entry(watching_camera_ratio(cam, config.watching_threshold_deg), coverage(cam)),
    );

    let dist = view.head_cam_dist();
    v.set(CameraDistanceVolatility, entry(volatility(dist), coverage(dist)));
    v.set(CameraDistanceDispersion, entry(dispersion(dist), coverage(dist)));
    let bbox = view.bbox_center();
    v.set(FramePositionVolatility, entry(volatility_2d(bbox), coverage(bbox)));
    v.set(FramePositionDispersion, entry(dispersion_2d(bbox), coverage(bbox)));

    let kp = view.keypoints();
    match gesture_energy_series(kp, &config.mass, view.fps()) {
        Ok(energy) => {
            let c = coverage(&energy);
            v.set(GestureEnergyVolatility, entry(volatility(&energy), c));
            v.set(GestureEnergyAverage, entry(average(&energy), c));
        }
        Err(e) => {
            v.set(GestureEnergyVolatility, entry(Err(e), 0.0));
            v.set(GestureEnergyAverage, entry(Err(e), 0.0));
        }
    }
    v.set(GestureDiversity, entry(gesture_diversity(kp), coverage(kp)));

    let loud = view.intensity_db();
    v.set(VolumeVolatility, entry(volatility(loud), coverage(loud)));
    v.set(VolumeAverage, entry(average(loud), coverage(loud)));
    let pitch = view.pitch_hz();
    v.set(PitchVolatility, entry(volatility(pitch), coverage(pitch)));
    v.set(PitchAverage, entry(average(pitch), coverage(pitch)));

    let rate = speaking_rate_series(view);
    let c = if rate.is_empty() { 0.0 } else { 1.0 };
    v.set(SpeakingRateVolatility, entry(volatility(&rate), c));
    v.set(SpeakingRateAverage, entry(average(&rate), c));
    let pauses = pause_series(view);
    let c = if pauses.is_empty() { 0.0 } else { 1.0 };
    v.set(PausesVolatility, entry(volatility(&pauses), c));
    v.set(PausesAverage, entry(average(&pauses), c));

    v
}
