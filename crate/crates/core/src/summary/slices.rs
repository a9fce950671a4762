use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::encoding::{effectiveness_color, NOT_SIGNIFICANT_GRAY};
use super::gmm::usable_poses;
use super::twin::{Gesture, MAX_FOOTPRINTS};
use super::{downsample, emotion_proportions, mean_with_count, representative_pose};
use crate::effectiveness::EffectivenessModel;
use crate::factors::{FactorId, FactorVector};
use crate::feature::{BundleView, RangeError, Sentence};
use crate::pose::expand_upper_body;

pub const SLICE_COUNT: usize = 8;
pub const HEATMAP_BINS: usize = 16;
/// Poses searched for a slice's representative gesture (uniform stride).
const MAX_SLICE_POSES: usize = 500;

/// Gaze direction counts over a fixed (yaw, pitch) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeHeatmap {
    pub bins: usize,
    /// Angular range of both axes, radians.
    pub range: [f64; 2],
    /// `counts[pitch_row][yaw_col]`, row 0 at the lowest pitch.
    pub counts: Vec<Vec<u32>>,
    pub total: u32,
}

impl GazeHeatmap {
    /// Grid cell of an angle; values outside the range land in edge cells.
    pub fn bin_of(&self, angle: f64) -> usize {
        let t = (angle + FRAC_PI_2) / PI * self.bins as f64;
        (t.floor().max(0.0) as usize).min(self.bins - 1)
    }
}

/// Bins (yaw, pitch) samples into a `bins × bins` grid over `[-π/2, π/2]²`.
/// Counts sum to the number of defined samples.
pub fn gaze_heatmap(angles: &[Option<[f64; 2]>], bins: usize) -> GazeHeatmap {
    let bins = bins.max(1);
    let mut map = GazeHeatmap {
        bins,
        range: [-FRAC_PI_2, FRAC_PI_2],
        counts: vec![vec![0; bins]; bins],
        total: 0,
    };
    for [yaw, pitch] in angles.iter().flatten() {
        let (r, c) = (map.bin_of(*pitch), map.bin_of(*yaw));
        map.counts[r][c] += 1;
        map.total += 1;
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    pub t: f64,
    pub value: f64,
}

/// A word, or the part of it that falls inside one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceWord {
    pub sentence_index: usize,
    pub word_index: usize,
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
    /// Fraction of the word's duration covered by this slice, `[from, to]`.
    pub part: [f64; 2],
    /// Display score of the word's sentence, when it could be scored.
    pub color_key: Option<f64>,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSlice {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub frame_count: usize,
    pub valence_mean: f64,
    pub valence_count: usize,
    pub arousal_mean: f64,
    pub arousal_count: usize,
    pub emotion_proportions: [f64; 7],
    pub emotion_count: usize,
    pub gaze_heatmap: GazeHeatmap,
    pub footprints: Vec<[f64; 2]>,
    pub representative_gesture: Option<Gesture>,
    pub volume: Vec<TimedSample>,
    pub pitch: Vec<TimedSample>,
    pub head_distance: Vec<TimedSample>,
    pub words: Vec<SliceWord>,
}

/// Sentence rectangle on the timeline, colored by mean effectiveness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceMark {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    /// Mean expected class (1 to 6) over the scored factors.
    pub expected_class: Option<f64>,
    pub display_score: Option<f64>,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSliceView {
    pub start_s: f64,
    pub end_s: f64,
    /// `slices.len() + 1` equally spaced boundaries.
    pub boundaries: Vec<f64>,
    pub slices: Vec<TimeSlice>,
    pub sentences: Vec<SentenceMark>,
    /// Factors whose expected classes color the sentences.
    pub color_factors: Vec<FactorId>,
}

/// What sentence colors are computed from. With no factors selected, the
/// model's significant factors are used.
#[derive(Debug, Clone, Copy)]
pub struct SliceColoring<'a> {
    pub model: &'a EffectivenessModel,
    /// Factor vectors of every sentence of the speech, in script order.
    pub sentence_factors: &'a [FactorVector],
    pub factors: &'a [FactorId],
}

impl SliceColoring<'_> {
    fn basis(&self) -> Vec<FactorId> {
        if self.factors.is_empty() {
            self.model.significant_factors()
        } else {
            self.factors.to_vec()
        }
    }

    fn mark(&self, basis: &[FactorId], index: usize, s: &Sentence) -> SentenceMark {
        let mut classes = Vec::new();
        let mut significant = false;
        if let Some(v) = self.sentence_factors.get(index) {
            for f in basis {
                if let Some(score) = v.value(*f).and_then(|x| self.model.score(*f, x)) {
                    classes.push(score.expected_class);
                    significant |= score.significant;
                }
            }
        }
        let (expected_class, display_score, color) = if classes.is_empty() {
            (None, None, NOT_SIGNIFICANT_GRAY.to_string())
        } else {
            let e = classes.iter().sum::<f64>() / classes.len() as f64;
            let d = (e - 1.0) / 5.0;
            (Some(e), Some(d), effectiveness_color(d, significant).to_string())
        };
        SentenceMark {
            index,
            start_s: s.start_s,
            end_s: s.end_s,
            expected_class,
            display_score,
            color,
        }
    }
}

fn unscored_mark(index: usize, s: &Sentence) -> SentenceMark {
    SentenceMark {
        index,
        start_s: s.start_s,
        end_s: s.end_s,
        expected_class: None,
        display_score: None,
        color: NOT_SIGNIFICANT_GRAY.to_string(),
    }
}

fn timed(times: impl Iterator<Item = f64>, values: &[Option<f64>]) -> Vec<TimedSample> {
    times
        .zip(values)
        .filter_map(|(t, v)| v.map(|value| TimedSample { t, value }))
        .collect()
}

/// Fraction `[from, to]` of a word covered by `[start, end)`. Zero-length
/// words are either wholly inside or outside.
fn word_part(start_w: f64, end_w: f64, start: f64, end: f64) -> Option<[f64; 2]> {
    let d = end_w - start_w;
    if d <= 0.0 {
        return (start_w >= start && start_w < end).then_some([0.0, 1.0]);
    }
    if !(start_w < end && end_w > start) {
        return None;
    }
    let from = ((start.max(start_w) - start_w) / d).clamp(0.0, 1.0);
    let to = ((end.min(end_w) - start_w) / d).clamp(0.0, 1.0);
    Some([from, to])
}

fn slice_aggregate(view: &BundleView<'_>, index: usize, marks: &[SentenceMark]) -> TimeSlice {
    let (valence_mean, valence_count) = mean_with_count(view.valence().iter().flatten().copied());
    let (arousal_mean, arousal_count) = mean_with_count(view.arousal().iter().flatten().copied());
    let (emotion_proportions, emotion_count) = emotion_proportions(view.emotion());
    let centers: Vec<[f64; 2]> = view.bbox_center().iter().flatten().copied().collect();

    let offset = view.frame_range().start;
    let poses = usable_poses(view.keypoints(), MAX_SLICE_POSES);
    let vecs: Vec<_> = poses.iter().map(|(_, v)| *v).collect();
    let representative_gesture = representative_pose(&vecs).map(|i| {
        let frame = poses[i].0;
        Gesture {
            pose: expand_upper_body(&vecs[i]),
            weight: 1.0,
            frame_index: offset + frame,
            time_s: view.timestamps()[frame],
        }
    });

    let frame_times = view.timestamps().iter().copied();
    let duration = view.bundle().meta.duration_s;
    let end = if view.end_s() >= duration { f64::INFINITY } else { view.end_s() };
    let mut words = Vec::new();
    for (si, s) in view.sentences() {
        let mark = marks.iter().find(|m| m.index == si);
        for (wi, w) in s.words.iter().enumerate() {
            if let Some(part) = word_part(w.start_s, w.end_s, view.start_s(), end) {
                words.push(SliceWord {
                    sentence_index: si,
                    word_index: wi,
                    word: w.word.clone(),
                    start_s: w.start_s,
                    end_s: w.end_s,
                    part,
                    color_key: mark.and_then(|m| m.display_score),
                    color: mark.map_or_else(|| NOT_SIGNIFICANT_GRAY.to_string(), |m| m.color.clone()),
                });
            }
        }
    }

    TimeSlice {
        index,
        start_s: view.start_s(),
        end_s: view.end_s(),
        frame_count: view.frame_count(),
        valence_mean,
        valence_count,
        arousal_mean,
        arousal_count,
        emotion_proportions,
        emotion_count,
        gaze_heatmap: gaze_heatmap(view.gaze_angles(), HEATMAP_BINS),
        footprints: downsample(&centers, MAX_FOOTPRINTS),
        representative_gesture,
        volume: timed(view.audio_times(), view.intensity_db()),
        pitch: timed(view.audio_times(), view.pitch_hz()),
        head_distance: timed(frame_times, view.head_cam_dist()),
        words,
    }
}

/// Splits a span into `n` equal half-open slices and aggregates each.
pub fn time_slices(
    view: &BundleView<'_>,
    n: usize,
    coloring: Option<&SliceColoring<'_>>,
) -> Result<TimeSliceView, RangeError> {
    let (start, end) = (view.start_s(), view.end_s());
    if n == 0 {
        return Err(RangeError {
            start_s: start,
            end_s: end,
            reason: "slice count must be positive".to_string(),
        });
    }
    let mut boundaries: Vec<f64> = (0..n).map(|i| start + (end - start) * i as f64 / n as f64).collect();
    boundaries.push(end);

    let color_factors = coloring.map(|c| c.basis()).unwrap_or_default();
    let sentences: Vec<SentenceMark> = view
        .sentences()
        .map(|(i, s)| match coloring {
            Some(c) => c.mark(&color_factors, i, s),
            None => unscored_mark(i, s),
        })
        .collect();

    let slices = boundaries
        .windows(2)
        .enumerate()
        .map(|(i, w)| view.slice(w[0], w[1]).map(|v| slice_aggregate(&v, i, &sentences)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TimeSliceView {
        start_s: start,
        end_s: end,
        boundaries,
        slices,
        sentences,
        color_factors,
    })
}
