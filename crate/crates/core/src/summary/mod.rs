//! Glyph-ready summaries of a speech span: SpeechTwin aggregates, time
//! slices, gaze heatmaps, representative gestures and player overlays.
//!
//! Everything here is pure data; drawing is left to the UI.

pub mod encoding;
mod gmm;
mod overlay;
mod slices;
mod twin;

use thiserror::Error;

use crate::feature::RangeError;

pub use gmm::{cluster_poses, representative_pose, GmmOptions, PoseCluster, PoseClustering};
pub use overlay::{overlay_trail, GazeRay, OverlaySample, OverlayTrail, OVERLAY_MIN_OPACITY, OVERLAY_SAMPLES};
pub use slices::{
    gaze_heatmap, time_slices, GazeHeatmap, SentenceMark, SliceColoring, SliceWord, TimeSlice, TimeSliceView,
    HEATMAP_BINS, SLICE_COUNT, TimedSample,
};
pub use twin::{speech_twin, ChannelCoverage, Gesture, SpeechTwinSummary, MAX_FOOTPRINTS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SummaryError {
    #[error("no frame in the span has usable keypoints")]
    NoPoses,
    #[error(transparent)]
    Range(#[from] RangeError),
}

/// Mean of the defined samples and how many there were.
pub(crate) fn mean_with_count(xs: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        (0.0, 0)
    } else {
        (sum / n as f64, n)
    }
}

/// Every `stride`-th element so that at most `cap` remain.
pub(crate) fn downsample<T: Copy>(xs: &[T], cap: usize) -> Vec<T> {
    if xs.len() <= cap || cap == 0 {
        return xs.to_vec();
    }
    xs.iter().step_by(xs.len().div_ceil(cap)).copied().collect()
}

/// Emotion shares over defined frames, and the number of defined frames.
pub(crate) fn emotion_proportions(emotions: &[Option<u8>]) -> ([f64; 7], usize) {
    let mut counts = [0usize; 7];
    for e in emotions.iter().flatten() {
        if let Some(c) = counts.get_mut(*e as usize) {
            *c += 1;
        }
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        let mut neutral = [0.0; 7];
        neutral[0] = 1.0;
        return (neutral, 0);
    }
    (counts.map(|c| c as f64 / n as f64), n)
}
