use std::ops::Range;

use thiserror::Error;

use super::{FeatureBundle, Pose, Sentence, Word};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid span [{start_s}, {end_s}): {reason}")]
pub struct RangeError {
    pub start_s: f64,
    pub end_s: f64,
    pub reason: String,
}

/// A borrowed time span `[start_s, end_s)` of a bundle.
///
/// Membership is half-open everywhere, so adjacent spans partition their
/// union. A span whose end reaches the speech duration also keeps samples
/// stamped at or after the duration (extractors may emit one trailing frame).
#[derive(Debug, Clone)]
pub struct BundleView<'a> {
    bundle: &'a FeatureBundle,
    start_s: f64,
    end_s: f64,
    frames: Range<usize>,
    audio: Range<usize>,
    sentences: Range<usize>,
}

fn first_index(len: usize, below: impl Fn(usize) -> bool) -> usize {
    // Index of the first element for which `below` is false; `below` must be
    // monotone (true then false).
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if below(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

impl<'a> BundleView<'a> {
    pub(super) fn whole(bundle: &'a FeatureBundle) -> Self {
        Self::build(bundle, 0.0, bundle.meta.duration_s)
    }

    fn build(bundle: &'a FeatureBundle, start_s: f64, end_s: f64) -> Self {
        let upper = if end_s >= bundle.meta.duration_s {
            f64::INFINITY
        } else {
            end_s
        };
        let ts = &bundle.frames.timestamps_s;
        let frames = ts.partition_point(|t| *t < start_s)..ts.partition_point(|t| *t < upper);

        let a = &bundle.audio;
        let audio = first_index(a.len(), |i| a.time_of(i) < start_s)
            ..first_index(a.len(), |i| a.time_of(i) < upper);

        let ss = &bundle.script.sentences;
        let lo = ss.partition_point(|s| s.end_s <= start_s);
        let hi = ss.partition_point(|s| s.start_s < upper).max(lo);
        BundleView {
            bundle,
            start_s,
            end_s,
            frames,
            audio,
            sentences: lo..hi,
        }
    }

    /// Sub-span of this view. Slicing is defined against the underlying
    /// bundle, so nested slices equal a direct slice of the same span.
    pub fn slice(&self, start_s: f64, end_s: f64) -> Result<BundleView<'a>, RangeError> {
        let err = |reason: &str| RangeError {
            start_s,
            end_s,
            reason: reason.to_string(),
        };
        if !(start_s.is_finite() && end_s.is_finite()) {
            return Err(err("bounds must be finite"));
        }
        if start_s >= end_s {
            return Err(err("span is empty"));
        }
        if start_s < self.start_s || end_s > self.end_s {
            return Err(err(&format!(
                "span lies outside [{}, {})",
                self.start_s, self.end_s
            )));
        }
        Ok(Self::build(self.bundle, start_s, end_s))
    }

    pub fn bundle(&self) -> &'a FeatureBundle {
        self.bundle
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    pub fn end_s(&self) -> f64 {
        self.end_s
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn fps(&self) -> f64 {
        self.bundle.meta.fps
    }

    pub fn frame_range(&self) -> Range<usize> {
        self.frames.clone()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn audio_range(&self) -> Range<usize> {
        self.audio.clone()
    }

    pub fn sentence_range(&self) -> Range<usize> {
        self.sentences.clone()
    }

    pub fn timestamps(&self) -> &'a [f64] {
        &self.bundle.frames.timestamps_s[self.frames.clone()]
    }

    pub fn valence(&self) -> &'a [Option<f64>] {
        &self.bundle.frames.valence[self.frames.clone()]
    }

    pub fn arousal(&self) -> &'a [Option<f64>] {
        &self.bundle.frames.arousal[self.frames.clone()]
    }

    pub fn emotion(&self) -> &'a [Option<u8>] {
        &self.bundle.frames.emotion[self.frames.clone()]
    }

    pub fn gaze_dir(&self) -> &'a [Option<[f64; 3]>] {
        &self.bundle.frames.gaze_dir[self.frames.clone()]
    }

    pub fn gaze_angles(&self) -> &'a [Option<[f64; 2]>] {
        &self.bundle.frames.gaze_angles[self.frames.clone()]
    }

    pub fn camera_angle_deg(&self) -> &'a [Option<f64>] {
        &self.bundle.frames.camera_angle_deg[self.frames.clone()]
    }

    pub fn head_cam_dist(&self) -> &'a [Option<f64>] {
        &self.bundle.frames.head_cam_dist[self.frames.clone()]
    }

    pub fn bbox_center(&self) -> &'a [Option<[f64; 2]>] {
        &self.bundle.frames.bbox_center[self.frames.clone()]
    }

    pub fn keypoints(&self) -> &'a [Option<Pose>] {
        &self.bundle.frames.keypoints[self.frames.clone()]
    }

    pub fn intensity_db(&self) -> &'a [Option<f64>] {
        &self.bundle.audio.intensity_db[self.audio.clone()]
    }

    pub fn pitch_hz(&self) -> &'a [Option<f64>] {
        &self.bundle.audio.pitch_hz[self.audio.clone()]
    }

    /// Times of the audio samples in the span.
    pub fn audio_times(&self) -> impl Iterator<Item = f64> + 'a {
        let hop = self.bundle.audio.hop_s;
        self.audio.clone().map(move |i| i as f64 * hop)
    }

    /// Sentences overlapping the span, with their index in the full script.
    pub fn sentences(&self) -> impl Iterator<Item = (usize, &'a Sentence)> + 'a {
        let ss = &self.bundle.script.sentences;
        self.sentences.clone().map(move |i| (i, &ss[i]))
    }

    /// Words of `sentence` that overlap the span. Zero-length words count
    /// when their instant falls inside the span.
    pub fn words_of(&self, sentence: &'a Sentence) -> impl Iterator<Item = &'a Word> + 'a {
        let (start, end) = (self.start_s, self.effective_end());
        sentence.words.iter().filter(move |w| {
            if w.end_s > w.start_s {
                w.start_s < end && w.end_s > start
            } else {
                w.start_s >= start && w.start_s < end
            }
        })
    }

    fn effective_end(&self) -> f64 {
        if self.end_s >= self.bundle.meta.duration_s {
            f64::INFINITY
        } else {
            self.end_s
        }
    }
}

impl FeatureBundle {
    /// Half-open view `[start_s, end_s)` of the speech.
    pub fn slice(&self, start_s: f64, end_s: f64) -> Result<BundleView<'_>, RangeError> {
        self.view().slice(start_s, end_s)
    }
}
