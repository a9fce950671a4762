use serde::{Deserialize, Serialize};

use super::encoding::NEUTRAL_VOLUME_DB;
use super::{cluster_poses, downsample, emotion_proportions, mean_with_count, GmmOptions, SummaryError};
use crate::feature::{BundleView, Pose};

/// Footprint lists longer than this are thinned by a uniform stride.
pub const MAX_FOOTPRINTS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gesture {
    /// Normalized keypoints: thorax at the origin, unit shoulder width.
    pub pose: Pose,
    /// Fraction of clustered poses in this gesture's cluster.
    pub weight: f64,
    /// Frame the representative pose was taken from.
    pub frame_index: usize,
    pub time_s: f64,
}

/// Number of defined samples behind each aggregate. A zero count means the
/// aggregate is a neutral default, listed in `defaulted`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelCoverage {
    pub frames: usize,
    pub emotion: usize,
    pub valence: usize,
    pub arousal: usize,
    pub gaze: usize,
    pub volume: usize,
    pub poses: usize,
    pub footprints: usize,
    pub defaulted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechTwinSummary {
    pub start_s: f64,
    pub end_s: f64,
    /// Shares in category order, neutral first.
    pub emotion_proportions: [f64; 7],
    pub valence_mean: f64,
    pub arousal_mean: f64,
    /// Mean (yaw, pitch) in radians.
    pub gaze_mean: [f64; 2],
    pub volume_mean: f64,
    /// At most `k` gestures by descending weight; weights sum to 1.
    pub representative_gestures: Vec<Gesture>,
    /// Bounding-box centers in time order.
    pub footprints: Vec<[f64; 2]>,
    pub coverage: ChannelCoverage,
}

/// Aggregates a span into SpeechTwin glyph data. Pose clustering is
/// deterministic for a given `seed`.
pub fn speech_twin(view: &BundleView<'_>, seed: u64, gmm: &GmmOptions) -> SpeechTwinSummary {
    let mut coverage = ChannelCoverage {
        frames: view.frame_count(),
        ..ChannelCoverage::default()
    };
    let mut defaulted = Vec::new();

    let (emotion_proportions, n) = emotion_proportions(view.emotion());
    coverage.emotion = n;
    let (valence_mean, n) = mean_with_count(view.valence().iter().flatten().copied());
    coverage.valence = n;
    let (arousal_mean, n) = mean_with_count(view.arousal().iter().flatten().copied());
    coverage.arousal = n;
    let (yaw, n) = mean_with_count(view.gaze_angles().iter().flatten().map(|g| g[0]));
    let (pitch, _) = mean_with_count(view.gaze_angles().iter().flatten().map(|g| g[1]));
    coverage.gaze = n;
    let (mut volume_mean, n) = mean_with_count(view.intensity_db().iter().flatten().copied());
    coverage.volume = n;
    if n == 0 {
        volume_mean = NEUTRAL_VOLUME_DB;
    }

    let frame_offset = view.frame_range().start;
    let timestamps = view.timestamps();
    let representative_gestures = match cluster_poses(view.keypoints(), seed, gmm) {
        Ok(c) => {
            coverage.poses = c.assignments.len();
            c.clusters
                .into_iter()
                .map(|cl| Gesture {
                    pose: cl.pose,
                    weight: cl.weight,
                    frame_index: frame_offset + cl.representative,
                    time_s: timestamps[cl.representative],
                })
                .collect()
        }
        Err(SummaryError::NoPoses) => Vec::new(),
        Err(SummaryError::Range(_)) => unreachable!("clustering takes no span"),
    };

    let centers: Vec<[f64; 2]> = view.bbox_center().iter().flatten().copied().collect();
    coverage.footprints = centers.len();
    let footprints = downsample(&centers, MAX_FOOTPRINTS);

    for (name, n) in [
        ("emotion", coverage.emotion),
        ("valence", coverage.valence),
        ("arousal", coverage.arousal),
        ("gaze", coverage.gaze),
        ("volume", coverage.volume),
        ("poses", coverage.poses),
        ("footprints", coverage.footprints),
    ] {
        if n == 0 {
            defaulted.push(name.to_string());
        }
    }
    coverage.defaulted = defaulted;

    SpeechTwinSummary {
        start_s: view.start_s(),
        end_s: view.end_s(),
        emotion_proportions,
        valence_mean,
        arousal_mean,
        gaze_mean: [yaw, pitch],
        volume_mean,
        representative_gestures,
        footprints,
        coverage,
    }
}
