use serde::{Deserialize, Serialize};

use crate::feature::{FeatureBundle, Pose, RangeError};
use crate::pose::HEAD;

pub const OVERLAY_SAMPLES: usize = 10;
/// Opacity of the oldest sample; the current one is fully opaque.
pub const OVERLAY_MIN_OPACITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeRay {
    /// Head keypoint, or the bounding-box center when the head is missing.
    pub origin: [f64; 2],
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySample {
    /// Requested sample time.
    pub time_s: f64,
    /// Frame drawn for it, the one nearest in time.
    pub frame_index: usize,
    pub frame_time_s: f64,
    pub skeleton: Option<Pose>,
    pub bbox_center: Option<[f64; 2]>,
    pub gaze: Option<GazeRay>,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayTrail {
    pub playhead_s: f64,
    pub interval_s: f64,
    /// Oldest first; opacity increases toward the playhead.
    pub samples: Vec<OverlaySample>,
}

fn nearest_frame(ts: &[f64], t: f64) -> Option<usize> {
    let i = ts.partition_point(|x| *x < t);
    [i.checked_sub(1), (i < ts.len()).then_some(i)]
        .into_iter()
        .flatten()
        .min_by(|a, b| (ts[*a] - t).abs().total_cmp(&(ts[*b] - t).abs()))
}

/// Skeleton and gaze trail ending at the playhead: up to `n` samples at
/// `playhead - i * interval` for `i = n-1..0`, oldest first.
///
/// Samples before the speech start, without a frame within half a frame
/// period, or whose frame carries neither keypoints nor gaze are skipped.
/// Opacity depends only on `i`, rising linearly from 0.1 to 1.
pub fn overlay_trail(
    bundle: &FeatureBundle,
    playhead_s: f64,
    n: usize,
    interval_s: f64,
) -> Result<OverlayTrail, RangeError> {
    let duration = bundle.meta.duration_s;
    let err = |reason: &str| RangeError {
        start_s: playhead_s,
        end_s: playhead_s,
        reason: reason.to_string(),
    };
    if !(playhead_s.is_finite() && (0.0..=duration).contains(&playhead_s)) {
        return Err(err(&format!("playhead must lie within [0, {duration}]")));
    }
    if !(interval_s.is_finite() && interval_s > 0.0) {
        return Err(err("interval must be positive"));
    }
    if n == 0 {
        return Err(err("sample count must be positive"));
    }

    let f = &bundle.frames;
    let half_period = 0.5 / bundle.meta.fps;
    let mut samples = Vec::new();
    for i in (0..n).rev() {
        let time_s = playhead_s - i as f64 * interval_s;
        if time_s < -1e-9 {
            continue;
        }
        let Some(k) = nearest_frame(&f.timestamps_s, time_s) else {
            continue;
        };
        if (f.timestamps_s[k] - time_s).abs() > half_period + 1e-9 {
            continue;
        }
        let skeleton = f.keypoints[k];
        let bbox_center = f.bbox_center[k];
        let origin = skeleton.map(|p| p[HEAD]).or(bbox_center);
        let gaze = f.gaze_dir[k].zip(origin).map(|(direction, origin)| GazeRay { origin, direction });
        if skeleton.is_none() && gaze.is_none() {
            continue;
        }
        let opacity = if n == 1 {
            1.0
        } else {
            1.0 - (1.0 - OVERLAY_MIN_OPACITY) * i as f64 / (n - 1) as f64
        };
        samples.push(OverlaySample {
            time_s: time_s.max(0.0),
            frame_index: k,
            frame_time_s: f.timestamps_s[k],
            skeleton,
            bbox_center,
            gaze,
            opacity,
        });
    }
    Ok(OverlayTrail {
        playhead_s,
        interval_s,
        samples,
    })
}
