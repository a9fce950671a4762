use serde::{Deserialize, Serialize};

use super::stats::StatError;
use crate::feature::Pose;
use crate::pose::{self, cosine_distance, normalize_upper_body};

/// A body segment whose position is the mean of its joints and whose mass is
/// a fraction of total body mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMass {
    pub name: String,
    pub joints: Vec<usize>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassTable {
    pub segments: Vec<SegmentMass>,
}

impl Default for MassTable {
    /// Plagenhoef segment fractions placed on the upper-body keypoints.
    fn default() -> Self {
        use pose::*;
        let seg = |name: &str, joints: &[usize], fraction| SegmentMass {
            name: name.to_string(),
            joints: joints.to_vec(),
            fraction,
        };
        MassTable {
            segments: vec![
                seg("head", &[NECK, HEAD], 0.0826),
                seg("trunk", &[SPINE, THORAX], 0.4684),
                seg("left_upper_arm", &[L_SHOULDER, L_ELBOW], 0.0325),
                seg("right_upper_arm", &[R_SHOULDER, R_ELBOW], 0.0325),
                seg("left_forearm", &[L_ELBOW, L_WRIST], 0.0187),
                seg("right_forearm", &[R_ELBOW, R_WRIST], 0.0187),
                seg("left_hand", &[L_WRIST], 0.0065),
                seg("right_hand", &[R_WRIST], 0.0065),
            ],
        }
    }
}

impl MassTable {
    /// A single segment located at one joint.
    pub fn single_joint(joint: usize, fraction: f64) -> Self {
        MassTable {
            segments: vec![SegmentMass {
                name: format!("joint_{joint}"),
                joints: vec![joint],
                fraction,
            }],
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.segments.is_empty()
            && self.segments.iter().all(|s| {
                s.fraction > 0.0 && !s.joints.is_empty() && s.joints.iter().all(|j| *j < 17)
            })
    }

    fn centroid(seg: &SegmentMass, pose: &Pose) -> [f64; 2] {
        let n = seg.joints.len() as f64;
        let (sx, sy) = seg
            .joints
            .iter()
            .fold((0.0, 0.0), |(x, y), j| (x + pose[*j][0], y + pose[*j][1]));
        [sx / n, sy / n]
    }
}

/// Kinetic energy of the upper body between adjacent frames:
/// `E_t = 1/2 * sum_j m_j * |p_j,t - p_j,t-1|^2 * fps^2`.
///
/// Element `t` of the result covers frames `t` and `t+1`; it is `None` when
/// either frame lacks keypoints.
pub fn gesture_energy_series(
    keypoints: &[Option<Pose>],
    mass: &MassTable,
    fps: f64,
) -> Result<Vec<Option<f64>>, StatError> {
    let series: Vec<Option<f64>> = keypoints
        .windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (Some(prev), Some(cur)) => {
                let e: f64 = mass
                    .segments
                    .iter()
                    .map(|seg| {
                        let a = MassTable::centroid(seg, prev);
                        let b = MassTable::centroid(seg, cur);
                        seg.fraction * ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2))
                    })
                    .sum();
                Some(0.5 * e * fps * fps)
            }
            _ => None,
        })
        .collect();
    if series.iter().all(Option::is_none) {
        return Err(StatError::InsufficientFrames);
    }
    Ok(series)
}

/// Population standard deviation of the cosine distances between each
/// frame's normalized upper body and the first usable frame's.
///
/// Frames with zero shoulder width are skipped.
pub fn gesture_diversity(keypoints: &[Option<Pose>]) -> Result<f64, StatError> {
    let present = keypoints.iter().flatten().count();
    let poses: Vec<_> = keypoints
        .iter()
        .flatten()
        .filter_map(normalize_upper_body)
        .collect();
    if poses.len() < 2 {
        return Err(if present >= 2 {
            StatError::DegeneratePose
        } else {
            StatError::InsufficientFrames
        });
    }
    let reference = &poses[0];
    let d: Vec<f64> = poses.iter().map(|p| cosine_distance(reference, p)).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    Ok((d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}
