//! Human3.6M keypoint layout and pose normalization.

use crate::feature::Pose;

pub const PELVIS: usize = 0;
pub const SPINE: usize = 7;
pub const THORAX: usize = 8;
pub const NECK: usize = 9;
pub const HEAD: usize = 10;
pub const L_SHOULDER: usize = 11;
pub const L_ELBOW: usize = 12;
pub const L_WRIST: usize = 13;
pub const R_SHOULDER: usize = 14;
pub const R_ELBOW: usize = 15;
pub const R_WRIST: usize = 16;

/// Joints that make up the upper body, in flattening order.
pub const UPPER_BODY: [usize; 10] = [
    SPINE, THORAX, NECK, HEAD, L_SHOULDER, L_ELBOW, L_WRIST, R_SHOULDER, R_ELBOW, R_WRIST,
];

/// Length of a flattened upper-body pose vector.
pub const POSE_DIM: usize = UPPER_BODY.len() * 2;

/// Skeleton edges of the upper body, for drawing.
pub const UPPER_BODY_EDGES: [(usize, usize); 9] = [
    (SPINE, THORAX),
    (THORAX, NECK),
    (NECK, HEAD),
    (THORAX, L_SHOULDER),
    (L_SHOULDER, L_ELBOW),
    (L_ELBOW, L_WRIST),
    (THORAX, R_SHOULDER),
    (R_SHOULDER, R_ELBOW),
    (R_ELBOW, R_WRIST),
];

pub fn shoulder_width(pose: &Pose) -> f64 {
    let [lx, ly] = pose[L_SHOULDER];
    let [rx, ry] = pose[R_SHOULDER];
    ((lx - rx).powi(2) + (ly - ry).powi(2)).sqrt()
}

/// Translates the thorax to the origin, scales to unit shoulder width and
/// flattens the upper-body joints. `None` when the shoulder width is zero.
pub fn normalize_upper_body(pose: &Pose) -> Option<[f64; POSE_DIM]> {
    let width = shoulder_width(pose);
    if !(width > 0.0 && width.is_finite()) {
        return None;
    }
    let [tx, ty] = pose[THORAX];
    let mut out = [0.0; POSE_DIM];
    for (k, j) in UPPER_BODY.iter().enumerate() {
        out[2 * k] = (pose[*j][0] - tx) / width;
        out[2 * k + 1] = (pose[*j][1] - ty) / width;
    }
    Some(out)
}

/// Inverse of [`normalize_upper_body`] for display: places a normalized
/// upper body back into a full 17-joint pose with the thorax at the origin.
/// Lower-body joints are left at the origin.
pub fn expand_upper_body(v: &[f64; POSE_DIM]) -> Pose {
    let mut pose = [[0.0; 2]; 17];
    for (k, j) in UPPER_BODY.iter().enumerate() {
        pose[*j] = [v[2 * k], v[2 * k + 1]];
    }
    pose
}

/// `1 - cos(a, b)`; zero-norm inputs are treated as orthogonal.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na.sqrt() * nb.sqrt())
}
