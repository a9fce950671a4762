//! Diagonal-covariance Gaussian mixture over normalized upper-body poses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SummaryError;
use crate::feature::Pose;
use crate::pose::{cosine_distance, expand_upper_body, normalize_upper_body, POSE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmOptions {
    pub k: usize,
    pub max_iterations: usize,
    /// Stop when the mean per-pose log-likelihood improves by less than this.
    pub tolerance: f64,
    pub variance_floor: f64,
    /// Longer pose sequences are subsampled by a uniform stride.
    pub max_poses: usize,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            k: 10,
            max_iterations: 200,
            tolerance: 1e-7,
            variance_floor: 1e-6,
            max_poses: 2000,
        }
    }
}

/// One mixture component after hard assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseCluster {
    /// Fraction of clustered poses assigned here.
    pub weight: f64,
    /// Frame indices of the members, ascending.
    pub members: Vec<usize>,
    /// Frame index of the representative member.
    pub representative: usize,
    /// Representative pose, thorax at the origin and unit shoulder width.
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseClustering {
    /// Non-empty clusters by descending weight, then earliest member.
    pub clusters: Vec<PoseCluster>,
    /// Frame index and cluster position of every clustered pose.
    pub assignments: Vec<(usize, usize)>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

/// Index of the member with the smallest summed cosine distance to all
/// others; ties go to the lowest index.
pub fn representative_pose(members: &[[f64; POSE_DIM]]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, a) in members.iter().enumerate() {
        let total: f64 = members.iter().map(|b| cosine_distance(a, b)).sum();
        if best.is_none_or(|(_, t)| total < t) {
            best = Some((i, total));
        }
    }
    best.map(|(i, _)| i)
}

/// Frames with a usable pose, subsampled to at most `cap` by uniform stride.
pub(crate) fn usable_poses(keypoints: &[Option<Pose>], cap: usize) -> Vec<(usize, [f64; POSE_DIM])> {
    let all: Vec<(usize, [f64; POSE_DIM])> = keypoints
        .iter()
        .enumerate()
        .filter_map(|(i, k)| k.as_ref().and_then(normalize_upper_body).map(|v| (i, v)))
        .collect();
    if all.len() <= cap || cap == 0 {
        return all;
    }
    let stride = all.len().div_ceil(cap);
    all.into_iter().step_by(stride).collect()
}

fn distinct_count(xs: &[[f64; POSE_DIM]]) -> usize {
    let mut keys: Vec<[u64; POSE_DIM]> = xs.iter().map(|x| x.map(f64::to_bits)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
fn seed_centers(xs: &[[f64; POSE_DIM]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; POSE_DIM]> {
    let mut centers = vec![xs[rng.random_range(0..xs.len())]];
    let mut d2: Vec<f64> = xs.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|d| *d > 0.0).expect("positive total");
        for (i, d) in d2.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = xs[pick];
        for (x, d) in xs.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

struct Mixture {
    weights: Vec<f64>,
    means: Vec<[f64; POSE_DIM]>,
    vars: Vec<[f64; POSE_DIM]>,
}

impl Mixture {
    fn log_densities(&self, x: &[f64; POSE_DIM], out: &mut [f64]) {
        let c = -0.5 * POSE_DIM as f64 * (2.0 * std::f64::consts::PI).ln();
        for (j, o) in out.iter_mut().enumerate() {
            let mut s = c + self.weights[j].ln();
            for ((xd, m), v) in x.iter().zip(&self.means[j]).zip(&self.vars[j]) {
                s -= 0.5 * (v.ln() + (xd - m).powi(2) / v);
            }
            *o = s;
        }
    }
}

/// Clusters the usable poses of a frame sequence with EM.
///
/// The number of components is `min(k, distinct poses)`. Results depend only
/// on the input and `seed`.
pub fn cluster_poses(keypoints: &[Option<Pose>], seed: u64, options: &GmmOptions) -> Result<PoseClustering, SummaryError> {
    let poses = usable_poses(keypoints, options.max_poses);
    if poses.is_empty() {
        return Err(SummaryError::NoPoses);
    }
    let xs: Vec<[f64; POSE_DIM]> = poses.iter().map(|(_, v)| *v).collect();
    let n = xs.len();
    let k = options.k.max(1).min(distinct_count(&xs));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = seed_centers(&xs, k, &mut rng);
    let k = means.len();

    let mut global = [0.0; POSE_DIM];
    let mean_all: Vec<f64> = (0..POSE_DIM).map(|d| xs.iter().map(|x| x[d]).sum::<f64>() / n as f64).collect();
    for d in 0..POSE_DIM {
        global[d] = (xs.iter().map(|x| (x[d] - mean_all[d]).powi(2)).sum::<f64>() / n as f64)
            .max(options.variance_floor);
    }
    let mut mix = Mixture {
        weights: vec![1.0 / k as f64; k],
        means,
        vars: vec![global; k],
    };

    let mut resp = vec![vec![0.0; k]; n];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut buf = vec![0.0; k];
    for it in 0..options.max_iterations {
        iterations = it + 1;
        // E step
        ll = 0.0;
        for (x, r) in xs.iter().zip(resp.iter_mut()) {
            mix.log_densities(x, &mut buf);
            let lse = log_sum_exp(&buf);
            ll += lse;
            for (rj, bj) in r.iter_mut().zip(&buf) {
                *rj = (bj - lse).exp();
            }
        }
        ll /= n as f64;
        if ll - prev_ll < options.tolerance {
            break;
        }
        prev_ll = ll;
        // M step
        for j in 0..k {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            if nk < 1e-10 {
                // an emptied component keeps its parameters with negligible weight
                mix.weights[j] = 1e-300;
                continue;
            }
            mix.weights[j] = nk / n as f64;
            let mut mean = [0.0; POSE_DIM];
            for (x, r) in xs.iter().zip(&resp) {
                for d in 0..POSE_DIM {
                    mean[d] += r[j] * x[d];
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut var = [0.0; POSE_DIM];
            for (x, r) in xs.iter().zip(&resp) {
                for d in 0..POSE_DIM {
                    var[d] += r[j] * (x[d] - mean[d]).powi(2);
                }
            }
            for v in var.iter_mut() {
                *v = (*v / nk).max(options.variance_floor);
            }
            mix.means[j] = mean;
            mix.vars[j] = var;
        }
    }

    // hard assignment, ties to the lowest component
    let labels: Vec<usize> = resp
        .iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..k {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, l) in labels.iter().enumerate() {
        groups[*l].push(i);
    }
    let mut order: Vec<usize> = (0..k).filter(|j| !groups[*j].is_empty()).collect();
    order.sort_by(|a, b| groups[*b].len().cmp(&groups[*a].len()).then(groups[*a][0].cmp(&groups[*b][0])));
    let mut position = vec![usize::MAX; k];
    for (p, j) in order.iter().enumerate() {
        position[*j] = p;
    }
    let clusters = order
        .iter()
        .map(|j| {
            let members = &groups[*j];
            let vecs: Vec<[f64; POSE_DIM]> = members.iter().map(|i| xs[*i]).collect();
            let rep = members[representative_pose(&vecs).expect("non-empty cluster")];
            PoseCluster {
                weight: members.len() as f64 / n as f64,
                members: members.iter().map(|i| poses[*i].0).collect(),
                representative: poses[rep].0,
                pose: expand_upper_body(&xs[rep]),
            }
        })
        .collect();
    Ok(PoseClustering {
        clusters,
        assignments: labels.iter().enumerate().map(|(i, l)| (poses[i].0, position[*l])).collect(),
        iterations,
        log_likelihood: ll,
    })
}
