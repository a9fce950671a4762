use thiserror::Error;

/// Means at or below this magnitude make the coefficient of variation
/// meaningless.
pub const DEGENERATE_MEAN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StatError {
    #[error("series has no samples")]
    EmptySeries,
    #[error("series needs at least {needed} samples, has {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("mean is too close to zero for a dispersion ratio")]
    DegenerateMean,
    #[error("need at least two consecutive frames with keypoints")]
    InsufficientFrames,
    #[error("pose has zero shoulder width")]
    DegeneratePose,
}

fn present(series: &[Option<f64>]) -> Vec<f64> {
    series.iter().flatten().copied().collect()
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|x| *x == xs[0])
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Arithmetic mean of the non-missing samples.
pub fn average(series: &[Option<f64>]) -> Result<f64, StatError> {
    let xs = present(series);
    if xs.is_empty() {
        return Err(StatError::EmptySeries);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Length-normalized complexity estimate of the z-normalized series:
/// `sqrt(sum (q[i+1] - q[i])^2) / sqrt(n - 1)`.
///
/// Missing samples are dropped before differencing. A constant series has
/// volatility 0.
pub fn volatility(series: &[Option<f64>]) -> Result<f64, StatError> {
    let xs = present(series);
    match xs.len() {
        0 => return Err(StatError::EmptySeries),
        n @ 1..=2 => return Err(StatError::InsufficientSamples { needed: 3, got: n }),
        _ => {}
    }
    if is_constant(&xs) {
        return Ok(0.0);
    }
    let (mean, sd) = mean_sd(&xs);
    let ce = xs
        .windows(2)
        .map(|w| ((w[1] - mean) / sd - (w[0] - mean) / sd).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ce / ((xs.len() - 1) as f64).sqrt())
}

/// Coefficient of variation: population standard deviation over `|mean|`.
pub fn dispersion(series: &[Option<f64>]) -> Result<f64, StatError> {
    let xs = present(series);
    match xs.len() {
        0 => return Err(StatError::EmptySeries),
        1 => return Err(StatError::InsufficientSamples { needed: 2, got: 1 }),
        _ => {}
    }
    let (mean, sd) = mean_sd(&xs);
    if mean.abs() <= DEGENERATE_MEAN_EPS {
        return Err(StatError::DegenerateMean);
    }
    if is_constant(&xs) {
        return Ok(0.0);
    }
    Ok(sd / mean.abs())
}

fn components(series: &[Option<[f64; 2]>]) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    series.iter().map(|p| (p.map(|v| v[0]), p.map(|v| v[1]))).unzip()
}

/// L2 norm of the per-component volatilities of a 2-D series.
pub fn volatility_2d(series: &[Option<[f64; 2]>]) -> Result<f64, StatError> {
    let (x, y) = components(series);
    Ok(volatility(&x)?.hypot(volatility(&y)?))
}

/// L2 norm of the per-component dispersions of a 2-D series.
pub fn dispersion_2d(series: &[Option<[f64; 2]>]) -> Result<f64, StatError> {
    let (x, y) = components(series);
    Ok(dispersion(&x)?.hypot(dispersion(&y)?))
}

/// Fraction of non-missing frames whose camera angle is strictly below
/// `threshold_deg`.
pub fn watching_camera_ratio(angles_deg: &[Option<f64>], threshold_deg: f64) -> Result<f64, StatError> {
    let xs = present(angles_deg);
    if xs.is_empty() {
        return Err(StatError::EmptySeries);
    }
    let hits = xs.iter().filter(|a| **a < threshold_deg).count();
    Ok(hits as f64 / xs.len() as f64)
}

fn category_counts(emotions: &[Option<u8>]) -> ([usize; 256], usize) {
    let mut counts = [0usize; 256];
    let mut total = 0;
    for e in emotions.iter().flatten() {
        counts[*e as usize] += 1;
        total += 1;
    }
    (counts, total)
}

/// `sum_i r_i ln r_i` over the non-missing samples, where `r_i` is the
/// proportion of samples sharing sample `i`'s category. Always <= 0.
pub fn emotion_diversity(emotions: &[Option<u8>]) -> Result<f64, StatError> {
    let (counts, total) = category_counts(emotions);
    if total == 0 {
        return Err(StatError::EmptySeries);
    }
    let t = total as f64;
    Ok(emotions
        .iter()
        .flatten()
        .map(|d| {
            let r = counts[*d as usize] as f64 / t;
            r * r.ln()
        })
        .sum())
}

/// Shannon entropy `-sum_k p_k ln p_k` over emotion categories.
pub fn emotion_entropy(emotions: &[Option<u8>]) -> Result<f64, StatError> {
    let (counts, total) = category_counts(emotions);
    if total == 0 {
        return Err(StatError::EmptySeries);
    }
    let t = total as f64;
    Ok(-counts
        .iter()
        .filter(|c| **c > 0)
        .map(|c| {
            let p = *c as f64 / t;
            p * p.ln()
        })
        .sum::<f64>())
}
