//! Maximum-likelihood fitting of the proportional-odds model.
//!
//! Thresholds are kept ordered by optimizing `(w, b0, ln(b1 - b0), ...)`
//! with damped Newton steps. A small label-smoothing term (every observation
//! also contributes `smoothing / 6` weight to each class) keeps the optimum
//! finite when a class is empty or the data are separable; it scales with the
//! number of observations, so replicating the data leaves the fit unchanged.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use super::model::{EffectivenessModel, FactorEntry, FittedCoefficients, ModelInput, Normalization};
use super::{sigmoid, EffectivenessError, FactorCoefficients, CLASS_COUNT, THRESHOLD_COUNT};
use crate::factors::{FactorId, FactorVector};
use crate::feature::LEVEL_RANGE;

/// One speech's factor value and contest level (1..=6).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub level: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Label-smoothing weight per observation.
    pub smoothing: f64,
    pub max_iterations: usize,
    /// Stop once the Newton decrement falls below this.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            smoothing: 1e-4,
            max_iterations: 200,
            tolerance: 1e-12,
        }
    }
}

/// Fewer speeches than this trigger a warning.
pub const RECOMMENDED_MIN_SPEECHES: usize = 30;
pub const RECOMMENDED_MIN_LEVELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    SmallCorpus { speeches: usize, recommended: usize },
    FewLevels { levels: usize, recommended: usize },
    Unfitted { factor: FactorId, reason: String },
    NotConverged { factor: FactorId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Unsmoothed log-likelihood at the estimate.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedFactor {
    pub coefficients: FittedCoefficients,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: EffectivenessModel,
    pub diagnostics: Vec<(FactorId, Option<FitDiagnostics>)>,
    pub warnings: Vec<FitWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelLinesResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub constrained_log_likelihood: f64,
    pub relaxed_log_likelihood: f64,
}

fn ln_sigmoid(z: f64) -> f64 {
    if z > 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Log-probability of one class and its derivatives with respect to the
/// upper and lower linear predictors `eta_u = b[c] - w x`, `eta_l = b[c-1] - w x`.
struct Terms {
    log_p: f64,
    d_u: f64,
    d_l: f64,
    h_uu: f64,
    h_ll: f64,
    h_ul: f64,
}

fn class_terms(upper: Option<f64>, lower: Option<f64>) -> Option<Terms> {
    match (upper, lower) {
        (Some(a), None) => {
            let s = sigmoid(a);
            Some(Terms {
                log_p: ln_sigmoid(a),
                d_u: 1.0 - s,
                d_l: 0.0,
                h_uu: -s * (1.0 - s),
                h_ll: 0.0,
                h_ul: 0.0,
            })
        }
        (None, Some(b)) => {
            let s = sigmoid(b);
            Some(Terms {
                log_p: ln_sigmoid(-b),
                d_u: 0.0,
                d_l: -s,
                h_uu: 0.0,
                h_ll: -s * (1.0 - s),
                h_ul: 0.0,
            })
        }
        (Some(a), Some(b)) => {
            // also rejects NaN
            if a.partial_cmp(&b) != Some(std::cmp::Ordering::Greater) {
                return None;
            }
            let gap = -(b - a).exp_m1();
            // f_u / p and f_l / p with f = sigmoid'
            let r_u = sigmoid(-a) / (sigmoid(-b) * gap);
            let r_l = sigmoid(b) / (sigmoid(a) * gap);
            Some(Terms {
                log_p: ln_sigmoid(a) + ln_sigmoid(-b) + gap.ln(),
                d_u: r_u,
                d_l: -r_l,
                h_uu: r_u * (1.0 - 2.0 * sigmoid(a)) - r_u * r_u,
                h_ll: -r_l * (1.0 - 2.0 * sigmoid(b)) - r_l * r_l,
                h_ul: r_u * r_l,
            })
        }
        (None, None) => unreachable!("at least one threshold bounds every class"),
    }
}

/// A weighted (x, class) pair; class is 0-based.
#[derive(Clone, Copy)]
struct Weighted {
    x: f64,
    class: usize,
    weight: f64,
}

fn expand(xs: &[f64], classes: &[usize], smoothing: f64) -> Vec<Weighted> {
    let spread = smoothing / CLASS_COUNT as f64;
    let mut out = Vec::with_capacity(xs.len() * if spread > 0.0 { CLASS_COUNT } else { 1 });
    for (x, c) in xs.iter().zip(classes) {
        for class in 0..CLASS_COUNT {
            let weight = if class == *c { 1.0 + spread } else { spread };
            if weight > 0.0 {
                out.push(Weighted { x: *x, class, weight });
            }
        }
    }
    out
}

/// Layout of the linear parameters behind each threshold's predictor.
#[derive(Clone, Copy)]
enum Layout {
    /// `(w, b0..b4)`: `eta_j = b_j - w x`.
    Proportional,
    /// `(b0..b4, w0..w4)`: `eta_j = b_j - w_j x`.
    PerThreshold,
}

impl Layout {
    fn len(self) -> usize {
        match self {
            Layout::Proportional => 1 + THRESHOLD_COUNT,
            Layout::PerThreshold => 2 * THRESHOLD_COUNT,
        }
    }

    /// `(threshold index, slope index)` of predictor `j`.
    fn indices(self, j: usize) -> (usize, usize) {
        match self {
            Layout::Proportional => (1 + j, 0),
            Layout::PerThreshold => (j, THRESHOLD_COUNT + j),
        }
    }

    fn eta(self, beta: &[f64], j: usize, x: f64) -> f64 {
        let (bi, wi) = self.indices(j);
        beta[bi] - beta[wi] * x
    }
}

struct Evaluation {
    value: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

/// Weighted log-likelihood with gradient and Hessian in the linear
/// parameters; `None` when some class probability is not positive.
fn evaluate_linear(layout: Layout, beta: &[f64], data: &[Weighted], derivatives: bool) -> Option<Evaluation> {
    let k = layout.len();
    let mut value = 0.0;
    let mut gradient = DVector::zeros(if derivatives { k } else { 0 });
    let mut hessian = DMatrix::zeros(if derivatives { k } else { 0 }, if derivatives { k } else { 0 });
    for o in data {
        let upper = (o.class < THRESHOLD_COUNT).then(|| layout.eta(beta, o.class, o.x));
        let lower = (o.class > 0).then(|| layout.eta(beta, o.class - 1, o.x));
        let t = class_terms(upper, lower)?;
        if !t.log_p.is_finite() {
            return None;
        }
        value += o.weight * t.log_p;
        if !derivatives {
            continue;
        }
        // each predictor is b_j - w x: d eta / d b = 1, d eta / d w = -x
        let mut rows: [(Option<(usize, usize)>, f64); 2] = [(None, t.d_u), (None, t.d_l)];
        if o.class < THRESHOLD_COUNT {
            rows[0].0 = Some(layout.indices(o.class));
        }
        if o.class > 0 {
            rows[1].0 = Some(layout.indices(o.class - 1));
        }
        let hess = [[t.h_uu, t.h_ul], [t.h_ul, t.h_ll]];
        for (r, (idx, d)) in rows.iter().enumerate() {
            let Some((bi, wi)) = idx else { continue };
            gradient[*bi] += o.weight * d;
            gradient[*wi] -= o.weight * d * o.x;
            for (c, (idx2, _)) in rows.iter().enumerate() {
                let Some((bj, wj)) = idx2 else { continue };
                let h = o.weight * hess[r][c];
                hessian[(*bi, *bj)] += h;
                hessian[(*bi, *wj)] -= h * o.x;
                hessian[(*wi, *bj)] -= h * o.x;
                hessian[(*wi, *wj)] += h * o.x * o.x;
            }
        }
    }
    Some(Evaluation {
        value,
        gradient,
        hessian,
    })
}

/// `(w, b0, ln gaps)` to `(w, b0..b4)`.
fn ordered_to_linear(theta: &[f64]) -> Vec<f64> {
    let mut beta = vec![theta[0], theta[1]];
    for k in 2..theta.len() {
        let prev = beta[k - 1];
        beta.push(prev + theta[k].exp());
    }
    beta
}

fn linear_to_ordered(beta: &[f64]) -> Vec<f64> {
    let mut theta = vec![beta[0], beta[1]];
    for k in 2..beta.len() {
        theta.push((beta[k] - beta[k - 1]).ln());
    }
    theta
}

fn evaluate_ordered(theta: &[f64], data: &[Weighted], derivatives: bool) -> Option<Evaluation> {
    let beta = ordered_to_linear(theta);
    let e = evaluate_linear(Layout::Proportional, &beta, data, derivatives)?;
    if !derivatives {
        return Some(e);
    }
    let k = theta.len();
    // d beta / d theta: w passes through, b_j = b0 + sum_{m<=j} exp(theta_m)
    let mut jac = DMatrix::zeros(k, k);
    jac[(0, 0)] = 1.0;
    for j in 1..k {
        jac[(j, 1)] = 1.0;
        for m in 2..=j {
            jac[(j, m)] = theta[m].exp();
        }
    }
    let gradient = jac.transpose() * &e.gradient;
    let mut hessian = jac.transpose() * &e.hessian * &jac;
    for m in 2..k {
        let g: f64 = (m..k).map(|j| e.gradient[j]).sum();
        hessian[(m, m)] += g * theta[m].exp();
    }
    Some(Evaluation {
        value: e.value,
        gradient,
        hessian,
    })
}

struct Optimum {
    params: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Levenberg-Marquardt ascent with Marquardt scaling.
fn maximize(
    start: Vec<f64>,
    options: &FitOptions,
    eval: impl Fn(&[f64], bool) -> Option<Evaluation>,
) -> Result<Optimum, EffectivenessError> {
    let mut params = start;
    let mut current = eval(&params, true).ok_or_else(|| {
        EffectivenessError::DegenerateData("starting point has zero likelihood".into())
    })?;
    let k = params.len();
    let mut lambda = 1e-3;
    for iteration in 0..options.max_iterations {
        let neg_h = -&current.hessian;
        if let Some(ch) = neg_h.clone().cholesky() {
            if ch.solve(&current.gradient).dot(&current.gradient) < options.tolerance {
                return Ok(Optimum {
                    params,
                    value: current.value,
                    iterations: iteration,
                    converged: true,
                });
            }
        }
        let mut accepted = None;
        while lambda <= 1e16 {
            let mut a = neg_h.clone();
            for i in 0..k {
                a[(i, i)] += lambda * neg_h[(i, i)].abs().max(1e-12);
            }
            if let Some(ch) = a.cholesky() {
                let step = ch.solve(&current.gradient);
                let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
                if let Some(v) = eval(&trial, false) {
                    if v.value >= current.value {
                        accepted = Some(trial);
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        match accepted {
            Some(trial) => {
                params = trial;
                current = eval(&params, true).expect("accepted point is feasible");
                lambda = (lambda / 10.0).max(1e-12);
            }
            None => {
                // no ascent direction left at machine precision
                return Ok(Optimum {
                    params,
                    value: current.value,
                    iterations: iteration,
                    converged: true,
                });
            }
        }
    }
    Ok(Optimum {
        params,
        value: current.value,
        iterations: options.max_iterations,
        converged: false,
    })
}

/// Thresholds at the empirical logits of the cumulative class proportions.
fn initial_thresholds(classes: &[usize]) -> Vec<f64> {
    let n = classes.len() as f64;
    let mut b = Vec::with_capacity(THRESHOLD_COUNT);
    for j in 0..THRESHOLD_COUNT {
        let below = classes.iter().filter(|c| **c <= j).count() as f64;
        let q = (below + 0.5) / (n + 1.0);
        let mut t = (q / (1.0 - q)).ln();
        if let Some(prev) = b.last() {
            t = t.max(prev + 0.01);
        }
        b.push(t);
    }
    b
}

/// Two-sided Wald p-value for `H0: w = 0`.
pub fn wald_p_value(w: f64, std_error: f64) -> Result<f64, EffectivenessError> {
    if !(std_error.is_finite() && std_error > 0.0) {
        return Err(EffectivenessError::SingularInformation);
    }
    let z = w / std_error;
    Ok(erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

/// Unsmoothed log-likelihood of observations under `(w, b)`.
pub fn log_likelihood(w: f64, b: &[f64; THRESHOLD_COUNT], obs: &[Observation]) -> f64 {
    let (xs, classes) = split(obs);
    let beta = linear(w, b);
    evaluate_linear(Layout::Proportional, &beta, &expand(&xs, &classes, 0.0), false)
        .map_or(f64::NEG_INFINITY, |e| e.value)
}

/// Analytic gradient of [`log_likelihood`] in the order `(w, b0..b4)`.
pub fn log_likelihood_gradient(w: f64, b: &[f64; THRESHOLD_COUNT], obs: &[Observation]) -> [f64; 6] {
    let (xs, classes) = split(obs);
    let beta = linear(w, b);
    let mut out = [f64::NAN; 6];
    if let Some(e) = evaluate_linear(Layout::Proportional, &beta, &expand(&xs, &classes, 0.0), true) {
        out.copy_from_slice(e.gradient.as_slice());
    }
    out
}

fn linear(w: f64, b: &[f64; THRESHOLD_COUNT]) -> Vec<f64> {
    std::iter::once(w).chain(b.iter().copied()).collect()
}

fn split(obs: &[Observation]) -> (Vec<f64>, Vec<usize>) {
    obs.iter().map(|o| (o.x, usize::from(o.level) - 1)).unzip()
}

/// Finite observations normalized to `[0, 1]`, with their bounds.
struct Prepared {
    us: Vec<f64>,
    classes: Vec<usize>,
    normalization: Normalization,
}

fn prepare(obs: &[Observation]) -> Result<Prepared, EffectivenessError> {
    if let Some(o) = obs.iter().find(|o| !LEVEL_RANGE.contains(&o.level)) {
        return Err(EffectivenessError::InvalidArgument(format!(
            "level {} outside 1..=6",
            o.level
        )));
    }
    let kept: Vec<&Observation> = obs.iter().filter(|o| o.x.is_finite()).collect();
    if kept.is_empty() {
        return Err(EffectivenessError::EmptyCorpus);
    }
    let mut levels: Vec<u8> = kept.iter().map(|o| o.level).collect();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return Err(EffectivenessError::DegenerateData(format!(
            "all observations are at level {}",
            levels[0]
        )));
    }
    let min = kept.iter().map(|o| o.x).fold(f64::INFINITY, f64::min);
    let max = kept.iter().map(|o| o.x).fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(EffectivenessError::DegenerateData("factor has zero variance".into()));
    }
    let normalization = Normalization { min, max };
    Ok(Prepared {
        us: kept.iter().map(|o| normalization.apply(o.x)).collect(),
        classes: kept.iter().map(|o| usize::from(o.level) - 1).collect(),
        normalization,
    })
}

struct ConstrainedFit {
    beta: Vec<f64>,
    optimum: Optimum,
    data: Vec<Weighted>,
}

fn fit_constrained(p: &Prepared, options: &FitOptions) -> Result<ConstrainedFit, EffectivenessError> {
    let data = expand(&p.us, &p.classes, options.smoothing);
    let mut start = vec![0.0];
    start.extend(initial_thresholds(&p.classes));
    let optimum = maximize(linear_to_ordered(&start), options, |t, d| evaluate_ordered(t, &data, d))?;
    Ok(ConstrainedFit {
        beta: ordered_to_linear(&optimum.params),
        optimum,
        data,
    })
}

/// Fits one factor on min-max-normalized values and tests `w` by Wald.
pub fn fit_factor(
    factor: FactorId,
    obs: &[Observation],
    options: &FitOptions,
) -> Result<FittedFactor, EffectivenessError> {
    let p = prepare(obs)?;
    let fit = fit_constrained(&p, options)?;
    let beta = &fit.beta;
    let mut b = [0.0; THRESHOLD_COUNT];
    b.copy_from_slice(&beta[1..]);
    if !b.windows(2).all(|t| t[0] < t[1]) || beta.iter().any(|v| !v.is_finite()) {
        return Err(EffectivenessError::DegenerateData("thresholds collapsed".into()));
    }
    // observed information of the objective in (w, b)
    let info = -evaluate_linear(Layout::Proportional, beta, &fit.data, true)
        .expect("optimum is feasible")
        .hessian;
    let cov = info
        .cholesky()
        .ok_or(EffectivenessError::SingularInformation)?
        .inverse();
    let std_error = cov[(0, 0)].sqrt();
    let p_value = wald_p_value(beta[0], std_error)?;
    let plain = expand(&p.us, &p.classes, 0.0);
    let log_likelihood = evaluate_linear(Layout::Proportional, beta, &plain, false)
        .map_or(f64::NEG_INFINITY, |e| e.value);
    Ok(FittedFactor {
        coefficients: FittedCoefficients {
            coefficients: FactorCoefficients::new(factor, beta[0], b, p_value),
            normalization: Some(p.normalization),
            std_error: Some(std_error),
            n: Some(p.us.len()),
        },
        diagnostics: FitDiagnostics {
            n: p.us.len(),
            iterations: fit.optimum.iterations,
            converged: fit.optimum.converged,
            log_likelihood,
        },
    })
}

/// Likelihood-ratio test of proportional odds against per-threshold slopes.
pub fn parallel_lines_test(
    obs: &[Observation],
    options: &FitOptions,
) -> Result<ParallelLinesResult, EffectivenessError> {
    let p = prepare(obs)?;
    let fit = fit_constrained(&p, options)?;
    let mut start = fit.beta[1..].to_vec();
    start.extend(std::iter::repeat_n(fit.beta[0], THRESHOLD_COUNT));
    let relaxed = maximize(start, options, |beta, d| {
        evaluate_linear(Layout::PerThreshold, beta, &fit.data, d)
    })?;
    let constrained = fit.optimum.value;
    let relaxed_value = relaxed.value.max(constrained);
    let statistic = 2.0 * (relaxed_value - constrained);
    let df = THRESHOLD_COUNT - 1;
    let chi = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    Ok(ParallelLinesResult {
        statistic,
        degrees_of_freedom: df,
        p_value: chi.sf(statistic).clamp(0.0, 1.0),
        constrained_log_likelihood: constrained,
        relaxed_log_likelihood: relaxed_value,
    })
}

/// Fits every factor of a labeled corpus, in parallel across factors.
pub fn fit(corpus: &[(FactorVector, u8)], options: &FitOptions) -> Result<FitOutcome, EffectivenessError> {
    if corpus.is_empty() {
        return Err(EffectivenessError::EmptyCorpus);
    }
    if let Some((_, l)) = corpus.iter().find(|(_, l)| !LEVEL_RANGE.contains(l)) {
        return Err(EffectivenessError::InvalidArgument(format!("level {l} outside 1..=6")));
    }
    let mut levels: Vec<u8> = corpus.iter().map(|(_, l)| *l).collect();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return Err(EffectivenessError::DegenerateData(format!(
            "all speeches are at level {}",
            levels[0]
        )));
    }
    let mut warnings = Vec::new();
    if corpus.len() < RECOMMENDED_MIN_SPEECHES {
        warnings.push(FitWarning::SmallCorpus {
            speeches: corpus.len(),
            recommended: RECOMMENDED_MIN_SPEECHES,
        });
    }
    if levels.len() < RECOMMENDED_MIN_LEVELS {
        warnings.push(FitWarning::FewLevels {
            levels: levels.len(),
            recommended: RECOMMENDED_MIN_LEVELS,
        });
    }
    let results: Vec<(FactorId, Result<FittedFactor, EffectivenessError>)> = FactorId::ALL
        .par_iter()
        .map(|f| {
            let obs: Vec<Observation> = corpus
                .iter()
                .filter_map(|(v, level)| v.value(*f).map(|x| Observation { x, level: *level }))
                .collect();
            (*f, fit_factor(*f, &obs, options))
        })
        .collect();
    let mut entries = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::with_capacity(results.len());
    for (f, r) in results {
        match r {
            Ok(ff) => {
                if !ff.diagnostics.converged {
                    warnings.push(FitWarning::NotConverged { factor: f });
                }
                diagnostics.push((f, Some(ff.diagnostics)));
                entries.push(FactorEntry::Fitted(ff.coefficients));
            }
            Err(e) => {
                let reason = e.to_string();
                warnings.push(FitWarning::Unfitted {
                    factor: f,
                    reason: reason.clone(),
                });
                diagnostics.push((f, None));
                entries.push(FactorEntry::Unfitted { reason });
            }
        }
    }
    let model = EffectivenessModel::new(
        format!("fitted on {} speeches", corpus.len()),
        ModelInput::MinMax,
        "wald",
        entries,
    )
    .map_err(|e| EffectivenessError::DegenerateData(e.to_string()))?;
    Ok(FitOutcome {
        model,
        diagnostics,
        warnings,
    })
}
