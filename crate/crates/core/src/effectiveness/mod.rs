//! Proportional-odds effectiveness scoring of individual factors.
//!
//! Contest level is the ordinal outcome with six classes (1 = club,
//! 6 = world final). For one factor with slope `w` and increasing thresholds
//! `b[0..5]`, `P(Y <= j | x) = sigmoid(b[j-1] - w * x)`, so a positive `w`
//! associates larger factor values with higher levels.

mod fit;
mod model;

pub use fit::{
    fit, fit_factor, log_likelihood, log_likelihood_gradient, parallel_lines_test, wald_p_value,
    FitDiagnostics, FitOptions, FitOutcome, FitWarning, FittedFactor, Observation,
    ParallelLinesResult,
};
pub use model::{EffectivenessModel, FactorEntry, FittedCoefficients, ModelError, ModelInput, Normalization};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::FactorId;

pub const CLASS_COUNT: usize = 6;
pub const THRESHOLD_COUNT: usize = CLASS_COUNT - 1;
/// Factors with `p` below this are significant.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EffectivenessError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("no defined values in the corpus")]
    EmptyCorpus,
    #[error("observed information matrix is singular")]
    SingularInformation,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Slope, thresholds and significance of one factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorCoefficients {
    pub factor: FactorId,
    pub w: f64,
    pub b: [f64; THRESHOLD_COUNT],
    pub p_value: f64,
    pub significant: bool,
}

impl FactorCoefficients {
    pub fn new(factor: FactorId, w: f64, b: [f64; THRESHOLD_COUNT], p_value: f64) -> Self {
        FactorCoefficients {
            factor,
            w,
            b,
            p_value,
            significant: p_value < SIGNIFICANCE_LEVEL,
        }
    }

    pub fn thresholds_increasing(&self) -> bool {
        self.b.windows(2).all(|p| p[0] < p[1])
    }
}

/// Discrete effectiveness bucket shown next to a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectivenessLabel {
    VeryLow,
    Low,
    Medium,
    High,
    VeryHigh,
    /// Not significantly related to contest level.
    Gray,
}

impl EffectivenessLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EffectivenessLabel::VeryLow => "very-low",
            EffectivenessLabel::Low => "low",
            EffectivenessLabel::Medium => "medium",
            EffectivenessLabel::High => "high",
            EffectivenessLabel::VeryHigh => "very-high",
            EffectivenessLabel::Gray => "gray",
        }
    }

    /// Quintile bucket of a display score in `[0, 1]`.
    pub fn from_display_score(score: f64) -> Self {
        match score {
            s if s < 0.2 => EffectivenessLabel::VeryLow,
            s if s < 0.4 => EffectivenessLabel::Low,
            s if s < 0.6 => EffectivenessLabel::Medium,
            s if s < 0.8 => EffectivenessLabel::High,
            _ => EffectivenessLabel::VeryHigh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessScore {
    pub factor: FactorId,
    pub class_probs: [f64; CLASS_COUNT],
    pub expected_class: f64,
    /// `(expected_class - 1) / 5`, the position on the diverging color scale.
    pub display_score: f64,
    pub significant: bool,
    pub label: EffectivenessLabel,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Class probabilities `P(Y = 1..=6)` at linear predictor offsets `b - w x`.
pub fn class_probabilities(w: f64, b: &[f64; THRESHOLD_COUNT], x: f64) -> [f64; CLASS_COUNT] {
    let mut out = [0.0; CLASS_COUNT];
    let mut prev = 0.0;
    for j in 0..THRESHOLD_COUNT {
        let cum = sigmoid(b[j] - w * x);
        out[j] = (cum - prev).max(0.0);
        prev = cum;
    }
    out[CLASS_COUNT - 1] = sigmoid(w * x - b[THRESHOLD_COUNT - 1]);
    out
}

pub fn expected_class(probs: &[f64; CLASS_COUNT]) -> f64 {
    probs.iter().enumerate().map(|(j, p)| (j + 1) as f64 * p).sum()
}

/// Scores a factor value already expressed in the coefficients' input scale.
pub fn evaluate(coeffs: &FactorCoefficients, x: f64) -> EffectivenessScore {
    let class_probs = class_probabilities(coeffs.w, &coeffs.b, x);
    let e = expected_class(&class_probs).clamp(1.0, CLASS_COUNT as f64);
    let display_score = (e - 1.0) / (CLASS_COUNT - 1) as f64;
    EffectivenessScore {
        factor: coeffs.factor,
        class_probs,
        expected_class: e,
        display_score,
        significant: coeffs.significant,
        label: if coeffs.significant {
            EffectivenessLabel::from_display_score(display_score)
        } else {
            EffectivenessLabel::Gray
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub expected_class: f64,
}

/// Expected class on `n_points` evenly spaced values of `[lo, hi]`.
pub fn effectiveness_curve(
    coeffs: &FactorCoefficients,
    lo: f64,
    hi: f64,
    n_points: usize,
) -> Result<Vec<CurvePoint>, EffectivenessError> {
    curve_with(lo, hi, n_points, |x| evaluate(coeffs, x).expected_class)
}

pub(crate) fn curve_with(
    lo: f64,
    hi: f64,
    n_points: usize,
    f: impl Fn(f64) -> f64,
) -> Result<Vec<CurvePoint>, EffectivenessError> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(EffectivenessError::InvalidArgument(format!(
            "curve range [{lo}, {hi}] must be finite and ordered"
        )));
    }
    if n_points < 2 {
        return Err(EffectivenessError::InvalidArgument(
            "a curve needs at least 2 points".into(),
        ));
    }
    let step = (hi - lo) / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|i| {
            let x = if i == n_points - 1 { hi } else { lo + step * i as f64 };
            CurvePoint {
                x,
                expected_class: f(x),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
    /// Bin holding the analyzed value, clamped to the edge bins.
    pub highlight_bin: Option<usize>,
}

impl Histogram {
    pub fn bin_of(&self, x: f64) -> usize {
        let last = self.counts.len() - 1;
        if self.bin_width == 0.0 || x <= self.min {
            return 0;
        }
        (((x - self.min) / self.bin_width).floor() as usize).min(last)
    }
}

/// Equal-width histogram over `[min, max]` of the defined values. The
/// maximum lands in the last bin; identical values all land in bin 0.
pub fn factor_histogram(
    values: &[Option<f64>],
    bins: usize,
    highlight: Option<f64>,
) -> Result<Histogram, EffectivenessError> {
    if bins == 0 {
        return Err(EffectivenessError::InvalidArgument("bins must be >= 1".into()));
    }
    let xs: Vec<f64> = values.iter().flatten().copied().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return Err(EffectivenessError::EmptyCorpus);
    }
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut h = Histogram {
        min,
        max,
        bin_width: (max - min) / bins as f64,
        counts: vec![0; bins],
        highlight_bin: None,
    };
    for x in &xs {
        let i = h.bin_of(*x);
        h.counts[i] += 1;
    }
    h.highlight_bin = highlight.filter(|x| x.is_finite()).map(|x| h.bin_of(x));
    Ok(h)
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;

    fn diversity_row() -> FactorCoefficients {
        FactorCoefficients::new(
            FactorId::EmotionDiversity,
            -2.028,
            [0.318, 1.262, 2.361, 3.207, 4.87],
            0.002,
        )
    }

    #[test]
    fn evaluate_at_zero_matches_direct_logistic() {
        let s = evaluate(&diversity_row(), 0.0);
        let cum: Vec<f64> = [0.318f64, 1.262, 2.361, 3.207, 4.87]
            .iter()
            .map(|b| 1.0 / (1.0 + (-b).exp()))
            .collect();
        assert!((s.class_probs[0] - cum[0]).abs() < 1e-15);
        for j in 1..5 {
            assert!((s.class_probs[j] - (cum[j] - cum[j - 1])).abs() < 1e-15);
        }
        assert!((s.class_probs[5] - (1.0 - cum[4])).abs() < 1e-15);
        assert!((s.class_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.significant);
    }

    #[test]
    fn negative_slope_raises_lowest_class() {
        let c = FactorCoefficients::new(
            FactorId::VolumeVolatility,
            -0.17,
            [-8.904, -7.547, -6.055, -5.13, -3.444],
            0.0,
        );
        let mut prev = 0.0;
        for i in 0..50 {
            let p1 = evaluate(&c, i as f64 * 2.0).class_probs[0];
            assert!(p1 > prev);
            prev = p1;
        }
    }

    #[test]
    fn curve_shapes() {
        let up = FactorCoefficients::new(FactorId::ArousalAverage, 12.71, [-1.311, -0.343, 0.846, 1.786, 3.559], 0.0);
        let pts = effectiveness_curve(&up, -1.0, 1.0, 41).unwrap();
        assert!(pts.windows(2).all(|w| w[1].expected_class >= w[0].expected_class));
        let far = effectiveness_curve(&up, -100.0, 100.0, 2).unwrap();
        assert!((far[0].expected_class - 1.0).abs() < 1e-9);
        assert!((far[1].expected_class - 6.0).abs() < 1e-9);
        let flat = FactorCoefficients { w: 0.0, ..up };
        let pts = effectiveness_curve(&flat, -3.0, 3.0, 7).unwrap();
        assert!(pts.iter().all(|p| p.expected_class == pts[0].expected_class));
        assert!(effectiveness_curve(&up, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn gray_when_not_significant() {
        let c = FactorCoefficients::new(FactorId::PitchAverage, 0.000071, [-2.103, -1.224, -0.187, 0.616, 2.229], 0.988);
        assert_eq!(evaluate(&c, 150.0).label, EffectivenessLabel::Gray);
    }

    #[test]
    fn histogram_examples() {
        let same = vec![Some(3.0); 10];
        let h = factor_histogram(&same, 5, Some(3.0)).unwrap();
        assert_eq!(h.counts, vec![10, 0, 0, 0, 0]);
        assert_eq!(h.highlight_bin, Some(0));

        let ten: Vec<Option<f64>> = (0..10).map(|i| Some(i as f64)).collect();
        let h = factor_histogram(&ten, 10, Some(9.0)).unwrap();
        assert_eq!(h.counts, vec![1; 10]);
        assert_eq!(h.highlight_bin, Some(9));

        let gappy = vec![Some(1.0), None, Some(2.5), Some(-4.0), None];
        let h = factor_histogram(&gappy, 3, None).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        assert_eq!(factor_histogram(&[None], 4, None), Err(EffectivenessError::EmptyCorpus));
    }
}
