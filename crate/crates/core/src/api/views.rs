//! Response bodies and the in-process calls that build them. HTTP handlers
//! and the CLI both go through these, so their outputs are identical.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ApiError, ErrorCode};
use crate::corpus::{CorpusSnapshot, SpeechRecord};
use crate::effectiveness::{factor_histogram, CurvePoint, EffectivenessModel, EffectivenessScore, Histogram};
use crate::factors::{compute_factors, FactorId, FactorVector, Statistic, Technique};
use crate::feature::{BundleView, FeatureBundle, SpeechMeta};
use crate::recommend::{recommend, Granularity, RecommendationQuery, RecommendationResult};
use crate::summary::encoding::{effectiveness_color, encoding_table, EncodingTable, NOT_SIGNIFICANT_GRAY};
use crate::summary::{
    overlay_trail, speech_twin, time_slices, GmmOptions, OverlayTrail, SliceColoring, SpeechTwinSummary,
    TimeSliceView, OVERLAY_SAMPLES, SLICE_COUNT,
};

/// Version of every response shape below.
pub const API_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_HISTOGRAM_BINS: usize = 20;
pub const CURVE_POINTS: usize = 50;
pub const DEFAULT_OVERLAY_INTERVAL_S: f64 = 0.5;

/// A response body tagged with the schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Versioned<T> {
    pub fn new(body: T) -> Self {
        Versioned {
            schema_version: API_SCHEMA_VERSION,
            body,
        }
    }
}

/// Serialized response bytes, shared by the server and in-process callers.
pub fn to_body<T: Serialize>(body: T) -> Vec<u8> {
    serde_json::to_vec(&Versioned::new(body)).expect("response serialization is infallible")
}

/// Pose-clustering seed for a speech: the first 8 bytes of SHA-256(id).
pub fn speech_seed(id: &str) -> u64 {
    let d = Sha256::digest(id.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Optional `[start, end)` bounds; missing ends default to the speech's.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: Option<f64>,
    pub end: Option<f64>,
}

impl Span {
    pub fn whole() -> Self {
        Span::default()
    }

    pub fn is_whole(&self) -> bool {
        self.start.is_none() && self.end.is_none()
    }

    pub fn view<'a>(&self, r: &'a SpeechRecord) -> Result<BundleView<'a>, ApiError> {
        self.view_of(&r.bundle)
    }

    pub fn view_of<'a>(&self, b: &'a FeatureBundle) -> Result<BundleView<'a>, ApiError> {
        Ok(b.slice(self.start.unwrap_or(0.0), self.end.unwrap_or(b.meta.duration_s))?)
    }
}

/// Parses a comma-separated factor id list; empty input selects nothing.
pub fn parse_factor_list(s: &str) -> Result<Vec<FactorId>, ApiError> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(ApiError::from))
        .collect()
}

/// Fails with `EmptyCorpus` before any lookup when nothing is stored.
pub fn require_nonempty(snap: &CorpusSnapshot) -> Result<(), ApiError> {
    if snap.is_empty() {
        return Err(ApiError::new(ErrorCode::EmptyCorpus, "the corpus holds no speeches"));
    }
    Ok(())
}

fn record<'a>(snap: &'a CorpusSnapshot, id: &str) -> Result<&'a Arc<SpeechRecord>, ApiError> {
    require_nonempty(snap)?;
    snap.get(id).ok_or_else(|| ApiError::not_found(format!("speech `{id}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechList {
    pub speeches: Vec<SpeechMeta>,
}

pub fn list_speeches(snap: &CorpusSnapshot) -> SpeechList {
    SpeechList {
        speeches: snap.entries().iter().map(|e| e.meta.clone()).collect(),
    }
}

/// One factor with its effectiveness under the active model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub factor: FactorId,
    pub technique: Technique,
    pub statistic: Statistic,
    pub value: Option<f64>,
    pub coverage: f64,
    pub significant: bool,
    pub score: Option<EffectivenessScore>,
    /// `very-low` to `very-high`, `gray` when not significant, `undefined`
    /// when the value or the model entry is missing.
    pub label: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub speech_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub model_source: String,
    pub factors: FactorVector,
    pub effectiveness: Vec<FactorRow>,
}

pub fn score_rows(model: &EffectivenessModel, v: &FactorVector) -> Vec<FactorRow> {
    v.iter()
        .map(|(f, fv)| {
            let score = fv.value.and_then(|x| model.score(f, x));
            let significant = model.is_significant(f);
            let (label, color) = match &score {
                Some(s) => (s.label.as_str(), effectiveness_color(s.display_score, s.significant)),
                None => ("undefined", NOT_SIGNIFICANT_GRAY),
            };
            FactorRow {
                factor: f,
                technique: f.technique(),
                statistic: f.statistic(),
                value: fv.value,
                coverage: fv.coverage,
                significant,
                score,
                label: label.to_string(),
                color: color.to_string(),
            }
        })
        .collect()
}

/// Factor report of a view under a model.
pub fn report_for_view(model: &EffectivenessModel, view: &BundleView<'_>, cached: Option<&FactorVector>) -> FactorReport {
    let factors = cached.cloned().unwrap_or_else(|| compute_factors(view));
    FactorReport {
        speech_id: view.bundle().id().to_string(),
        start_s: view.start_s(),
        end_s: view.end_s(),
        model_source: model.source.clone(),
        effectiveness: score_rows(model, &factors),
        factors,
    }
}

pub fn factor_report(
    snap: &CorpusSnapshot,
    model: &EffectivenessModel,
    id: &str,
    span: Span,
) -> Result<FactorReport, ApiError> {
    let r = record(snap, id)?;
    let view = span.view(r)?;
    let cached = span.is_whole().then_some(&r.factors);
    Ok(report_for_view(model, &view, cached))
}

pub fn slices(
    snap: &CorpusSnapshot,
    model: &EffectivenessModel,
    id: &str,
    span: Span,
    factors: &[FactorId],
) -> Result<TimeSliceView, ApiError> {
    let r = record(snap, id)?;
    let view = span.view(r)?;
    let coloring = SliceColoring {
        model,
        sentence_factors: &r.sentence_factors,
        factors,
    };
    Ok(time_slices(&view, SLICE_COUNT, Some(&coloring))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFactor {
    pub factor: FactorId,
    pub value: Option<f64>,
    pub score: Option<EffectivenessScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinResponse {
    pub speech_id: String,
    /// Pose-clustering seed as a decimal string (exceeds JSON-safe integers).
    pub seed: String,
    #[serde(flatten)]
    pub twin: SpeechTwinSummary,
    pub factors: Vec<SelectedFactor>,
}

fn twin_of(r: &SpeechRecord, view: &BundleView<'_>, gmm: &GmmOptions) -> SpeechTwinSummary {
    speech_twin(view, speech_seed(r.id()), gmm)
}

pub fn twin(
    snap: &CorpusSnapshot,
    model: &EffectivenessModel,
    gmm: &GmmOptions,
    id: &str,
    span: Span,
    factors: &[FactorId],
) -> Result<TwinResponse, ApiError> {
    let r = record(snap, id)?;
    let view = span.view(r)?;
    let values = if span.is_whole() {
        r.factors.clone()
    } else {
        compute_factors(&view)
    };
    Ok(TwinResponse {
        speech_id: r.id().to_string(),
        seed: speech_seed(r.id()).to_string(),
        twin: twin_of(r, &view, gmm),
        factors: factors
            .iter()
            .map(|f| {
                let value = values.value(*f);
                SelectedFactor {
                    factor: *f,
                    value,
                    score: value.and_then(|x| model.score(*f, x)),
                }
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    #[serde(flatten)]
    pub result: RecommendationResult,
    /// SpeechTwin of each candidate's span, aligned with `candidates`.
    pub twins: Vec<SpeechTwinSummary>,
}

pub fn recommend_with_twins(
    snap: &CorpusSnapshot,
    gmm: &GmmOptions,
    query: &RecommendationQuery,
) -> Result<RecommendResponse, ApiError> {
    require_nonempty(snap)?;
    let result = recommend(query, snap.records())?;
    let twins = result
        .candidates
        .iter()
        .map(|c| {
            let r = record(snap, &c.speech_id)?;
            let end = c.end_s.min(r.bundle.meta.duration_s);
            let view = r.bundle.slice(c.start_s, end)?;
            Ok(twin_of(r, &view, gmm))
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(RecommendResponse { result, twins })
}

pub fn overlay(
    snap: &CorpusSnapshot,
    id: &str,
    playhead_s: f64,
    interval_s: Option<f64>,
    n: Option<usize>,
) -> Result<OverlayTrail, ApiError> {
    let r = record(snap, id)?;
    Ok(overlay_trail(
        &r.bundle,
        playhead_s,
        n.unwrap_or(OVERLAY_SAMPLES),
        interval_s.unwrap_or(DEFAULT_OVERLAY_INTERVAL_S),
    )?)
}

/// Effectiveness curve and corpus distribution of one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorBoard {
    pub factor: FactorId,
    pub technique: Technique,
    pub statistic: Statistic,
    pub significant: bool,
    pub granularity: Granularity,
    /// Expected class over the plotted range; empty when the factor is unfitted.
    pub curve: Vec<CurvePoint>,
    /// Distribution over every speech (or sentence) in the corpus.
    pub all: Histogram,
    /// Distribution over speeches at the highest contest level present.
    pub best: Option<Histogram>,
    pub best_level: Option<u8>,
    /// The analyzed span's value, when a speech was given.
    pub value: Option<f64>,
    pub score: Option<EffectivenessScore>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoardQuery {
    /// Speech whose value is highlighted.
    pub speech_id: Option<String>,
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub granularity: Option<Granularity>,
    pub bins: Option<usize>,
}

impl BoardQuery {
    pub fn span(&self) -> Span {
        Span {
            start: self.start,
            end: self.end,
        }
    }
}

pub fn factor_board(
    snap: &CorpusSnapshot,
    model: &EffectivenessModel,
    factor: FactorId,
    q: &BoardQuery,
) -> Result<FactorBoard, ApiError> {
    require_nonempty(snap)?;
    let granularity = q.granularity.unwrap_or(Granularity::Speech);
    let bins = q.bins.unwrap_or(DEFAULT_HISTOGRAM_BINS);
    let values_of = |r: &SpeechRecord| -> Vec<Option<f64>> {
        match granularity {
            Granularity::Speech => vec![r.factors.value(factor)],
            Granularity::Sentence => r.sentence_factors.iter().map(|v| v.value(factor)).collect(),
        }
    };
    let value = match &q.speech_id {
        Some(id) => {
            let r = record(snap, id)?;
            let span = q.span();
            if span.is_whole() {
                r.factors.value(factor)
            } else {
                compute_factors(&span.view(r)?).value(factor)
            }
        }
        None => None,
    };
    let all_values: Vec<Option<f64>> = snap.records().iter().flat_map(|r| values_of(r)).collect();
    let all = factor_histogram(&all_values, bins, value)?;
    let best_level = snap.records().iter().map(|r| r.meta().level).max();
    let best = match best_level {
        Some(level) => {
            let vals: Vec<Option<f64>> = snap
                .records()
                .iter()
                .filter(|r| r.meta().level == level)
                .flat_map(|r| values_of(r))
                .collect();
            factor_histogram(&vals, bins, value).ok()
        }
        None => None,
    };
    let curve = if model.coefficients(factor).is_some() {
        let (mut lo, mut hi) = (all.min, all.max);
        if let Some(v) = value {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        model.curve(factor, lo, hi, CURVE_POINTS)?
    } else {
        Vec::new()
    };
    Ok(FactorBoard {
        factor,
        technique: factor.technique(),
        statistic: factor.statistic(),
        significant: model.is_significant(factor),
        granularity,
        curve,
        all,
        best,
        best_level,
        value,
        score: value.and_then(|x| model.score(factor, x)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub factor: FactorId,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `(a - b)` divided by the factor's corpus range; 0 when the range is
    /// degenerate.
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    /// By descending difference, undefined rows last.
    pub rows: Vec<ComparisonRow>,
}

pub fn compare(snap: &CorpusSnapshot, a: &str, b: &str) -> Result<Comparison, ApiError> {
    let (ra, rb) = (record(snap, a)?, record(snap, b)?);
    let mut rows: Vec<ComparisonRow> = FactorId::ALL
        .into_iter()
        .map(|f| {
            let (va, vb) = (ra.factors.value(f), rb.factors.value(f));
            let xs = snap.records().iter().filter_map(|r| r.factors.value(f));
            let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            let difference = va.zip(vb).map(|(x, y)| if hi > lo { (x - y) / (hi - lo) } else { 0.0 });
            ComparisonRow {
                factor: f,
                a: va,
                b: vb,
                difference,
            }
        })
        .collect();
    rows.sort_by(|x, y| match (x.difference, y.difference) {
        (Some(p), Some(q)) => q.total_cmp(&p),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(Comparison {
        a: a.to_string(),
        b: b.to_string(),
        rows,
    })
}

pub fn encodings() -> EncodingTable {
    encoding_table()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub id: String,
    pub replaced: bool,
}

/// Default internal error for failures outside the engine (task panics).
pub fn internal(message: impl Into<String>) -> ApiError {
    ApiError::new(ErrorCode::Internal, message)
}
