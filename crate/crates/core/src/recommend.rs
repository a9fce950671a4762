//! Nearest and farthest speeches or sentences relative to a query span.
//!
//! Factor mode compares min-max-normalized factor values by Euclidean
//! distance; script mode compares sentence embeddings by cosine distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SpeechRecord;
use crate::factors::{compute_factors, FactorId, FactorVector};
use crate::feature::{BundleView, FeatureBundle, RangeError, EMBEDDING_DIM};
use crate::pose::cosine_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Speech,
    Sentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Factor,
    Script,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    MostSimilar,
    MostDifferent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendationQuery {
    pub speech_id: String,
    /// Query span; the whole speech when both are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_s: Option<f64>,
    pub granularity: Granularity,
    pub mode: Mode,
    /// Factors compared in factor mode.
    #[serde(default)]
    pub factors: Vec<FactorId>,
    pub k: usize,
    pub direction: Direction,
    /// Keep the query's own speech (speech granularity) or its sentences
    /// overlapping the span (sentence granularity) among the candidates.
    #[serde(default)]
    pub include_self: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub speech_id: String,
    /// Script index for sentence granularity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence_index: Option<usize>,
    pub start_s: f64,
    pub end_s: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorBounds {
    pub factor: FactorId,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResult {
    pub granularity: Granularity,
    pub mode: Mode,
    pub direction: Direction,
    pub k: usize,
    pub candidates: Vec<Candidate>,
    /// Per-factor bounds used in factor mode (pool plus query).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Vec<FactorBounds>>,
    /// Candidates dropped because a selected factor was undefined.
    pub skipped_candidates: usize,
    pub evaluated_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecommendError {
    #[error("speech `{0}` not found")]
    NotFound(String),
    #[error(transparent)]
    Range(#[from] RangeError),
    #[error("no candidates remain to rank")]
    EmptyCandidates,
    #[error("factor `{0}` is undefined on the query span")]
    UndefinedFactor(FactorId),
    #[error("factor mode needs at least one selected factor")]
    NoFactorsSelected,
    #[error("speech has no sentences to embed")]
    EmptyScript,
    #[error("k must be >= 1")]
    InvalidK,
}

/// Duration-weighted mean of the embeddings of every sentence in a speech.
pub fn speech_script_vector(bundle: &FeatureBundle) -> Result<Vec<f64>, RecommendError> {
    weighted_embedding(bundle.script.sentences.iter().map(|s| (s.duration(), s.embedding.as_slice())))
}

/// Mean embedding of the sentences overlapping a span, weighted by the
/// duration of each overlap.
pub fn span_script_vector(view: &BundleView<'_>) -> Result<Vec<f64>, RecommendError> {
    let (lo, hi) = (view.start_s(), view.end_s());
    let full = view.start_s() <= 0.0 && view.end_s() >= view.bundle().meta.duration_s;
    weighted_embedding(view.sentences().map(|(_, s)| {
        let w = if full {
            s.duration()
        } else {
            (s.end_s.min(hi) - s.start_s.max(lo)).max(0.0)
        };
        (w, s.embedding.as_slice())
    }))
}

fn weighted_embedding<'a>(items: impl Iterator<Item = (f64, &'a [f64])>) -> Result<Vec<f64>, RecommendError> {
    let mut acc = vec![0.0; EMBEDDING_DIM];
    let mut total = 0.0;
    let mut any = false;
    for (w, e) in items {
        any = true;
        total += w;
        for (a, x) in acc.iter_mut().zip(e) {
            *a += w * x;
        }
    }
    if !any || total <= 0.0 {
        return Err(RecommendError::EmptyScript);
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(acc)
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`; identical vectors give exactly 0.
pub fn script_distance(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    cosine_distance(a, b).clamp(0.0, 2.0)
}

pub fn factor_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Min-max bounds of each selected factor over the pool plus the query.
/// Every vector must define every selected factor.
pub fn factor_bounds(selected: &[FactorId], query: &FactorVector, pool: &[&FactorVector]) -> Result<Vec<FactorBounds>, RecommendError> {
    selected
        .iter()
        .map(|f| {
            let q = query.value(*f).ok_or(RecommendError::UndefinedFactor(*f))?;
            let (mut min, mut max) = (q, q);
            for v in pool {
                let x = v.value(*f).ok_or(RecommendError::UndefinedFactor(*f))?;
                min = min.min(x);
                max = max.max(x);
            }
            Ok(FactorBounds { factor: *f, min, max })
        })
        .collect()
}

/// Normalized vector of the selected factors; a factor with `max == min`
/// maps to 0.5.
pub fn normalize_factors(v: &FactorVector, bounds: &[FactorBounds]) -> Option<Vec<f64>> {
    bounds
        .iter()
        .map(|b| {
            let x = v.value(b.factor)?;
            Some(if b.max > b.min { (x - b.min) / (b.max - b.min) } else { 0.5 })
        })
        .collect()
}

/// Normalized query, normalized pool and the bounds used.
pub type NormalizedVectors = (Vec<f64>, Vec<Vec<f64>>, Vec<FactorBounds>);

/// Min-max normalization of a query and pool over the selected factors.
pub fn build_factor_vectors(
    selected: &[FactorId],
    query: &FactorVector,
    pool: &[&FactorVector],
) -> Result<NormalizedVectors, RecommendError> {
    let bounds = factor_bounds(selected, query, pool)?;
    let q = normalize_factors(query, &bounds).expect("bounds checked definedness");
    let p = pool
        .iter()
        .map(|v| normalize_factors(v, &bounds).expect("bounds checked definedness"))
        .collect();
    Ok((q, p, bounds))
}

struct Item<'a> {
    record: &'a SpeechRecord,
    sentence: Option<usize>,
}

impl Item<'_> {
    fn factors(&self) -> &FactorVector {
        match self.sentence {
            Some(i) => &self.record.sentence_factors[i],
            None => &self.record.factors,
        }
    }

    fn span(&self) -> (f64, f64) {
        match self.sentence {
            Some(i) => {
                let s = &self.record.bundle.script.sentences[i];
                (s.start_s, s.end_s)
            }
            None => (0.0, self.record.meta().duration_s),
        }
    }
}

/// Heap entry ordered so the heap top is the worst kept candidate.
struct Ranked {
    distance: f64,
    index: usize,
    farthest_first: bool,
}

impl Ranked {
    /// `Less` means `self` ranks ahead of `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        let by_distance = self.distance.total_cmp(&other.distance);
        let by_distance = if self.farthest_first { by_distance.reverse() } else { by_distance };
        by_distance.then(self.index.cmp(&other.index))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

/// The `k` best `(distance, index)` pairs, best first; ties go to the lower index.
pub fn top_k(distances: impl IntoIterator<Item = (usize, f64)>, k: usize, direction: Direction) -> Vec<(usize, f64)> {
    let farthest_first = direction == Direction::MostDifferent;
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for (index, distance) in distances {
        heap.push(Ranked {
            distance,
            index,
            farthest_first,
        });
        if heap.len() > k {
            heap.pop();
        }
    }
    heap.into_sorted_vec().into_iter().map(|r| (r.index, r.distance)).collect()
}

/// Runs a query whose speech is part of `corpus`.
pub fn recommend(query: &RecommendationQuery, corpus: &[Arc<SpeechRecord>]) -> Result<RecommendationResult, RecommendError> {
    let record = corpus
        .iter()
        .find(|r| r.id() == query.speech_id)
        .ok_or_else(|| RecommendError::NotFound(query.speech_id.clone()))?;
    recommend_for(record, query, corpus)
}

/// Runs a query against `corpus` for an explicit query record.
pub fn recommend_for(
    record: &SpeechRecord,
    query: &RecommendationQuery,
    corpus: &[Arc<SpeechRecord>],
) -> Result<RecommendationResult, RecommendError> {
    if query.k == 0 {
        return Err(RecommendError::InvalidK);
    }
    let bundle = &record.bundle;
    let whole = query.start_s.is_none() && query.end_s.is_none();
    let view = bundle.slice(
        query.start_s.unwrap_or(0.0),
        query.end_s.unwrap_or(bundle.meta.duration_s),
    )?;
    let (span_lo, span_hi) = (view.start_s(), view.end_s());

    let mut items = Vec::new();
    for r in corpus {
        let own = r.id() == record.id();
        match query.granularity {
            Granularity::Speech => {
                if !own || query.include_self {
                    items.push(Item { record: r, sentence: None });
                }
            }
            Granularity::Sentence => {
                for (i, s) in r.bundle.script.sentences.iter().enumerate() {
                    let overlaps = s.start_s < span_hi && s.end_s > span_lo;
                    if !own || query.include_self || !(whole || overlaps) {
                        items.push(Item { record: r, sentence: Some(i) });
                    }
                }
            }
        }
    }

    let mut skipped = 0;
    let mut normalization = None;
    let (kept, distances): (Vec<&Item>, Vec<f64>) = match query.mode {
        Mode::Factor => {
            if query.factors.is_empty() {
                return Err(RecommendError::NoFactorsSelected);
            }
            let owned;
            let qv = if whole {
                &record.factors
            } else {
                owned = compute_factors(&view);
                &owned
            };
            if let Some(f) = query.factors.iter().find(|f| qv.value(**f).is_none()) {
                return Err(RecommendError::UndefinedFactor(*f));
            }
            let kept: Vec<&Item> = items
                .iter()
                .filter(|it| {
                    let ok = query.factors.iter().all(|f| it.factors().value(*f).is_some());
                    skipped += usize::from(!ok);
                    ok
                })
                .collect();
            if kept.is_empty() {
                return Err(RecommendError::EmptyCandidates);
            }
            let pool: Vec<&FactorVector> = kept.iter().map(|it| it.factors()).collect();
            let (q, p, bounds) = build_factor_vectors(&query.factors, qv, &pool)?;
            normalization = Some(bounds);
            let d = p.iter().map(|v| factor_distance(&q, v)).collect();
            (kept, d)
        }
        Mode::Script => {
            let q = if whole {
                speech_script_vector(bundle)?
            } else {
                span_script_vector(&view)?
            };
            if items.is_empty() {
                return Err(RecommendError::EmptyCandidates);
            }
            let mut kept = Vec::with_capacity(items.len());
            let mut d = Vec::with_capacity(items.len());
            for it in &items {
                let v = match it.sentence {
                    Some(i) => Some(it.record.bundle.script.sentences[i].embedding.clone()),
                    None => speech_script_vector(&it.record.bundle).ok(),
                };
                match v {
                    Some(v) => {
                        d.push(script_distance(&q, &v));
                        kept.push(it);
                    }
                    None => skipped += 1,
                }
            }
            if kept.is_empty() {
                return Err(RecommendError::EmptyCandidates);
            }
            (kept, d)
        }
    };

    let ranked = top_k(distances.iter().copied().enumerate(), query.k, query.direction);
    let candidates = ranked
        .into_iter()
        .map(|(i, distance)| {
            let it = kept[i];
            let (start_s, end_s) = it.span();
            Candidate {
                speech_id: it.record.id().to_string(),
                sentence_index: it.sentence,
                start_s,
                end_s,
                distance,
            }
        })
        .collect();
    Ok(RecommendationResult {
        granularity: query.granularity,
        mode: query.mode,
        direction: query.direction,
        k: query.k,
        candidates,
        normalization,
        skipped_candidates: skipped,
        evaluated_candidates: kept.len(),
    })
}
