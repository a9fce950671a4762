use std::collections::HashSet;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::{
    curve_with, evaluate, CurvePoint, EffectivenessError, EffectivenessScore, FactorCoefficients,
    CLASS_COUNT, SIGNIFICANCE_LEVEL, THRESHOLD_COUNT,
};
use crate::factors::{FactorId, FactorVector};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

const REFERENCE_MODEL: &str = include_str!("../../data/reference_model.json");

/// Scale on which a model's coefficients expect factor values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelInput {
    /// Values as computed by the factor engine.
    Raw,
    /// Values rescaled by the stored per-factor min and max.
    MinMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedCoefficients {
    pub coefficients: FactorCoefficients,
    /// Fit-corpus bounds; required for min-max models.
    pub normalization: Option<Normalization>,
    pub std_error: Option<f64>,
    /// Observations the fit used.
    pub n: Option<usize>,
}

impl FittedCoefficients {
    /// Slope and thresholds re-expressed on raw factor values.
    pub fn raw_coefficients(&self) -> FactorCoefficients {
        let c = self.coefficients;
        match self.normalization {
            None => c,
            Some(nm) => {
                let r = nm.max - nm.min;
                let mut b = c.b;
                for t in b.iter_mut() {
                    *t += c.w * nm.min / r;
                }
                FactorCoefficients { w: c.w / r, b, ..c }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorEntry {
    Fitted(FittedCoefficients),
    Unfitted { reason: String },
}

impl FactorEntry {
    pub fn fitted(&self) -> Option<&FittedCoefficients> {
        match self {
            FactorEntry::Fitted(f) => Some(f),
            FactorEntry::Unfitted { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model file: {path}: {message}")]
    Parse { path: String, message: String },
    #[error("model file: factor `{factor}`: {message}")]
    Invalid { factor: String, message: String },
}

/// Per-factor proportional-odds coefficients for all 23 factors.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessModel {
    pub source: String,
    pub input: ModelInput,
    /// How `p` was obtained, e.g. `wald` or `reported`.
    pub significance_test: String,
    entries: Vec<FactorEntry>,
}

impl EffectivenessModel {
    /// Builds a model, checking every entry.
    pub fn new(
        source: impl Into<String>,
        input: ModelInput,
        significance_test: impl Into<String>,
        entries: Vec<FactorEntry>,
    ) -> Result<Self, ModelError> {
        if entries.len() != FactorId::ALL.len() {
            return Err(ModelError::Parse {
                path: "factors".into(),
                message: format!("expected {} factors, got {}", FactorId::ALL.len(), entries.len()),
            });
        }
        for (f, e) in FactorId::ALL.iter().zip(&entries) {
            if let FactorEntry::Fitted(fc) = e {
                check_entry(*f, fc, input)?;
            }
        }
        Ok(EffectivenessModel {
            source: source.into(),
            input,
            significance_test: significance_test.into(),
            entries,
        })
    }

    /// The coefficient set shipped with the crate, evaluated on raw values.
    pub fn reference() -> Self {
        Self::from_json(REFERENCE_MODEL.as_bytes()).expect("shipped model file is valid")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ModelError> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let doc: ModelDoc = serde_path_to_error::deserialize(de).map_err(|e| ModelError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(ModelError::Parse {
                path: "schema_version".into(),
                message: format!("unsupported version {}", doc.schema_version),
            });
        }
        if doc.class_count != CLASS_COUNT {
            return Err(ModelError::Parse {
                path: "class_count".into(),
                message: format!("must be {CLASS_COUNT}"),
            });
        }
        let mut slots: Vec<Option<FactorEntry>> = vec![None; FactorId::ALL.len()];
        for (f, e) in doc.factors.0 {
            slots[f.index()] = Some(match e {
                EntryDoc::Fitted(d) => FactorEntry::Fitted(FittedCoefficients {
                    coefficients: FactorCoefficients {
                        factor: f,
                        w: d.w,
                        b: d.b,
                        p_value: d.p,
                        significant: d.significant,
                    },
                    normalization: match (d.min, d.max) {
                        (Some(min), Some(max)) => Some(Normalization { min, max }),
                        (None, None) => None,
                        _ => {
                            return Err(ModelError::Invalid {
                                factor: f.to_string(),
                                message: "min and max must both be set or both be null".into(),
                            })
                        }
                    },
                    std_error: d.std_error,
                    n: d.n,
                }),
                EntryDoc::Unfitted(u) => FactorEntry::Unfitted { reason: u.unfitted },
            });
        }
        let entries = slots.into_iter().map(|s| s.expect("completeness checked")).collect();
        Self::new(doc.source, doc.input, doc.significance_test, entries)
    }

    /// Pretty-printed model file, newline-terminated.
    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            schema_version: MODEL_SCHEMA_VERSION,
            source: self.source.clone(),
            input: self.input,
            significance_test: self.significance_test.clone(),
            class_count: CLASS_COUNT,
            factors: FactorsDoc(
                FactorId::ALL
                    .iter()
                    .zip(&self.entries)
                    .map(|(f, e)| (*f, EntryDoc::from_entry(e)))
                    .collect(),
            ),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn entry(&self, f: FactorId) -> &FactorEntry {
        &self.entries[f.index()]
    }

    pub fn entries(&self) -> impl Iterator<Item = (FactorId, &FactorEntry)> {
        FactorId::ALL.into_iter().zip(&self.entries)
    }

    pub fn coefficients(&self, f: FactorId) -> Option<&FactorCoefficients> {
        self.entry(f).fitted().map(|c| &c.coefficients)
    }

    pub fn is_significant(&self, f: FactorId) -> bool {
        self.coefficients(f).is_some_and(|c| c.significant)
    }

    pub fn significant_factors(&self) -> Vec<FactorId> {
        FactorId::ALL.into_iter().filter(|f| self.is_significant(*f)).collect()
    }

    /// Maps a raw factor value to the model's input scale.
    pub fn input_value(&self, f: FactorId, raw: f64) -> Option<f64> {
        let fc = self.entry(f).fitted()?;
        match (self.input, fc.normalization) {
            (ModelInput::MinMax, Some(nm)) => Some(nm.apply(raw)),
            (ModelInput::MinMax, None) => None,
            (ModelInput::Raw, _) => Some(raw),
        }
    }

    /// Scores a raw factor value; `None` for unfitted factors or non-finite input.
    pub fn score(&self, f: FactorId, raw: f64) -> Option<EffectivenessScore> {
        if !raw.is_finite() {
            return None;
        }
        let x = self.input_value(f, raw)?;
        Some(evaluate(self.coefficients(f)?, x))
    }

    /// Scores of every defined factor value, in table order.
    pub fn score_vector(&self, v: &FactorVector) -> Vec<(FactorId, Option<EffectivenessScore>)> {
        v.iter()
            .map(|(f, e)| (f, e.value.and_then(|x| self.score(f, x))))
            .collect()
    }

    /// Expected-class curve over raw values `[lo, hi]`.
    pub fn curve(
        &self,
        f: FactorId,
        lo: f64,
        hi: f64,
        n_points: usize,
    ) -> Result<Vec<CurvePoint>, EffectivenessError> {
        if self.coefficients(f).is_none() {
            return Err(EffectivenessError::InvalidArgument(format!("factor `{f}` is unfitted")));
        }
        curve_with(lo, hi, n_points, |x| {
            self.score(f, x).map_or(f64::NAN, |s| s.expected_class)
        })
    }
}

fn check_entry(f: FactorId, fc: &FittedCoefficients, input: ModelInput) -> Result<(), ModelError> {
    let bad = |message: &str| {
        Err(ModelError::Invalid {
            factor: f.to_string(),
            message: message.to_string(),
        })
    };
    let c = &fc.coefficients;
    if c.factor != f {
        return bad("entry is stored under the wrong factor");
    }
    if !c.w.is_finite() || c.b.iter().any(|b| !b.is_finite()) {
        return bad("coefficients must be finite");
    }
    if !c.thresholds_increasing() {
        return bad("thresholds must be strictly increasing");
    }
    if !(0.0..=1.0).contains(&c.p_value) {
        return bad("p must lie in [0, 1]");
    }
    if c.significant != (c.p_value < SIGNIFICANCE_LEVEL) {
        return bad("significant must equal p < 0.05");
    }
    match (input, fc.normalization) {
        (ModelInput::MinMax, None) => return bad("min-max models need min and max"),
        (_, Some(nm)) if !(nm.min.is_finite() && nm.max.is_finite() && nm.min < nm.max) => {
            return bad("min and max must be finite with min < max")
        }
        _ => {}
    }
    if matches!(fc.std_error, Some(se) if !(se.is_finite() && se > 0.0)) {
        return bad("std_error must be finite and > 0");
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema_version: u32,
    source: String,
    input: ModelInput,
    significance_test: String,
    class_count: usize,
    factors: FactorsDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EntryDoc {
    Fitted(FittedDoc),
    Unfitted(UnfittedDoc),
}

impl EntryDoc {
    fn from_entry(e: &FactorEntry) -> Self {
        match e {
            FactorEntry::Fitted(fc) => EntryDoc::Fitted(FittedDoc {
                w: fc.coefficients.w,
                b: fc.coefficients.b,
                p: fc.coefficients.p_value,
                significant: fc.coefficients.significant,
                min: fc.normalization.map(|n| n.min),
                max: fc.normalization.map(|n| n.max),
                std_error: fc.std_error,
                n: fc.n,
            }),
            FactorEntry::Unfitted { reason } => EntryDoc::Unfitted(UnfittedDoc {
                unfitted: reason.clone(),
            }),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FittedDoc {
    w: f64,
    b: [f64; THRESHOLD_COUNT],
    p: f64,
    significant: bool,
    min: Option<f64>,
    max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnfittedDoc {
    unfitted: String,
}

/// Factor-keyed map in table order; deserializing requires every factor once.
struct FactorsDoc(Vec<(FactorId, EntryDoc)>);

impl Serialize for FactorsDoc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (f, e) in &self.0 {
            map.serialize_entry(f.as_str(), e)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FactorsDoc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FactorsDoc;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object with one entry per factor id")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<FactorsDoc, A::Error> {
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                while let Some(key) = map.next_key::<FactorId>()? {
                    if !seen.insert(key) {
                        return Err(de::Error::custom(format!("duplicate factor `{key}`")));
                    }
                    out.push((key, map.next_value()?));
                }
                if let Some(missing) = FactorId::ALL.iter().find(|f| !seen.contains(f)) {
                    return Err(de::Error::custom(format!("missing factor `{missing}`")));
                }
                Ok(FactorsDoc(out))
            }
        }
        d.deserialize_map(V)
    }
}
