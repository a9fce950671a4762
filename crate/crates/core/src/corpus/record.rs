use std::sync::Arc;

use crate::factors::{compute_factors, FactorVector};
use crate::feature::{FeatureBundle, SpeechMeta};

/// A stored speech with its derived factor vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechRecord {
    pub bundle: Arc<FeatureBundle>,
    /// Factors over the whole speech.
    pub factors: FactorVector,
    /// Factors over each sentence's span, in script order.
    pub sentence_factors: Vec<FactorVector>,
}

impl SpeechRecord {
    pub fn from_bundle(bundle: impl Into<Arc<FeatureBundle>>) -> Self {
        let bundle = bundle.into();
        SpeechRecord {
            factors: compute_factors(&bundle.view()),
            sentence_factors: sentence_factor_vectors(&bundle),
            bundle,
        }
    }

    pub fn id(&self) -> &str {
        self.bundle.id()
    }

    pub fn meta(&self) -> &SpeechMeta {
        &self.bundle.meta
    }
}

/// Factors of every sentence span. Spans are clipped to the speech duration;
/// a sentence starting at or after the duration gets an all-undefined vector.
pub fn sentence_factor_vectors(bundle: &FeatureBundle) -> Vec<FactorVector> {
    let duration = bundle.meta.duration_s;
    bundle
        .script
        .sentences
        .iter()
        .map(|s| match bundle.slice(s.start_s, s.end_s.min(duration)) {
            Ok(view) => compute_factors(&view),
            Err(_) => FactorVector::default(),
        })
        .collect()
}
