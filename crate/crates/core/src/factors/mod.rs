//! The 23 presentation-technique factors and the statistics behind them.

mod compute;
mod gesture;
mod stats;

pub use compute::{compute_factors, compute_factors_with, DiversityFormula, FactorConfig};
pub use gesture::{gesture_diversity, gesture_energy_series, MassTable, SegmentMass};
pub use stats::{
    average, dispersion, dispersion_2d, emotion_diversity, emotion_entropy, volatility,
    volatility_2d, watching_camera_ratio, StatError, DEGENERATE_MEAN_EPS,
};

use std::fmt;
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    FacialExpression,
    EyeContact,
    UseOfStage,
    BodyGesture,
    Voice,
    Pace,
}

impl Technique {
    pub const ALL: [Technique; 6] = [
        Technique::FacialExpression,
        Technique::EyeContact,
        Technique::UseOfStage,
        Technique::BodyGesture,
        Technique::Voice,
        Technique::Pace,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Technique::FacialExpression => "Facial Expression",
            Technique::EyeContact => "Eye Contact",
            Technique::UseOfStage => "Use of Stage",
            Technique::BodyGesture => "Body Gesture",
            Technique::Voice => "Voice",
            Technique::Pace => "Pace",
        }
    }

    pub fn factors(self) -> impl Iterator<Item = FactorId> {
        FactorId::ALL.into_iter().filter(move |f| f.technique() == self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Average,
    Volatility,
    Dispersion,
    Ratio,
    Diversity,
}

impl Statistic {
    pub fn label(self) -> &'static str {
        match self {
            Statistic::Average => "Average",
            Statistic::Volatility => "Volatility",
            Statistic::Dispersion => "Dispersion",
            Statistic::Ratio => "Ratio",
            Statistic::Diversity => "Diversity",
        }
    }
}

macro_rules! factor_ids {
    ($( $variant:ident => ($id:literal, $tech:ident, $feature:literal, $stat:ident) ),* $(,)?) => {
        /// One row of the factor table. Discriminants are the row order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum FactorId { $( $variant ),* }

        impl FactorId {
            pub const ALL: [FactorId; 23] = [ $( FactorId::$variant ),* ];

            /// Stable serialized id, e.g. `face.valence.average`.
            pub fn as_str(self) -> &'static str {
                match self { $( FactorId::$variant => $id ),* }
            }

            pub fn technique(self) -> Technique {
                match self { $( FactorId::$variant => Technique::$tech ),* }
            }

            pub fn feature(self) -> &'static str {
                match self { $( FactorId::$variant => $feature ),* }
            }

            pub fn statistic(self) -> Statistic {
                match self { $( FactorId::$variant => Statistic::$stat ),* }
            }
        }
    };
}

factor_ids! {
    EmotionDiversity => ("face.type.diversity", FacialExpression, "Type", Diversity),
    ValenceVolatility => ("face.valence.volatility", FacialExpression, "Valence", Volatility),
    ValenceAverage => ("face.valence.average", FacialExpression, "Valence", Average),
    ArousalVolatility => ("face.arousal.volatility", FacialExpression, "Arousal", Volatility),
    ArousalAverage => ("face.arousal.average", FacialExpression, "Arousal", Average),
    GazeVolatility => ("eye.gaze_direction.volatility", EyeContact, "Gaze Direction", Volatility),
    GazeDispersion => ("eye.gaze_direction.dispersion", EyeContact, "Gaze Direction", Dispersion),
    WatchingCameraRatio => ("eye.watching_camera.ratio", EyeContact, "Watching Camera", Ratio),
    CameraDistanceVolatility => ("stage.camera_distance.volatility", UseOfStage, "Distance from Camera", Volatility),
    CameraDistanceDispersion => ("stage.camera_distance.dispersion", UseOfStage, "Distance from Camera", Dispersion),
    FramePositionVolatility => ("stage.frame_position.volatility", UseOfStage, "Position in Frame", Volatility),
    FramePositionDispersion => ("stage.frame_position.dispersion", UseOfStage, "Position in Frame", Dispersion),
    GestureEnergyVolatility => ("gesture.energy.volatility", BodyGesture, "Gesture Energy", Volatility),
    GestureEnergyAverage => ("gesture.energy.average", BodyGesture, "Gesture Energy", Average),
    GestureDiversity => ("gesture.diversity.diversity", BodyGesture, "Gesture Diversity", Diversity),
    VolumeVolatility => ("voice.volume.volatility", Voice, "Volume", Volatility),
    VolumeAverage => ("voice.volume.average", Voice, "Volume", Average),
    PitchVolatility => ("voice.pitch.volatility", Voice, "Pitch", Volatility),
    PitchAverage => ("voice.pitch.average", Voice, "Pitch", Average),
    SpeakingRateVolatility => ("pace.speaking_rate.volatility", Pace, "Speaking Rate", Volatility),
    SpeakingRateAverage => ("pace.speaking_rate.average", Pace, "Speaking Rate", Average),
    PausesVolatility => ("pace.pauses.volatility", Pace, "Pauses", Volatility),
    PausesAverage => ("pace.pauses.average", Pace, "Pauses", Average),
}

impl FactorId {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FactorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown factor id `{0}`")]
pub struct UnknownFactor(pub String);

impl FromStr for FactorId {
    type Err = UnknownFactor;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FactorId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| UnknownFactor(s.to_string()))
    }
}

impl Serialize for FactorId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for FactorId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// A factor's value (`None` when the span has too little data) and the
/// fraction of non-missing input it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorValue {
    pub value: Option<f64>,
    pub coverage: f64,
}

impl FactorValue {
    pub const UNDEFINED: FactorValue = FactorValue {
        value: None,
        coverage: 0.0,
    };
}

/// All 23 factor values of one span. Serializes as a flat JSON object keyed
/// by factor id, in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorVector {
    entries: [FactorValue; 23],
}

impl Default for FactorVector {
    fn default() -> Self {
        FactorVector {
            entries: [FactorValue::UNDEFINED; 23],
        }
    }
}

impl FactorVector {
    pub fn get(&self, f: FactorId) -> FactorValue {
        self.entries[f.index()]
    }

    pub fn value(&self, f: FactorId) -> Option<f64> {
        self.entries[f.index()].value
    }

    pub fn set(&mut self, f: FactorId, v: FactorValue) {
        self.entries[f.index()] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (FactorId, FactorValue)> + '_ {
        FactorId::ALL.into_iter().map(|f| (f, self.entries[f.index()]))
    }
}

impl Serialize for FactorVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(23))?;
        for (f, v) in self.iter() {
            map.serialize_entry(f.as_str(), &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FactorVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FactorVector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object with one entry per factor id")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<FactorVector, A::Error> {
                let mut seen = [false; 23];
                let mut out = FactorVector::default();
                while let Some(key) = map.next_key::<FactorId>()? {
                    if seen[key.index()] {
                        return Err(de::Error::custom(format!("duplicate factor `{key}`")));
                    }
                    seen[key.index()] = true;
                    out.set(key, map.next_value()?);
                }
                if let Some(i) = seen.iter().position(|s| !s) {
                    return Err(de::Error::custom(format!(
                        "missing factor `{}`",
                        FactorId::ALL[i]
                    )));
                }
                Ok(out)
            }
        }
        d.deserialize_map(V)
    }
}
