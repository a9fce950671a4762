//! Multimodal feature bundles: the ingestion unit for one speech.
//!
//! A bundle carries per-frame visual tracks, a vocal track sampled at a fixed
//! hop, and a timestamped script. Detector dropouts are encoded as `None`
//! (JSON `null`) and every downstream statistic skips them.

mod load;
mod synth;
mod view;

pub use load::{load_bundle, serialize_bundle, validate, BundleError};
pub use synth::{synth_bundle, ChannelProfile, ProfileError, SynthProfile};
pub use view::{BundleView, RangeError};

use serde::{Deserialize, Serialize};

/// Only bundle schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Sentence embedding width produced by the upstream sentence encoder.
pub const EMBEDDING_DIM: usize = 512;

/// Number of keypoints per frame (Human3.6M layout).
pub const JOINT_COUNT: usize = 17;

/// Lowest and highest contest level (club = 1, world final = 6).
pub const LEVEL_RANGE: std::ops::RangeInclusive<u8> = 1..=6;

/// One frame's 2-D keypoints in normalized frame coordinates.
pub type Pose = [[f64; 2]; JOINT_COUNT];

/// The seven emotion categories, in the order used by bundle files and by
/// every proportion vector the engine emits. Neutral is always index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Neutral = 0,
    Happy = 1,
    Sad = 2,
    Surprise = 3,
    Fear = 4,
    Disgust = 5,
    Anger = 6,
}

impl Emotion {
    pub const COUNT: usize = 7;
    pub const ALL: [Emotion; 7] = [
        Emotion::Neutral,
        Emotion::Happy,
        Emotion::Sad,
        Emotion::Surprise,
        Emotion::Fear,
        Emotion::Disgust,
        Emotion::Anger,
    ];

    pub fn from_index(i: u8) -> Option<Emotion> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Neutral => "neutral",
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
            Emotion::Surprise => "surprise",
            Emotion::Fear => "fear",
            Emotion::Disgust => "disgust",
            Emotion::Anger => "anger",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeechMeta {
    pub speech_id: String,
    pub title: String,
    pub year: i32,
    pub region: String,
    /// Contest level, 1 (club) to 6 (world final). Used as the ordinal label.
    pub level: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u32>,
    pub online: bool,
    pub fps: f64,
    pub duration_s: f64,
    /// Where the UI can fetch the video from. Never served by the engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameTrack {
    pub timestamps_s: Vec<f64>,
    pub valence: Vec<Option<f64>>,
    pub arousal: Vec<Option<f64>>,
    /// Emotion category index, see [`Emotion`].
    pub emotion: Vec<Option<u8>>,
    pub gaze_dir: Vec<Option<[f64; 3]>>,
    /// (yaw, pitch) in radians.
    pub gaze_angles: Vec<Option<[f64; 2]>>,
    pub camera_angle_deg: Vec<Option<f64>>,
    pub head_cam_dist: Vec<Option<f64>>,
    pub bbox_center: Vec<Option<[f64; 2]>>,
    pub keypoints: Vec<Option<Pose>>,
}

impl FrameTrack {
    pub fn len(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_s.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioTrack {
    pub hop_s: f64,
    pub intensity_db: Vec<Option<f64>>,
    /// `None` on unvoiced samples.
    pub pitch_hz: Vec<Option<f64>>,
}

impl AudioTrack {
    pub fn len(&self) -> usize {
        self.intensity_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensity_db.is_empty()
    }

    /// Time of sample `i`; sample 0 sits at t = 0.
    pub fn time_of(&self, i: usize) -> f64 {
        i as f64 * self.hop_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Word {
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
    /// Precomputed syllable count. When absent, [`count_syllables`] is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syllables: Option<u32>,
}

impl Word {
    pub fn syllable_count(&self) -> u32 {
        self.syllables.unwrap_or_else(|| count_syllables(&self.word))
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sentence {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    pub embedding: Vec<f64>,
    pub words: Vec<Word>,
}

impl Sentence {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTrack {
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub meta: SpeechMeta,
    pub frames: FrameTrack,
    pub audio: AudioTrack,
    pub script: ScriptTrack,
}

impl FeatureBundle {
    /// View over the whole speech.
    pub fn view(&self) -> BundleView<'_> {
        BundleView::whole(self)
    }

    pub fn id(&self) -> &str {
        &self.meta.speech_id
    }
}

/// Vowel-group syllable counter: each maximal run of `aeiouy` counts once,
/// with a minimum of one syllable per word.
pub fn count_syllables(word: &str) -> u32 {
    let mut groups = 0;
    let mut in_group = false;
    for c in word.chars().flat_map(char::to_lowercase) {
        let vowel = matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
        if vowel && !in_group {
            groups += 1;
        }
        in_group = vowel;
    }
    groups.max(1)
}
