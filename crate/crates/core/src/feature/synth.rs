//! Seeded synthetic bundle generator.
//!
//! Stands in for the video extraction stage: produces plausible, gappy
//! multimodal tracks whose statistics are controlled by a [`SynthProfile`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    count_syllables, AudioTrack, FeatureBundle, FrameTrack, Pose, ScriptTrack, Sentence,
    SpeechMeta, Word, EMBEDDING_DIM, JOINT_COUNT, LEVEL_RANGE,
};

/// A scalar channel: `base + drift walk + white noise`.
/// With `noise = drift = 0` the channel is exactly `base` on every sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub base: f64,
    pub noise: f64,
    pub drift: f64,
}

impl ChannelProfile {
    pub const fn new(base: f64, noise: f64, drift: f64) -> Self {
        ChannelProfile { base, noise, drift }
    }

    pub const fn constant(base: f64) -> Self {
        ChannelProfile { base, noise: 0.0, drift: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthProfile {
    pub speech_id: Option<String>,
    pub duration_s: f64,
    pub fps: f64,
    pub audio_hop_s: f64,
    pub sentence_count: usize,
    /// Fixed contest level; drawn uniformly when absent.
    pub level: Option<u8>,
    /// Shifts valence and arousal means with the level, so that fitted
    /// models find a signal. Zero leaves the channels level-independent.
    pub level_effect: f64,
    pub valence: ChannelProfile,
    pub arousal: ChannelProfile,
    pub head_cam_dist: ChannelProfile,
    pub intensity_db: ChannelProfile,
    pub pitch_hz: ChannelProfile,
    /// Standard deviation (radians) of gaze yaw/pitch around the camera axis.
    pub gaze_spread: f64,
    pub gaze_drift: f64,
    pub bbox_drift: f64,
    pub gesture_amplitude: f64,
    pub gesture_templates: usize,
    pub gesture_switch_prob: f64,
    pub emotion_weights: [f64; 7],
    pub emotion_switch_prob: f64,
    pub face_dropout: f64,
    pub body_dropout: f64,
    pub unvoiced_rate: f64,
    /// Loudness drop between words, in dB.
    pub pause_attenuation_db: f64,
    pub mean_word_s: f64,
    /// Emit words without syllable counts, exercising the fallback counter.
    pub omit_syllables: bool,
}

impl Default for SynthProfile {
    fn default() -> Self {
        SynthProfile {
            speech_id: None,
            duration_s: 40.0,
            fps: 10.0,
            audio_hop_s: 0.05,
            sentence_count: 6,
            level: None,
            level_effect: 0.0,
            valence: ChannelProfile::new(0.15, 0.08, 0.03),
            arousal: ChannelProfile::new(0.2, 0.08, 0.03),
            head_cam_dist: ChannelProfile::new(1.8, 0.02, 0.01),
            intensity_db: ChannelProfile::new(62.0, 2.5, 0.4),
            pitch_hz: ChannelProfile::new(140.0, 12.0, 2.0),
            gaze_spread: 0.08,
            gaze_drift: 0.01,
            bbox_drift: 0.004,
            gesture_amplitude: 0.04,
            gesture_templates: 4,
            gesture_switch_prob: 0.03,
            emotion_weights: [0.55, 0.2, 0.05, 0.08, 0.04, 0.03, 0.05],
            emotion_switch_prob: 0.05,
            face_dropout: 0.03,
            body_dropout: 0.02,
            unvoiced_rate: 0.25,
            pause_attenuation_db: 15.0,
            mean_word_s: 0.35,
            omit_syllables: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid synth profile field `{field}`: {reason}")]
pub struct ProfileError {
    pub field: &'static str,
    pub reason: String,
}

impl SynthProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |field, reason: &str| {
            Err(ProfileError {
                field,
                reason: reason.to_string(),
            })
        };
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !pos(self.duration_s) || self.duration_s > 4.0 * 3600.0 {
            return bad("duration_s", "must be in (0, 14400]");
        }
        if !pos(self.fps) || self.fps > 240.0 {
            return bad("fps", "must be in (0, 240]");
        }
        if !pos(self.audio_hop_s) {
            return bad("audio_hop_s", "must be > 0");
        }
        if self.sentence_count as f64 * 0.5 > self.duration_s {
            return bad("sentence_count", "sentences need at least 0.5 s each");
        }
        if let Some(l) = self.level {
            if !LEVEL_RANGE.contains(&l) {
                return bad("level", "must be in 1..=6");
            }
        }
        if matches!(&self.speech_id, Some(s) if s.is_empty()) {
            return bad("speech_id", "must not be empty");
        }
        for (field, c) in [
            ("valence", self.valence),
            ("arousal", self.arousal),
            ("head_cam_dist", self.head_cam_dist),
            ("intensity_db", self.intensity_db),
            ("pitch_hz", self.pitch_hz),
        ] {
            if !(c.base.is_finite() && c.noise >= 0.0 && c.drift >= 0.0) {
                return bad(field, "base must be finite, noise and drift >= 0");
            }
        }
        if !(self.valence.base.abs() <= 1.0 && self.arousal.base.abs() <= 1.0) {
            return bad("valence", "valence and arousal bases must lie in [-1, 1]");
        }
        if self.pitch_hz.base <= 0.0 || self.head_cam_dist.base < 0.0 {
            return bad("pitch_hz", "pitch base must be > 0 and distance base >= 0");
        }
        for (field, v) in [
            ("gaze_spread", self.gaze_spread),
            ("gaze_drift", self.gaze_drift),
            ("bbox_drift", self.bbox_drift),
            ("gesture_amplitude", self.gesture_amplitude),
            ("level_effect", self.level_effect),
            ("pause_attenuation_db", self.pause_attenuation_db),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, "must be finite and >= 0");
            }
        }
        for (field, v) in [
            ("gesture_switch_prob", self.gesture_switch_prob),
            ("emotion_switch_prob", self.emotion_switch_prob),
            ("face_dropout", self.face_dropout),
            ("body_dropout", self.body_dropout),
            ("unvoiced_rate", self.unvoiced_rate),
        ] {
            if !prob(v) {
                return bad(field, "must be a probability");
            }
        }
        if self.gesture_templates == 0 {
            return bad("gesture_templates", "must be >= 1");
        }
        if self.emotion_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.emotion_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("emotion_weights", "must be nonnegative with a positive sum");
        }
        if !pos(self.mean_word_s) {
            return bad("mean_word_s", "must be > 0");
        }
        Ok(())
    }
}

/// Standing upper-body pose relative to the bounding-box center, Human3.6M order.
const REST_POSE: Pose = [
    [0.0, 0.20],
    [-0.05, 0.20],
    [-0.05, 0.35],
    [-0.05, 0.50],
    [0.05, 0.20],
    [0.05, 0.35],
    [0.05, 0.50],
    [0.0, 0.08],
    [0.0, -0.05],
    [0.0, -0.10],
    [0.0, -0.16],
    [0.08, -0.05],
    [0.10, 0.05],
    [0.10, 0.14],
    [-0.08, -0.05],
    [-0.10, 0.05],
    [-0.10, 0.14],
];

const ARM_JOINTS: [usize; 4] = [12, 13, 15, 16];

const VOCABULARY: &[&str] = &[
    "today", "I", "want", "to", "tell", "you", "a", "story", "about", "courage", "my",
    "grandmother", "believed", "every", "moment", "matters", "and", "we", "can", "change",
    "the", "world", "imagine", "standing", "on", "stage", "with", "nothing", "but", "hope",
    "listen", "remember", "friends", "beautiful", "opportunity", "never", "give", "up",
];

struct Walk {
    profile: ChannelProfile,
    state: f64,
    step: f64,
}

impl Walk {
    fn new(profile: ChannelProfile, dt: f64) -> Self {
        Walk {
            profile,
            state: 0.0,
            step: dt.sqrt(),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.profile.drift == 0.0 && self.profile.noise == 0.0 {
            return self.profile.base;
        }
        let d: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        self.state = 0.98 * self.state + self.profile.drift * self.step * d;
        self.profile.base + self.state + self.profile.noise * e
    }
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Generates a valid bundle; identical `(seed, profile)` pairs produce
/// identical bundles.
pub fn synth_bundle(seed: u64, profile: &SynthProfile) -> Result<FeatureBundle, ProfileError> {
    profile.validate()?;
    let p = profile;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let level = p.level.unwrap_or_else(|| rng.random_range(LEVEL_RANGE));
    let shift = p.level_effect * (f64::from(level) - 3.5) / 2.5;
    let meta = SpeechMeta {
        speech_id: p.speech_id.clone().unwrap_or_else(|| format!("synth-{seed}")),
        title: format!("Synthetic speech {seed}"),
        year: 2016 + (seed % 7) as i32,
        region: format!("District {}", seed % 100),
        level,
        rank: Some(rng.random_range(1..=3)),
        online: true,
        fps: p.fps,
        duration_s: p.duration_s,
        media_url: None,
    };

    let script = synth_script(&mut rng, p);
    let frames = synth_frames(&mut rng, p, shift);
    let audio = synth_audio(&mut rng, p, &script);

    Ok(FeatureBundle {
        meta,
        frames,
        audio,
        script,
    })
}

fn synth_frames(rng: &mut ChaCha8Rng, p: &SynthProfile, shift: f64) -> FrameTrack {
    let dt = 1.0 / p.fps;
    let timestamps: Vec<f64> = (0..)
        .map(|i| i as f64 / p.fps)
        .take_while(|t| *t < p.duration_s)
        .collect();
    let n = timestamps.len();

    let shifted = |c: ChannelProfile| ChannelProfile {
        base: (c.base + shift).clamp(-1.0, 1.0),
        ..c
    };
    let mut valence = Walk::new(shifted(p.valence), dt);
    let mut arousal = Walk::new(shifted(p.arousal), dt);
    let mut dist = Walk::new(p.head_cam_dist, dt);

    let templates: Vec<Vec<[f64; 2]>> = (0..p.gesture_templates)
        .map(|_| {
            ARM_JOINTS
                .iter()
                .map(|_| {
                    [
                        gaussian(rng) * p.gesture_amplitude * 2.0,
                        gaussian(rng) * p.gesture_amplitude * 2.0,
                    ]
                })
                .collect()
        })
        .collect();

    let mut track = FrameTrack {
        timestamps_s: timestamps,
        ..FrameTrack::default()
    };
    let mut emotion = pick_weighted(rng, &p.emotion_weights);
    let mut template = 0usize;
    let (mut yaw_w, mut pitch_w) = (0.0f64, 0.0f64);
    let mut center = [0.5f64, 0.55f64];

    for _ in 0..n {
        if rng.random::<f64>() < p.emotion_switch_prob {
            emotion = pick_weighted(rng, &p.emotion_weights);
        }
        if rng.random::<f64>() < p.gesture_switch_prob {
            template = rng.random_range(0..p.gesture_templates);
        }
        let face_ok = rng.random::<f64>() >= p.face_dropout;
        let body_ok = rng.random::<f64>() >= p.body_dropout;

        let v = valence.next(rng).clamp(-1.0, 1.0);
        let a = arousal.next(rng).clamp(-1.0, 1.0);
        let d = dist.next(rng).max(0.0);
        yaw_w = 0.97 * yaw_w + p.gaze_drift * gaussian(rng);
        pitch_w = 0.97 * pitch_w + p.gaze_drift * gaussian(rng);
        let yaw = yaw_w + p.gaze_spread * gaussian(rng);
        let pitch = pitch_w + 0.5 * p.gaze_spread * gaussian(rng);
        for c in center.iter_mut() {
            *c = (*c + p.bbox_drift * gaussian(rng)).clamp(0.2, 0.8);
        }
        let jitter: Vec<[f64; 2]> = (0..JOINT_COUNT)
            .map(|_| {
                [
                    gaussian(rng) * p.gesture_amplitude * 0.1,
                    gaussian(rng) * p.gesture_amplitude * 0.1,
                ]
            })
            .collect();

        if face_ok {
            let dir = [yaw.sin() * pitch.cos(), pitch.sin(), yaw.cos() * pitch.cos()];
            let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            let dir = [dir[0] / norm, dir[1] / norm, dir[2] / norm];
            track.valence.push(Some(v));
            track.arousal.push(Some(a));
            track.emotion.push(Some(emotion as u8));
            track.gaze_dir.push(Some(dir));
            track.gaze_angles.push(Some([yaw, pitch]));
            track
                .camera_angle_deg
                .push(Some(dir[2].clamp(-1.0, 1.0).acos().to_degrees()));
            track.head_cam_dist.push(Some(d));
        } else {
            track.valence.push(None);
            track.arousal.push(None);
            track.emotion.push(None);
            track.gaze_dir.push(None);
            track.gaze_angles.push(None);
            track.camera_angle_deg.push(None);
            track.head_cam_dist.push(None);
        }

        if body_ok {
            let mut pose = REST_POSE;
            for (slot, j) in ARM_JOINTS.iter().enumerate() {
                pose[*j][0] += templates[template][slot][0];
                pose[*j][1] += templates[template][slot][1];
            }
            for (kp, jit) in pose.iter_mut().zip(&jitter) {
                kp[0] += center[0] + jit[0];
                kp[1] += center[1] + jit[1];
            }
            track.bbox_center.push(Some(center));
            track.keypoints.push(Some(pose));
        } else {
            track.bbox_center.push(None);
            track.keypoints.push(None);
        }
    }
    track
}

fn synth_script(rng: &mut ChaCha8Rng, p: &SynthProfile) -> ScriptTrack {
    let topic: Vec<f64> = (0..EMBEDDING_DIM).map(|_| gaussian(rng)).collect();
    let count = p.sentence_count;
    let mut sentences = Vec::with_capacity(count);
    if count == 0 {
        return ScriptTrack { sentences };
    }
    let slot = p.duration_s / count as f64;
    for s in 0..count {
        let slot_start = s as f64 * slot;
        let lead = slot * rng.random_range(0.03..0.12);
        let tail = slot * rng.random_range(0.03..0.12);
        let start = slot_start + lead;
        let end = slot_start + slot - tail;

        let n_words = ((end - start) / p.mean_word_s).round().max(1.0) as usize;
        let weights: Vec<f64> = (0..n_words).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = weights.iter().sum();
        let mut words = Vec::with_capacity(n_words);
        let mut cursor = start;
        let mut text = Vec::with_capacity(n_words);
        for w in &weights {
            let share = (end - start) * w / total;
            let gap = share * rng.random_range(0.0..0.3);
            let word_start = cursor;
            let word_end = (cursor + share - gap).min(end);
            let token = VOCABULARY[rng.random_range(0..VOCABULARY.len())];
            text.push(token);
            words.push(Word {
                word: token.to_string(),
                start_s: word_start,
                end_s: word_end.max(word_start),
                syllables: (!p.omit_syllables).then(|| count_syllables(token)),
            });
            cursor += share;
        }
        let mut embedding: Vec<f64> = topic
            .iter()
            .map(|t| t + 0.7 * gaussian(rng))
            .collect();
        let norm = embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        embedding.iter_mut().for_each(|x| *x /= norm);
        sentences.push(Sentence {
            text: text.join(" "),
            start_s: start,
            end_s: end,
            embedding,
            words,
        });
    }
    ScriptTrack { sentences }
}

fn synth_audio(rng: &mut ChaCha8Rng, p: &SynthProfile, script: &ScriptTrack) -> AudioTrack {
    let mut loud = Walk::new(p.intensity_db, p.audio_hop_s);
    let mut pitch = Walk::new(p.pitch_hz, p.audio_hop_s);
    let n = (0..)
        .map(|i| i as f64 * p.audio_hop_s)
        .take_while(|t| *t < p.duration_s)
        .count();
    let words: Vec<(f64, f64)> = script
        .sentences
        .iter()
        .flat_map(|s| s.words.iter().map(|w| (w.start_s, w.end_s)))
        .collect();
    let mut intensity_db = Vec::with_capacity(n);
    let mut pitch_hz = Vec::with_capacity(n);
    let mut cursor = 0;
    for i in 0..n {
        let t = i as f64 * p.audio_hop_s;
        while cursor < words.len() && words[cursor].1 <= t {
            cursor += 1;
        }
        let speaking = cursor < words.len() && words[cursor].0 <= t;
        let level = loud.next(rng);
        let f0 = pitch.next(rng).max(40.0);
        let unvoiced = rng.random::<f64>() < p.unvoiced_rate;
        if speaking {
            intensity_db.push(Some(level));
            pitch_hz.push((!unvoiced).then_some(f0));
        } else {
            intensity_db.push(Some(level - p.pause_attenuation_db));
            pitch_hz.push(None);
        }
    }
    AudioTrack {
        hop_s: p.audio_hop_s,
        intensity_db,
        pitch_hz,
    }
}
