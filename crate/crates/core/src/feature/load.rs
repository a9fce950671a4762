use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    AudioTrack, FeatureBundle, FrameTrack, ScriptTrack, SpeechMeta, EMBEDDING_DIM, LEVEL_RANGE,
    SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundleError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated at `{path}`: {message}")]
    Invariant { path: String, message: String },
}

impl BundleError {
    pub fn path(&self) -> &str {
        match self {
            BundleError::Schema { path, .. } | BundleError::Invariant { path, .. } => path,
        }
    }

    fn invariant(path: impl Into<String>, message: impl Into<String>) -> Self {
        BundleError::Invariant {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document<M, F, A, S> {
    schema_version: u32,
    meta: M,
    frames: F,
    audio: A,
    script: S,
}

/// Parses and validates a bundle document.
pub fn load_bundle(raw: &[u8]) -> Result<FeatureBundle, BundleError> {
    let de = &mut serde_json::Deserializer::from_slice(raw);
    let doc: Document<SpeechMeta, FrameTrack, AudioTrack, ScriptTrack> =
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            BundleError::Schema {
                path: if path == "." { String::new() } else { path },
                message: e.into_inner().to_string(),
            }
        })?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(BundleError::Schema {
            path: "schema_version".into(),
            message: format!("unsupported version {}, expected {SCHEMA_VERSION}", doc.schema_version),
        });
    }
    let bundle = FeatureBundle {
        meta: doc.meta,
        frames: doc.frames,
        audio: doc.audio,
        script: doc.script,
    };
    validate(&bundle)?;
    Ok(bundle)
}

/// Canonical serialization; the content hash of the corpus store is taken
/// over these bytes.
pub fn serialize_bundle(bundle: &FeatureBundle) -> Vec<u8> {
    let doc = Document {
        schema_version: SCHEMA_VERSION,
        meta: &bundle.meta,
        frames: &bundle.frames,
        audio: &bundle.audio,
        script: &bundle.script,
    };
    serde_json::to_vec(&doc).expect("bundle serialization is infallible")
}

/// Checks every type invariant of a bundle.
pub fn validate(b: &FeatureBundle) -> Result<(), BundleError> {
    validate_meta(&b.meta)?;
    validate_frames(&b.frames, &b.meta)?;
    validate_audio(&b.audio)?;
    validate_script(&b.script, &b.meta)?;
    Ok(())
}

fn positive(path: &str, v: f64) -> Result<(), BundleError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(BundleError::invariant(path, format!("must be finite and > 0, got {v}")))
    }
}

fn validate_meta(m: &SpeechMeta) -> Result<(), BundleError> {
    if m.speech_id.is_empty() {
        return Err(BundleError::invariant("meta.speech_id", "must not be empty"));
    }
    if !LEVEL_RANGE.contains(&m.level) {
        return Err(BundleError::invariant(
            "meta.level",
            format!("must be in 1..=6, got {}", m.level),
        ));
    }
    positive("meta.fps", m.fps)?;
    positive("meta.duration_s", m.duration_s)?;
    Ok(())
}

fn check_series<T>(
    name: &str,
    series: &[Option<T>],
    n: usize,
    mut ok: impl FnMut(&T) -> Result<(), String>,
) -> Result<(), BundleError> {
    if series.len() != n {
        return Err(BundleError::invariant(
            format!("frames.{name}"),
            format!("length {} differs from timestamps length {n}", series.len()),
        ));
    }
    for (i, v) in series.iter().enumerate() {
        if let Some(v) = v {
            ok(v).map_err(|m| BundleError::invariant(format!("frames.{name}[{i}]"), m))?;
        }
    }
    Ok(())
}

fn finite_all(xs: &[f64]) -> Result<(), String> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err("non-finite value".into())
    }
}

fn unit_interval(v: f64) -> Result<(), String> {
    if (-1.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{v} outside [-1, 1]"))
    }
}

fn validate_frames(f: &FrameTrack, meta: &SpeechMeta) -> Result<(), BundleError> {
    let n = f.timestamps_s.len();
    for (i, t) in f.timestamps_s.iter().enumerate() {
        if !t.is_finite() || *t < 0.0 {
            return Err(BundleError::invariant(
                format!("frames.timestamps_s[{i}]"),
                format!("must be finite and >= 0, got {t}"),
            ));
        }
    }
    if let Some(i) = f.timestamps_s.windows(2).position(|w| w[1] <= w[0]) {
        return Err(BundleError::invariant(
            format!("frames.timestamps_s[{}]", i + 1),
            "timestamps must be strictly increasing",
        ));
    }
    if let Some(last) = f.timestamps_s.last() {
        if *last > meta.duration_s + 1.0 / meta.fps {
            return Err(BundleError::invariant(
                format!("frames.timestamps_s[{}]", n - 1),
                format!("{last} exceeds duration {} plus one frame", meta.duration_s),
            ));
        }
    }
    check_series("valence", &f.valence, n, |v| unit_interval(*v))?;
    check_series("arousal", &f.arousal, n, |v| unit_interval(*v))?;
    check_series("emotion", &f.emotion, n, |v| {
        if *v < 7 {
            Ok(())
        } else {
            Err(format!("category {v} outside 0..=6"))
        }
    })?;
    check_series("gaze_dir", &f.gaze_dir, n, |v| {
        finite_all(v)?;
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if (norm - 1.0).abs() <= 1e-6 {
            Ok(())
        } else {
            Err(format!("norm {norm} is not 1"))
        }
    })?;
    check_series("gaze_angles", &f.gaze_angles, n, |v| finite_all(v))?;
    check_series("camera_angle_deg", &f.camera_angle_deg, n, |v| {
        if v.is_finite() && *v >= 0.0 {
            Ok(())
        } else {
            Err(format!("must be finite and >= 0, got {v}"))
        }
    })?;
    check_series("head_cam_dist", &f.head_cam_dist, n, |v| {
        if v.is_finite() && *v >= 0.0 {
            Ok(())
        } else {
            Err(format!("must be finite and >= 0, got {v}"))
        }
    })?;
    check_series("bbox_center", &f.bbox_center, n, |v| {
        if v.iter().all(|c| (0.0..=1.0).contains(c)) {
            Ok(())
        } else {
            Err(format!("({}, {}) outside [0, 1]^2", v[0], v[1]))
        }
    })?;
    check_series("keypoints", &f.keypoints, n, |pose| {
        finite_all(pose.as_flattened())
    })?;
    Ok(())
}

fn validate_audio(a: &AudioTrack) -> Result<(), BundleError> {
    positive("audio.hop_s", a.hop_s)?;
    if a.pitch_hz.len() != a.intensity_db.len() {
        return Err(BundleError::invariant(
            "audio.pitch_hz",
            format!(
                "length {} differs from intensity_db length {}",
                a.pitch_hz.len(),
                a.intensity_db.len()
            ),
        ));
    }
    for (i, v) in a.intensity_db.iter().enumerate() {
        if matches!(v, Some(x) if !x.is_finite()) {
            return Err(BundleError::invariant(format!("audio.intensity_db[{i}]"), "non-finite value"));
        }
    }
    for (i, v) in a.pitch_hz.iter().enumerate() {
        if let Some(x) = v {
            if !x.is_finite() || *x <= 0.0 {
                return Err(BundleError::invariant(
                    format!("audio.pitch_hz[{i}]"),
                    format!("voiced pitch must be > 0, got {x}"),
                ));
            }
        }
    }
    Ok(())
}

fn validate_script(s: &ScriptTrack, meta: &SpeechMeta) -> Result<(), BundleError> {
    let limit = meta.duration_s + 1.0 / meta.fps;
    let mut prev_end = f64::NEG_INFINITY;
    for (i, sent) in s.sentences.iter().enumerate() {
        let path = format!("script.sentences[{i}]");
        if !(sent.start_s.is_finite() && sent.end_s.is_finite()) || sent.start_s < 0.0 {
            return Err(BundleError::invariant(path, "span must be finite and start >= 0"));
        }
        if sent.start_s >= sent.end_s {
            return Err(BundleError::invariant(
                path,
                format!("start {} must precede end {}", sent.start_s, sent.end_s),
            ));
        }
        if sent.end_s > limit {
            return Err(BundleError::invariant(
                format!("{path}.end_s"),
                format!("{} exceeds duration {}", sent.end_s, meta.duration_s),
            ));
        }
        if sent.start_s < prev_end {
            return Err(BundleError::invariant(
                format!("{path}.start_s"),
                "sentences must be time-ordered and non-overlapping",
            ));
        }
        prev_end = sent.end_s;
        if sent.embedding.len() != EMBEDDING_DIM {
            return Err(BundleError::invariant(
                format!("{path}.embedding"),
                format!("length {} but expected {EMBEDDING_DIM}", sent.embedding.len()),
            ));
        }
        if !sent.embedding.iter().all(|x| x.is_finite()) {
            return Err(BundleError::invariant(format!("{path}.embedding"), "non-finite value"));
        }
        let mut prev_word_start = f64::NEG_INFINITY;
        for (j, w) in sent.words.iter().enumerate() {
            let wpath = format!("{path}.words[{j}]");
            if !(w.start_s.is_finite() && w.end_s.is_finite()) || w.start_s > w.end_s {
                return Err(BundleError::invariant(wpath, "word span must be finite with start <= end"));
            }
            if w.start_s < sent.start_s || w.end_s > sent.end_s {
                return Err(BundleError::invariant(wpath, "word lies outside its sentence"));
            }
            if w.start_s < prev_word_start {
                return Err(BundleError::invariant(wpath, "words must be time-ordered"));
            }
            prev_word_start = w.start_s;
            if w.syllables == Some(0) {
                return Err(BundleError::invariant(format!("{wpath}.syllables"), "must be >= 1"));
            }
        }
    }
    Ok(())
}
