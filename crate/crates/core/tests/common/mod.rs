//! Brute-force reimplementations used as test oracles. They follow the
//! documented formulas directly and share no code with the engine.

#![allow(dead_code)]

use std::sync::Arc;

use podium::corpus::SpeechRecord;
use podium::factors::{FactorId, FactorVector};
use podium::feature::{FeatureBundle, SynthProfile};
use podium::recommend::{Candidate, Direction, Granularity, Mode, RecommendationQuery};

pub const WATCHING_THRESHOLD_DEG: f64 = 5.0;
pub const MEAN_EPS: f64 = 1e-9;

/// Frames, audio samples and sentences of `[start, end)`; `end` at or past the
/// duration keeps the tail.
pub struct Selection {
    pub frames: Vec<usize>,
    pub audio: Vec<usize>,
    pub sentences: Vec<usize>,
    pub start: f64,
    pub end: f64,
    pub open_end: bool,
}

pub fn select(b: &FeatureBundle, start: f64, end: f64) -> Selection {
    let open_end = end >= b.meta.duration_s;
    let inside = |t: f64| t >= start && (open_end || t < end);
    Selection {
        frames: (0..b.frames.timestamps_s.len()).filter(|i| inside(b.frames.timestamps_s[*i])).collect(),
        audio: (0..b.audio.intensity_db.len()).filter(|i| inside(*i as f64 * b.audio.hop_s)).collect(),
        sentences: (0..b.script.sentences.len())
            .filter(|i| {
                let s = &b.script.sentences[*i];
                s.end_s > start && (open_end || s.start_s < end)
            })
            .collect(),
        start,
        end,
        open_end,
    }
}

fn pick<T: Copy>(xs: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|i| xs[*i]).collect()
}

fn present(xs: &[Option<f64>]) -> Vec<f64> {
    xs.iter().filter_map(|x| *x).collect()
}

fn coverage<T>(xs: &[Option<T>]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().filter(|x| x.is_some()).count() as f64 / xs.len() as f64
}

fn pop_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

pub fn mean(xs: &[Option<f64>]) -> Option<f64> {
    let p = present(xs);
    (!p.is_empty()).then(|| p.iter().sum::<f64>() / p.len() as f64)
}

/// Differences of the raw series divided by its standard deviation.
pub fn volatility(xs: &[Option<f64>]) -> Option<f64> {
    let p = present(xs);
    if p.len() < 3 {
        return None;
    }
    if p.iter().all(|x| *x == p[0]) {
        return Some(0.0);
    }
    let (_, sd) = pop_sd(&p);
    let mut ss = 0.0;
    for i in 1..p.len() {
        ss += (p[i] - p[i - 1]).powi(2);
    }
    Some(ss.sqrt() / sd / ((p.len() - 1) as f64).sqrt())
}

pub fn dispersion(xs: &[Option<f64>]) -> Option<f64> {
    let p = present(xs);
    if p.len() < 2 {
        return None;
    }
    let (m, sd) = pop_sd(&p);
    if m.abs() <= MEAN_EPS {
        return None;
    }
    if p.iter().all(|x| *x == p[0]) {
        return Some(0.0);
    }
    Some(sd / m.abs())
}

fn split(xs: &[Option<[f64; 2]>]) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    (xs.iter().map(|p| p.map(|v| v[0])).collect(), xs.iter().map(|p| p.map(|v| v[1])).collect())
}

fn norm2(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? * a? + b? * b?).sqrt())
}

/// `sum_i r_i ln r_i` with each sample's category share counted pairwise.
pub fn diversity(labels: &[Option<u8>]) -> Option<f64> {
    let p: Vec<u8> = labels.iter().filter_map(|x| *x).collect();
    if p.is_empty() {
        return None;
    }
    let n = p.len() as f64;
    let mut acc = 0.0;
    for a in &p {
        let same = p.iter().filter(|b| *b == a).count() as f64;
        let r = same / n;
        acc += r * r.ln();
    }
    Some(acc)
}

/// Segment (joints, mass fraction) pairs on the 17-joint layout.
const SEGMENTS: [(&[usize], f64); 8] = [
    (&[9, 10], 0.0826),
    (&[7, 8], 0.4684),
    (&[11, 12], 0.0325),
    (&[14, 15], 0.0325),
    (&[12, 13], 0.0187),
    (&[15, 16], 0.0187),
    (&[13], 0.0065),
    (&[16], 0.0065),
];
const UPPER: [usize; 10] = [7, 8, 9, 10, 11, 12, 13, 14, 15, 16];

type Pose = [[f64; 2]; 17];

fn energy(a: &Pose, b: &Pose, fps: f64) -> f64 {
    let mut e = 0.0;
    for (joints, m) in SEGMENTS {
        let k = joints.len() as f64;
        let ca: (f64, f64) = joints.iter().fold((0.0, 0.0), |s, j| (s.0 + a[*j][0] / k, s.1 + a[*j][1] / k));
        let cb: (f64, f64) = joints.iter().fold((0.0, 0.0), |s, j| (s.0 + b[*j][0] / k, s.1 + b[*j][1] / k));
        let d = (cb.0 - ca.0).powi(2) + (cb.1 - ca.1).powi(2);
        e += m * d * fps * fps / 2.0;
    }
    e
}

fn normalized(p: &Pose) -> Option<Vec<f64>> {
    let w = ((p[11][0] - p[14][0]).powi(2) + (p[11][1] - p[14][1]).powi(2)).sqrt();
    if !(w > 0.0 && w.is_finite()) {
        return None;
    }
    Some(UPPER.iter().flat_map(|j| [(p[*j][0] - p[8][0]) / w, (p[*j][1] - p[8][1]) / w]).collect())
}

fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        1.0 - dot / (na * nb)
    }
}

fn syllables(word: &str) -> u32 {
    let chars: Vec<char> = word.to_lowercase().chars().collect();
    let vowel = |c: &char| "aeiouy".contains(*c);
    let mut n = 0;
    for i in 0..chars.len() {
        if vowel(&chars[i]) && (i == 0 || !vowel(&chars[i - 1])) {
            n += 1;
        }
    }
    n.max(1)
}

fn word_inside(sel: &Selection, start: f64, end: f64) -> bool {
    let hi = if sel.open_end { f64::INFINITY } else { sel.end };
    if end > start {
        start < hi && end > sel.start
    } else {
        start >= sel.start && start < hi
    }
}

/// All 23 factor values of `[start, end)` as `(value, coverage)` in table order.
pub fn factors(b: &FeatureBundle, start: f64, end: f64) -> Vec<(Option<f64>, f64)> {
    let sel = select(b, start, end);
    let fr = &b.frames;
    let f = &sel.frames;
    let valence = pick(&fr.valence, f);
    let arousal = pick(&fr.arousal, f);
    let emotion = pick(&fr.emotion, f);
    let gaze = pick(&fr.gaze_angles, f);
    let cam = pick(&fr.camera_angle_deg, f);
    let dist = pick(&fr.head_cam_dist, f);
    let bbox = pick(&fr.bbox_center, f);
    let kp = pick(&fr.keypoints, f);
    let loud = pick(&b.audio.intensity_db, &sel.audio);
    let pitch = pick(&b.audio.pitch_hz, &sel.audio);

    let (gx, gy) = split(&gaze);
    let (bx, by) = split(&bbox);
    let cam_present = present(&cam);
    let watching = (!cam_present.is_empty())
        .then(|| cam_present.iter().filter(|a| **a < WATCHING_THRESHOLD_DEG).count() as f64 / cam_present.len() as f64);

    let mut energies = Vec::new();
    for i in 1..kp.len() {
        energies.push(match (&kp[i - 1], &kp[i]) {
            (Some(a), Some(c)) => Some(energy(a, c, b.meta.fps)),
            _ => None,
        });
    }
    let energy_ok = energies.iter().any(Option::is_some);
    let energy_cov = if energy_ok { coverage(&energies) } else { 0.0 };
    let gesture_div = {
        let poses: Vec<Vec<f64>> = kp.iter().flatten().filter_map(normalized).collect();
        if poses.len() < 2 {
            None
        } else {
            let d: Vec<f64> = poses.iter().map(|p| cos_dist(&poses[0], p)).collect();
            Some(pop_sd(&d).1)
        }
    };

    let mut rate = Vec::new();
    let mut pauses = Vec::new();
    let mut prev_sentence_end = None;
    for si in &sel.sentences {
        let s = &b.script.sentences[*si];
        if let Some(e) = prev_sentence_end {
            pauses.push(Some(f64::max(s.start_s - e, 0.0)));
        }
        let mut prev_word_end = None;
        for w in s.words.iter().filter(|w| word_inside(&sel, w.start_s, w.end_s)) {
            let syl = w.syllables.unwrap_or_else(|| syllables(&w.word));
            rate.push(Some((w.end_s - w.start_s) / f64::from(syl)));
            if let Some(e) = prev_word_end {
                pauses.push(Some(f64::max(w.start_s - e, 0.0)));
            }
            prev_word_end = Some(w.end_s);
        }
        prev_sentence_end = Some(s.end_s);
    }
    let seq_cov = |xs: &[Option<f64>]| if xs.is_empty() { 0.0 } else { 1.0 };

    vec![
        (diversity(&emotion), coverage(&emotion)),
        (volatility(&valence), coverage(&valence)),
        (mean(&valence), coverage(&valence)),
        (volatility(&arousal), coverage(&arousal)),
        (mean(&arousal), coverage(&arousal)),
        (norm2(volatility(&gx), volatility(&gy)), coverage(&gaze)),
        (norm2(dispersion(&gx), dispersion(&gy)), coverage(&gaze)),
        (watching, coverage(&cam)),
        (volatility(&dist), coverage(&dist)),
        (dispersion(&dist), coverage(&dist)),
        (norm2(volatility(&bx), volatility(&by)), coverage(&bbox)),
        (norm2(dispersion(&bx), dispersion(&by)), coverage(&bbox)),
        (if energy_ok { volatility(&energies) } else { None }, energy_cov),
        (if energy_ok { mean(&energies) } else { None }, energy_cov),
        (gesture_div, coverage(&kp)),
        (volatility(&loud), coverage(&loud)),
        (mean(&loud), coverage(&loud)),
        (volatility(&pitch), coverage(&pitch)),
        (mean(&pitch), coverage(&pitch)),
        (volatility(&rate), seq_cov(&rate)),
        (mean(&rate), seq_cov(&rate)),
        (volatility(&pauses), seq_cov(&pauses)),
        (mean(&pauses), seq_cov(&pauses)),
    ]
}

/// First mismatch between engine factors and the oracle beyond `tol`.
pub fn factor_mismatch(engine: &FactorVector, oracle: &[(Option<f64>, f64)], tol: f64) -> Option<String> {
    for (f, (want, want_cov)) in FactorId::ALL.iter().zip(oracle) {
        let got = engine.get(*f);
        let ok = match (got.value, want) {
            (Some(a), Some(b)) => (a - b).abs() <= tol,
            (None, None) => true,
            _ => false,
        };
        if !ok || (got.coverage - want_cov).abs() > 1e-12 {
            return Some(format!("{f}: engine {:?} ({}), oracle {want:?} ({want_cov})", got.value, got.coverage));
        }
    }
    None
}

/// Bundle profile varied by seed: duration, frame rate, dropout and word timing.
pub fn varied_profile(seed: u64) -> SynthProfile {
    let fps = [10.0, 12.5, 25.0, 30.0][(seed % 4) as usize];
    SynthProfile {
        duration_s: 8.0 + (seed % 7) as f64 * 6.0,
        fps,
        sentence_count: 1 + (seed % 6) as usize,
        face_dropout: [0.0, 0.03, 0.2, 0.5][(seed / 4 % 4) as usize],
        body_dropout: [0.0, 0.02, 0.3, 0.6][(seed / 2 % 4) as usize],
        unvoiced_rate: 0.1 + 0.1 * (seed % 5) as f64,
        omit_syllables: seed.is_multiple_of(3),
        gesture_amplitude: if seed.is_multiple_of(11) { 0.0 } else { 0.04 },
        level_effect: (seed % 4) as f64 * 0.5,
        ..SynthProfile::default()
    }
}

/// One candidate slot of the exhaustive recommender.
struct Slot {
    speech: usize,
    sentence: Option<usize>,
}

fn weighted_mean(parts: &[(f64, &[f64])]) -> Option<Vec<f64>> {
    let total: f64 = parts.iter().map(|p| p.0).sum();
    if parts.is_empty() || total <= 0.0 {
        return None;
    }
    let dim = parts[0].1.len();
    let mut v = vec![0.0; dim];
    for (w, e) in parts {
        for k in 0..dim {
            v[k] += w * e[k];
        }
    }
    Some(v.into_iter().map(|x| x / total).collect())
}

fn script_vec_whole(b: &FeatureBundle) -> Option<Vec<f64>> {
    let parts: Vec<(f64, &[f64])> =
        b.script.sentences.iter().map(|s| (s.end_s - s.start_s, s.embedding.as_slice())).collect();
    weighted_mean(&parts)
}

fn cos_or_zero(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        0.0
    } else {
        cos_dist(a, b).clamp(0.0, 2.0)
    }
}

/// Exhaustive recommender: every candidate is scored, then the list is
/// fully sorted. `query_factors` are the engine's factors of the query span.
pub fn recommend(
    q: &RecommendationQuery,
    corpus: &[Arc<SpeechRecord>],
    query_factors: &FactorVector,
) -> Option<Vec<Candidate>> {
    let qi = corpus.iter().position(|r| r.id() == q.speech_id)?;
    let qb = &corpus[qi].bundle;
    let whole = q.start_s.is_none() && q.end_s.is_none();
    let lo = q.start_s.unwrap_or(0.0);
    let hi = q.end_s.unwrap_or(qb.meta.duration_s);

    let mut slots = Vec::new();
    for (si, r) in corpus.iter().enumerate() {
        let own = si == qi;
        match q.granularity {
            Granularity::Speech => {
                if !own || q.include_self {
                    slots.push(Slot { speech: si, sentence: None });
                }
            }
            Granularity::Sentence => {
                for (k, s) in r.bundle.script.sentences.iter().enumerate() {
                    let overlap = s.start_s < hi && s.end_s > lo;
                    if !own || q.include_self || !(whole || overlap) {
                        slots.push(Slot { speech: si, sentence: Some(k) });
                    }
                }
            }
        }
    }
    let factors_of = |s: &Slot| match s.sentence {
        Some(k) => &corpus[s.speech].sentence_factors[k],
        None => &corpus[s.speech].factors,
    };

    let mut scored: Vec<(usize, f64)> = Vec::new();
    match q.mode {
        Mode::Factor => {
            let kept: Vec<usize> = (0..slots.len())
                .filter(|i| q.factors.iter().all(|f| factors_of(&slots[*i]).value(*f).is_some()))
                .collect();
            let mut bounds = Vec::new();
            for f in &q.factors {
                let mut vals = vec![query_factors.value(*f)?];
                vals.extend(kept.iter().map(|i| factors_of(&slots[*i]).value(*f).unwrap()));
                let mn = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                bounds.push((mn, mx));
            }
            let norm = |v: &FactorVector| -> Vec<f64> {
                q.factors
                    .iter()
                    .zip(&bounds)
                    .map(|(f, (mn, mx))| if mx > mn { (v.value(*f).unwrap() - mn) / (mx - mn) } else { 0.5 })
                    .collect()
            };
            let qv = norm(query_factors);
            for i in kept {
                let v = norm(factors_of(&slots[i]));
                let d = qv.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                scored.push((i, d));
            }
        }
        Mode::Script => {
            let qv = if whole {
                script_vec_whole(qb)?
            } else {
                let sel = select(qb, lo, hi);
                let parts: Vec<(f64, &[f64])> = sel
                    .sentences
                    .iter()
                    .map(|k| {
                        let s = &qb.script.sentences[*k];
                        let full = lo <= 0.0 && hi >= qb.meta.duration_s;
                        let w = if full { s.end_s - s.start_s } else { (s.end_s.min(hi) - s.start_s.max(lo)).max(0.0) };
                        (w, s.embedding.as_slice())
                    })
                    .collect();
                weighted_mean(&parts)?
            };
            for (i, s) in slots.iter().enumerate() {
                let v = match s.sentence {
                    Some(k) => Some(corpus[s.speech].bundle.script.sentences[k].embedding.clone()),
                    None => script_vec_whole(&corpus[s.speech].bundle),
                };
                if let Some(v) = v {
                    scored.push((i, cos_or_zero(&qv, &v)));
                }
            }
        }
    }
    if scored.is_empty() {
        return None;
    }
    scored.sort_by(|a, b| match q.direction {
        Direction::MostSimilar => a.1.total_cmp(&b.1),
        Direction::MostDifferent => b.1.total_cmp(&a.1),
    });
    Some(
        scored
            .into_iter()
            .take(q.k)
            .map(|(i, d)| {
                let s = &slots[i];
                let r = &corpus[s.speech];
                let (start_s, end_s) = match s.sentence {
                    Some(k) => (r.bundle.script.sentences[k].start_s, r.bundle.script.sentences[k].end_s),
                    None => (0.0, r.meta().duration_s),
                };
                Candidate {
                    speech_id: r.id().to_string(),
                    sentence_index: s.sentence,
                    start_s,
                    end_s,
                    distance: d,
                }
            })
            .collect(),
    )
}
