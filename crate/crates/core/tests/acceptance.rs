//! Acceptance gate: each criterion runs at its stated tolerance and budget and
//! prints one PASS or FAIL line. Exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use podium::api::views::{self, to_body, FactorReport, RecommendResponse, Span, Versioned};
use podium::api::{router, AppState};
use podium::corpus::{CorpusStore, SpeechRecord};
use podium::effectiveness::*;
use podium::factors::{compute_factors, dispersion, emotion_diversity, volatility, FactorId};
use podium::feature::{synth_bundle, SynthProfile};
use podium::recommend::{recommend, Candidate, Direction, Granularity, Mode, RecommendationQuery};
use podium::summary::{cluster_poses, representative_pose, speech_twin, time_slices, GmmOptions, SLICE_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tower::ServiceExt;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($msg)+)),
        }
    };
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            name: "reference coefficients golden",
            budget: Duration::from_secs(1),
            run: reference_coefficients,
        },
        Criterion {
            name: "factor formula oracle",
            budget: Duration::from_secs(10),
            run: factor_oracle,
        },
        Criterion {
            name: "ordinal fit recovery",
            budget: Duration::from_secs(60),
            run: ordinal_recovery,
        },
        Criterion {
            name: "recommender oracle",
            budget: Duration::from_secs(30),
            run: recommender_oracle,
        },
        Criterion {
            name: "summarizer suite",
            budget: Duration::from_secs(30),
            run: summarizer,
        },
        Criterion {
            name: "end to end",
            budget: Duration::from_secs(120),
            run: end_to_end,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t.elapsed();
        let outcome = outcome.and_then(|()| {
            if elapsed <= c.budget {
                Ok(())
            } else {
                Err(format!("over the {:?} budget", c.budget))
            }
        });
        match outcome {
            Ok(()) => println!("PASS {} ({:.2} s, budget {} s)", c.name, elapsed.as_secs_f64(), c.budget.as_secs()),
            Err(e) => {
                failed += 1;
                println!("FAIL {} ({:.2} s, budget {} s): {e}", c.name, elapsed.as_secs_f64(), c.budget.as_secs());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

/// (factor, w, b0..b4, p, significant), transcribed independently of the data file.
#[allow(clippy::approx_constant)]
const TABLE: [(FactorId, f64, [f64; 5], f64, bool); 23] = [
    (FactorId::EmotionDiversity, -2.028, [0.318, 1.262, 2.361, 3.207, 4.87], 0.002, true),
    (FactorId::ValenceVolatility, -0.017, [-2.626, -1.751, -0.709, 0.103, 1.721], 0.571, false),
    (FactorId::ValenceAverage, 3.698, [-2.249, -1.322, -0.238, 0.581, 2.257], 0.005, true),
    (FactorId::ArousalVolatility, -0.009, [-2.41, -1.534, -0.496, 0.31, 1.926], 0.761, false),
    (FactorId::ArousalAverage, 12.71, [-1.311, -0.343, 0.846, 1.786, 3.559], 0.000, true),
    (FactorId::GazeVolatility, -597.981, [-4.139, -3.162, -2.012, -1.187, 0.431], 0.002, true),
    (FactorId::GazeDispersion, 5.245, [-1.082, -0.189, 0.87, 1.686, 3.313], 0.067, false),
    (FactorId::WatchingCameraRatio, 1.536, [-1.923, -1.03, 0.014, 0.814, 2.429], 0.265, false),
    (FactorId::CameraDistanceVolatility, 0.001, [-2.095, -1.216, -0.18, 0.624, 2.238], 0.908, false),
    (FactorId::CameraDistanceDispersion, 1.444, [-1.903, -1.021, 0.023, 0.837, 2.476], 0.185, false),
    (FactorId::FramePositionVolatility, -210.54, [-2.957, -2.044, -0.963, -0.144, 1.493], 0.026, true),
    (FactorId::FramePositionDispersion, 0.006, [-1.59, -0.71, 0.332, 1.146, 2.787], 0.141, false),
    (FactorId::GestureEnergyVolatility, 0.005, [-1.962, -1.082, -0.045, 0.757, 2.371], 0.860, false),
    (FactorId::GestureEnergyAverage, 4.28e-7, [-2.041, -1.164, -0.128, 0.68, 2.306], 0.426, false),
    (FactorId::GestureDiversity, 191.157, [-1.833, -0.945, 0.099, 0.907, 2.527], 0.266, false),
    (FactorId::VolumeVolatility, -0.17, [-8.904, -7.547, -6.055, -5.13, -3.444], 0.000, true),
    (FactorId::VolumeAverage, -0.048, [-4.954, -4.071, -3.035, -2.233, -0.612], 0.413, false),
    (FactorId::PitchVolatility, -0.012, [-3.088, -2.207, -1.165, -0.359, 1.257], 0.438, false),
    (FactorId::PitchAverage, 0.000071, [-2.103, -1.224, -0.187, 0.616, 2.229], 0.988, false),
    (FactorId::SpeakingRateVolatility, 0.023, [-1.254, -0.37, 0.668, 1.47, 3.084], 0.617, false),
    (FactorId::SpeakingRateAverage, 0.007, [-0.286, 0.607, 1.668, 2.473, 4.076], 0.198, false),
    (FactorId::PausesVolatility, 0.065, [0.492, 1.39, 2.44, 3.248, 4.872], 0.157, false),
    (FactorId::PausesAverage, -0.002, [-2.416, -1.53, -0.489, -0.314, 1.927], 0.533, false),
];

fn reference_coefficients() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/reference_model.json");
    let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let model = EffectivenessModel::from_json(&bytes).map_err(|e| e.to_string())?;
    ensure!(model == EffectivenessModel::reference(), "embedded model differs from the shipped file");
    ensure!(model.input == ModelInput::Raw, "reference model must take raw factor values");
    for (f, w, b, p, sig) in TABLE {
        let c = model.coefficients(f).ok_or_else(|| format!("{f:?} is unfitted"))?;
        ensure!(c.w == w && c.b == b && c.p_value == p, "{f:?}: got w {} b {:?} p {}", c.w, c.b, c.p_value);
        ensure!(c.significant == sig, "{f:?}: significance flag {}", c.significant);
        ensure!(c.b.windows(2).all(|x| x[0] < x[1]), "{f:?}: thresholds not strictly increasing");
    }
    let starred = vec![
        FactorId::EmotionDiversity,
        FactorId::ValenceAverage,
        FactorId::ArousalAverage,
        FactorId::GazeVolatility,
        FactorId::FramePositionVolatility,
        FactorId::VolumeVolatility,
    ];
    ensure!(model.significant_factors() == starred, "significant set {:?}", model.significant_factors());
    Ok(())
}

fn factor_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for seed in 0..100 {
        let b = synth_bundle(seed, &common::varied_profile(seed)).map_err(|e| e.to_string())?;
        let d = b.meta.duration_s;
        let mut spans = vec![(0.0, d)];
        for _ in 0..2 {
            let a = rng.random_range(0.0..d - 0.5);
            spans.push((a, rng.random_range(a + 0.1..d)));
        }
        for (lo, hi) in spans {
            let view = b.slice(lo, hi).map_err(|e| e.to_string())?;
            if let Some(m) = common::factor_mismatch(&compute_factors(&view), &common::factors(&b, lo, hi), 1e-9) {
                return Err(format!("seed {seed}, span [{lo}, {hi}): {m}"));
            }
        }
    }
    let (a, b) = (Some(0u8), Some(1u8));
    let d = emotion_diversity(&[a, a, b, b]).map_err(|e| e.to_string())?;
    ensure!((d - 2.0 * 0.5f64.ln()).abs() <= 1e-12, "diversity([A,A,B,B]) = {d}");
    let alt: Vec<Option<f64>> = [0.0, 1.0, 0.0, 1.0].into_iter().map(Some).collect();
    let v = volatility(&alt).map_err(|e| e.to_string())?;
    ensure!((v - 2.0).abs() <= 1e-12, "volatility([0,1,0,1]) = {v}");
    let s = dispersion(&[Some(1.0), Some(3.0)]).map_err(|e| e.to_string())?;
    ensure!((s - 0.5).abs() <= 1e-12, "dispersion([1,3]) = {s}");
    Ok(())
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

const TRUE_W: f64 = 1.0;
const TRUE_B: [f64; 5] = [2.0, 3.5, 5.0, 6.5, 8.0];

/// Six-level outcomes drawn from `P(level <= j) = sigmoid(b_j - w x)`.
fn simulate(seed: u64, n: usize) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = rng.random_range(0.0..10.0);
            let u: f64 = rng.random();
            let level = (0..5).find(|j| u < logistic(TRUE_B[*j] - TRUE_W * x)).map_or(6, |j| j + 1);
            Observation { x, level: level as u8 }
        })
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn ordinal_recovery() -> Check {
    let fits = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let f = fit_factor(FactorId::ArousalAverage, &simulate(seed, 2000), &FitOptions::default())
                .map_err(|e| format!("seed {seed}: {e}"))?;
            Ok(f.coefficients.raw_coefficients())
        })
        .collect::<Result<Vec<_>, String>>()?;
    let w_err = median(fits.iter().map(|c| (c.w - TRUE_W).abs() / TRUE_W.abs()).collect());
    ensure!(w_err < 0.05, "median relative error on w {w_err:.4}");
    for (j, truth) in TRUE_B.iter().enumerate() {
        let e = median(fits.iter().map(|c| (c.b[j] - truth).abs() / truth.abs()).collect());
        ensure!(e < 0.05, "median relative error on b{j} {e:.4}");
    }

    let obs = simulate(100, 2000);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let h = 1e-6;
    for _ in 0..20 {
        let w = rng.random_range(-2.0..2.0);
        let mut b = [0.0; 5];
        b[0] = rng.random_range(-3.0..3.0);
        for j in 1..5 {
            b[j] = b[j - 1] + rng.random_range(0.2..2.0);
        }
        let g = log_likelihood_gradient(w, &b, &obs);
        let mut fd = [0.0; 6];
        fd[0] = (log_likelihood(w + h, &b, &obs) - log_likelihood(w - h, &b, &obs)) / (2.0 * h);
        for j in 0..5 {
            let (mut p, mut m) = (b, b);
            p[j] += h;
            m[j] -= h;
            fd[1 + j] = (log_likelihood(w, &p, &obs) - log_likelihood(w, &m, &obs)) / (2.0 * h);
        }
        for i in 0..6 {
            // relative to the gradient norm so near-zero components do not blow up the ratio
            let scale = fd[i].abs().max(1.0);
            ensure!((fd[i] - g[i]).abs() <= 1e-5 * scale, "component {i}: analytic {} vs numeric {}", g[i], fd[i]);
        }
    }
    Ok(())
}

fn speech_corpus(n: u64) -> Vec<Arc<SpeechRecord>> {
    (0..n)
        .into_par_iter()
        .map(|seed| {
            let p = SynthProfile {
                duration_s: 12.0 + (seed % 5) as f64 * 3.0,
                sentence_count: 2 + (seed % 4) as usize,
                ..SynthProfile::default()
            };
            Arc::new(SpeechRecord::from_bundle(synth_bundle(seed, &p).expect("synthetic bundle")))
        })
        .collect()
}

fn same(a: &[Candidate], b: &[Candidate]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.speech_id == y.speech_id
                && x.sentence_index == y.sentence_index
                && x.start_s == y.start_s
                && x.end_s == y.end_s
                && (x.distance - y.distance).abs() <= 1e-12
        })
}

fn recommender_oracle() -> Check {
    let c = speech_corpus(200);
    let factor_sets = [
        EffectivenessModel::reference().significant_factors(),
        vec![FactorId::PitchAverage, FactorId::VolumeVolatility, FactorId::PausesAverage],
    ];
    let mut queries = Vec::new();
    for qi in [0usize, 57, 123, 199] {
        for span in [None, Some((2.0, 9.5))] {
            for granularity in [Granularity::Speech, Granularity::Sentence] {
                for direction in [Direction::MostSimilar, Direction::MostDifferent] {
                    for k in [1, 5, 20] {
                        let mut modes = vec![(Mode::Script, Vec::new())];
                        modes.extend(factor_sets.iter().map(|f| (Mode::Factor, f.clone())));
                        for (mode, factors) in modes {
                            queries.push((qi, RecommendationQuery {
                                speech_id: c[qi].id().to_string(),
                                start_s: span.map(|s| s.0),
                                end_s: span.map(|s| s.1),
                                granularity,
                                mode,
                                factors,
                                k,
                                direction,
                                include_self: false,
                            }));
                        }
                    }
                }
            }
        }
    }
    queries.par_iter().try_for_each(|(qi, q)| {
        let qf = match (q.start_s, q.end_s) {
            (Some(a), Some(b)) => compute_factors(&c[*qi].bundle.slice(a, b).map_err(|e| e.to_string())?),
            _ => c[*qi].factors.clone(),
        };
        let got = recommend(q, &c).map_err(|e| format!("{q:?}: {e}"))?;
        let want = common::recommend(q, &c, &qf).ok_or_else(|| format!("{q:?}: oracle rejected the query"))?;
        ensure!(same(&got.candidates, &want), "{q:?}: ranking differs from the exhaustive sort");
        ensure!(got.candidates.len() == q.k, "{q:?}: {} candidates", got.candidates.len());
        Ok(())
    })?;

    for (mode, factors) in [(Mode::Script, Vec::new()), (Mode::Factor, factor_sets[1].clone())] {
        let s = &c[4].bundle.script.sentences[1];
        let sentence = (s.start_s, s.end_s.min(c[4].bundle.meta.duration_s));
        for (granularity, span) in [(Granularity::Speech, None), (Granularity::Sentence, Some(sentence))] {
            let q = RecommendationQuery {
                speech_id: c[4].id().to_string(),
                start_s: span.map(|s| s.0),
                end_s: span.map(|s| s.1),
                granularity,
                mode,
                factors: factors.clone(),
                k: 1,
                direction: Direction::MostSimilar,
                include_self: true,
            };
            let r = recommend(&q, &c).map_err(|e| e.to_string())?;
            let top = &r.candidates[0];
            let want_sentence = span.map(|_| 1);
            ensure!(
                top.speech_id == c[4].id() && top.sentence_index == want_sentence,
                "{mode:?}/{granularity:?}: nearest is {} {:?}",
                top.speech_id,
                top.sentence_index
            );
            ensure!(top.distance == 0.0, "{mode:?}/{granularity:?}: self distance {}", top.distance);
        }
    }
    Ok(())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        1.0 - dot / (na * nb)
    }
}

fn weighted(parts: &[(f64, usize)]) -> f64 {
    let n: usize = parts.iter().map(|p| p.1).sum();
    parts.iter().map(|(m, c)| m * *c as f64).sum::<f64>() / n as f64
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn summarizer() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..50 {
        let n = rng.random_range(1..=100);
        let members: Vec<[f64; 20]> = (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        let totals: Vec<f64> = members.iter().map(|a| members.iter().map(|b| cosine(a, b)).sum()).collect();
        let want = (0..n).fold(0, |best, i| if totals[i] < totals[best] { i } else { best });
        let got = representative_pose(&members).ok_or("no representative")?;
        ensure!(
            got == want || (totals[got] - totals[want]).abs() < 1e-12,
            "cluster {trial}: representative {got}, brute force {want}"
        );
    }

    for seed in 0..20 {
        let b = synth_bundle(seed, &SynthProfile {
            duration_s: 30.0 + seed as f64,
            face_dropout: 0.1,
            body_dropout: 0.1,
            ..SynthProfile::default()
        })
        .map_err(|e| e.to_string())?;
        let whole = b.view();
        let twin = speech_twin(&whole, seed, &GmmOptions::default());
        let v = time_slices(&whole, SLICE_COUNT, None).map_err(|e| e.to_string())?;

        ensure!(v.slices.len() == 8, "seed {seed}: {} slices", v.slices.len());
        let frames: usize = v.slices.iter().map(|s| s.frame_count).sum();
        ensure!(frames == whole.frame_count(), "seed {seed}: slices hold {frames} frames");
        ensure!(v.slices.windows(2).all(|w| w[0].end_s == w[1].start_s), "seed {seed}: slices leave gaps");
        ensure!(v.boundaries[0] == 0.0 && v.boundaries[8] == b.meta.duration_s, "seed {seed}: boundaries");

        let val: Vec<(f64, usize)> = v.slices.iter().map(|s| (s.valence_mean, s.valence_count)).collect();
        ensure!(close(weighted(&val), twin.valence_mean), "seed {seed}: valence");
        let aro: Vec<(f64, usize)> = v.slices.iter().map(|s| (s.arousal_mean, s.arousal_count)).collect();
        ensure!(close(weighted(&aro), twin.arousal_mean), "seed {seed}: arousal");
        for e in 0..7 {
            let parts: Vec<(f64, usize)> = v.slices.iter().map(|s| (s.emotion_proportions[e], s.emotion_count)).collect();
            ensure!(close(weighted(&parts), twin.emotion_proportions[e]), "seed {seed}: emotion {e}");
        }
        let volume: Vec<f64> = v.slices.iter().flat_map(|s| s.volume.iter().map(|x| x.value)).collect();
        ensure!(
            close(volume.iter().sum::<f64>() / volume.len() as f64, twin.volume_mean),
            "seed {seed}: volume"
        );
        let gaze: u32 = v.slices.iter().map(|s| s.gaze_heatmap.total).sum();
        ensure!(gaze as usize == twin.coverage.gaze, "seed {seed}: gaze samples");
        let foot: usize = v.slices.iter().map(|s| s.footprints.len()).sum();
        ensure!(foot == twin.coverage.footprints, "seed {seed}: footprints");

        let k = &b.frames.keypoints;
        let x = cluster_poses(k, seed, &GmmOptions::default()).map_err(|e| e.to_string())?;
        let y = cluster_poses(k, seed, &GmmOptions::default()).map_err(|e| e.to_string())?;
        ensure!(x == y, "seed {seed}: clustering differs between runs");
        ensure!(
            speech_twin(&whole, seed, &GmmOptions::default()) == twin,
            "seed {seed}: twin differs between runs"
        );
    }
    Ok(())
}

struct Run {
    code: i32,
    stdout: Vec<u8>,
    stderr: String,
}

fn podium(dir: &Path, args: &[&str]) -> Result<Run, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_podium"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    let run = Run {
        code: out.status.code().unwrap_or(-1),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    };
    ensure!(run.code == 0, "podium {}: exit {} {}", args.join(" "), run.code, run.stderr);
    Ok(run)
}

/// Strict parse: the bytes must deserialize and re-serialize to themselves.
fn parse_exact<T: serde::de::DeserializeOwned + serde::Serialize>(what: &str, line: &[u8]) -> Result<T, String> {
    let body = line.strip_suffix(b"\n").ok_or_else(|| format!("{what}: missing trailing newline"))?;
    let mut de = serde_json::Deserializer::from_slice(body);
    let v: Versioned<T> = serde_path_to_error::deserialize(&mut de).map_err(|e| format!("{what}: {e}"))?;
    ensure!(v.schema_version == 1, "{what}: schema_version {}", v.schema_version);
    ensure!(to_body(&v.body) == body, "{what}: output does not round-trip through its schema");
    Ok(v.body)
}

async fn get(app: &axum::Router, method: &str, uri: &str, body: Vec<u8>) -> Result<Vec<u8>, String> {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .map_err(|e| e.to_string())?;
    let res = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    ensure!(res.status().is_success(), "{uri}: status {}", res.status());
    Ok(res.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes().to_vec())
}

fn end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let synth = podium(dir, &["synth", "--seed", "3", "--n", "20", "--level-effect", "1.5", "--corpus", "c"])?;
    let ids: Vec<String> = String::from_utf8_lossy(&synth.stdout).lines().map(str::to_string).collect();
    ensure!(ids.len() == 20, "synth printed {} ids", ids.len());

    let fit = podium(dir, &["fit", "--corpus", "c", "--out", "m.json"])?;
    ensure!(String::from_utf8_lossy(&fit.stdout).lines().count() == 24, "fit table has the wrong shape");
    let model_bytes = std::fs::read(dir.join("m.json")).map_err(|e| e.to_string())?;
    let model = EffectivenessModel::from_json(&model_bytes).map_err(|e| format!("fitted model: {e}"))?;
    ensure!(model.input == ModelInput::MinMax, "fitted model input {:?}", model.input);

    let store = CorpusStore::open(dir.join("c")).map_err(|e| e.to_string())?;
    let snap = store.snapshot().map_err(|e| e.to_string())?;
    ensure!(snap.len() == 20, "corpus holds {} speeches", snap.len());
    let id = ids[4].as_str();

    let analyze = podium(dir, &["analyze", id, "--corpus", "c", "--model", "m.json", "--format", "json"])?;
    let report: FactorReport = parse_exact("analyze", &analyze.stdout)?;
    ensure!(report.effectiveness.len() == 23, "analyze has {} rows", report.effectiveness.len());
    let span = Span {
        start: Some(1.5),
        end: Some(8.0),
    };
    ensure!(
        report == views::factor_report(&snap, &model, id, Span::whole()).map_err(|e| e.to_string())?,
        "analyze differs from the in-process report"
    );
    let spanned = podium(dir, &[
        "analyze", id, "--corpus", "c", "--model", "m.json", "--span", "1.5:8", "--format", "json",
    ])?;
    let spanned: FactorReport = parse_exact("analyze --span", &spanned.stdout)?;
    ensure!(spanned.start_s == 1.5 && spanned.end_s == 8.0, "span not applied");

    let gmm = GmmOptions::default();
    let sel = [FactorId::PitchAverage, FactorId::ValenceAverage];
    let mut cli_queries = Vec::new();
    for (mode, granularity, m, g) in [
        ("factor", "speech", Mode::Factor, Granularity::Speech),
        ("script", "sentence", Mode::Script, Granularity::Sentence),
    ] {
        let rec = podium(dir, &[
            "recommend", id, "--corpus", "c", "--model", "m.json", "--mode", mode, "--granularity", granularity,
            "--factors", "voice.pitch.average,face.valence.average", "-k", "3", "--format", "json",
        ])?;
        let resp: RecommendResponse = parse_exact("recommend", &rec.stdout)?;
        ensure!(resp.result.candidates.len() == 3, "recommend returned {}", resp.result.candidates.len());
        ensure!(resp.twins.len() == 3, "recommend returned {} twins", resp.twins.len());
        let q = RecommendationQuery {
            speech_id: id.to_string(),
            start_s: None,
            end_s: None,
            granularity: g,
            mode: m,
            factors: if m == Mode::Factor { sel.to_vec() } else { Vec::new() },
            k: 3,
            direction: Direction::MostSimilar,
            include_self: false,
        };
        let want = views::recommend_with_twins(&snap, &gmm, &q).map_err(|e| e.to_string())?;
        ensure!(want == resp, "recommend {mode}/{granularity} differs from the in-process call");
        cli_queries.push(q);
    }

    let state = AppState {
        store: Arc::new(store),
        model: Arc::new(model.clone()),
        gmm,
    };
    let app = router(state);
    let m = &model;
    let mut cases: Vec<(&str, String, Vec<u8>, Vec<u8>)> = vec![
        ("GET", "/api/speeches".into(), Vec::new(), to_body(views::list_speeches(&snap))),
        ("GET", format!("/api/speeches/{id}/factors"), Vec::new(), to_body(&report)),
        (
            "GET",
            format!("/api/speeches/{id}/factors?start=1.5&end=8"),
            Vec::new(),
            to_body(views::factor_report(&snap, m, id, span).map_err(|e| e.to_string())?),
        ),
        (
            "GET",
            format!("/api/speeches/{id}/slices?factors=voice.pitch.average,face.valence.average"),
            Vec::new(),
            to_body(views::slices(&snap, m, id, Span::whole(), &sel).map_err(|e| e.to_string())?),
        ),
        (
            "GET",
            format!("/api/speeches/{id}/twin?start=1.5&end=8&factors=voice.pitch.average"),
            Vec::new(),
            to_body(views::twin(&snap, m, &gmm, id, span, &sel[..1]).map_err(|e| e.to_string())?),
        ),
        (
            "GET",
            format!("/api/speeches/{id}/overlay?t=5&interval=0.5"),
            Vec::new(),
            to_body(views::overlay(&snap, id, 5.0, Some(0.5), None).map_err(|e| e.to_string())?),
        ),
        (
            "GET",
            format!("/api/speeches/{id}/compare/{}", ids[9]),
            Vec::new(),
            to_body(views::compare(&snap, id, &ids[9]).map_err(|e| e.to_string())?),
        ),
        ("GET", "/api/model".into(), Vec::new(), model.to_json().into_bytes()),
        ("GET", "/api/encodings".into(), Vec::new(), to_body(views::encodings())),
    ];
    for q in &cli_queries {
        cases.push((
            "POST",
            "/api/recommend".into(),
            serde_json::to_vec(q).map_err(|e| e.to_string())?,
            to_body(views::recommend_with_twins(&snap, &gmm, q).map_err(|e| e.to_string())?),
        ));
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        for (method, uri, body, want) in cases {
            let got = get(&app, method, &uri, body).await?;
            ensure!(got == want, "{method} {uri}: response differs from the in-process call");
        }
        Ok(())
    })
}
