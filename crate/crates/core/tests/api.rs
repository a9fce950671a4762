use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use podium::api::views::{self, to_body, BoardQuery, Span};
use podium::api::{router, AppState};
use podium::corpus::CorpusStore;
use podium::effectiveness::EffectivenessModel;
use podium::factors::FactorId;
use podium::feature::{serialize_bundle, synth_bundle, FeatureBundle, SynthProfile};
use podium::recommend::{Direction, Granularity, Mode, RecommendationQuery};
use podium::summary::GmmOptions;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

fn bundle(id: &str, seed: u64, level: u8) -> FeatureBundle {
    synth_bundle(seed, &SynthProfile {
        speech_id: Some(id.to_string()),
        duration_s: 16.0,
        sentence_count: 4,
        level: Some(level),
        ..SynthProfile::default()
    })
    .unwrap()
}

struct Fixture {
    _dir: TempDir,
    state: AppState,
    app: Router,
}

fn fixture(bundles: Vec<FeatureBundle>) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let store = CorpusStore::open(dir.path()).unwrap();
    for b in bundles {
        store.ingest(b, false).unwrap();
    }
    let state = AppState {
        store: Arc::new(store),
        model: Arc::new(EffectivenessModel::reference()),
        gmm: GmmOptions::default(),
    };
    Fixture {
        _dir: dir,
        app: router(state.clone()),
        state,
    }
}

fn corpus(n: usize) -> Fixture {
    fixture((0..n).map(|i| bundle(&format!("s{i:02}"), i as u64, (i % 6 + 1) as u8)).collect())
}

async fn call(app: &Router, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, "GET", uri, Vec::new()).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn assert_error(status: StatusCode, body: &Value, want_status: u16, code: &str) {
    assert_eq!(status.as_u16(), want_status, "{body}");
    assert_eq!(body["code"], code, "{body}");
    assert_eq!(body["status"], want_status);
    assert_eq!(body["schema_version"], 1);
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn empty_corpus_lists_nothing() {
    let f = fixture(Vec::new());
    let (s, v) = get(&f.app, "/api/speeches").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["speeches"], serde_json::json!([]));
}

#[tokio::test]
async fn ingest_then_list() {
    let f = fixture(Vec::new());
    let a = bundle("alpha", 1, 3);
    let (s, b) = call(&f.app, "POST", "/api/ingest", serialize_bundle(&a)).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v, serde_json::json!({"schema_version": 1, "id": "alpha", "replaced": false}));
    call(&f.app, "POST", "/api/ingest", serialize_bundle(&bundle("beta", 2, 4))).await;

    let (_, v) = get(&f.app, "/api/speeches").await;
    let list = v["speeches"].as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert_eq!(list[0], serde_json::to_value(&a.meta).unwrap());

    let (s, b) = call(&f.app, "POST", "/api/ingest", serialize_bundle(&a)).await;
    assert_error(s, &serde_json::from_slice(&b).unwrap(), 409, "DuplicateId");
    let (s, b) = call(&f.app, "POST", "/api/ingest?force", serialize_bundle(&a)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&b).unwrap()["replaced"], true);

    let (s, b) = call(&f.app, "POST", "/api/ingest", b"{\"schema_version\": 1}".to_vec()).await;
    assert_error(s, &serde_json::from_slice(&b).unwrap(), 400, "SchemaError");
}

#[tokio::test]
async fn factors_match_cache_and_significance() {
    let f = corpus(3);
    let (s, v) = get(&f.app, "/api/speeches/s01/factors").await;
    assert_eq!(s, StatusCode::OK);
    let snap = f.state.store.snapshot().unwrap();
    let cached = &snap.get("s01").unwrap().factors;
    assert_eq!(v["factors"], serde_json::to_value(cached).unwrap());
    let model = EffectivenessModel::reference();
    let rows = v["effectiveness"].as_array().unwrap();
    assert_eq!(rows.len(), 23);
    for (row, fid) in rows.iter().zip(FactorId::ALL) {
        assert_eq!(row["factor"], fid.as_str());
        assert_eq!(row["significant"], model.is_significant(fid));
        if !row["score"].is_null() && !model.is_significant(fid) {
            assert_eq!(row["label"], "gray");
        }
    }
    let significant: Vec<&str> = rows
        .iter()
        .filter(|r| r["significant"] == true)
        .map(|r| r["factor"].as_str().unwrap())
        .collect();
    assert_eq!(significant.len(), 6);

    let (s, v) = get(&f.app, "/api/speeches/nope/factors").await;
    assert_error(s, &v, 404, "NotFound");
    let (s, v) = get(&f.app, "/api/speeches/s01/factors?start=5&end=2").await;
    assert_error(s, &v, 400, "RangeError");
    let (s, v) = get(&f.app, "/api/speeches/s01/factors?start=abc").await;
    assert_error(s, &v, 400, "InvalidArgument");
}

#[tokio::test]
async fn responses_equal_in_process_calls() {
    let f = corpus(4);
    let snap = f.state.store.snapshot().unwrap();
    let m = &f.state.model;
    let gmm = &f.state.gmm;
    let span = Span {
        start: Some(2.0),
        end: Some(11.0),
    };
    let sel = [FactorId::PitchAverage, FactorId::ValenceAverage];

    let cases: Vec<(String, Vec<u8>)> = vec![
        (
            "/api/speeches/s02/factors?start=2&end=11".into(),
            to_body(views::factor_report(&snap, m, "s02", span).unwrap()),
        ),
        (
            "/api/speeches/s02/slices?start=2&end=11&factors=voice.pitch.average,face.valence.average".into(),
            to_body(views::slices(&snap, m, "s02", span, &sel).unwrap()),
        ),
        (
            "/api/speeches/s02/slices".into(),
            to_body(views::slices(&snap, m, "s02", Span::whole(), &[]).unwrap()),
        ),
        (
            "/api/speeches/s02/twin?factors=voice.pitch.average,face.valence.average".into(),
            to_body(views::twin(&snap, m, gmm, "s02", Span::whole(), &sel).unwrap()),
        ),
        (
            "/api/speeches/s02/overlay?t=6&interval=0.5".into(),
            to_body(views::overlay(&snap, "s02", 6.0, Some(0.5), None).unwrap()),
        ),
        (
            "/api/board/voice.pitch.average?speech_id=s02&granularity=sentence".into(),
            to_body(
                views::factor_board(&snap, m, FactorId::PitchAverage, &BoardQuery {
                    speech_id: Some("s02".into()),
                    granularity: Some(Granularity::Sentence),
                    ..BoardQuery::default()
                })
                .unwrap(),
            ),
        ),
        ("/api/speeches/s00/compare/s03".into(), to_body(views::compare(&snap, "s00", "s03").unwrap())),
        ("/api/speeches".into(), to_body(views::list_speeches(&snap))),
        ("/api/encodings".into(), to_body(views::encodings())),
    ];
    for (uri, want) in cases {
        let (s, got) = call(&f.app, "GET", &uri, Vec::new()).await;
        assert_eq!(s, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&got));
        assert_eq!(got, want, "{uri}");
        // a second call is byte-stable
        assert_eq!(call(&f.app, "GET", &uri, Vec::new()).await.1, want, "{uri}");
    }
}

#[tokio::test]
async fn slices_and_twin_contracts() {
    let f = corpus(2);
    let (_, v) = get(&f.app, "/api/speeches/s00/slices?start=0&end=16").await;
    let slices = v["slices"].as_array().unwrap();
    assert_eq!(slices.len(), 8);
    let b: Vec<f64> = v["boundaries"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (i, x) in b.iter().enumerate() {
        assert!((x - 2.0 * i as f64).abs() < 1e-12);
    }
    let (_, t) = get(&f.app, "/api/speeches/s00/twin").await;
    let w: f64 = t["representative_gestures"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["weight"].as_f64().unwrap())
        .sum();
    assert!((w - 1.0).abs() < 1e-9);
    let (s, v) = get(&f.app, "/api/speeches/s00/twin?factors=bogus").await;
    assert_error(s, &v, 400, "UnknownFactor");
}

#[tokio::test]
async fn model_round_trips_the_reference_file() {
    let f = corpus(1);
    let (s, body) = call(&f.app, "GET", "/api/model", Vec::new()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(String::from_utf8(body).unwrap(), include_str!("../data/reference_model.json"));
}

#[tokio::test]
async fn overlay_opacity_increases() {
    let f = corpus(1);
    let (s, v) = get(&f.app, "/api/speeches/s00/overlay?t=8&interval=0.5").await;
    assert_eq!(s, StatusCode::OK);
    let op: Vec<f64> = v["samples"].as_array().unwrap().iter().map(|x| x["opacity"].as_f64().unwrap()).collect();
    assert!(!op.is_empty());
    assert!(op.windows(2).all(|w| w[1] > w[0]));
    let (s, v) = get(&f.app, "/api/speeches/s00/overlay?t=99").await;
    assert_error(s, &v, 400, "RangeError");
    let (s, v) = get(&f.app, "/api/speeches/s00/overlay").await;
    assert_error(s, &v, 400, "InvalidArgument");
}

fn query(mode: Mode, factors: Vec<FactorId>) -> RecommendationQuery {
    RecommendationQuery {
        speech_id: "s00".into(),
        start_s: None,
        end_s: None,
        granularity: Granularity::Speech,
        mode,
        factors,
        k: 1,
        direction: Direction::MostSimilar,
        include_self: false,
    }
}

#[tokio::test]
async fn recommend_endpoint() {
    let f = corpus(2);
    let q = query(Mode::Factor, vec![FactorId::PitchAverage, FactorId::VolumeAverage]);
    let (s, body) = call(&f.app, "POST", "/api/recommend", serde_json::to_vec(&q).unwrap()).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["candidates"][0]["speech_id"], "s01");
    assert_eq!(v["twins"].as_array().unwrap().len(), 1);
    let snap = f.state.store.snapshot().unwrap();
    assert_eq!(body, to_body(views::recommend_with_twins(&snap, &f.state.gmm, &q).unwrap()));

    let mut sq = query(Mode::Script, Vec::new());
    sq.granularity = Granularity::Sentence;
    sq.k = 3;
    let (s, body) = call(&f.app, "POST", "/api/recommend", serde_json::to_vec(&sq).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, to_body(views::recommend_with_twins(&snap, &f.state.gmm, &sq).unwrap()));

    let (s, b) = call(&f.app, "POST", "/api/recommend", b"{\"speech_id\": 3}".to_vec()).await;
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert!(s.is_client_error());
    assert_eq!(v["code"], "SchemaError");
}

#[tokio::test]
async fn undefined_query_factor_is_rejected() {
    let mut a = bundle("s00", 0, 2);
    a.frames.valence.iter_mut().for_each(|x| *x = None);
    let f = fixture(vec![a, bundle("s01", 1, 3)]);
    let q = query(Mode::Factor, vec![FactorId::ValenceAverage]);
    let (s, b) = call(&f.app, "POST", "/api/recommend", serde_json::to_vec(&q).unwrap()).await;
    assert_error(s, &serde_json::from_slice(&b).unwrap(), 400, "UndefinedFactor");
}

#[tokio::test]
async fn unknown_routes_are_json_404() {
    let f = corpus(1);
    let (s, v) = get(&f.app, "/api/nothing/here").await;
    assert_error(s, &v, 404, "NotFound");
    let (s, v) = get(&f.app, "/api/board/not.a.factor").await;
    assert_error(s, &v, 400, "UnknownFactor");
}
