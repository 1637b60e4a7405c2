use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use rctouch::circuit::WiringMode;
use rctouch::geom::Vec3;
use rctouch::mesh::{box_mesh, write_stl, TriangleMesh, VoxelizeParams};
use rctouch::pipeline::{run_pipeline, PipelineConfig};
use rctouch::selection::{write_selection, SelectedPoint, TouchpointSet};
use rctouch_cli::serve::{router, AppState};
use serde_json::Value;
use std::time::Duration;
use tower::ServiceExt;

fn slab() -> TriangleMesh {
    box_mesh(Vec3::new(-60.0, -30.0, -20.0), Vec3::new(60.0, 30.0, 20.0))
}

fn selection(mode: WiringMode) -> TouchpointSet {
    let mut wiring = vec![SelectedPoint::at("w1", Vec3::new(-60.0, 0.0, 0.0))];
    if mode == WiringMode::DoubleWire {
        wiring.push(SelectedPoint::at("w2", Vec3::new(60.0, 0.0, 0.0)));
    }
    TouchpointSet {
        mode,
        touchpoints: (0..4)
            .map(|i| SelectedPoint::at(format!("t{i}"), Vec3::new(-36.0 + 24.0 * i as f64, 0.0, 20.0)))
            .collect(),
        wiring_points: wiring,
    }
}

fn config() -> PipelineConfig {
    PipelineConfig {
        voxel: VoxelizeParams::with_size(2.0),
        ..Default::default()
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn json(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn upload(app: &Router, mesh: &TriangleMesh, name: &str) -> String {
    let (s, v) = json(app, "POST", &format!("/models?name={name}"), write_stl(mesh, "m")).await;
    assert_eq!(s, StatusCode::CREATED);
    v["id"].as_str().unwrap().to_string()
}

async fn wait(app: &Router, run: &str) -> Value {
    for _ in 0..600 {
        let (_, v) = json(app, "GET", &format!("/runs/{run}"), Body::empty()).await;
        match v["state"].as_str() {
            Some("succeeded") | Some("failed") => return v,
            _ => tokio::time::sleep(Duration::from_millis(50)).await,
        }
    }
    panic!("run {run} did not finish");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn upload_select_run_and_fetch() {
    let out = tempfile::tempdir().unwrap();
    let app = router(AppState::new(config(), out.path().to_path_buf()));

    let (s, v) = json(&app, "GET", "/health", Body::empty()).await;
    assert_eq!((s, v["ok"].as_bool()), (StatusCode::OK, Some(true)));

    let id = upload(&app, &slab(), "slab.stl").await;
    let (_, mesh) = json(&app, "GET", &format!("/models/{id}/mesh"), Body::empty()).await;
    assert_eq!(mesh["triangle_count"], 12);
    assert_eq!(mesh["triangles"].as_array().unwrap().len(), 12);

    let (s, _) = json(&app, "POST", &format!("/models/{id}/runs"), Body::empty()).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let sel = write_selection(&selection(WiringMode::SingleWire)).unwrap();
    let (s, v) = json(&app, "POST", &format!("/models/{id}/selection"), sel).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["touchpoints"][0]["centroid"].is_array());
    let (_, v) = json(&app, "GET", &format!("/models/{id}"), Body::empty()).await;
    assert_eq!(v["has_selection"], true);

    let (s, v) = json(&app, "POST", &format!("/models/{id}/runs"), Body::empty()).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let run = v["run_id"].as_str().unwrap().to_string();
    let done = wait(&app, &run).await;
    assert_eq!(done["state"], "succeeded", "{done}");
    assert_eq!(done["timings"].as_object().unwrap().len(), 4);

    let (_, poly) = json(&app, "GET", &format!("/runs/{run}/polylines"), Body::empty()).await;
    assert_eq!(poly["segments"].as_array().unwrap().len(), 4);
    let (s, grid) = json(&app, "GET", &format!("/runs/{run}/feasibility"), Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    let rows = grid["cells"].as_array().unwrap();
    assert_eq!(rows.len(), grid["r1_values"].as_array().unwrap().len());
    assert!(grid["selected"]["r1"].as_f64().unwrap() > 0.0);
    let (_, prof) = json(&app, "GET", &format!("/runs/{run}/delay-profile"), Body::empty()).await;
    assert_eq!(prof["exact"]["times"].as_array().unwrap().len(), 4);
    let (_, session) = json(&app, "GET", &format!("/runs/{run}/session"), Body::empty()).await;
    assert!(!session["samples"].as_array().unwrap().is_empty());

    // Served bundle equals a direct pipeline run and the files written to disk.
    let direct = run_pipeline(&config(), &slab(), "slab.stl", &selection(WiringMode::SingleWire)).unwrap();
    let (_, listing) = json(&app, "GET", &format!("/runs/{run}/bundle"), Body::empty()).await;
    let listed = listing["files"].as_array().unwrap();
    assert_eq!(listed.len(), 5);
    let dir = std::path::PathBuf::from(done["bundle_dir"].as_str().unwrap());
    let mut expected: Vec<(String, Vec<u8>)> =
        direct.bundle.stl_bytes().into_iter().map(|(f, b)| (f.to_string(), b)).collect();
    expected.push(("manifest.json".into(), direct.bundle.manifest_json().unwrap().into_bytes()));
    for (file, bytes) in expected {
        let (s, served) = call(&app, "GET", &format!("/runs/{run}/bundle/{file}"), Body::empty()).await;
        assert_eq!(s, StatusCode::OK);
        assert!(served == bytes, "{file} differs from a direct run");
        assert!(std::fs::read(dir.join(&file)).unwrap() == bytes, "{file} differs on disk");
    }
    let (s, _) = call(&app, "GET", &format!("/runs/{run}/bundle/nope.stl"), Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn invalid_selections_are_unprocessable() {
    let out = tempfile::tempdir().unwrap();
    let app = router(AppState::new(config(), out.path().to_path_buf()));
    let id = upload(&app, &slab(), "slab.stl").await;
    let dup = write_selection(&selection(WiringMode::DoubleWire)).unwrap().replace("\"t1\"", "\"t0\"");
    let (s, v) = json(&app, "POST", &format!("/models/{id}/selection"), dup).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"]["message"].as_str().unwrap().contains("duplicate"));

    let bad_tri = r#"{"mode": "single-wire", "touchpoints": [{"id": "a", "triangles": [999]}],
        "wiring_points": [{"id": "w", "centroid": [0, 0, 0]}]}"#;
    let (s, _) = json(&app, "POST", &format!("/models/{id}/selection"), bad_tri).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (s, _) = json(&app, "POST", "/models/m999/selection", "{}").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = json(&app, "POST", "/models", &b"not an stl"[..]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = json(&app, "GET", "/runs/r42", Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn failed_runs_carry_their_stage() {
    let out = tempfile::tempdir().unwrap();
    let app = router(AppState::new(config(), out.path().to_path_buf()));
    let thin = box_mesh(Vec3::new(-60.0, -30.0, -2.0), Vec3::new(60.0, 30.0, 2.0));
    let id = upload(&app, &thin, "thin.stl").await;
    let sel = r#"{"mode": "double-wire", "touchpoints": [{"id": "t", "centroid": [0, 0, 2]}],
        "wiring_points": [{"id": "a", "centroid": [-60, 0, 0]}, {"id": "b", "centroid": [60, 0, 0]}]}"#;
    assert_eq!(json(&app, "POST", &format!("/models/{id}/selection"), sel).await.0, StatusCode::OK);

    let (_, v) = json(&app, "POST", &format!("/models/{id}/runs"), Body::empty()).await;
    let done = wait(&app, v["run_id"].as_str().unwrap()).await;
    assert_eq!(done["state"], "failed");
    assert_eq!(done["error"]["stage"], "trim");
    assert!(done["error"]["hint"].is_string());

    // Mode mismatch in the submitted config is rejected before queueing.
    let cfg = r#"{"mode": "single-wire"}"#;
    let (s, v) = json(&app, "POST", &format!("/models/{id}/runs"), cfg).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["stage"], "validate");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn runs_on_one_model_queue_in_order() {
    let out = tempfile::tempdir().unwrap();
    let app = router(AppState::new(config(), out.path().to_path_buf()));
    let id = upload(&app, &slab(), "slab.stl").await;
    let sel = write_selection(&selection(WiringMode::DoubleWire)).unwrap();
    json(&app, "POST", &format!("/models/{id}/selection"), sel).await;
    let (_, a) = json(&app, "POST", &format!("/models/{id}/runs"), Body::empty()).await;
    let (_, b) = json(&app, "POST", &format!("/models/{id}/runs"), Body::empty()).await;
    assert_eq!(b["state"], "queued");
    assert_eq!(b["position"], 1);
    let (a, b) = (a["run_id"].as_str().unwrap().to_string(), b["run_id"].as_str().unwrap().to_string());
    assert_eq!(wait(&app, &a).await["state"], "succeeded");
    assert_eq!(wait(&app, &b).await["state"], "succeeded");
    let (s, _) = json(&app, "GET", &format!("/runs/{a}/feasibility"), Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (_, ma) = call(&app, "GET", &format!("/runs/{a}/bundle/manifest.json"), Body::empty()).await;
    let (_, mb) = call(&app, "GET", &format!("/runs/{b}/bundle/manifest.json"), Body::empty()).await;
    assert_eq!(ma, mb);
}

#[tokio::test]
async fn cors_and_config() {
    let app = router(AppState::new(config(), std::env::temp_dir()));
    let req = Request::builder().method("OPTIONS").uri("/models").body(Body::empty()).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::NO_CONTENT);
    assert_eq!(res.headers()["access-control-allow-origin"], "*");
    let (s, v) = json(&app, "GET", "/config", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    let back: PipelineConfig = serde_json::from_value(v).unwrap();
    assert_eq!(back, config());
}
