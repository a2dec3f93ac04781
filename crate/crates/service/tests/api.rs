mod common;

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use hpolens_core::run_model::{incumbent, BudgetSelect};
use hpolens_service::api::{router, AppState};
use hpolens_service::jobs::JobQueue;
use hpolens_service::registry::Registry;

use common::fixture;

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = send(app, req).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn submit(app: &Router, body: Value) -> String {
    let (s, v) = post(app, "/api/jobs", body).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    v["job_id"].as_str().unwrap().to_string()
}

async fn wait_terminal(app: &Router, id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let (s, v) = get(app, &format!("/api/jobs/{id}")).await;
        assert_eq!(s, StatusCode::OK);
        if v["state"] == "finished" || v["state"] == "failed" {
            return v;
        }
        assert!(Instant::now() < deadline, "job {id} did not finish");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[tokio::test]
async fn empty_runs_dir_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState {
        registry: Arc::new(Registry::open(dir.path()).unwrap()),
        jobs: Arc::new(JobQueue::new(1, None)),
        assets_dir: None,
    });
    let (s, v) = get(&router(state), "/api/runs").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!([]));
}

#[tokio::test]
async fn runs_are_described() {
    let fx = fixture(1);
    let app = router(fx.state.clone());
    let (s, v) = get(&app, "/api/runs").await;
    assert_eq!(s, StatusCode::OK);
    let ids: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["alpha", "beta", "broken"]);
    let alpha = &v[0];
    assert_eq!(alpha["n_trials"], 80);
    assert_eq!(alpha["objectives"].as_array().unwrap().len(), 2);
    assert_eq!(alpha["live"], false);
    for key in ["name", "budgets"] {
        assert!(alpha.get(key).is_some(), "missing {key}");
    }
}

#[tokio::test]
async fn overview_status_table_sums_to_trial_count() {
    let fx = fixture(1);
    let app = router(fx.state.clone());
    let (s, v) = get(&app, "/api/runs/alpha").await;
    assert_eq!(s, StatusCode::OK);
    let all = v["status"]
        .as_array()
        .unwrap()
        .iter()
        .find(|row| row["budget"] == "all")
        .unwrap();
    let total: u64 = all["counts"].as_object().unwrap().values().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, v["n_trials"].as_u64().unwrap());

    let (s, v) = get(&app, "/api/runs/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_run");
}

#[tokio::test]
async fn config_detail_flags_the_incumbent() {
    let fx = fixture(1);
    let app = router(fx.state.clone());
    let run = fx.state.registry.get("alpha").unwrap();
    let best = incumbent(&*run, "loss", BudgetSelect::Highest).unwrap().unwrap().config_id;
    let (s, v) = get(&app, &format!("/api/runs/alpha/configs/{best}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["incumbent"], true);
    assert_eq!(v["config_id"], best.as_str());

    let (s, v) = get(&app, "/api/runs/alpha/configs/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_config");
}

#[tokio::test]
async fn resubmission_after_completion_returns_identical_bytes() {
    let fx = fixture(1);
    let app = router(fx.state.clone());
    let body = json!({"plugin": "importances", "run_ids": ["alpha"], "params": {"objective": "loss"}});
    let first = submit(&app, body.clone()).await;
    let done = wait_terminal(&app, &first).await;
    assert_eq!(done["state"], "finished", "{done}");
    assert_eq!(done["cached"], false);

    let second = submit(&app, body).await;
    assert_ne!(first, second);
    let again = wait_terminal(&app, &second).await;
    assert_eq!(again["cached"], true);

    let a = fx.state.jobs.status(&first).unwrap().result.unwrap();
    let b = fx.state.jobs.status(&second).unwrap().result.unwrap();
    assert_eq!(a, b);
    assert_eq!(done["result"], again["result"]);
    assert_eq!(done["result"]["params"]["seed"], 0);
}

#[tokio::test]
async fn job_payload_is_spliced_verbatim() {
    let fx = fixture(1);
    let app = router(fx.state.clone());
    let id = submit(&app, json!({"plugin": "budget_correlation", "run_ids": ["alpha"], "params": {"objective": "loss"}})).await;
    wait_terminal(&app, &id).await;
    let (_, raw) = send(&app, Request::get(format!("/api/jobs/{id}")).body(Body::empty()).unwrap()).await;
    let stored = fx.state.jobs.status(&id).unwrap().result.unwrap();
    let needle = [b"\"result\":".as_slice(), stored.as_slice()].concat();
    assert!(raw.windows(needle.len()).any(|w| w == needle.as_slice()));
}

#[tokio::test]
async fn failed_jobs_name_the_cause() {
    let fx = fixture(1);
    let app = router(fx.state.clone());
    let id = submit(&app, json!({"plugin": "footprint", "run_ids": ["broken"]})).await;
    let v = wait_terminal(&app, &id).await;
    assert_eq!(v["state"], "failed");
    assert_eq!(v["error"]["code"], "empty_selection");
    assert!(v.get("result").is_none());
}

#[tokio::test]
async fn request_errors_carry_code_and_field() {
    let fx = fixture(0);
    let app = router(fx.state.clone());

    let (s, v) = post(&app, "/api/jobs", json!({"plugin": "nope", "run_ids": ["alpha"]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "unknown_plugin");
    assert_eq!(v["error"]["field"], "plugin");

    let (s, v) = post(&app, "/api/jobs", json!({"plugin": "pdp", "run_ids": ["ghost"]})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["field"], "run_ids");

    let (s, v) = post(&app, "/api/jobs", json!({"plugin": "pdp", "run_ids": ["alpha"], "params": {"gird_size": 3}})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "unknown_param");
    assert_eq!(v["error"]["field"], "gird_size");
    assert!(v["error"]["message"].as_str().unwrap().contains("grid_size"));

    let (s, v) = post(&app, "/api/jobs", json!({"plugin": "pdp", "run_ids": ["alpha"], "params": {"objective": "acc"}})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["field"], "objective");

    let (s, v) = post(&app, "/api/jobs", json!({"plugin": "pdp", "runs": ["alpha"]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "invalid_request");

    let (s, v) = get(&app, "/api/jobs/job-999").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_job");
}

#[tokio::test]
async fn identical_submissions_share_a_job() {
    let fx = fixture(0);
    let app = router(fx.state.clone());
    let body = json!({"plugin": "pdp", "run_ids": ["alpha"], "params": {"grid_size": 5}});
    let a = submit(&app, body.clone()).await;
    let b = submit(&app, body).await;
    let c = submit(&app, json!({"plugin": "pdp", "run_ids": ["alpha"], "params": {"grid_size": 6}})).await;
    assert_eq!(a, b);
    assert_ne!(a, c);
    let (_, v) = get(&app, &format!("/api/jobs/{a}")).await;
    assert_eq!(v["state"], "queued");
}

#[tokio::test]
async fn groups_feed_multi_run_plugins() {
    let fx = fixture(1);
    let app = router(fx.state.clone());
    let (s, g) = post(&app, "/api/groups", json!({"name": "ab", "run_ids": ["alpha", "beta"]})).await;
    assert_eq!(s, StatusCode::CREATED);
    let gid = g["group_id"].as_str().unwrap();
    let id = submit(&app, json!({"plugin": "cost_over_time", "run_ids": [gid], "params": {"objective": "loss"}})).await;
    let v = wait_terminal(&app, &id).await;
    assert_eq!(v["state"], "finished", "{v}");
    assert_eq!(v["result"]["group"], true);
    assert_eq!(v["result"]["runs"].as_array().unwrap().len(), 2);

    let (s, v) = post(&app, "/api/groups", json!({"name": "x", "run_ids": ["alpha", "broken"]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    assert_eq!(v["error"]["field"], "run_ids");
}

#[tokio::test]
async fn refresh_updates_trial_counts_and_cache_keys() {
    let fx = fixture(1);
    let app = router(fx.state.clone());
    let body = json!({"plugin": "overview", "run_ids": ["beta"]});
    let before = submit(&app, body.clone()).await;
    let old = wait_terminal(&app, &before).await;

    let trials = fx.run_dir("beta").join("trials.jsonl");
    let last = std::fs::read_to_string(&trials).unwrap().lines().last().unwrap().to_string();
    let mut trial: Value = serde_json::from_str(&last).unwrap();
    trial["start"] = json!(1e6);
    trial["end"] = json!(1e6 + 1.0);
    let mut f = std::fs::OpenOptions::new().append(true).open(&trials).unwrap();
    writeln!(f, "{trial}").unwrap();
    drop(f);
    assert_eq!(fx.state.registry.refresh(), ["beta"]);

    let (_, runs) = get(&app, "/api/runs").await;
    let beta = runs.as_array().unwrap().iter().find(|r| r["id"] == "beta").unwrap();
    assert_eq!(beta["n_trials"], 61);
    assert_eq!(beta["live"], true);

    let after = submit(&app, body).await;
    let new = wait_terminal(&app, &after).await;
    assert_eq!(new["cached"], false);
    assert_ne!(old["result"]["runs"][0]["content_id"], new["result"]["runs"][0]["content_id"]);
    let (_, still) = get(&app, &format!("/api/jobs/{before}")).await;
    assert_eq!(still["result"], old["result"]);
}

#[tokio::test]
async fn root_serves_a_page_without_dashboard_assets() {
    let fx = fixture(0);
    let app = router(fx.state.clone());
    let (s, body) = send(&app, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("/api/runs"));
    let (s, v) = get(&app, "/api/nothing").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_route");
}

#[tokio::test]
async fn dashboard_assets_are_served_with_an_app_shell_fallback() {
    let fx = fixture(0);
    let assets = fx.dir.path().join("assets");
    std::fs::create_dir(&assets).unwrap();
    std::fs::write(assets.join("index.html"), "<html>shell</html>").unwrap();
    std::fs::write(assets.join("app.js"), "console.log(1)").unwrap();
    let state = Arc::new(AppState {
        registry: fx.state.registry.clone(),
        jobs: fx.state.jobs.clone(),
        assets_dir: Some(assets),
    });
    let app = router(state);
    let (s, body) = send(&app, Request::get("/app.js").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"console.log(1)");
    let (_, body) = send(&app, Request::get("/runs/alpha/pdp").body(Body::empty()).unwrap()).await;
    assert_eq!(body, b"<html>shell</html>");
    let (s, _) = send(&app, Request::get("/../secret").body(Body::empty()).unwrap()).await;
    assert_ne!(s, StatusCode::INTERNAL_SERVER_ERROR);
}
