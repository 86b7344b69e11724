use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use wmsurface_cli::http::{router, ErrorBody};
use wmsurface_core::{PatternSpec, ServiceConfig, SessionService};

fn app() -> Router {
    router(Arc::new(SessionService::new(ServiceConfig::default()).unwrap()))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn as_error(v: &Value) -> ErrorBody {
    serde_json::from_value(v.clone()).expect("error payload has code and message")
}

#[tokio::test]
async fn adaptive_session_over_http() {
    let app = app();
    let (status, created) = call(&app, Method::POST, "/sessions", Some(json!({"mode": "adaptive", "seed": 5}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["next"]["params"], json!({"L": 1, "K": 1}));
    let id = created["session"]["session_id"].as_str().unwrap().to_string();

    let (status, post) = call(&app, Method::GET, &format!("/sessions/{id}/posterior"), None).await;
    assert_eq!(status, StatusCode::OK);
    let n = post["grid"]["l_axis"].as_array().unwrap().len() * post["grid"]["k_axis"].as_array().unwrap().len();
    assert_eq!(post["grid"]["p_success"].as_array().unwrap().len(), n);

    let mut next = created["next"]["params"].clone();
    let mut trials = 0;
    loop {
        let body = json!({"L": next["L"], "K": next["K"], "passed": next["L"].as_u64().unwrap() < 7});
        let (status, resp) = call(&app, Method::POST, &format!("/sessions/{id}/outcome"), Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{resp}");
        trials += 1;
        if !resp["termination"].is_null() {
            assert_eq!(resp["termination"]["mode"], "adaptive");
            assert!(resp["next"].is_null());
            break;
        }
        next = resp["next"]["params"].clone();
    }
    assert_eq!(trials, 30);

    // the session is closed now
    let (status, err) =
        call(&app, Method::POST, &format!("/sessions/{id}/outcome"), Some(json!({"L": 2, "K": 1, "passed": true}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(as_error(&err).code, "conflict");

    let (status, post) = call(&app, Method::GET, &format!("/sessions/{id}/posterior"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(post["standardized"], true);

    let (status, record) = call(&app, Method::POST, &format!("/sessions/{id}/archive"), None).await;
    assert_eq!(status, StatusCode::OK);
    let outcomes = record["outcomes"].as_array().unwrap();
    assert_eq!(outcomes.iter().filter(|o| o["phantom"] == false).count(), 30);
    assert!(record["closed"].as_bool().unwrap());
}

#[tokio::test]
async fn classic_session_starts_at_l1_k3() {
    let app = app();
    let (status, created) = call(&app, Method::POST, "/sessions", Some(json!({"mode": "classic"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["next"]["params"], json!({"L": 1, "K": 3}));
    let id = created["session"]["session_id"].as_str().unwrap();
    let (status, err) = call(&app, Method::GET, &format!("/sessions/{id}/posterior"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(as_error(&err).code, "unsupported");
}

#[tokio::test]
async fn create_is_idempotent_with_token() {
    let app = app();
    let body = json!({"mode": "adaptive", "client_token": "abc"});
    let (_, a) = call(&app, Method::POST, "/sessions", Some(body.clone())).await;
    let (_, b) = call(&app, Method::POST, "/sessions", Some(body)).await;
    assert_eq!(a["session"]["session_id"], b["session"]["session_id"]);
    let (_, list) = call(&app, Method::GET, "/sessions", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn errors_carry_code_and_message() {
    let app = app();
    let (status, err) = call(&app, Method::GET, "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(as_error(&err).code, "not_found");

    let (status, err) = call(&app, Method::POST, "/sessions", Some(json!({"mode": "sideways"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(as_error(&err).code, "malformed_body");

    let (_, created) = call(&app, Method::POST, "/sessions", Some(json!({"mode": "adaptive"}))).await;
    let id = created["session"]["session_id"].as_str().unwrap();
    let (status, err) =
        call(&app, Method::POST, &format!("/sessions/{id}/outcome"), Some(json!({"L": 1.5, "K": 1, "passed": true}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(as_error(&err).code, "validation");
    assert!(!as_error(&err).message.is_empty());

    let bad_constraints = json!({"mode": "adaptive", "constraints": {
        "polygon_mask": {"vertices": [[1.0, 1.0], [2.0, 1.0]]},
        "integer_snap": true, "step_cap": 2,
        "bounds": {"l": [1.0, 16.0], "k": [1.0, 8.0]}
    }});
    let (status, err) = call(&app, Method::POST, "/sessions", Some(bad_constraints)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(as_error(&err).code, "bad_config");
}

#[tokio::test]
async fn pattern_endpoint_serves_pattern_spec() {
    let app = app();
    let (status, v) = call(&app, Method::GET, "/patterns?L=7&K=3&seed=9", None).await;
    assert_eq!(status, StatusCode::OK);
    for key in ["L", "K", "cells", "spatial_entropy", "color_mix_ratio", "percentile_spatial", "percentile_color", "seed", "pool_size"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let spec: PatternSpec = serde_json::from_value(v.clone()).unwrap();
    assert_eq!((spec.l, spec.k, spec.seed, spec.pool_size), (7, 3, 9, 500));
    assert_eq!(spec.cells.iter().filter(|&&c| c >= 0).count(), 7);
    assert_eq!(serde_json::to_value(&spec).unwrap(), v);
    // same request, same pattern
    let (_, again) = call(&app, Method::GET, "/patterns?L=7&K=3&seed=9", None).await;
    assert_eq!(again, v);

    let (status, err) = call(&app, Method::GET, "/patterns?L=2&K=3", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(as_error(&err).code, "domain");
    let (status, _) = call(&app, Method::GET, "/patterns?L=x&K=3", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_outcomes_are_serialized() {
    let app = app();
    let (_, created) = call(&app, Method::POST, "/sessions", Some(json!({"mode": "adaptive"}))).await;
    let id = created["session"]["session_id"].as_str().unwrap().to_string();
    let handles: Vec<_> = (0..6)
        .map(|i| {
            let app = app.clone();
            let id = id.clone();
            tokio::spawn(async move {
                call(&app, Method::POST, &format!("/sessions/{id}/outcome"), Some(json!({"L": 1, "K": 1, "passed": i % 2 == 0})))
                    .await
            })
        })
        .collect();
    let mut counts = Vec::new();
    for h in handles {
        let (status, resp) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        counts.push(resp["n_trials"].as_u64().unwrap());
    }
    counts.sort();
    assert_eq!(counts, (1..=6).collect::<Vec<u64>>());
}
