use std::collections::HashMap;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use riskscope_core::api::Role;
use riskscope_core::fixtures::{patient_schema, PATIENTS_CSV};
use riskscope_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

pub const ANALYST: &str = "analyst-token";
pub const CONTROLLER: &str = "controller-token";

pub fn config() -> ServiceConfig {
    let tokens = HashMap::from([
        (ANALYST.to_string(), Role::Analyst),
        (CONTROLLER.to_string(), Role::Controller),
    ]);
    let mut cfg = ServiceConfig::new(tokens);
    cfg.workers = Some(1);
    cfg
}

pub fn app() -> Router {
    router(AppState::new(&config()).unwrap())
}

pub async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub async fn register_patients(app: &Router) -> String {
    let body = json!({"csv": PATIENTS_CSV, "schema": patient_schema()});
    let (status, v) = call(app, Method::POST, "/datasets", Some(CONTROLLER), Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["dataset_id"].as_str().unwrap().to_string()
}

pub fn patient_query_json() -> Value {
    json!({"kind": "count", "predicate": {"attr": "D", "op": "==", "value": 1}})
}

pub async fn submit(app: &Router, dataset_id: &str, query: Value) -> String {
    let (status, v) = call(
        app,
        Method::POST,
        "/queries",
        Some(ANALYST),
        Some(json!({"dataset_id": dataset_id, "query": query})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

pub async fn analyze(app: &Router, id: &str, params: &str) -> Value {
    let (status, v) = call(app, Method::GET, &format!("/queries/{id}/analysis{params}"), Some(CONTROLLER), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v
}

pub async fn answer(app: &Router, id: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/queries/{id}/answer"), Some(CONTROLLER), Some(body)).await
}
