mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cfc_core::catalog::{read_manifest, ClipRecord, ClipStatus, ScoreSet};
use cfc_core::filter_sample::{finetune_select, Decision};
use cfc_core::pipeline::{
    load_decisions, review_router, CurationConfig, DecisionLog, Pipeline, QueueItem, ReviewState, ReviewStats, Stage,
};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn record(id: u64, quality: f64) -> ClipRecord {
    let mut r = ClipRecord::new("v".to_string(), id * 100, id * 100 + 50, 30.0, 64, 64);
    r.status = ClipStatus::Final;
    r.scores = Some(ScoreSet {
        s_quality: quality,
        s_ocr: 0.0,
        s_tc: 0.95,
        s_motion: 2.0,
        category_similarity: 0.5,
        s_align: Some(0.4),
    });
    r
}

async fn call(router: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn decide(clip_id: &str, decision: &str, reviewer: &str) -> Request<Body> {
    Request::post("/api/decision")
        .header("content-type", "application/json")
        .body(Body::from(
            json!({"clip_id": clip_id, "decision": decision, "reviewer": reviewer}).to_string(),
        ))
        .unwrap()
}

fn small_state(dir: &std::path::Path) -> (Arc<ReviewState>, Vec<String>) {
    let records = vec![record(1, 5.0), record(2, 8.0), record(3, 6.5), record(4, 8.0)];
    let ids = records.iter().map(|r| r.clip_id.clone()).collect();
    let log = DecisionLog::open(&dir.join("decisions.jsonl")).unwrap();
    (Arc::new(ReviewState::new(records, log, "jpg")), ids)
}

#[tokio::test]
async fn queue_orders_by_quality_then_id() {
    let dir = tempfile::tempdir().unwrap();
    let (state, ids) = small_state(dir.path());
    let router = review_router(state, None, None);
    let (status, body) = call(&router, get("/api/queue")).await;
    assert_eq!(status, StatusCode::OK);
    let queue: Vec<QueueItem> = serde_json::from_value(body).unwrap();
    let order: Vec<&str> = queue.iter().map(|q| q.clip_id.as_str()).collect();
    assert_eq!(order, [&ids[1], &ids[3], &ids[2], &ids[0]]);
    assert_eq!(queue[0].thumbnail_uri, format!("/thumbnails/{}.jpg", ids[1]));

    let (_, body) = call(&router, get("/api/queue?limit=2")).await;
    assert_eq!(body.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn decisions_leave_the_queue_and_count_in_stats() {
    let dir = tempfile::tempdir().unwrap();
    let (state, ids) = small_state(dir.path());
    let router = review_router(state, None, None);

    let (status, body) = call(&router, decide(&ids[1], "approved", "ana")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["clip_id"], ids[1].as_str());
    assert_eq!(body["reviewer"], "ana");
    call(&router, decide(&ids[0], "rejected", "ana")).await;

    let (_, body) = call(&router, get("/api/queue")).await;
    let queue: Vec<QueueItem> = serde_json::from_value(body).unwrap();
    assert_eq!(queue.iter().map(|q| &q.clip_id).collect::<Vec<_>>(), [&ids[3], &ids[2]]);

    let (_, body) = call(&router, get("/api/stats")).await;
    let stats: ReviewStats = serde_json::from_value(body).unwrap();
    assert_eq!(
        stats,
        ReviewStats {
            pending: 2,
            approved: 1,
            rejected: 1
        }
    );
}

#[tokio::test]
async fn unknown_clip_and_bad_bodies_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (state, ids) = small_state(dir.path());
    let router = review_router(state, None, None);
    let (status, _) = call(&router, decide("nope_000000_000001", "approved", "ana")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&router, decide(&ids[0], "approved", "  ")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&router, decide(&ids[0], "maybe", "ana")).await;
    assert!(status.is_client_error());
    assert!(load_decisions(&dir.path().join("decisions.jsonl")).unwrap().is_empty());
}

#[tokio::test]
async fn last_write_wins_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (state, ids) = small_state(dir.path());
    let router = review_router(state, None, None);
    call(&router, decide(&ids[2], "approved", "ana")).await;
    call(&router, decide(&ids[2], "rejected", "ben")).await;
    drop(router);

    let (restarted, _) = small_state(dir.path());
    assert_eq!(restarted.decision(&ids[2]), Some(Decision::Rejected));
    let router = review_router(restarted, None, None);
    let (_, body) = call(&router, get("/api/stats")).await;
    assert_eq!(body["rejected"], 1);
    assert_eq!(body["approved"], 0);

    let effective = load_decisions(&dir.path().join("decisions.jsonl")).unwrap();
    assert_eq!(effective, BTreeMap::from([(ids[2].clone(), Decision::Rejected)]));
    let log = std::fs::read_to_string(dir.path().join("decisions.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[tokio::test]
async fn torn_trailing_decision_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("decisions.jsonl");
    std::fs::write(&path, b"{\"clip_id\":\"v_000100_000150\",\"decis").unwrap();
    let (state, ids) = small_state(dir.path());
    let router = review_router(state, None, None);
    let (status, _) = call(&router, decide(&ids[0], "approved", "ana")).await;
    assert_eq!(status, StatusCode::OK);
    let effective = load_decisions(&path).unwrap();
    assert_eq!(effective.get(&ids[0]), Some(&Decision::Approved));
    assert_eq!(effective.len(), 1);
}

#[tokio::test]
async fn placeholder_page_without_static_assets() {
    let dir = tempfile::tempdir().unwrap();
    let (state, _) = small_state(dir.path());
    let resp = review_router(state, None, None).oneshot(get("/")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let text = resp.into_body().collect().await.unwrap().to_bytes();
    assert!(String::from_utf8_lossy(&text).contains("/api/"));
}

#[tokio::test]
async fn static_assets_and_thumbnails_are_served() {
    let dir = tempfile::tempdir().unwrap();
    let (state, ids) = small_state(dir.path());
    let assets = dir.path().join("ui");
    let thumbs = dir.path().join("thumbs");
    std::fs::create_dir_all(&assets).unwrap();
    std::fs::create_dir_all(&thumbs).unwrap();
    std::fs::write(assets.join("index.html"), "<html>ui</html>").unwrap();
    std::fs::write(thumbs.join(format!("{}.jpg", ids[0])), [0xffu8, 0xd8]).unwrap();
    let router = review_router(state, Some(&assets), Some(&thumbs));
    let resp = router.clone().oneshot(get("/index.html")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let resp = router.clone().oneshot(get(&format!("/thumbnails/{}.jpg", ids[0]))).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let (status, _) = call(&router, get("/api/stats")).await;
    assert_eq!(status, StatusCode::OK);
}

fn review_config(config_path: &std::path::Path, work: &std::path::Path) -> CurationConfig {
    let mut c = common::config_in(config_path, work);
    c.review.enabled = true;
    c
}

#[tokio::test(flavor = "multi_thread")]
async fn approvals_drive_the_finetune_manifest() {
    let (dir, config_path) = common::write_corpus();
    let work = dir.path().join("work");
    let config = review_config(&config_path, &work);
    let run = {
        let config = config.clone();
        move || {
            let p = Pipeline::new(config.clone()).unwrap();
            p.run(None).unwrap();
            read_manifest(&p.finetune_path()).unwrap()
        }
    };
    let before = tokio::task::spawn_blocking(run.clone()).await.unwrap();
    assert!(before.is_empty(), "nothing is approved yet");

    let finals = read_manifest(&work.join(format!("{}.jsonl", Stage::Finalize.manifest_name()))).unwrap();
    let eligible = finetune_select(&finals, &config.thresholds, &BTreeMap::new(), false);
    assert!(eligible.len() >= 2, "corpus yields {} eligible clips", eligible.len());
    let (approve, reject) = (&eligible[0].clip_id, &eligible[1].clip_id);

    let state = Arc::new(ReviewState::from_config(&config).unwrap());
    let router = review_router(state, None, None);
    assert_eq!(call(&router, decide(approve, "approved", "ana")).await.0, StatusCode::OK);
    assert_eq!(call(&router, decide(reject, "approved", "ana")).await.0, StatusCode::OK);
    assert_eq!(call(&router, decide(reject, "rejected", "ana")).await.0, StatusCode::OK);
    drop(router);

    let after = tokio::task::spawn_blocking(run).await.unwrap();
    assert_eq!(after.iter().map(|r| &r.clip_id).collect::<Vec<_>>(), [approve]);
    assert_eq!(after[0].status, ClipStatus::Approved);
}
