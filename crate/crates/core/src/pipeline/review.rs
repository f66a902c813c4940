//! Human final-selection service: a review queue over the final manifest and
//! an append-only decision log that finetune selection replays.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use super::{CurationConfig, Stage};
use crate::catalog::{read_manifest_file, CategoryLabel, ClipRecord, ScoreSet};
use crate::error::{Error, Result};
use crate::filter_sample::Decision;

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEntry {
    pub clip_id: String,
    pub decision: Decision,
    pub reviewer: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
}

fn replay(path: &Path) -> Result<(BTreeMap<String, Decision>, u64)> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((BTreeMap::new(), 0)),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut effective = BTreeMap::new();
    let mut entries = 0;
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DecisionEntry>(line) {
            Ok(e) => {
                effective.insert(e.clip_id, e.decision);
                entries += 1;
            }
            // a torn final line from an interrupted append
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                tracing::warn!(path = %path.display(), line = i + 1, "ignoring incomplete trailing decision");
            }
            Err(e) => {
                return Err(Error::MalformedManifest {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((effective, entries))
}

/// Effective decision per clip after replaying the log; later entries win.
/// A missing log means no decisions.
pub fn load_decisions(path: &Path) -> Result<BTreeMap<String, Decision>> {
    replay(path).map(|(d, _)| d)
}

/// Append-only log with a single writer.
pub struct DecisionLog {
    path: PathBuf,
    file: File,
    effective: BTreeMap<String, Decision>,
    entries: u64,
}

impl DecisionLog {
    pub fn open(path: &Path) -> Result<Self> {
        let (effective, entries) = replay(path)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        // drop a torn trailing line so the next entry starts cleanly
        if let Ok(bytes) = std::fs::read(path) {
            if !bytes.is_empty() && !bytes.ends_with(b"\n") {
                let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
                OpenOptions::new()
                    .write(true)
                    .open(path)
                    .and_then(|f| f.set_len(keep as u64))
                    .map_err(|e| Error::io(path, e))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(DecisionLog {
            path: path.to_path_buf(),
            file,
            effective,
            entries,
        })
    }

    pub fn append(&mut self, entry: DecisionEntry) -> Result<()> {
        let mut line = serde_json::to_vec(&entry).expect("decision serializes");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.effective.insert(entry.clip_id, entry.decision);
        self.entries += 1;
        Ok(())
    }

    pub fn decision(&self, clip_id: &str) -> Option<Decision> {
        self.effective.get(clip_id).copied()
    }

    pub fn effective(&self) -> &BTreeMap<String, Decision> {
        &self.effective
    }

    pub fn entries(&self) -> u64 {
        self.entries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub clip_id: String,
    pub scores: Option<ScoreSet>,
    pub caption: Option<String>,
    pub category: Option<CategoryLabel>,
    pub thumbnail_uri: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub pending: u64,
    pub approved: u64,
    pub rejected: u64,
}

pub struct ReviewState {
    /// Candidates by descending s_quality, then clip_id.
    candidates: Vec<ClipRecord>,
    index: HashMap<String, usize>,
    log: Mutex<DecisionLog>,
    thumbnail_ext: String,
}

fn quality(r: &ClipRecord) -> f64 {
    r.scores.map_or(f64::NEG_INFINITY, |s| s.s_quality)
}

impl ReviewState {
    pub fn new(mut candidates: Vec<ClipRecord>, log: DecisionLog, thumbnail_ext: &str) -> Self {
        candidates.sort_by(|a, b| {
            quality(b)
                .total_cmp(&quality(a))
                .then_with(|| a.clip_id.cmp(&b.clip_id))
        });
        let index = candidates
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clip_id.clone(), i))
            .collect();
        ReviewState {
            candidates,
            index,
            log: Mutex::new(log),
            thumbnail_ext: thumbnail_ext.to_string(),
        }
    }

    /// Candidates from the final manifest, or the sampled one when no
    /// final manifest is complete yet.
    pub fn from_config(config: &CurationConfig) -> Result<Self> {
        let work = &config.paths.work_dir;
        let mut candidates = None;
        for stage in [Stage::Finalize, Stage::Sample] {
            let path = work.join(format!("{}.jsonl", stage.manifest_name()));
            if let Ok(m) = read_manifest_file(&path) {
                if m.is_complete() {
                    candidates = Some(m.records);
                    break;
                }
            }
        }
        let candidates = candidates.ok_or_else(|| Error::MissingInput("final".into()))?;
        let log = DecisionLog::open(&config.decision_log_path())?;
        Ok(ReviewState::new(candidates, log, &config.review.thumbnail_ext))
    }

    pub fn queue(&self, limit: usize) -> Vec<QueueItem> {
        let log = self.log.lock();
        self.candidates
            .iter()
            .filter(|r| log.decision(&r.clip_id).is_none())
            .take(limit)
            .map(|r| QueueItem {
                clip_id: r.clip_id.clone(),
                scores: r.scores,
                caption: r.caption.as_ref().map(|c| c.text.clone()),
                category: r.category,
                thumbnail_uri: format!("/thumbnails/{}.{}", r.clip_id, self.thumbnail_ext),
            })
            .collect()
    }

    pub fn stats(&self) -> ReviewStats {
        let log = self.log.lock();
        let mut s = ReviewStats {
            pending: 0,
            approved: 0,
            rejected: 0,
        };
        for r in &self.candidates {
            match log.decision(&r.clip_id) {
                None => s.pending += 1,
                Some(Decision::Approved) => s.approved += 1,
                Some(Decision::Rejected) => s.rejected += 1,
            }
        }
        s
    }

    /// Logs a decision; `Ok(None)` when the clip is not under review.
    pub fn decide(&self, clip_id: &str, decision: Decision, reviewer: &str) -> Result<Option<DecisionEntry>> {
        if !self.index.contains_key(clip_id) {
            return Ok(None);
        }
        let entry = DecisionEntry {
            clip_id: clip_id.to_string(),
            decision,
            reviewer: reviewer.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        self.log.lock().append(entry.clone())?;
        Ok(Some(entry))
    }

    pub fn decision(&self, clip_id: &str) -> Option<Decision> {
        self.log.lock().decision(clip_id)
    }
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    limit: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    clip_id: String,
    decision: Decision,
    reviewer: String,
}

const DEFAULT_QUEUE_LIMIT: usize = 50;

fn error_response(status: StatusCode, message: String) -> Response {
    (status, Json(serde_json::json!({ "error": message }))).into_response()
}

async fn get_queue(State(state): State<Arc<ReviewState>>, Query(p): Query<QueueParams>) -> Json<Vec<QueueItem>> {
    Json(state.queue(p.limit.unwrap_or(DEFAULT_QUEUE_LIMIT)))
}

async fn get_stats(State(state): State<Arc<ReviewState>>) -> Json<ReviewStats> {
    Json(state.stats())
}

async fn post_decision(State(state): State<Arc<ReviewState>>, Json(body): Json<DecisionBody>) -> Response {
    let reviewer = body.reviewer.trim();
    if reviewer.is_empty() {
        return error_response(StatusCode::UNPROCESSABLE_ENTITY, "reviewer must be non-empty".into());
    }
    let result = tokio::task::spawn_blocking(move || state.decide(&body.clip_id, body.decision, &body.reviewer)).await;
    match result {
        Ok(Ok(Some(entry))) => Json(entry).into_response(),
        Ok(Ok(None)) => error_response(StatusCode::NOT_FOUND, "unknown clip_id".into()),
        Ok(Err(e)) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

const PLACEHOLDER_INDEX: &str = "<!doctype html><meta charset=\"utf-8\"><title>Review</title>\
<p>The review UI is not installed. The JSON API is available under <code>/api/</code>.</p>";

/// Routes of the review service. Without `static_dir` a placeholder page is
/// served at `/`.
pub fn review_router(state: Arc<ReviewState>, static_dir: Option<&Path>, thumbnails_dir: Option<&Path>) -> Router {
    let mut router = Router::new()
        .route("/api/queue", get(get_queue))
        .route("/api/decision", post(post_decision))
        .route("/api/stats", get(get_stats))
        .with_state(state);
    if let Some(dir) = thumbnails_dir {
        router = router.nest_service("/thumbnails", ServeDir::new(dir));
    }
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    }
}

/// Serves on an already bound listener until ctrl-c.
pub async fn serve_review_on(listener: tokio::net::TcpListener, router: Router) -> Result<()> {
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Service(e.to_string()))
}

/// Runs the review service on `port` until interrupted.
pub fn serve_review(config: &CurationConfig, port: u16) -> Result<()> {
    let state = Arc::new(ReviewState::from_config(config)?);
    let router = review_router(
        state,
        config.review.static_dir.as_deref(),
        config.review.thumbnails_dir.as_deref(),
    );
    let addr: SocketAddr = format!("{}:{port}", config.review.bind_address)
        .parse()
        .map_err(|e| Error::Config(format!("review bind address: {e}")))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Service(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::Service(format!("cannot bind {addr}: {e}")))?;
        tracing::info!(%addr, "review service listening");
        serve_review_on(listener, router).await
    })
}
