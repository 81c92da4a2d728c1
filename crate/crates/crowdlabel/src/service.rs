//! Review service: an HTTP API over the review queue.
//!
//! Every accepted resolution or skip is appended to an event log and synced
//! before it is applied, so a restart loses nothing. A snapshot of the queue
//! is written every `snapshot_every` events; startup restores the snapshot
//! and replays the rest of the log.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crowdlabel_core::review::{Ack, Progress, ReviewError};
use crowdlabel_core::{
    merge_final_dataset, Candidate, Category, Channel, Codebook, ConsensusRecord, ConsensusResult, PairRecord,
    QueueSnapshot, Resolution, ReviewEvent, ReviewItem, ReviewQueue, ReviewStatus,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::io::{read_json, read_jsonl, write_json};
use crate::pipeline::apply_labels;
use crate::{Error, Result};

pub const TOKEN_ENV: &str = "CROWDLABEL_REVIEW_TOKEN";
pub const TOKEN_HEADER: &str = "x-review-token";
pub const REVIEWER_HEADER: &str = "x-reviewer-id";
/// Seconds an advisory claim stays visible to other reviewers.
pub const CLAIM_TTL_SECS: i64 = 30 * 60;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Review items as written by review-export.
    pub items: PathBuf,
    /// Append-only event log.
    pub log: PathBuf,
    pub snapshot: Option<PathBuf>,
    pub snapshot_every: u64,
    /// Rule-applied consensus records, needed for `/export/final`.
    pub consensus: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub labels: Vec<PathBuf>,
    pub token: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotFile {
    events_applied: u64,
    queue: QueueSnapshot,
}

struct Inner {
    queue: ReviewQueue,
    log: File,
    events_applied: u64,
}

pub struct AppState {
    inner: RwLock<Inner>,
    codebook: Codebook,
    token: String,
    consensus: Option<Vec<ConsensusRecord>>,
    gold: Vec<PairRecord>,
    label_results: Vec<ConsensusResult>,
    snapshot: Option<PathBuf>,
    snapshot_every: u64,
    claims: Mutex<BTreeMap<String, (String, i64)>>,
}

fn read_events(path: &Path) -> Result<Vec<ReviewEvent>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_jsonl(path)
}

impl AppState {
    /// Loads the queue: from the snapshot plus the log tail when a snapshot
    /// exists, otherwise from the items file plus the whole log.
    pub fn open(config: &ServiceConfig, codebook: Codebook) -> Result<Arc<Self>> {
        if config.token.is_empty() {
            return Err(Error::Config(format!("{TOKEN_ENV} must be set to a non-empty token")));
        }
        let events = read_events(&config.log)?;
        let snap = match &config.snapshot {
            Some(p) if p.exists() => Some(read_json::<SnapshotFile>(p)?),
            _ => None,
        };
        let (queue, applied) = match snap {
            Some(s) if (s.events_applied as usize) <= events.len() => {
                let mut q = ReviewQueue::restore(s.queue)?;
                for e in &events[s.events_applied as usize..] {
                    q.apply(e, &codebook)?;
                }
                (q, events.len() as u64)
            }
            _ => {
                let items: Vec<ReviewItem> = read_jsonl(&config.items)?;
                (ReviewQueue::replay(items, &events, &codebook)?, events.len() as u64)
            }
        };
        let log = OpenOptions::new().create(true).append(true).open(&config.log).map_err(|e| Error::io(&config.log, e))?;
        let consensus = config.consensus.as_deref().map(read_jsonl::<ConsensusRecord>).transpose()?;
        let gold = match &config.gold {
            Some(p) => read_jsonl(p)?,
            None => Vec::new(),
        };
        let mut label_results = Vec::new();
        for p in &config.labels {
            label_results.extend(read_jsonl::<ConsensusResult>(p)?);
        }
        Ok(Arc::new(Self {
            inner: RwLock::new(Inner { queue, log, events_applied: applied }),
            codebook,
            token: config.token.clone(),
            consensus,
            gold,
            label_results,
            snapshot: config.snapshot.clone(),
            snapshot_every: config.snapshot_every.max(1),
            claims: Mutex::new(BTreeMap::new()),
        }))
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|p| p.into_inner())
    }

    /// Validates, persists, then applies one event.
    fn submit(&self, event: ReviewEvent) -> Result<Ack, SubmitError> {
        let mut inner = self.inner.write().unwrap_or_else(|p| p.into_inner());
        let ack = match &event {
            ReviewEvent::Resolved { resolution } => inner.queue.check(resolution, &self.codebook),
            ReviewEvent::Skipped { item_id, .. } => inner.queue.check_skip(item_id),
        }
        .map_err(SubmitError::Review)?;
        if ack == Ack::Unchanged {
            return Ok(ack);
        }
        let mut line = serde_json::to_vec(&event).expect("events serialize");
        line.push(b'\n');
        inner.log.write_all(&line).and_then(|_| inner.log.sync_data()).map_err(SubmitError::Persist)?;
        inner.queue.apply(&event, &self.codebook).map_err(SubmitError::Review)?;
        inner.events_applied += 1;
        if inner.events_applied.is_multiple_of(self.snapshot_every) {
            if let Some(p) = &self.snapshot {
                let file = SnapshotFile { events_applied: inner.events_applied, queue: inner.queue.snapshot() };
                // a failed snapshot only costs replay time; the log is authoritative
                let _ = write_json(p, &file);
            }
        }
        Ok(Ack::Applied)
    }

    pub fn progress(&self) -> Progress {
        self.read().queue.progress()
    }

    /// Final dataset as the merge stage would produce it right now.
    pub fn export_final(&self) -> Result<Option<Vec<PairRecord>>> {
        let Some(consensus) = &self.consensus else { return Ok(None) };
        let inner = self.read();
        let items: Vec<ReviewItem> = inner.queue.items().cloned().collect();
        let resolutions = inner.queue.resolutions();
        drop(inner);
        let mut out = merge_final_dataset(consensus, &items, &resolutions, &self.gold)?;
        apply_labels(&mut out, &self.label_results, &items, &resolutions, &self.codebook)?;
        Ok(Some(out))
    }
}

enum SubmitError {
    Review(ReviewError),
    Persist(std::io::Error),
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/queue", get(queue))
        .route("/items/{id}", get(item))
        .route("/items/{id}/resolution", post(resolve))
        .route("/items/{id}/skip", post(skip))
        .route("/progress", get(progress))
        .route("/export/final", get(export_final))
        .route("/codebook", get(codebook))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: Arc<AppState>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Invalid(format!("bind {addr}: {e}")))?;
    axum::serve(listener, router(state)).await.map_err(|e| Error::Invalid(format!("server: {e}")))
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[allow(clippy::result_large_err)]
fn authorize(state: &AppState, headers: &HeaderMap) -> Result<(), Response> {
    match headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()) {
        Some(t) if t == state.token => Ok(()),
        _ => Err(error(StatusCode::UNAUTHORIZED, "missing or invalid review token")),
    }
}

fn reviewer(headers: &HeaderMap) -> Option<String> {
    headers.get(REVIEWER_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string).filter(|s| !s.is_empty())
}

fn now() -> i64 {
    chrono::Utc::now().timestamp()
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    status: Option<ReviewStatus>,
    limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct QueueEntry<'a> {
    item_id: &'a str,
    record_id: &'a str,
    task: crowdlabel_core::Task,
    consistency: u8,
    reason: crowdlabel_core::review::ReviewReason,
    status: ReviewStatus,
    vote_count: usize,
    failure_count: usize,
    context: &'a crowdlabel_core::review::ReviewContext,
    claimed_by: Option<String>,
}

fn active_claim(state: &AppState, item_id: &str) -> Option<String> {
    let claims = state.claims.lock().unwrap_or_else(|p| p.into_inner());
    claims.get(item_id).filter(|(_, at)| now() - at < CLAIM_TTL_SECS).map(|(r, _)| r.clone())
}

async fn queue(State(state): State<Arc<AppState>>, headers: HeaderMap, Query(q): Query<QueueParams>) -> Response {
    if let Err(r) = authorize(&state, &headers) {
        return r;
    }
    let inner = state.read();
    let entries: Vec<QueueEntry<'_>> = inner
        .queue
        .list(q.status, q.limit.unwrap_or(50))
        .into_iter()
        .map(|i| QueueEntry {
            item_id: &i.item_id,
            record_id: &i.record_id,
            task: i.task,
            consistency: i.consistency(),
            reason: i.reason,
            status: i.status,
            vote_count: i.votes.votes.len(),
            failure_count: i.votes.failures.len(),
            context: &i.context,
            claimed_by: active_claim(&state, &i.item_id),
        })
        .collect();
    Json(json!({ "progress": inner.queue.progress(), "items": entries })).into_response()
}

async fn item(State(state): State<Arc<AppState>>, headers: HeaderMap, UrlPath(id): UrlPath<String>) -> Response {
    if let Err(r) = authorize(&state, &headers) {
        return r;
    }
    let inner = state.read();
    let Some(item) = inner.queue.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("no review item {id}"));
    };
    let previous = active_claim(&state, &id);
    if let Some(r) = reviewer(&headers) {
        if item.status == ReviewStatus::Pending && previous.as_deref().is_none_or(|p| p == r) {
            state.claims.lock().unwrap_or_else(|p| p.into_inner()).insert(id.clone(), (r, now()));
        }
    }
    Json(json!({
        "item": item,
        "resolution": inner.queue.resolution(&id),
        "claimed_by": previous,
    }))
    .into_response()
}

/// Body of `POST /items/{id}/resolution`. The reviewer id falls back to the
/// reviewer header; `decided_at` defaults to the server clock.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionBody {
    #[serde(default)]
    pub reviewer_id: Option<String>,
    #[serde(default)]
    pub final_name: Option<String>,
    #[serde(default)]
    pub final_explanation: Option<String>,
    #[serde(default)]
    pub final_labels: BTreeMap<Channel, String>,
    #[serde(default)]
    pub rule_tag: Option<u8>,
    #[serde(default)]
    pub decided_at: Option<i64>,
    #[serde(default)]
    pub additional_pairs: Vec<Candidate>,
}

fn submit_response(state: &AppState, id: &str, event: ReviewEvent) -> Response {
    match state.submit(event) {
        Ok(ack) => {
            state.claims.lock().unwrap_or_else(|p| p.into_inner()).remove(id);
            let status = match ack {
                Ack::Applied => "applied",
                Ack::Unchanged => "unchanged",
            };
            Json(json!({ "status": status, "progress": state.progress() })).into_response()
        }
        Err(SubmitError::Review(ReviewError::NotFound(id))) => {
            error(StatusCode::NOT_FOUND, format!("no review item {id}"))
        }
        Err(SubmitError::Review(ReviewError::Conflict { item_id, existing, status })) => (
            StatusCode::CONFLICT,
            Json(json!({
                "error": format!("item {item_id} already decided"),
                "status": status,
                "existing": existing,
            })),
        )
            .into_response(),
        Err(SubmitError::Review(e @ (ReviewError::InvalidLabel(_) | ReviewError::InvalidRuleTag(_)))) => {
            error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
        }
        Err(SubmitError::Review(e)) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(SubmitError::Persist(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("event log: {e}")),
    }
}

async fn resolve(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<ResolutionBody>, axum::extract::rejection::JsonRejection>,
) -> Response {
    if let Err(r) = authorize(&state, &headers) {
        return r;
    }
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
    };
    let Some(reviewer_id) = body.reviewer_id.or_else(|| reviewer(&headers)) else {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "reviewer_id is required");
    };
    let resolution = Resolution {
        item_id: id.clone(),
        reviewer_id,
        final_name: body.final_name.filter(|s| !s.trim().is_empty()),
        final_explanation: body.final_explanation.filter(|s| !s.trim().is_empty()),
        final_labels: body.final_labels,
        rule_tag: body.rule_tag,
        decided_at: body.decided_at.unwrap_or_else(now),
        additional_pairs: body.additional_pairs,
    };
    submit_response(&state, &id, ReviewEvent::Resolved { resolution })
}

async fn skip(State(state): State<Arc<AppState>>, headers: HeaderMap, UrlPath(id): UrlPath<String>) -> Response {
    if let Err(r) = authorize(&state, &headers) {
        return r;
    }
    submit_response(&state, &id.clone(), ReviewEvent::Skipped { item_id: id, at: now() })
}

async fn progress(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if let Err(r) = authorize(&state, &headers) {
        return r;
    }
    Json(state.progress()).into_response()
}

async fn export_final(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if let Err(r) = authorize(&state, &headers) {
        return r;
    }
    match state.export_final() {
        Ok(Some(pairs)) => {
            let mut body = String::new();
            for p in &pairs {
                body.push_str(&serde_json::to_string(p).expect("pairs serialize"));
                body.push('\n');
            }
            ([(axum::http::header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
        }
        Ok(None) => error(StatusCode::NOT_FOUND, "service was started without consensus records"),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Serialize)]
struct CodebookJson<'a> {
    version: &'a str,
    categories: Vec<&'a Category>,
}

async fn codebook(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if let Err(r) = authorize(&state, &headers) {
        return r;
    }
    Json(CodebookJson { version: state.codebook.version(), categories: state.codebook.categories().collect() })
        .into_response()
}
