//! JSON-over-HTTP front end of the referee.
//!
//! * `POST /v1/submissions` takes a manifest whose files already sit in the
//!   inbox directory and answers with the score report.
//! * `GET /v1/leaderboard?dataset=NAME[&view=latest]`
//! * `GET /v1/scores/{id}` returns the latest ledger entry for a submission.
//!
//! Errors are `{"error": "..."}` with a 4xx or 5xx status.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;

use super::{leaderboard, BoardView, Ledger, Manifest, Referee, Submission};
use crate::error::{Error, Result};

pub struct AppState {
    inbox: PathBuf,
    ledger: Ledger,
    referees: BTreeMap<String, Arc<Referee>>,
}

impl AppState {
    /// Loads each hidden bundle once; they are keyed by dataset name.
    pub fn new(inbox: impl Into<PathBuf>, ledger: Ledger, bundles: &[PathBuf]) -> Result<Self> {
        let mut referees = BTreeMap::new();
        for dir in bundles {
            let r = Referee::open(dir)?;
            referees.insert(r.dataset().to_string(), Arc::new(r));
        }
        Ok(Self {
            inbox: inbox.into(),
            ledger,
            referees,
        })
    }
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    let body = serde_json::json!({ "error": msg.to_string() }).to_string() + "\n";
    json(status, body)
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::Json(_) | Error::Format(_) | Error::UnknownKey(_) | Error::Config(_) => {
            StatusCode::BAD_REQUEST
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn submit(State(state): State<Arc<AppState>>, body: String) -> Response {
    let manifest = match Manifest::from_json(&body).and_then(|m| m.check_confined().map(|_| m)) {
        Ok(m) => m,
        Err(e) => return error(status_of(&e), e),
    };
    let Some(referee) = state.referees.get(&manifest.dataset).cloned() else {
        return error(StatusCode::NOT_FOUND, format!("unknown dataset {:?}", manifest.dataset));
    };
    let st = state.clone();
    let scored = tokio::task::spawn_blocking(move || {
        let sub = Submission::from_manifest(manifest, &st.inbox, None)?;
        referee.score_and_record(&sub, &st.ledger)
    })
    .await;
    match scored {
        Ok(Ok(entry)) => json(StatusCode::OK, entry.report.to_json() + "\n"),
        Ok(Err(e)) => error(status_of(&e), e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn board(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let Some(dataset) = q.get("dataset").cloned() else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter dataset");
    };
    let view = match q.get("view").map(|v| v.parse::<BoardView>()).transpose() {
        Ok(v) => v.unwrap_or_default(),
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let ledger = state.ledger.clone();
    match tokio::task::spawn_blocking(move || ledger.read()).await {
        Ok(Ok(entries)) => json(StatusCode::OK, leaderboard(&entries, &dataset, view).to_json()),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn score(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let ledger = state.ledger.clone();
    match tokio::task::spawn_blocking(move || ledger.find(&id)).await {
        Ok(Ok(Some(entry))) => json(StatusCode::OK, entry.to_json() + "\n"),
        Ok(Ok(None)) => error(StatusCode::NOT_FOUND, "no such submission"),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/submissions", post(submit))
        .route("/v1/leaderboard", get(board))
        .route("/v1/scores/{id}", get(score))
        .fallback(|| async { error(StatusCode::NOT_FOUND, "no such route") })
        .with_state(state)
}

/// Serves until the task is cancelled.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Blocking entry point: binds `addr` and serves forever on a fresh
/// multi-threaded runtime.
pub fn run(addr: &str, state: AppState) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        serve(listener, Arc::new(state)).await
    })?;
    Ok(())
}
