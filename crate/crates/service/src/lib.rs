//! HTTP API over an [`AnnotationStore`]: hands passage pairs to annotators,
//! validates and journals their QA items, and serves exports and reports.
//!
//! All mutations go through one mutex around the store. Reports are computed
//! on a cloned snapshot outside the lock.

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use pqa_core::datastore::{
    guidelines, AnnotationStore, InferenceType, InferenceTypeInfo, ParallelQaDataset, PassagePair, QaItem,
    Receipt, Violation, ViolationCode,
};
use pqa_core::diagnostics::{report_json, retrieval_rate, Metric};
use pqa_core::evaluation::{evaluate, evaluate_with_categories, PredictionSet};
use pqa_core::lexmetrics::Bm25Params;
use pqa_core::Error;
use serde::{Deserialize, Serialize};

/// Per-annotator assignment state. A pair is in at most one of the two sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SessionState {
    pub annotator_id: String,
    pub assigned_pair_ids: Vec<String>,
    pub completed: BTreeSet<String>,
}

impl SessionState {
    fn new(annotator_id: &str) -> Self {
        Self {
            annotator_id: annotator_id.to_string(),
            ..Self::default()
        }
    }

    fn served(&self, pair_id: &str) -> bool {
        self.completed.contains(pair_id) || self.assigned_pair_ids.iter().any(|p| p == pair_id)
    }

    fn complete(&mut self, pair_id: &str) {
        self.assigned_pair_ids.retain(|p| p != pair_id);
        self.completed.insert(pair_id.to_string());
    }
}

pub struct AppState {
    store: Mutex<AnnotationStore>,
    sessions: Mutex<HashMap<String, SessionState>>,
    params: Bm25Params,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(store: AnnotationStore) -> SharedState {
        Arc::new(Self {
            store: Mutex::new(store),
            sessions: Mutex::new(HashMap::new()),
            params: Bm25Params::default(),
        })
    }

    fn store(&self) -> MutexGuard<'_, AnnotationStore> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn sessions(&self) -> MutexGuard<'_, HashMap<String, SessionState>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn snapshot(&self) -> ParallelQaDataset {
        self.store().dataset().clone()
    }

    pub fn session(&self, annotator_id: &str) -> Option<SessionState> {
        self.sessions().get(annotator_id).cloned()
    }
}

#[derive(Debug, Serialize)]
pub struct NextPair {
    pub pair: PassagePair,
    pub guidelines: String,
    pub taxonomy: Vec<InferenceTypeInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub pair_id: String,
    pub qa: QaItem,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Violations {
    pub violations: Vec<Violation>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/pairs/next", get(next_pair))
        .route("/api/annotations", post(post_annotation))
        .route("/api/export", get(export))
        .route("/api/reports/retrieval", get(retrieval_report))
        .route("/api/reports/eval", get(eval_report).post(eval_report))
        .with_state(state)
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, state: SharedState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match report_json(value) {
        Ok(mut s) => {
            s.push('\n');
            json_response(status, s)
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    json(status, &ErrorBody { error: message.into() })
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        error(self.0, self.1)
    }
}

fn violations(status: StatusCode, violations: Vec<Violation>) -> Response {
    json(status, &Violations { violations })
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: String,
}

async fn next_pair(State(state): State<SharedState>, Query(q): Query<NextQuery>) -> Response {
    let dataset = state.snapshot();
    let mut sessions = state.sessions();
    let session = sessions
        .entry(q.annotator.clone())
        .or_insert_with(|| SessionState::new(&q.annotator));
    // least annotated first; dataset order breaks ties
    let pick = dataset
        .pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| !session.served(&p.id))
        .min_by_key(|(i, p)| (p.qas.len(), *i))
        .map(|(_, p)| p.clone());
    let Some(pair) = pick else {
        return StatusCode::NO_CONTENT.into_response();
    };
    session.assigned_pair_ids.push(pair.id.clone());
    json(
        StatusCode::OK,
        &NextPair {
            pair,
            guidelines: guidelines().to_string(),
            taxonomy: InferenceType::taxonomy(),
        },
    )
}

fn schema_violation(e: serde_path_to_error::Error<serde_json::Error>) -> Violation {
    let path = e.path().to_string();
    let message = e.inner().to_string().replace('`', "");
    // serde appends " at line L column C"
    let message = match message.find(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message,
    };
    let code = if message.starts_with("missing field") {
        ViolationCode::MissingField
    } else {
        ViolationCode::InvalidValue
    };
    Violation::new(code, if path == "." { String::new() } else { path }, message)
}

async fn post_annotation(State(state): State<SharedState>, body: Bytes) -> Response {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let req: AnnotationRequest = match serde_path_to_error::deserialize(de) {
        Ok(r) => r,
        Err(e) if e.inner().is_syntax() || e.inner().is_eof() => {
            return error(StatusCode::BAD_REQUEST, format!("malformed JSON: {}", e.inner()))
        }
        Err(e) => return violations(StatusCode::UNPROCESSABLE_ENTITY, vec![schema_violation(e)]),
    };
    let annotator = req.qa.annotator_id.clone();
    let result: Result<Receipt, Error> = state.store().append(&req.pair_id, req.qa);
    match result {
        Ok(receipt) => {
            state
                .sessions()
                .entry(annotator.clone())
                .or_insert_with(|| SessionState::new(&annotator))
                .complete(&receipt.pair_id);
            json(StatusCode::CREATED, &receipt)
        }
        Err(Error::UnknownPair(id)) => error(StatusCode::NOT_FOUND, format!("unknown pair id {id:?}")),
        Err(Error::Rejected(v)) => violations(StatusCode::UNPROCESSABLE_ENTITY, v),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn export(State(state): State<SharedState>) -> Response {
    json(StatusCode::OK, &state.snapshot())
}

/// Snapshot with at least one QA item, or the 409 response.
fn nonempty_snapshot(state: &AppState) -> Result<ParallelQaDataset, ApiError> {
    let ds = state.snapshot();
    if ds.num_qas() == 0 {
        return Err(ApiError(StatusCode::CONFLICT, "store holds no annotations".into()));
    }
    Ok(ds)
}

#[derive(Debug, Deserialize)]
struct MetricQuery {
    metric: Option<String>,
}

fn parse_metric(raw: Option<&str>) -> Result<Option<Metric>, ApiError> {
    raw.map(|m| m.parse::<Metric>())
        .transpose()
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))
}

async fn retrieval_report(State(state): State<SharedState>, Query(q): Query<MetricQuery>) -> Response {
    let metric = match parse_metric(q.metric.as_deref()) {
        Ok(m) => m.unwrap_or(Metric::Jaccard),
        Err(e) => return e.into_response(),
    };
    let ds = match nonempty_snapshot(&state) {
        Ok(ds) => ds,
        Err(e) => return e.into_response(),
    };
    let params = state.params;
    let report = tokio::task::spawn_blocking(move || retrieval_rate(&ds.instances(), metric, params)).await;
    match report {
        Ok(r) => json(StatusCode::OK, &r),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Predictions come in the body as `{qa_id: answer}`. With `metric` set every
/// item also gets an error category.
async fn eval_report(State(state): State<SharedState>, Query(q): Query<MetricQuery>, body: Bytes) -> Response {
    let metric = match parse_metric(q.metric.as_deref()) {
        Ok(m) => m,
        Err(e) => return e.into_response(),
    };
    let ds = match nonempty_snapshot(&state) {
        Ok(ds) => ds,
        Err(e) => return e.into_response(),
    };
    let preds = match std::str::from_utf8(&body)
        .map_err(|e| e.to_string())
        .and_then(|s| PredictionSet::from_json(s).map_err(|e| e.to_string()))
    {
        Ok(p) => p,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e),
    };
    let params = state.params;
    let report = tokio::task::spawn_blocking(move || {
        let items = ds.instances();
        match metric {
            Some(m) => evaluate_with_categories(&items, &preds, m, params),
            None => evaluate(&items, &preds),
        }
    })
    .await;
    match report {
        Ok(r) => json(StatusCode::OK, &r),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}
