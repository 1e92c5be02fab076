//! JSON API over a trained model.
//!
//! Routes:
//!
//! - `POST /api/ask`: answer a question over an inline table or a bundled one
//! - `GET /api/tables`: bundled sample tables
//! - `GET /api/test-questions`: the held-out perturbed test set
//! - `GET /health`: liveness and model metadata
//!
//! The model is set once, possibly after the listener is already up; until
//! then `/health` reports `loading` and `/api/ask` answers 503.

mod tables;

use std::collections::HashMap;
use std::future::Future;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tableqa::disambig::{disambiguate, DisambiguationReport, EmbeddingTable, DEFAULT_THRESHOLD};
use tableqa::eval::PerturbationType;
use tableqa::memnet::{decode_checkpoint, CheckpointError, Model};
use tableqa::table::{tokenize, Example, Table, Triple};
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use tables::{default_tables, load_tables, SampleTable, TablesError};

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub threshold: f64,
    pub top_k: usize,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            cors_origin: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: Model,
    /// First 16 hex digits of the checkpoint's SHA-256.
    pub version: String,
}

impl LoadedModel {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let (model, _) = decode_checkpoint(bytes)?;
        let digest = Sha256::digest(bytes);
        let version = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { model, version })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub struct AppState {
    model: OnceLock<LoadedModel>,
    tables: Vec<SampleTable>,
    test_questions: Option<Vec<Example>>,
    embeddings: EmbeddingTable,
    settings: Settings,
}

impl AppState {
    pub fn new(settings: Settings) -> Self {
        Self {
            model: OnceLock::new(),
            tables: Vec::new(),
            test_questions: None,
            embeddings: EmbeddingTable::default(),
            settings,
        }
    }

    pub fn with_model(self, model: LoadedModel) -> Self {
        let _ = self.model.set(model);
        self
    }

    pub fn with_tables(mut self, tables: Vec<SampleTable>) -> Self {
        self.tables = tables;
        self
    }

    pub fn with_test_questions(mut self, questions: Vec<Example>) -> Self {
        self.test_questions = Some(questions);
        self
    }

    pub fn with_embeddings(mut self, embeddings: EmbeddingTable) -> Self {
        self.embeddings = embeddings;
        self
    }

    /// Installs the model. Returns it back if one is already installed.
    #[allow(clippy::result_large_err)]
    pub fn set_model(&self, model: LoadedModel) -> Result<(), LoadedModel> {
        self.model.set(model)
    }

    pub fn model(&self) -> Option<&LoadedModel> {
        self.model.get()
    }

    pub fn health(&self) -> Health {
        match self.model.get() {
            Some(m) => Health {
                status: "ok",
                model_version: Some(m.version.clone()),
                vocab_size: Some(m.model.vocab().len()),
                hops: Some(m.model.hops()),
            },
            None => Health {
                status: "loading",
                model_version: None,
                vocab_size: None,
                hops: None,
            },
        }
    }

    /// The full ask pipeline, independent of HTTP.
    pub fn ask(&self, request: &AskRequest, full: bool) -> Result<AskResponse, ApiError> {
        let loaded = self.model.get().ok_or(ApiError::NotLoaded)?;
        let table = match (&request.table, &request.table_id) {
            (Some(t), None) => t,
            (None, Some(id)) => self
                .tables
                .iter()
                .find(|t| &t.table_id == id)
                .map(|t| &t.table)
                .ok_or_else(|| ApiError::UnknownTable(id.clone()))?,
            _ => return Err(ApiError::BadRequest("give exactly one of `table` and `table_id`".into())),
        };
        if table.n_rows() == 0 {
            return Err(ApiError::BadRequest("table has no rows".into()));
        }
        let tokens = tokenize(&request.question);
        if tokens.is_empty() {
            return Err(ApiError::EmptyQuestion("question is empty"));
        }
        let model = &loaded.model;
        let (mapped, disambiguation) = disambiguate(&tokens, model.vocab(), &self.embeddings, self.settings.threshold);
        if mapped.is_empty() {
            return Err(ApiError::EmptyQuestion("question empty after disambiguation"));
        }
        let triples = table.to_triples();
        let prediction = model.predict(&triples, &mapped);
        let k = if full { model.vocab().len() } else { self.settings.top_k };
        let distribution_topk = prediction
            .top_k(model.vocab(), k)
            .into_iter()
            .map(|(token, probability)| TokenProbability {
                token: token.to_string(),
                probability,
            })
            .collect();
        Ok(AskResponse {
            confidence: prediction.confidence(),
            answer: prediction.answer_token,
            distribution_topk,
            attention: prediction.attention,
            triples,
            question_tokens: mapped,
            disambiguation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AskRequest {
    #[serde(default)]
    pub table: Option<Table>,
    #[serde(default)]
    pub table_id: Option<String>,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenProbability {
    pub token: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AskResponse {
    pub answer: String,
    pub confidence: f64,
    pub distribution_topk: Vec<TokenProbability>,
    /// One row per hop, one column per entry of `triples`.
    pub attention: Vec<Vec<f64>>,
    pub triples: Vec<Triple>,
    /// Question tokens after disambiguation, as fed to the model.
    pub question_tokens: Vec<String>,
    pub disambiguation: DisambiguationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub model_version: Option<String>,
    pub vocab_size: Option<usize>,
    pub hops: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestQuestion {
    pub question: String,
    pub perturbation: Option<PerturbationType>,
    pub expected: String,
    pub adequate: bool,
    pub table: Table,
}

#[derive(Debug, Error, PartialEq)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown table_id `{0}`")]
    UnknownTable(String),
    #[error("{0}")]
    EmptyQuestion(&'static str),
    #[error("model is not loaded yet")]
    NotLoaded,
    #[error("{0}")]
    NotFound(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) | ApiError::UnknownTable(_) | ApiError::EmptyQuestion(_) => StatusCode::BAD_REQUEST,
            ApiError::NotLoaded => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "bad_request",
            ApiError::UnknownTable(_) => "unknown_table",
            ApiError::EmptyQuestion(_) => "empty_question",
            ApiError::NotLoaded => "model_not_loaded",
            ApiError::NotFound(_) => "not_found",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({
            "error": { "code": self.code(), "message": self.to_string() }
        });
        (self.status(), Json(body)).into_response()
    }
}

type Shared = Arc<AppState>;

async fn ask(
    State(state): State<Shared>,
    Query(params): Query<HashMap<String, String>>,
    body: Result<Json<AskRequest>, JsonRejection>,
) -> Result<Json<AskResponse>, ApiError> {
    if state.model().is_none() {
        return Err(ApiError::NotLoaded);
    }
    let Json(request) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let full = params.get("full").is_some_and(|v| v == "1" || v == "true");
    state.ask(&request, full).map(Json)
}

async fn list_tables(State(state): State<Shared>) -> Json<Vec<SampleTable>> {
    Json(state.tables.clone())
}

async fn test_questions(State(state): State<Shared>) -> Result<Json<Vec<TestQuestion>>, ApiError> {
    let questions = state
        .test_questions
        .as_ref()
        .ok_or_else(|| ApiError::NotFound("no test set is deployed".into()))?;
    questions
        .iter()
        .map(|e| {
            let table = Table::from_triples(&e.triples)
                .map_err(|err| ApiError::BadRequest(format!("test sample has malformed triples: {err}")))?;
            Ok(TestQuestion {
                question: e.question.join(" "),
                perturbation: e.perturbation,
                expected: e.answer.clone(),
                adequate: e.adequate,
                table,
            })
        })
        .collect::<Result<_, _>>()
        .map(Json)
}

async fn health(State(state): State<Shared>) -> Json<Health> {
    Json(state.health())
}

pub fn router(state: Shared) -> Router {
    let origin = match &state.settings.cors_origin {
        Some(o) => HeaderValue::from_str(o).map_or(AllowOrigin::any(), AllowOrigin::exact),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE]);
    Router::new()
        .route("/api/ask", post(ask))
        .route("/api/tables", get(list_tables))
        .route("/api/test-questions", get(test_questions))
        .route("/health", get(health))
        .layer(cors)
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "listening");
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
