//! JSON-over-HTTP service. One dataset is loaded at startup; models live in
//! a registry behind a read-write lock. Each explain request solves its own
//! model on the blocking pool, so requests run concurrently.
//!
//! Status codes: 400 malformed request, 404 unknown model, 409 no
//! counterfactual (body lists the conflicting criterion tags), 422 request
//! content that violates the dataset schema or config rules.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use cfopt::builder::{BuildError, CeConfig, HullNorm, Target};
use cfopt::data::Dataset;
use cfopt::evaluate::hull_membership;
use cfopt::learners::{train_on, Family, Hyperparams, TrainedModel};
use cfopt::solver::SolveStats;

use crate::{explain, label_json, Instance};

#[derive(Debug, Clone, Serialize)]
pub struct ModelEntry {
    pub model_id: String,
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<Hyperparams>,
    pub train_metric: Option<f64>,
    #[serde(skip)]
    pub model: Arc<TrainedModel>,
}

#[derive(Debug, Default)]
struct Registry {
    models: BTreeMap<String, ModelEntry>,
    next: usize,
}

impl Registry {
    fn insert(&mut self, model: TrainedModel, family: String, seed: Option<u64>, hyperparams: Option<Hyperparams>) -> ModelEntry {
        self.next += 1;
        let entry = ModelEntry {
            model_id: format!("{family}-{}", self.next),
            family,
            seed,
            hyperparams,
            train_metric: model.train_metric,
            model: Arc::new(model),
        };
        self.models.insert(entry.model_id.clone(), entry.clone());
        entry
    }
}

pub struct AppState {
    dataset: Arc<Dataset>,
    registry: RwLock<Registry>,
}

impl AppState {
    pub fn new(dataset: Dataset, models: Vec<TrainedModel>) -> Arc<Self> {
        let mut registry = Registry::default();
        for m in models {
            let family = m.model.family_name().to_string();
            registry.insert(m, family, None, None);
        }
        Arc::new(AppState { dataset: Arc::new(dataset), registry: RwLock::new(registry) })
    }

    fn model(&self, id: &str) -> Result<Arc<TrainedModel>, ApiError> {
        let reg = self.registry.read().expect("registry lock");
        reg.models
            .get(id)
            .map(|e| e.model.clone())
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown model `{id}`")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/instances", get(instances))
        .route("/models", get(models))
        .route("/train", post(train))
        .route("/explain", post(explain_handler))
        .route("/hull-check", post(hull_check))
        .with_state(state)
}

pub async fn serve(host: &str, port: u16, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    tags: Option<Vec<String>>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into(), tags: None }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<BuildError> for ApiError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Infeasible { tags } => {
                let message = format!("infeasible: conflicting criteria {}", tags.join(", "));
                ApiError { status: StatusCode::CONFLICT, message, tags: Some(tags) }
            }
            BuildError::NoSolution => ApiError { status: StatusCode::CONFLICT, message: e.to_string(), tags: Some(vec![]) },
            BuildError::Config(_) | BuildError::Contradiction(_) | BuildError::Data(_) => Self::unprocessable(e.to_string()),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "engine_version": cfopt::VERSION, "error": self.message });
        if let Some(tags) = self.tags {
            body["tags"] = json!(tags);
        }
        (self.status, Json(body)).into_response()
    }
}

/// Adds the engine version and solve stats (null when nothing was solved).
fn envelope(mut body: Value, stats: Option<&SolveStats>) -> Json<Value> {
    body["engine_version"] = json!(cfopt::VERSION);
    body["stats"] = json!(stats);
    Json(body)
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

async fn schema(State(s): State<Arc<AppState>>) -> Json<Value> {
    let schema = &s.dataset.schema;
    envelope(
        json!({
            "label_column": schema.label_column(),
            "label_levels": schema.label_levels(),
            "features": schema.features(),
        }),
        None,
    )
}

#[derive(Debug, Deserialize)]
struct InstanceQuery {
    limit: Option<usize>,
    #[serde(default)]
    offset: usize,
}

async fn instances(State(s): State<Arc<AppState>>, Query(q): Query<InstanceQuery>) -> Json<Value> {
    let ds = &s.dataset;
    let limit = q.limit.unwrap_or(20);
    let rows: Vec<Value> = (q.offset..ds.len().min(q.offset.saturating_add(limit)))
        .map(|i| json!({ "row": i, "record": ds.schema.record_to_json(&ds.rows[i]), "label": label_json(&ds.schema, &ds.labels, i) }))
        .collect();
    envelope(json!({ "total": ds.len(), "instances": rows }), None)
}

async fn models(State(s): State<Arc<AppState>>) -> Json<Value> {
    let reg = s.registry.read().expect("registry lock");
    let list: Vec<&ModelEntry> = reg.models.values().collect();
    envelope(json!({ "models": list }), None)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainRequest {
    family: Family,
    #[serde(default)]
    hyperparams: Option<Hyperparams>,
    #[serde(default)]
    seed: u64,
}

async fn train(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: TrainRequest = parse_body(&body)?;
    let ds = s.dataset.clone();
    let hp = req.hyperparams.clone().unwrap_or_default();
    let (family, seed) = (req.family, req.seed);
    let model = blocking(move || train_on(&ds, family, &hp, seed))
        .await?
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let name = format!("{family:?}").to_lowercase();
    let entry = s.registry.write().expect("registry lock").insert(model, name, Some(req.seed), req.hyperparams);
    Ok(envelope(serde_json::to_value(&entry).expect("entry serializes"), None))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainRequest {
    model_id: String,
    #[serde(default)]
    row: Option<usize>,
    #[serde(default)]
    instance: Option<Value>,
    /// Overrides `config.target`.
    #[serde(default)]
    target: Option<Target>,
    #[serde(default)]
    config: CeConfig,
    #[serde(default)]
    m: Option<usize>,
}

async fn explain_handler(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: ExplainRequest = parse_body(&body)?;
    let instance = match (req.row, req.instance) {
        (Some(r), None) => Instance::Row(r),
        (None, Some(v)) => Instance::Inline(v),
        _ => return Err(ApiError::bad_request("give exactly one of `row` and `instance`")),
    };
    let mut config = req.config;
    if let Some(t) = req.target {
        config.target = t;
    }
    match req.m {
        Some(0) => return Err(ApiError::bad_request("`m` must be at least 1")),
        Some(m) => config.diversity.set_count(m),
        None => {}
    }
    if matches!(&config.target, Target::Class { label } if label.is_empty()) {
        return Err(ApiError::bad_request("a target is required"));
    }
    config.validate()?;
    let model = s.model(&req.model_id)?;
    let ds = s.dataset.clone();
    let factual = instance.resolve(&ds).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let ex = blocking(move || explain(&model, &ds, &factual, &config)).await??;
    let stats = ex.result.stats.clone();
    let mut body = serde_json::to_value(&ex).expect("explanation serializes");
    body["model_id"] = json!(req.model_id);
    body["instance"] = json!(instance);
    Ok(envelope(body, Some(&stats)))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ClassRef {
    Index(usize),
    Label(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HullRequest {
    point: Value,
    class: ClassRef,
    #[serde(default, alias = "eps")]
    epsilon: f64,
    #[serde(default = "default_norm")]
    p: HullNorm,
}

fn default_norm() -> HullNorm {
    HullNorm::Inf
}

async fn hull_check(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: HullRequest = parse_body(&body)?;
    if !(req.epsilon >= 0.0 && req.epsilon.is_finite()) {
        return Err(ApiError::bad_request("`epsilon` must be finite and non-negative"));
    }
    let ds = s.dataset.clone();
    let point = ds.schema.record_from_json(&req.point).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let class = match req.class {
        ClassRef::Index(i) => i,
        ClassRef::Label(l) => ds.class_of(&l).map_err(|e| ApiError::unprocessable(e.to_string()))?,
    };
    let (epsilon, p) = (req.epsilon, req.p);
    let h = blocking(move || hull_membership(&point, &ds, class, epsilon, p))
        .await?
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    Ok(envelope(serde_json::to_value(&h).expect("hull check serializes"), None))
}
