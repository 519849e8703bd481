//! HTTP API for running annotation studies.
//!
//! Participants authenticate with the bearer token handed out at
//! registration; study creation, reports, and exports require the operator
//! token. Every state change is appended to the study's event log before it
//! is applied in memory, and each study is guarded by its own lock so that
//! writes within a study are serialized while other studies proceed.

mod error;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use positionality_core::demographics::{CulturalSphereTable, DemographicProfile};
use positionality_core::domain::{read_instances, read_predictions, Instance, PredictionRecord, Task};
use positionality_core::report::{render, ReportFormat, ReportLayout};
use positionality_core::sampling::{stratified_sample, SamplingSpec};
use positionality_core::stats::AnalysisConfig;
use positionality_core::storage::{export_rows, write_export, write_profiles, EventLog, ExportFormat, StudyStore};
use positionality_core::study::{hash_token, StudyDefinition, StudyEvent, StudyState};
use positionality_core::Error;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

pub use error::{ApiError, ErrorBody};

type ApiResult<T> = Result<T, ApiError>;
pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub operator_token: String,
    pub spheres: Arc<CulturalSphereTable>,
    pub clock: Clock,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>, operator_token: impl Into<String>) -> Self {
        Self {
            data_dir: data_dir.into(),
            operator_token: operator_token.into(),
            spheres: Arc::new(CulturalSphereTable::shipped()),
            clock: Arc::new(Utc::now),
        }
    }
}

struct LiveStudy {
    state: StudyState,
    log: EventLog,
}

impl LiveStudy {
    fn commit(&mut self, event: StudyEvent, now: DateTime<Utc>) -> ApiResult<()> {
        self.state.check(&event)?;
        self.log.append(&event, now)?;
        self.state.apply(&event)?;
        Ok(())
    }

    fn participant(&self, headers: &HeaderMap) -> ApiResult<String> {
        let token = bearer(headers).ok_or_else(ApiError::unauthorized)?;
        self.state
            .participant_for_token_hash(&hash_token(token))
            .map(str::to_string)
            .ok_or_else(ApiError::unauthorized)
    }
}

pub struct AppState {
    store: StudyStore,
    operator_sha256: String,
    spheres: Arc<CulturalSphereTable>,
    clock: Clock,
    studies: parking_lot::RwLock<BTreeMap<String, Arc<RwLock<LiveStudy>>>>,
}

impl AppState {
    /// Opens the store and replays every study found in it.
    pub fn open(config: ServiceConfig) -> positionality_core::Result<Arc<Self>> {
        let store = StudyStore::open(&config.data_dir)?;
        let mut studies = BTreeMap::new();
        for id in store.list_studies()? {
            let (state, log) = store.load_state(&id, config.spheres.clone())?;
            tracing::info!(study = %id, events = log.len(), "study loaded");
            studies.insert(id, Arc::new(RwLock::new(LiveStudy { state, log })));
        }
        Ok(Arc::new(Self {
            store,
            operator_sha256: hash_token(&config.operator_token),
            spheres: config.spheres,
            clock: config.clock,
            studies: parking_lot::RwLock::new(studies),
        }))
    }

    fn study(&self, id: &str) -> ApiResult<Arc<RwLock<LiveStudy>>> {
        self.studies
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownStudy(id.to_string()).into())
    }

    fn require_operator(&self, headers: &HeaderMap) -> ApiResult<()> {
        match bearer(headers) {
            Some(t) if hash_token(t) == self.operator_sha256 => Ok(()),
            _ => Err(ApiError::unauthorized()),
        }
    }

    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
        .filter(|t| !t.is_empty())
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/studies", post(create_study))
        .route("/studies/{id}", get(study_info))
        .route("/studies/{id}/participants", post(register))
        .route("/studies/{id}/batch", get(batch))
        .route("/studies/{id}/annotations", post(annotate))
        .route("/studies/{id}/feedback/{instance_id}", get(feedback))
        .route("/studies/{id}/results", get(results))
        .route("/studies/{id}/study-feedback", post(study_feedback))
        .route("/studies/{id}/report", get(report))
        .route("/studies/{id}/export", get(export))
        .route("/studies/{id}/export/profiles", get(export_profiles))
        .with_state(app)
}

pub async fn serve(listener: tokio::net::TcpListener, app: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(app)).await
}

#[derive(Debug, Deserialize)]
pub struct CreateStudyRequest {
    #[serde(default)]
    pub id: Option<String>,
    pub task: Task,
    pub seed: u64,
    #[serde(default)]
    pub primary_target: Option<String>,
    #[serde(default)]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default)]
    pub instances: Option<Vec<Instance>>,
    /// Server-side JSONL path, used when `instances` is absent.
    #[serde(default)]
    pub instances_file: Option<PathBuf>,
    /// Draws the study's instances from the pool when present.
    #[serde(default)]
    pub sampling: Option<SamplingSpec>,
    #[serde(default)]
    pub predictions: Option<Vec<PredictionRecord>>,
    /// Server-side predictions CSV, used when `predictions` is absent.
    #[serde(default)]
    pub predictions_file: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateStudyResponse {
    pub study_id: String,
    pub n_instances: usize,
    pub targets: Vec<String>,
}

fn build_definition(req: CreateStudyRequest) -> positionality_core::Result<StudyDefinition> {
    let pool = match (req.instances, &req.instances_file) {
        (Some(list), None) => list,
        (None, Some(path)) => read_instances(BufReader::new(File::open(path)?))?,
        _ => return Err(Error::Invalid("give exactly one of instances or instances_file".into())),
    };
    let pool: Vec<Instance> = pool.into_iter().filter(|i| i.task_id == req.task.id).collect();
    if pool.is_empty() {
        return Err(Error::Invalid(format!("no instances for task {:?}", req.task.id)));
    }
    let instances = match &req.sampling {
        Some(spec) => stratified_sample(&pool, spec)?,
        None => pool,
    };
    let predictions = match (req.predictions, &req.predictions_file) {
        (Some(list), None) => list,
        (None, Some(path)) => read_predictions(File::open(path)?)?,
        (None, None) => Vec::new(),
        _ => return Err(Error::Invalid("give at most one of predictions or predictions_file".into())),
    };
    let ids: std::collections::BTreeSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    let predictions: Vec<PredictionRecord> = predictions
        .into_iter()
        .filter(|p| ids.contains(p.instance_id.as_str()))
        .collect();
    let def = StudyDefinition {
        id: req.id.unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string()),
        task: req.task,
        seed: req.seed,
        primary_target: req.primary_target,
        analysis: req.analysis.unwrap_or_default(),
        instances,
        predictions,
    };
    def.validate()?;
    Ok(def)
}

async fn create_study(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<CreateStudyRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CreateStudyResponse>)> {
    app.require_operator(&headers)?;
    let Json(req) = body?;
    let def = build_definition(req)?;
    let id = def.id.clone();
    let mut studies = app.studies.write();
    if studies.contains_key(&id) {
        return Err(Error::Conflict(format!("study {id:?} already exists")).into());
    }
    app.store.create_study(&def)?;
    let (state, log) = app.store.load_state(&id, app.spheres.clone())?;
    let mut targets: Vec<String> = def.predictions.iter().map(|p| p.target_id.clone()).collect();
    targets.sort();
    targets.dedup();
    let resp = CreateStudyResponse {
        study_id: id.clone(),
        n_instances: def.instances.len(),
        targets,
    };
    studies.insert(id.clone(), Arc::new(RwLock::new(LiveStudy { state, log })));
    tracing::info!(study = %id, instances = resp.n_instances, "study created");
    Ok((StatusCode::CREATED, Json(resp)))
}

/// What a participant-facing client needs to render a study.
#[derive(Debug, Serialize, Deserialize)]
pub struct StudyInfo {
    pub study_id: String,
    pub task: Task,
    pub n_instances: usize,
    pub has_model_feedback: bool,
}

async fn study_info(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<StudyInfo>> {
    let study = app.study(&id)?;
    let s = study.read().await;
    let def = s.state.definition();
    Ok(Json(StudyInfo {
        study_id: def.id.clone(),
        task: def.task.clone(),
        n_instances: def.instances.len(),
        has_model_feedback: def.primary_target.is_some(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub profile: DemographicProfile,
    pub consent: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub participant_id: String,
    pub token: String,
}

async fn register(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<RegisterRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<RegisterResponse>)> {
    let Json(req) = body?;
    if !req.consent {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "consent_required",
            "participation requires consent",
        ));
    }
    let study = app.study(&id)?;
    let mut s = study.write().await;
    let participant_id = uuid::Uuid::new_v4().simple().to_string();
    let token = format!(
        "{}{}",
        uuid::Uuid::new_v4().simple(),
        uuid::Uuid::new_v4().simple()
    );
    let event = s.state.register(&participant_id, &hash_token(&token), req.profile)?;
    s.commit(event, app.now())?;
    Ok((StatusCode::CREATED, Json(RegisterResponse { participant_id, token })))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceView {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BatchResponse {
    pub instances: Vec<InstanceView>,
    pub complete: bool,
    pub batches_served: usize,
    pub batches_per_participant: u32,
    pub annotations_completed: usize,
}

async fn batch(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<BatchResponse>> {
    let study = app.study(&id)?;
    let mut s = study.write().await;
    let pid = s.participant(&headers)?;

    let outstanding: Vec<InstanceView> = s
        .state
        .outstanding(&pid)
        .into_iter()
        .map(|i| InstanceView {
            id: i.id.clone(),
            text: i.text.clone(),
        })
        .collect();
    let (instances, complete) = if outstanding.is_empty() {
        let draw = s.state.next_batch(&pid, s.state.definition().seed)?;
        if !draw.complete {
            let event = s.state.batch_served(&pid, &draw)?;
            s.commit(event, app.now())?;
        }
        let views = draw
            .instances
            .iter()
            .map(|si| {
                let inst = s.state.instance(&si.instance_id).expect("drawn from study");
                InstanceView {
                    id: inst.id.clone(),
                    text: inst.text.clone(),
                }
            })
            .collect();
        (views, draw.complete)
    } else {
        (outstanding, false)
    };
    let session = s.state.session(&pid);
    Ok(Json(BatchResponse {
        instances,
        complete,
        batches_served: session.map_or(0, |x| x.batches.len()),
        batches_per_participant: s.state.task().batches_per_participant,
        annotations_completed: session.map_or(0, |x| x.completed),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub instance_id: String,
    pub label_text: String,
    #[serde(default)]
    pub rationale: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub instance_id: String,
    pub score: i64,
}

async fn annotate(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<AnnotationRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<AnnotationResponse>)> {
    let Json(req) = body?;
    let study = app.study(&id)?;
    let mut s = study.write().await;
    let pid = s.participant(&headers)?;
    let now = app.now();
    let event = s
        .state
        .submit_annotation(&pid, &req.instance_id, &req.label_text, req.rationale, now)?;
    let StudyEvent::AnnotationSubmitted { score, .. } = &event else {
        unreachable!("submit_annotation builds an annotation event");
    };
    let score = *score;
    s.commit(event, now)?;
    Ok((
        StatusCode::CREATED,
        Json(AnnotationResponse {
            instance_id: req.instance_id,
            score,
        }),
    ))
}

async fn feedback(
    State(app): State<Arc<AppState>>,
    Path((id, instance_id)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let study = app.study(&id)?;
    let s = study.read().await;
    let pid = s.participant(&headers)?;
    Ok(Json(s.state.instance_feedback(&pid, &instance_id)?).into_response())
}

async fn results(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let study = app.study(&id)?;
    let s = study.read().await;
    let pid = s.participant(&headers)?;
    Ok(Json(s.state.final_results(&pid)?).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StudyFeedbackRequest {
    #[serde(default)]
    pub text: String,
    pub technical_difficulties: bool,
    pub cheated: bool,
}

async fn study_feedback(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<StudyFeedbackRequest>, JsonRejection>,
) -> ApiResult<StatusCode> {
    let Json(req) = body?;
    let study = app.study(&id)?;
    let mut s = study.write().await;
    let pid = s.participant(&headers)?;
    let event = s
        .state
        .submit_study_feedback(&pid, req.text, req.technical_difficulties, req.cheated)?;
    s.commit(event, app.now())?;
    Ok(StatusCode::CREATED)
}

#[derive(Debug, Deserialize)]
pub struct FormatQuery {
    #[serde(default)]
    pub format: Option<String>,
}

fn text(content_type: &'static str, body: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

async fn report(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<FormatQuery>,
) -> ApiResult<Response> {
    app.require_operator(&headers)?;
    let study = app.study(&id)?;
    let s = study.read().await;
    let output = s.state.analysis()?;
    match q.format.as_deref() {
        None => Ok(Json(output).into_response()),
        Some(f) => {
            let format: ReportFormat = f.parse()?;
            let body = render(&output, &ReportLayout::default(), format)?;
            Ok(match format {
                ReportFormat::Markdown => text("text/markdown; charset=utf-8", body),
                ReportFormat::Csv => text("text/csv; charset=utf-8", body),
                ReportFormat::Json => text("application/json", body),
            })
        }
    }
}

async fn export(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<FormatQuery>,
) -> ApiResult<Response> {
    app.require_operator(&headers)?;
    let format: ExportFormat = q.format.as_deref().unwrap_or("csv").parse()?;
    let study = app.study(&id)?;
    let s = study.read().await;
    let mut buf = Vec::new();
    write_export(&mut buf, &export_rows(&s.state), format)?;
    let body = String::from_utf8(buf).expect("export is utf-8");
    Ok(match format {
        ExportFormat::Csv => text("text/csv; charset=utf-8", body),
        ExportFormat::Jsonl => text("application/x-ndjson", body),
    })
}

async fn export_profiles(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    app.require_operator(&headers)?;
    let study = app.study(&id)?;
    let s = study.read().await;
    let mut buf = Vec::new();
    write_profiles(&mut buf, &s.state)?;
    Ok(text(
        "application/x-ndjson",
        String::from_utf8(buf).expect("profiles are utf-8"),
    ))
}
