//! HTTP service backing the demonstration editor.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{info, warn};
use robotransfer_core::eval::{DemoChoice, Method, TaskSimilarity};
use robotransfer_core::features::StopWords;
use robotransfer_core::frame::ColoredPoint;
use robotransfer_core::pipeline::training_pool;
use robotransfer_core::{
    interpolate, make_folds, Config, Dataset, Error, FoldSplit, GripperState, PartFrame, Quat, Source, TaskInstance,
    Trajectory, TransferModel, Vec3, Waypoint,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Most points returned per part.
pub const MAX_POINTS: usize = 50_000;
pub const DEFAULT_SAMPLES_PER_SEGMENT: usize = 4;
pub const MAX_SAMPLES_PER_SEGMENT: usize = 1000;

pub struct AppState {
    root: PathBuf,
    dataset: RwLock<Dataset>,
    model: Option<TransferModel>,
    split: Option<FoldSplit>,
    config: Config,
    stop_words: StopWords,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(root: PathBuf, dataset: Dataset, model: Option<TransferModel>, config: Config) -> Self {
        let split = FoldSplit::recorded(&dataset.tasks, config.eval.folds)
            .or_else(|| make_folds(&dataset.tasks, config.eval.folds, config.eval.seed).ok());
        if split.is_none() {
            warn!("too few manuals for fold assignment; seeds only exclude the requesting object");
        }
        AppState {
            root,
            dataset: RwLock::new(dataset),
            model,
            split,
            config,
            stop_words: StopWords::default(),
        }
    }

    pub fn load(root: PathBuf, model: Option<TransferModel>, config: Config) -> robotransfer_core::Result<Self> {
        let dataset = Dataset::import(&root)?;
        Ok(AppState::new(root, dataset, model, config))
    }

    pub fn fold_of(&self, task_id: &str) -> Option<usize> {
        self.split.as_ref().and_then(|s| s.fold_of(task_id))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            field: Some(field.into()),
            ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_value", message)
        }
    }

    fn unknown_task(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_task", format!("no task with id {id:?}"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": {"code": self.code, "message": self.message, "field": self.field}
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", inner.to_string())
        } else {
            ApiError {
                field: (path != ".").then_some(path),
                ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "schema", inner.to_string())
            }
        }
    })
}

/// Waypoint as sent by clients; checked field by field.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireWaypoint {
    pub g: GripperState,
    pub t: [f64; 3],
    pub r: [f64; 4],
}

fn checked_waypoints(wire: &[WireWaypoint]) -> ApiResult<Vec<Waypoint>> {
    wire.iter()
        .enumerate()
        .map(|(i, w)| {
            if !w.t.iter().all(|v| v.is_finite()) {
                return Err(ApiError::invalid(
                    format!("waypoints[{i}].t"),
                    "translation must be finite",
                ));
            }
            let q = Quat::from(w.r);
            Waypoint::new(w.g, Vec3::from(w.t), q).map_err(|e| match e {
                Error::InvalidQuaternion { norm } => ApiError::invalid(
                    format!("waypoints[{i}].r"),
                    format!("quaternion norm {norm} deviates from 1 by more than 1e-6"),
                ),
                other => ApiError::invalid(format!("waypoints[{i}]"), other.to_string()),
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterpolateRequest {
    waypoints: Vec<WireWaypoint>,
    #[serde(default)]
    samples_per_segment: Option<usize>,
}

#[derive(Debug, Serialize)]
struct InterpolateResponse {
    waypoints: Vec<Waypoint>,
    /// Positions of the input waypoints in the output.
    authored: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoSubmission {
    #[serde(default)]
    id: Option<String>,
    waypoints: Vec<WireWaypoint>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ScoreRequest {
    #[serde(default)]
    top: Option<usize>,
    #[serde(default)]
    instruction: Option<String>,
}

#[derive(Debug, Serialize)]
struct TaskSummary<'a> {
    id: &'a str,
    object_id: &'a str,
    manual_id: &'a str,
    part_id: &'a str,
    instruction: &'a str,
    fold: Option<usize>,
    demos: usize,
    has_expert: bool,
}

#[derive(Debug, Serialize)]
struct PartView {
    part_id: String,
    highlight: bool,
    total_points: usize,
    points: Vec<ColoredPoint>,
}

#[derive(Debug, Serialize)]
struct TaskDetail {
    id: String,
    object_id: String,
    manual_id: String,
    part_id: String,
    instruction: String,
    fold: Option<usize>,
    frame: PartFrame,
    parts: Vec<PartView>,
    demos: Vec<String>,
    /// World-frame starting point for the editor.
    seed: Option<Trajectory>,
    seed_source_task: Option<String>,
}

/// Evenly strided subset of at most `max` points, always keeping the first.
pub fn downsample(points: &[ColoredPoint], max: usize) -> Vec<ColoredPoint> {
    if points.len() <= max {
        return points.to_vec();
    }
    (0..max).map(|i| points[i * points.len() / max]).collect()
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/api", get(api_description))
        .route("/tasks", get(list_tasks))
        .route("/tasks/:id", get(task_detail))
        .route("/tasks/:id/demos", post(submit_demo))
        .route("/tasks/:id/demos/:demo", get(get_demo))
        .route("/tasks/:id/score", post(score))
        .route("/interpolate", post(interpolate_route))
        .with_state(state)
}

async fn health(State(state): State<SharedState>) -> Json<Value> {
    let ds = state.dataset.read().expect("dataset lock");
    Json(json!({
        "status": "ok",
        "dataset": ds.metadata.name,
        "tasks": ds.tasks.len(),
        "model": state.model.is_some(),
    }))
}

async fn api_description() -> Json<Value> {
    let waypoint = json!({"g": "open|closed|holding", "t": "[x, y, z] meters", "r": "[x, y, z, w] unit quaternion"});
    Json(json!({
        "version": 1,
        "errors": {"error": {"code": "string", "message": "string", "field": "string|null"}},
        "endpoints": [
            {"method": "GET", "path": "/health", "response": "service status"},
            {"method": "GET", "path": "/api", "response": "this description"},
            {"method": "GET", "path": "/tasks", "response": {"tasks": "[task summary]"}},
            {"method": "GET", "path": "/tasks/{id}",
             "response": "task detail with parts (at most 50000 points each, target part highlighted) and a world-frame seed trajectory from another object outside the task's fold",
             "errors": [404]},
            {"method": "POST", "path": "/interpolate",
             "request": {"waypoints": [waypoint], "samples_per_segment": "integer, optional"},
             "response": {"waypoints": [waypoint], "authored": "[index]"},
             "errors": [400, 422]},
            {"method": "POST", "path": "/tasks/{id}/demos",
             "request": {"id": "string, optional", "waypoints": [waypoint]},
             "response": {"id": "string", "task": "string", "demos": "integer"},
             "status": 201, "errors": [400, 404, 409, 422]},
            {"method": "GET", "path": "/tasks/{id}/demos/{demo}",
             "response": "stored demonstration in the task's world frame", "errors": [404]},
            {"method": "POST", "path": "/tasks/{id}/score",
             "request": {"top": "integer, optional", "instruction": "string, optional"},
             "response": {"task": "string", "ranked": [{"id": "string", "score": "number"}]},
             "errors": [404, 503]},
        ]
    }))
}

async fn list_tasks(State(state): State<SharedState>) -> Json<Value> {
    let ds = state.dataset.read().expect("dataset lock");
    let tasks: Vec<TaskSummary> = ds
        .tasks
        .iter()
        .map(|t| TaskSummary {
            id: &t.id,
            object_id: &t.object_id,
            manual_id: &t.manual_id,
            part_id: &t.part.part_id,
            instruction: &t.instruction,
            fold: state.fold_of(&t.id),
            demos: t.demos.len(),
            has_expert: t.expert_demo.is_some(),
        })
        .collect();
    Json(json!({ "tasks": tasks }))
}

/// Transfers the best demonstration of the most similar task on another
/// object outside `task`'s fold into `task`'s world frame.
fn seed_for(state: &AppState, ds: &Dataset, task: &TaskInstance) -> ApiResult<Option<(Trajectory, String)>> {
    let fold = state.fold_of(&task.id);
    let eligible: Vec<&TaskInstance> = ds
        .tasks
        .iter()
        .filter(|t| t.object_id != task.object_id && !t.demos.is_empty())
        .filter(|t| fold.is_none() || state.fold_of(&t.id) != fold)
        .collect();
    if eligible.is_empty() {
        return Ok(None);
    }
    let pool = training_pool(&eligible);
    let method = TaskSimilarity {
        choice: DemoChoice::Weighted,
        pc_weight: state.config.eval.similarity_pc_weight,
        seed: state.config.eval.seed,
        dtw: state.config.dtw,
        stop_words: state.stop_words.clone(),
    };
    let predictor = method.fit(&eligible, &pool).map_err(ApiError::internal)?;
    let i = predictor.predict(task, &pool).map_err(ApiError::internal)?;
    let source = eligible
        .iter()
        .find(|t| t.demos.iter().any(|d| d.id == pool[i].id))
        .map(|t| t.id.clone())
        .unwrap_or_default();
    Ok(Some((ds.to_world(task, pool[i]), source)))
}

async fn task_detail(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<TaskDetail>> {
    tokio::task::spawn_blocking(move || {
        let ds = state.dataset.read().expect("dataset lock");
        let task = ds.task(&id).ok_or_else(|| ApiError::unknown_task(&id))?;
        let mut parts: Vec<PartView> = Vec::new();
        for t in ds.tasks.iter().filter(|t| t.object_id == task.object_id) {
            if parts.iter().any(|p| p.part_id == t.part.part_id) {
                continue;
            }
            parts.push(PartView {
                part_id: t.part.part_id.clone(),
                highlight: t.part.part_id == task.part.part_id,
                total_points: t.part.points.len(),
                points: downsample(&t.part.points, MAX_POINTS),
            });
        }
        let seed = seed_for(&state, &ds, task)?;
        Ok(Json(TaskDetail {
            id: task.id.clone(),
            object_id: task.object_id.clone(),
            manual_id: task.manual_id.clone(),
            part_id: task.part.part_id.clone(),
            instruction: task.instruction.clone(),
            fold: state.fold_of(&task.id),
            frame: task.frame,
            parts,
            demos: task.demos.iter().map(|d| d.id.clone()).collect(),
            seed_source_task: seed.as_ref().map(|(_, s)| s.clone()),
            seed: seed.map(|(t, _)| t),
        }))
    })
    .await
    .map_err(ApiError::internal)?
}

async fn get_demo(
    State(state): State<SharedState>,
    Path((id, demo)): Path<(String, String)>,
) -> ApiResult<Json<Trajectory>> {
    let ds = state.dataset.read().expect("dataset lock");
    let task = ds.task(&id).ok_or_else(|| ApiError::unknown_task(&id))?;
    let traj = task.demos.iter().find(|d| d.id == demo).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_demo",
            format!("task {id:?} has no demo {demo:?}"),
        )
    })?;
    Ok(Json(ds.to_world(task, traj)))
}

async fn interpolate_route(body: Bytes) -> ApiResult<Json<InterpolateResponse>> {
    let req: InterpolateRequest = parse_body(&body)?;
    let samples = req.samples_per_segment.unwrap_or(DEFAULT_SAMPLES_PER_SEGMENT);
    if samples > MAX_SAMPLES_PER_SEGMENT {
        return Err(ApiError::invalid(
            "samples_per_segment",
            format!("must be at most {MAX_SAMPLES_PER_SEGMENT}"),
        ));
    }
    if req.waypoints.len() < 2 {
        return Err(ApiError::invalid("waypoints", "need at least 2 waypoints"));
    }
    let waypoints = checked_waypoints(&req.waypoints)?;
    let n = waypoints.len();
    let traj = Trajectory {
        id: "interpolation".into(),
        source: Source::Crowd,
        waypoints,
    };
    let out = interpolate(&traj, samples).map_err(|e| ApiError::invalid("waypoints", e.to_string()))?;
    Ok(Json(InterpolateResponse {
        waypoints: out.waypoints,
        authored: (0..n).map(|i| i * (samples + 1)).collect(),
    }))
}

fn fresh_id(ds: &Dataset, task_id: &str) -> String {
    let taken = |id: &str| {
        ds.tasks
            .iter()
            .any(|t| t.demos.iter().chain(t.expert_demo.iter()).any(|d| d.id == id))
    };
    (1..)
        .map(|k| format!("{task_id}-c{k:03}"))
        .find(|id| !taken(id))
        .expect("unbounded id space")
}

async fn submit_demo(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let sub: DemoSubmission = parse_body(&body)?;
    if sub.waypoints.len() < 2 {
        return Err(ApiError::invalid("waypoints", "need at least 2 waypoints"));
    }
    let waypoints = checked_waypoints(&sub.waypoints)?;
    tokio::task::spawn_blocking(move || {
        let mut ds = state.dataset.write().expect("dataset lock");
        if ds.task(&id).is_none() {
            return Err(ApiError::unknown_task(&id));
        }
        let demo_id = match sub.id {
            Some(given) => given,
            None => fresh_id(&ds, &id),
        };
        let traj = Trajectory {
            id: demo_id.clone(),
            source: Source::Crowd,
            waypoints,
        };
        ds.append_demo(&state.root, &id, &traj).map_err(|e| match e {
            Error::InvalidValue { field, reason } if field == "id" && reason.contains("already exists") => ApiError {
                field: Some("id".into()),
                ..ApiError::new(StatusCode::CONFLICT, "duplicate_id", reason)
            },
            Error::InvalidValue { field, reason } => ApiError::invalid(field, reason),
            Error::Schema { message, .. } if message.contains("trajectory id") => ApiError::invalid("id", message),
            other => ApiError::internal(other),
        })?;
        let demos = ds.task(&id).map_or(0, |t| t.demos.len());
        info!("stored demo {demo_id:?} for task {id:?} ({demos} demos)");
        Ok((
            StatusCode::CREATED,
            Json(json!({"id": demo_id, "task": id, "demos": demos})),
        ))
    })
    .await
    .map_err(ApiError::internal)?
}

async fn score(State(state): State<SharedState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: ScoreRequest = if body.is_empty() {
        ScoreRequest::default()
    } else {
        parse_body(&body)?
    };
    if state.model.is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "no_model",
            "the service was started without a model",
        ));
    }
    tokio::task::spawn_blocking(move || {
        let model = state.model.as_ref().expect("checked");
        let ds = state.dataset.read().expect("dataset lock");
        let task = ds.task(&id).ok_or_else(|| ApiError::unknown_task(&id))?;
        let instruction = req.instruction.as_deref().unwrap_or(&task.instruction);
        let pool = ds.pool();
        let ranked = model
            .infer(&task.part, &task.frame, instruction, &pool)
            .map_err(ApiError::internal)?;
        let top = req.top.unwrap_or(10).min(ranked.len());
        let ranked: Vec<Value> = ranked[..top]
            .iter()
            .map(|r| json!({"id": r.trajectory.id, "score": r.score}))
            .collect();
        Ok(Json(json!({"task": id, "ranked": ranked})))
    })
    .await
    .map_err(ApiError::internal)?
}
