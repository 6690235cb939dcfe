//! HTTP/JSON API over a loaded project: dashboard data, on-demand checks,
//! manual discharge and interactive animation sessions with trace saving.
//!
//! Error responses carry `{error, detail}`; conflicts on disabled events add
//! the current `enabled` list.

mod error;
mod session;

use std::collections::HashMap;
use std::fs;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{Html, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use vobs_core::engine::{Limits, Model, ModelError};
use vobs_core::lang::Header;
use vobs_core::vo::{
    status_report, Clock, Evidence, Ledger, LoadError, ManagerError, VoManager, VoRecord, VoSpec,
};

pub use error::{ApiError, ApiResult};
pub use session::{HistoryEntry, LabelView, Session, SessionView, Sessions, StepRequest};

#[derive(Debug, Clone, Copy)]
pub struct ServerConfig {
    /// Wall-clock budget of one check request.
    pub budget: Duration,
    /// Idle time after which a session is dropped.
    pub session_ttl: Duration,
    pub limits: Limits,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            budget: Duration::from_secs(30),
            session_ttl: Duration::from_secs(3600),
            limits: Limits::default(),
        }
    }
}

pub struct AppState {
    root: PathBuf,
    config: ServerConfig,
    clock: Arc<dyn Clock>,
    manager: RwLock<Arc<VoManager>>,
    sessions: Mutex<Sessions>,
    /// Serializes ledger writes and project-file edits.
    writer: tokio::sync::Mutex<()>,
    vo_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn load(
        root: &Path,
        config: ServerConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Self>, LoadError> {
        let manager = VoManager::load(root, config.limits, clock.clone())?;
        Ok(Arc::new(AppState {
            root: manager.project().root.clone(),
            config,
            clock,
            manager: RwLock::new(Arc::new(manager)),
            sessions: Mutex::new(Sessions::new(config.session_ttl)),
            writer: tokio::sync::Mutex::new(()),
            vo_locks: Mutex::new(HashMap::new()),
        }))
    }

    /// Snapshot of the loaded project.
    pub fn manager(&self) -> Arc<VoManager> {
        self.manager.read().unwrap().clone()
    }

    fn reload(&self) -> Result<(), LoadError> {
        let m = VoManager::load(&self.root, self.config.limits, self.clock.clone())?;
        *self.manager.write().unwrap() = Arc::new(m);
        Ok(())
    }

    fn vo_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.vo_locks
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/project", get(get_project))
        .route("/api/vos", get(list_vos))
        .route("/api/vos/{id}", get(get_vo))
        .route("/api/vos/{id}/check", post(check_vo))
        .route("/api/vos/{id}/discharge", post(discharge))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/step", post(step_session))
        .route("/api/sessions/{id}/undo", post(undo_session))
        .route("/api/sessions/{id}/save", post(save_session))
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn log_requests(req: Request, next: Next) -> Response {
    let (method, path) = (req.method().clone(), req.uri().path().to_string());
    let start = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(%method, %path, status = resp.status().as_u16(), ms = start.elapsed().as_millis() as u64, "request");
    resp
}

const INDEX: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>vobs</title></head>
<body>
<h1>vobs</h1>
<p>The dashboard bundle is not installed. The JSON API is available under <code>/api</code>:</p>
<ul>
<li><a href=\"/api/project\">/api/project</a></li>
<li><a href=\"/api/vos\">/api/vos</a></li>
</ul>
</body></html>
";

async fn index() -> Html<&'static str> {
    Html(INDEX)
}

fn ledger_error(e: impl ToString) -> ApiError {
    ApiError::internal(e.to_string())
}

fn current_ledger(m: &VoManager) -> ApiResult<Ledger> {
    m.refreshed_ledger().map(|(l, _)| l).map_err(ledger_error)
}

#[derive(Serialize)]
struct VoEntry<'a> {
    id: &'a str,
    target: &'a str,
    kind: &'a str,
    automatic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    requirement_tag: Option<&'a str>,
    spec: &'a VoSpec,
    record: VoRecord,
}

fn vo_entry<'a>(m: &VoManager, vo: &'a VoSpec, ledger: &Ledger) -> VoEntry<'a> {
    VoEntry {
        id: &vo.id,
        target: &vo.target,
        kind: &vo.kind,
        automatic: m.kind_of(vo).automatic(),
        requirement_tag: vo.requirement_tag.as_deref(),
        spec: vo,
        record: ledger
            .get(&vo.id)
            .cloned()
            .unwrap_or_else(|| VoRecord::unchecked(&vo.id)),
    }
}

async fn get_project(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let m = st.manager();
    let p = m.project();
    let ledger = current_ledger(&m)?;
    let report = status_report(p, &ledger);
    let models: Vec<Value> = p
        .lattice
        .models
        .values()
        .map(|mach| {
            let (relation, parent) = match &mach.header {
                Header::None => (None, None),
                Header::Refines(x) => (Some("refines"), Some(x.clone())),
                Header::Views(x) => (Some("views"), Some(x.clone())),
                Header::Instantiates { generic, .. } => {
                    (Some("instantiates"), Some(generic.clone()))
                }
            };
            let file = p.model_files.get(&mach.name).cloned().flatten().map(|f| {
                f.strip_prefix(&p.root)
                    .map(Path::to_path_buf)
                    .unwrap_or(f)
                    .display()
                    .to_string()
            });
            json!({
                "name": mach.name,
                "file": file,
                "generic": mach.is_generic(),
                "header": relation.map(|r| json!({ "kind": r, "model": parent })),
                "counts": report.by_model.get(&mach.name).copied().unwrap_or_default(),
            })
        })
        .collect();
    let edges: Vec<Value> = p
        .lattice
        .edges
        .iter()
        .map(|e| json!({ "id": e.id(), "from": e.from, "to": e.to, "kind": e.kind }))
        .collect();
    Ok(Json(json!({
        "name": p.name,
        "models": models,
        "edges": edges,
        "vos": report.rows,
        "totals": report.totals,
        "by_tag": report.by_tag,
        "validated": report.validated,
        "topological_order": p.lattice.topological_order(),
    })))
}

async fn list_vos(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let m = st.manager();
    let ledger = current_ledger(&m)?;
    let entries: Vec<VoEntry> = m
        .project()
        .vos
        .iter()
        .map(|v| vo_entry(&m, v, &ledger))
        .collect();
    Ok(Json(
        serde_json::to_value(entries).expect("entries serialize"),
    ))
}

async fn get_vo(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<Value>> {
    let m = st.manager();
    let vo = m
        .project()
        .vo(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown obligation {id}")))?;
    let ledger = current_ledger(&m)?;
    Ok(Json(
        serde_json::to_value(vo_entry(&m, vo, &ledger)).expect("entry serializes"),
    ))
}

async fn check_vo(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<VoRecord>> {
    let m = st.manager();
    if m.project().vo(&id).is_none() {
        return Err(ApiError::not_found(format!("unknown obligation {id}")));
    }
    if m.is_manual(&id) {
        return Err(ApiError::conflict(
            "manual_vo",
            format!("{id} is a manual obligation; discharge it with POST /api/vos/{id}/discharge"),
        ));
    }
    let lock = st.vo_lock(&id);
    let _guard = lock.lock().await;
    let budget = st.config.budget;
    let worker = {
        let (m, id) = (m.clone(), id.clone());
        tokio::task::spawn_blocking(move || m.check_vo(&id, None, &Ledger::default()))
    };
    let record = match tokio::time::timeout(budget, worker).await {
        Ok(Ok(Ok(r))) => r,
        Ok(Ok(Err(e))) => m.error_record(&id, &e),
        Ok(Err(join)) => return Err(ApiError::internal(join.to_string())),
        Err(_) => m.failed_record(
            &id,
            Evidence::summary("inconclusive: budget")
                .with_detail(json!({ "budget_ms": budget.as_millis() as u64 })),
        ),
    };
    let _w = st.writer.lock().await;
    m.commit(record.clone()).map_err(ledger_error)?;
    Ok(Json(record))
}

#[derive(Deserialize)]
struct DischargeRequest {
    note: String,
    #[serde(default)]
    actor: Option<String>,
}

async fn discharge(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<DischargeRequest>,
) -> ApiResult<Json<VoRecord>> {
    let m = st.manager();
    let _w = st.writer.lock().await;
    let (mut ledger, _) = m.refreshed_ledger().map_err(ledger_error)?;
    let actor = req
        .actor
        .as_deref()
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .unwrap_or("anonymous");
    let record = m
        .discharge_manual(&mut ledger, &id, &req.note, actor)
        .map_err(|e| match e {
            ManagerError::UnknownVo(_) => ApiError::not_found(e.to_string()),
            ManagerError::NotManual(_) => ApiError::conflict("not_manual", e.to_string()),
            ManagerError::EmptyNote => ApiError::bad_request(e.to_string()),
            e => ApiError::internal(e.to_string()),
        })?;
    m.write_ledger(&ledger).map_err(ledger_error)?;
    Ok(Json(record))
}

#[derive(Deserialize)]
struct CreateSession {
    machine: String,
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let m = st.manager();
    let machine = m
        .project()
        .machine(&req.machine)
        .ok_or_else(|| ApiError::not_found(format!("unknown machine {}", req.machine)))?;
    let model = Model::new(machine).map_err(|e| match e {
        ModelError::UnboundConstants { machine, constants } => ApiError::conflict(
            "unbound_constants",
            format!(
                "{machine} is generic (unbound: {}); animate one of its instantiations instead",
                constants.join(", ")
            ),
        ),
        e => ApiError::conflict("not_animatable", e.to_string()),
    })?;
    let session = Session::start(uuid::Uuid::new_v4().to_string(), model)?;
    let view = session.view();
    st.sessions.lock().unwrap().insert(session);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionView>> {
    Ok(Json(st.sessions.lock().unwrap().get_mut(&id)?.view()))
}

async fn step_session(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<StepRequest>,
) -> ApiResult<Json<SessionView>> {
    let mut sessions = st.sessions.lock().unwrap();
    let s = sessions.get_mut(&id)?;
    let label = s.label(&req)?;
    s.step(label)?;
    Ok(Json(s.view()))
}

async fn undo_session(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionView>> {
    let mut sessions = st.sessions.lock().unwrap();
    let s = sessions.get_mut(&id)?;
    s.undo()?;
    Ok(Json(s.view()))
}

#[derive(Deserialize)]
struct SaveRequest {
    name: String,
    #[serde(default)]
    register_as_vo: bool,
    #[serde(default)]
    requirement_tag: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct SaveResponse {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vo_id: Option<String>,
}

fn valid_stem(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        && !name.starts_with('-')
}

#[derive(Serialize)]
struct VoTable<'a> {
    vo: [&'a VoSpec; 1],
}

async fn save_session(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<SaveRequest>,
) -> ApiResult<(StatusCode, Json<SaveResponse>)> {
    if !valid_stem(&req.name) {
        return Err(ApiError::bad_request(format!(
            "{:?} is not a valid file stem",
            req.name
        )));
    }
    let trace = {
        let mut sessions = st.sessions.lock().unwrap();
        let s = sessions.get_mut(&id)?;
        if s.history.is_empty() {
            return Err(ApiError::conflict("empty_history", "nothing to save"));
        }
        s.trace()
    };
    let _w = st.writer.lock().await;
    let m = st.manager();
    let rel = format!("traces/{}.trace", req.name);
    let path = st.root.join(&rel);
    if path.exists() {
        return Err(ApiError::conflict(
            "name_collision",
            format!("{rel} already exists"),
        ));
    }
    if req.register_as_vo && m.project().vo(&req.name).is_some() {
        return Err(ApiError::conflict(
            "name_collision",
            format!("obligation {} already exists", req.name),
        ));
    }
    fs::create_dir_all(path.parent().expect("trace path has a parent")).map_err(ledger_error)?;
    fs::write(&path, trace.to_string()).map_err(ledger_error)?;
    if !req.register_as_vo {
        return Ok((
            StatusCode::CREATED,
            Json(SaveResponse {
                path: rel,
                vo_id: None,
            }),
        ));
    }

    let spec = VoSpec {
        id: req.name.clone(),
        target: trace.machine.clone(),
        kind: "trace".into(),
        requirement_tag: req.requirement_tag.filter(|t| !t.trim().is_empty()),
        formula: None,
        inherits: None,
        trace: Some(rel.clone()),
        abstract_trace: None,
        edge: None,
        thresholds: None,
        limits: None,
        description: None,
    };
    let table = toml::to_string(&VoTable { vo: [&spec] }).map_err(ledger_error)?;
    let project_file = m.project().project_file_path();
    let original = fs::read_to_string(&project_file).map_err(ledger_error)?;
    let sep = if original.ends_with('\n') {
        "\n"
    } else {
        "\n\n"
    };
    fs::write(&project_file, format!("{original}{sep}{table}")).map_err(ledger_error)?;
    if let Err(e) = st.reload() {
        let _ = fs::write(&project_file, original);
        let _ = fs::remove_file(&path);
        return Err(ApiError::internal(format!(
            "registered obligation does not load: {e}"
        )));
    }
    Ok((
        StatusCode::CREATED,
        Json(SaveResponse {
            path: rel,
            vo_id: Some(spec.id),
        }),
    ))
}
