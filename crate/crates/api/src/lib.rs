//! HTTP facade over the orchestrator, the dataset store and the ranking
//! workflow. Rankings are computed per request and never stored.

use std::collections::BTreeMap;
use std::future::Future;
use std::path::PathBuf;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use vmrank_core::orchestrator::inventory::{HostSpec, Inventory};
use vmrank_core::store::IndexEntry;
use vmrank_core::{
    rank_stored, CampaignRequest, ContainerSpec, CpuMode, DatasetId, DatasetRole, Orchestrator,
    OrchestratorError, RankMode, RankQuery, RankTable, Ranker, RankingError, Repository, RunId,
    RunRecord, StoreError, WeightVector, WorkflowError,
};

pub const DEFAULT_PAGE_LIMIT: usize = 50;
pub const MAX_PAGE_LIMIT: usize = 500;

#[derive(Clone)]
pub struct AppState {
    orchestrator: Orchestrator,
    ranker: Ranker,
}

impl AppState {
    pub fn new(orchestrator: Orchestrator, ranker: Ranker) -> Self {
        Self {
            orchestrator,
            ranker,
        }
    }

    fn store(&self) -> &dyn Repository {
        self.orchestrator.store().as_ref()
    }
}

/// Error body: `{"code": "...", "message": "..."}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::NotFound(_) => {
                Self::new(StatusCode::NOT_FOUND, "dataset_not_found", message)
            }
            StoreError::RunNotFound(_) => {
                Self::new(StatusCode::NOT_FOUND, "run_not_found", message)
            }
            StoreError::NoEligibleHistoric(_) => Self::new(
                StatusCode::CONFLICT,
                "no_eligible_historic",
                format!("{message}; lightweight mode needs no history"),
            ),
            StoreError::InvalidQuery(_) => Self::bad_request(message),
            StoreError::AlreadyExists(_) => {
                Self::new(StatusCode::CONFLICT, "already_exists", message)
            }
            StoreError::StorageCorrupt { .. } | StoreError::Io(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", message)
            }
        }
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        match e {
            WorkflowError::Store(s) => s.into(),
            WorkflowError::Ranking(r @ RankingError::StaleHistoricData { .. }) => {
                Self::new(StatusCode::CONFLICT, "no_eligible_historic", r.to_string())
            }
            WorkflowError::Ranking(r @ RankingError::VmSetMismatch { .. }) => {
                Self::new(StatusCode::CONFLICT, "vm_set_mismatch", r.to_string())
            }
            WorkflowError::Ranking(r) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unrankable_dataset",
                r.to_string(),
            ),
            e @ WorkflowError::UnsupportedMode(_) => Self::bad_request(e.to_string()),
        }
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let message = e.to_string();
        match e {
            OrchestratorError::HostsBusy(_) => {
                Self::new(StatusCode::CONFLICT, "hosts_busy", message)
            }
            OrchestratorError::UnknownRun(_) => {
                Self::new(StatusCode::NOT_FOUND, "run_not_found", message)
            }
            OrchestratorError::EmptyFleet
            | OrchestratorError::InvalidFleet(_)
            | OrchestratorError::Inventory(_) => Self::bad_request(message),
            OrchestratorError::Store(s) => s.into(),
            OrchestratorError::Aborted(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "aborted", message)
            }
        }
    }
}

/// Body of `POST /runs`. Exactly one of `inventory` (a TOML file readable by
/// the server) and `hosts` must be given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBody {
    #[serde(default)]
    pub inventory: Option<PathBuf>,
    #[serde(default)]
    pub hosts: Option<Vec<HostSpec>>,
    pub memory_mib: u64,
    pub cpu_mode: CpuMode,
    #[serde(default)]
    pub image: Option<String>,
    #[serde(default)]
    pub role: Option<DatasetRole>,
    /// Runs every host on the simulated executor.
    #[serde(default)]
    pub simulated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAccepted {
    pub run_id: RunId,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RankingParams {
    pub dataset: String,
    pub weights: String,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub max_age_days: Option<u32>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct PageParams {
    #[serde(default)]
    pub offset: usize,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
}

impl<T> Page<T> {
    fn slice(all: Vec<T>, params: PageParams) -> Result<Self, ApiError> {
        let limit = params.limit.unwrap_or(DEFAULT_PAGE_LIMIT);
        if limit == 0 || limit > MAX_PAGE_LIMIT {
            return Err(ApiError::bad_request(format!(
                "limit must be between 1 and {MAX_PAGE_LIMIT}"
            )));
        }
        let total = all.len();
        let items = all.into_iter().skip(params.offset).take(limit).collect();
        Ok(Self {
            items,
            total,
            offset: params.offset,
            limit,
        })
    }
}

/// A VM seen in any stored dataset or run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmListing {
    pub vm_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vm_type: Option<String>,
    pub datasets: usize,
    pub runs: usize,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/rankings", get(get_ranking))
        .route("/datasets", get(list_datasets))
        .route("/vms", get(list_vms))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Same semantics as the command line `rank` subcommand.
pub fn ranking_query(params: &RankingParams) -> Result<RankQuery, ApiError> {
    let weights: WeightVector = params
        .weights
        .parse()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_weights", format!("{e}")))?;
    let mode: RankMode = match &params.mode {
        Some(m) => m
            .parse()
            .map_err(|e| ApiError::bad_request(format!("{e}")))?,
        None => RankMode::Lightweight,
    };
    let mut query = RankQuery::new(DatasetId::from(params.dataset.as_str()), weights, mode);
    if let Some(days) = params.max_age_days {
        if days == 0 {
            return Err(ApiError::bad_request("max_age_days must be > 0"));
        }
        query.max_age_days = days;
    }
    Ok(query)
}

fn campaign_request(body: RunBody) -> Result<CampaignRequest, ApiError> {
    let inventory = match (body.inventory, body.hosts) {
        (Some(path), None) => Inventory::load(&path)
            .map_err(|e| ApiError::bad_request(format!("inventory {}: {e}", path.display())))?,
        (None, Some(hosts)) => Inventory { hosts },
        _ => {
            return Err(ApiError::bad_request(
                "give exactly one of `inventory` and `hosts`",
            ))
        }
    };
    let inventory = if body.simulated {
        inventory.simulated()
    } else {
        inventory
    };
    let mut container = ContainerSpec::new(body.memory_mib, body.cpu_mode)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    if let Some(image) = body.image {
        container = container.with_image(image);
    }
    let req = CampaignRequest::from_inventory(&inventory, container)?;
    Ok(match body.role {
        Some(role) => req.with_role(role),
        None => req,
    })
}

async fn create_run(
    State(state): State<AppState>,
    body: Result<Json<RunBody>, JsonRejection>,
) -> Result<(StatusCode, Json<RunAccepted>), ApiError> {
    let Json(body) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let req = campaign_request(body)?;
    let handle = state.orchestrator.start_campaign(req)?;
    tracing::info!(run_id = %handle.run_id, "campaign started");
    Ok((
        StatusCode::ACCEPTED,
        Json(RunAccepted {
            run_id: handle.run_id,
        }),
    ))
}

async fn get_run(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<RunRecord>, ApiError> {
    Ok(Json(
        state.orchestrator.poll_status(&RunId::from(id.as_str()))?,
    ))
}

async fn get_ranking(
    State(state): State<AppState>,
    params: Result<Query<RankingParams>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<RankTable>, ApiError> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let query = ranking_query(&params)?;
    let st = state.clone();
    let table = tokio::task::spawn_blocking(move || rank_stored(st.store(), &st.ranker, &query))
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    Ok(Json(table))
}

async fn list_datasets(
    State(state): State<AppState>,
    Query(page): Query<PageParams>,
) -> Result<Json<Page<IndexEntry>>, ApiError> {
    Ok(Json(Page::slice(state.store().list_datasets()?, page)?))
}

async fn list_vms(
    State(state): State<AppState>,
    Query(page): Query<PageParams>,
) -> Result<Json<Page<VmListing>>, ApiError> {
    let store = state.store();
    let mut vms: BTreeMap<String, VmListing> = BTreeMap::new();
    // Oldest run first so a VM's type ends up taken from its newest run.
    let mut runs = store.list_runs()?;
    runs.sort_by(|a, b| {
        a.started_at
            .cmp(&b.started_at)
            .then(a.run_id.cmp(&b.run_id))
    });
    for run in &runs {
        for h in &run.hosts {
            let v = listing(&mut vms, &h.host_id);
            v.runs += 1;
            v.vm_type = Some(h.vm_type.clone());
        }
    }
    for e in store.list_datasets()? {
        for id in store.get_dataset(&e.dataset_id)?.dataset.vm_ids() {
            listing(&mut vms, &id).datasets += 1;
        }
    }
    Ok(Json(Page::slice(vms.into_values().collect(), page)?))
}

fn listing<'a>(vms: &'a mut BTreeMap<String, VmListing>, id: &str) -> &'a mut VmListing {
    vms.entry(id.to_string()).or_insert_with(|| VmListing {
        vm_id: id.to_string(),
        vm_type: None,
        datasets: 0,
        runs: 0,
    })
}
