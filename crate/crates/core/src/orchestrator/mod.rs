//! Benchmark campaigns: one capped container per host, run concurrently,
//! results gathered into a dataset.
//!
//! Each host runs in its own task and reports lifecycle events over a
//! channel; a single coordinator applies them to the run record, so status
//! transitions for a host are always observed in order.

pub mod docker;
pub mod engine;
pub mod fake;
pub mod inventory;
pub mod simulated;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Utc;
use parking_lot::{Mutex, RwLock};
use thiserror::Error;
use tokio::sync::{mpsc, Semaphore};
use tokio::task::JoinHandle;

use crate::ingest::{RawBenchmarkOutput, ToolOutputParser};
use crate::model::{
    validate_dataset, validate_fleet, AttributeMeasurement, BenchmarkDataset, ContainerSpec,
    DatasetId, DatasetRole, HostStatus, ModelError, RunId, RunRecord, VmDescriptor,
};
use crate::store::{Repository, StoreError};

use engine::{ContainerEngine, CreateRequest, EngineError, EngineFactory, ExecutorBinding};
use inventory::{Inventory, InventoryError};

pub const DEFAULT_IMAGE: &str = "vmrank/microbench:latest";
pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("campaign has no hosts")]
    EmptyFleet,
    #[error(transparent)]
    InvalidFleet(#[from] ModelError),
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error("hosts already in an active run: {}", .0.join(", "))]
    HostsBusy(Vec<String>),
    #[error("unknown run `{0}`")]
    UnknownRun(RunId),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("campaign coordinator stopped: {0}")]
    Aborted(String),
}

/// Why a single host did not produce measurements.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HostFailure {
    #[error("host unreachable: {0}")]
    HostUnreachable(String),
    #[error("container create failed: {0}")]
    ContainerCreateFailed(String),
    #[error("benchmark timed out after {0:?}")]
    BenchmarkTimeout(Duration),
    #[error("benchmark failed: {0}")]
    BenchmarkFailed(String),
    #[error("output collection failed: {0}")]
    CollectFailed(String),
    #[error("container cleanup failed: {0}")]
    CleanupFailed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignHost {
    pub vm: VmDescriptor,
    pub binding: ExecutorBinding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRequest {
    pub hosts: Vec<CampaignHost>,
    pub container: ContainerSpec,
    pub role: DatasetRole,
    pub image: String,
}

impl CampaignRequest {
    /// Image defaults to the container's image reference, then
    /// [`DEFAULT_IMAGE`].
    pub fn new(hosts: Vec<CampaignHost>, container: ContainerSpec) -> Self {
        let image = container
            .image_ref
            .clone()
            .unwrap_or_else(|| DEFAULT_IMAGE.to_string());
        Self {
            hosts,
            container,
            role: DatasetRole::Current,
            image,
        }
    }

    pub fn from_inventory(
        inventory: &Inventory,
        container: ContainerSpec,
    ) -> Result<Self, OrchestratorError> {
        inventory.validate()?;
        let hosts = inventory
            .hosts
            .iter()
            .map(|h| {
                Ok(CampaignHost {
                    vm: h.descriptor(),
                    binding: h.binding()?,
                })
            })
            .collect::<Result<Vec<_>, InventoryError>>()?;
        Ok(Self::new(hosts, container))
    }

    pub fn with_role(mut self, role: DatasetRole) -> Self {
        self.role = role;
        self
    }

    pub fn fleet(&self) -> Vec<VmDescriptor> {
        self.hosts.iter().map(|h| h.vm.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    /// Hosts benchmarked at the same time.
    pub max_concurrency: usize,
    /// Limit on the benchmark process of one host.
    pub deadline: Duration,
    pub cleanup_attempts: u32,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            max_concurrency: 32,
            deadline: DEFAULT_DEADLINE,
            cleanup_attempts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub record: RunRecord,
    /// The stored dataset; `None` when no host produced measurements.
    pub dataset: Option<BenchmarkDataset>,
}

pub struct CampaignHandle {
    pub run_id: RunId,
    task: JoinHandle<Result<CampaignOutcome, OrchestratorError>>,
}

impl CampaignHandle {
    pub async fn join(self) -> Result<CampaignOutcome, OrchestratorError> {
        self.task
            .await
            .map_err(|e| OrchestratorError::Aborted(e.to_string()))?
    }
}

struct HostEvent {
    host_id: String,
    status: HostStatus,
    duration_secs: Option<f64>,
    benchmark_secs: Option<f64>,
    measurements: Vec<AttributeMeasurement>,
}

impl HostEvent {
    fn status(host_id: &str, status: HostStatus) -> Self {
        Self {
            host_id: host_id.to_string(),
            status,
            duration_secs: None,
            benchmark_secs: None,
            measurements: Vec::new(),
        }
    }
}

struct Shared {
    store: Arc<dyn Repository>,
    factory: Arc<dyn EngineFactory>,
    parser: ToolOutputParser,
    config: OrchestratorConfig,
    runs: RwLock<HashMap<RunId, RunRecord>>,
    busy: Mutex<HashSet<String>>,
}

/// Releases reserved hosts when the coordinator finishes or unwinds.
struct BusyGuard {
    shared: Arc<Shared>,
    hosts: Vec<String>,
}

impl Drop for BusyGuard {
    fn drop(&mut self) {
        let mut busy = self.shared.busy.lock();
        for h in &self.hosts {
            busy.remove(h);
        }
    }
}

#[derive(Clone)]
pub struct Orchestrator {
    shared: Arc<Shared>,
}

impl Orchestrator {
    pub fn new(
        store: Arc<dyn Repository>,
        factory: Arc<dyn EngineFactory>,
        parser: ToolOutputParser,
        config: OrchestratorConfig,
    ) -> Self {
        Self {
            shared: Arc::new(Shared {
                store,
                factory,
                parser,
                config,
                runs: RwLock::new(HashMap::new()),
                busy: Mutex::new(HashSet::new()),
            }),
        }
    }

    pub fn store(&self) -> &Arc<dyn Repository> {
        &self.shared.store
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.shared.config
    }

    /// Registers the run and starts it in the background. Must be called
    /// within a Tokio runtime.
    pub fn start_campaign(
        &self,
        req: CampaignRequest,
    ) -> Result<CampaignHandle, OrchestratorError> {
        if req.hosts.is_empty() {
            return Err(OrchestratorError::EmptyFleet);
        }
        let fleet = req.fleet();
        validate_fleet(&fleet)?;

        let host_ids: Vec<String> = fleet.iter().map(|v| v.id.clone()).collect();
        {
            let mut busy = self.shared.busy.lock();
            let clash: Vec<String> = host_ids
                .iter()
                .filter(|h| busy.contains(*h))
                .cloned()
                .collect();
            if !clash.is_empty() {
                return Err(OrchestratorError::HostsBusy(clash));
            }
            busy.extend(host_ids.iter().cloned());
        }
        let guard = BusyGuard {
            shared: self.shared.clone(),
            hosts: host_ids,
        };

        let run_id = RunId::generate();
        let record = RunRecord::new(run_id.clone(), req.container.clone(), &fleet);
        self.shared.store.put_run(&record)?;
        self.shared.runs.write().insert(run_id.clone(), record);

        let shared = self.shared.clone();
        let id = run_id.clone();
        let task = tokio::spawn(async move {
            let _guard = guard;
            shared.coordinate(id, req).await
        });
        Ok(CampaignHandle { run_id, task })
    }

    /// Runs a campaign to completion.
    pub async fn run_campaign(
        &self,
        req: CampaignRequest,
    ) -> Result<CampaignOutcome, OrchestratorError> {
        self.start_campaign(req)?.join().await
    }

    /// Live state of an active run, or the persisted record of a past one.
    pub fn poll_status(&self, run_id: &RunId) -> Result<RunRecord, OrchestratorError> {
        if let Some(r) = self.shared.runs.read().get(run_id) {
            return Ok(r.clone());
        }
        match self.shared.store.get_run(run_id) {
            Ok(r) => Ok(r),
            Err(StoreError::RunNotFound(_)) => Err(OrchestratorError::UnknownRun(run_id.clone())),
            Err(e) => Err(e.into()),
        }
    }

    /// Host ids currently reserved by an active run.
    pub fn busy_hosts(&self) -> Vec<String> {
        let mut v: Vec<_> = self.shared.busy.lock().iter().cloned().collect();
        v.sort();
        v
    }
}

impl Shared {
    async fn coordinate(
        self: Arc<Self>,
        run_id: RunId,
        req: CampaignRequest,
    ) -> Result<CampaignOutcome, OrchestratorError> {
        let (tx, mut rx) = mpsc::unbounded_channel::<HostEvent>();
        let permits = Arc::new(Semaphore::new(self.config.max_concurrency.max(1)));
        let mut workers = Vec::with_capacity(req.hosts.len());
        for host in &req.hosts {
            let shared = self.clone();
            let tx = tx.clone();
            let permits = permits.clone();
            let host = host.clone();
            let spec = req.container.clone();
            let image = req.image.clone();
            let run_id = run_id.clone();
            workers.push(tokio::spawn(async move {
                let _permit = permits
                    .acquire_owned()
                    .await
                    .expect("semaphore never closed");
                shared.run_host(&run_id, &host, &spec, &image, &tx).await;
            }));
        }
        drop(tx);

        let mut measurements = Vec::new();
        while let Some(event) = rx.recv().await {
            measurements.extend(self.apply(&run_id, event));
        }
        for w in workers {
            if let Err(e) = w.await {
                tracing::error!(run = %run_id, "host worker aborted: {e}");
            }
        }

        let fleet = req.fleet();
        let mut dataset =
            BenchmarkDataset::new(DatasetId::generate(), req.role, req.container.clone());
        for m in measurements {
            if let Err(e) = dataset.insert(m) {
                tracing::warn!(run = %run_id, "dropping measurement: {e}");
            }
        }
        let completeness = validate_dataset(&dataset, &fleet, self.parser.taxonomy());
        let stored = if dataset.is_empty() {
            None
        } else {
            self.store.put_dataset(&dataset)?;
            Some(dataset)
        };

        let record = {
            let mut runs = self.runs.write();
            let record = runs
                .get_mut(&run_id)
                .ok_or_else(|| OrchestratorError::UnknownRun(run_id.clone()))?;
            for h in record.hosts.iter_mut() {
                if !h.status.is_terminal() {
                    h.status = HostStatus::Failed("host worker aborted".into());
                    h.finished_at = Some(Utc::now());
                }
            }
            record.dataset_id = stored.as_ref().map(|d| d.id.clone());
            record.completeness = Some(completeness);
            record.finished_at = Some(Utc::now());
            record.clone()
        };
        self.store.put_run(&record)?;
        self.runs.write().remove(&run_id);
        Ok(CampaignOutcome {
            record,
            dataset: stored,
        })
    }

    /// Applies one host event to the live record; returns the measurements
    /// it carried.
    fn apply(&self, run_id: &RunId, event: HostEvent) -> Vec<AttributeMeasurement> {
        let snapshot = {
            let mut runs = self.runs.write();
            let Some(record) = runs.get_mut(run_id) else {
                return Vec::new();
            };
            if let Err(e) = record.transition(&event.host_id, event.status.clone()) {
                tracing::warn!(run = %run_id, "ignoring host event: {e}");
                return Vec::new();
            }
            let now = Utc::now();
            if let Ok(host) = record.host_mut(&event.host_id) {
                if event.status == HostStatus::Provisioning {
                    host.started_at = Some(now);
                }
                if event.status.is_terminal() {
                    host.finished_at = Some(now);
                    host.duration_secs = event.duration_secs;
                    host.benchmark_secs = event.benchmark_secs;
                }
            }
            event.status.is_terminal().then(|| record.clone())
        };
        if let Some(record) = snapshot {
            if let Err(e) = self.store.put_run(&record) {
                tracing::warn!(run = %run_id, "could not persist run progress: {e}");
            }
        }
        event.measurements
    }

    async fn run_host(
        &self,
        run_id: &RunId,
        host: &CampaignHost,
        spec: &ContainerSpec,
        image: &str,
        tx: &mpsc::UnboundedSender<HostEvent>,
    ) {
        let host_id = host.vm.id.as_str();
        let _ = tx.send(HostEvent::status(host_id, HostStatus::Provisioning));
        let started = Instant::now();
        let mut benchmark_secs = None;
        let result = self
            .drive_host(run_id, host, spec, image, tx, &mut benchmark_secs)
            .await;
        let duration_secs = Some(started.elapsed().as_secs_f64());
        let event = match result {
            Ok(measurements) => HostEvent {
                host_id: host_id.to_string(),
                status: HostStatus::Done,
                duration_secs,
                benchmark_secs,
                measurements,
            },
            Err(failure) => {
                tracing::warn!(run = %run_id, host = host_id, "{failure}");
                HostEvent {
                    host_id: host_id.to_string(),
                    status: HostStatus::Failed(failure.to_string()),
                    duration_secs,
                    benchmark_secs,
                    measurements: Vec::new(),
                }
            }
        };
        let _ = tx.send(event);
    }

    async fn drive_host(
        &self,
        run_id: &RunId,
        host: &CampaignHost,
        spec: &ContainerSpec,
        image: &str,
        tx: &mpsc::UnboundedSender<HostEvent>,
        benchmark_secs: &mut Option<f64>,
    ) -> Result<Vec<AttributeMeasurement>, HostFailure> {
        let unreachable =
            |e: EngineError| HostFailure::HostUnreachable(format!("{}: {e}", host.vm.id));
        let engine = self
            .factory
            .engine_for(&host.vm, &host.binding)
            .map_err(unreachable)?;
        engine.ping().await.map_err(unreachable)?;
        let create_failed = |e: EngineError| HostFailure::ContainerCreateFailed(e.to_string());
        engine.ensure_image(image).await.map_err(create_failed)?;
        let req = CreateRequest::for_host(&host.vm, spec, image, run_id);
        let container = engine.create(&req).await.map_err(create_failed)?;

        let result = self
            .benchmark(engine.as_ref(), &container, host, spec, tx, benchmark_secs)
            .await;
        let cleanup = self.cleanup(engine.as_ref(), &container).await;
        match (result, cleanup) {
            (Err(e), _) => Err(e),
            (Ok(_), Err(e)) => Err(e),
            (Ok(m), Ok(())) => Ok(m),
        }
    }

    async fn benchmark(
        &self,
        engine: &dyn ContainerEngine,
        container: &str,
        host: &CampaignHost,
        spec: &ContainerSpec,
        tx: &mpsc::UnboundedSender<HostEvent>,
        benchmark_secs: &mut Option<f64>,
    ) -> Result<Vec<AttributeMeasurement>, HostFailure> {
        let host_id = host.vm.id.as_str();
        let _ = tx.send(HostEvent::status(host_id, HostStatus::Benchmarking));
        let t0 = Instant::now();
        engine
            .start(container)
            .await
            .map_err(|e| HostFailure::BenchmarkFailed(e.to_string()))?;
        let waited = tokio::time::timeout(self.config.deadline, engine.wait(container)).await;
        *benchmark_secs = Some(t0.elapsed().as_secs_f64());
        match waited {
            Err(_) => return Err(HostFailure::BenchmarkTimeout(self.config.deadline)),
            Ok(Err(e)) => return Err(HostFailure::BenchmarkFailed(e.to_string())),
            Ok(Ok(0)) => {}
            Ok(Ok(code)) => return Err(HostFailure::BenchmarkFailed(format!("exit code {code}"))),
        }

        let _ = tx.send(HostEvent::status(host_id, HostStatus::Collecting));
        let lines = engine
            .logs(container)
            .await
            .map_err(|e| HostFailure::CollectFailed(e.to_string()))?;
        let raw = RawBenchmarkOutput {
            vm_id: host_id.to_string(),
            container: spec.clone(),
            lines,
        };
        let parsed = self
            .parser
            .parse(&raw)
            .map_err(|e| HostFailure::CollectFailed(e.to_string()))?;
        for w in &parsed.warnings {
            tracing::debug!(host = host_id, line = w.line, "{}", w.reason);
        }
        if parsed.measurements.is_empty() {
            return Err(HostFailure::CollectFailed(
                "no recognized attributes".into(),
            ));
        }
        Ok(parsed.measurements)
    }

    async fn cleanup(
        &self,
        engine: &dyn ContainerEngine,
        container: &str,
    ) -> Result<(), HostFailure> {
        let mut last = None;
        for _ in 0..self.config.cleanup_attempts.max(1) {
            match engine.remove(container).await {
                Ok(()) => return Ok(()),
                Err(e) => last = Some(e),
            }
        }
        Err(HostFailure::CleanupFailed(
            last.map(|e| e.to_string()).unwrap_or_default(),
        ))
    }
}
