//! Engine wrapper that records every call and can inject faults per host.
//! Used to check resource caps and container cleanup without a real engine.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use async_trait::async_trait;
use parking_lot::Mutex;

use crate::model::VmDescriptor;

use super::engine::{
    ContainerEngine, CreateRequest, DefaultEngineFactory, EngineError, EngineFactory,
    ExecutorBinding,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// `ping` fails.
    Unreachable,
    /// `create` is rejected.
    CreateRejected,
    /// The benchmark process crashes (`wait` errors).
    CrashDuringBenchmark,
    /// The benchmark exits with a non-zero code.
    NonZeroExit(i64),
    /// `wait` never returns.
    Hang,
    /// `logs` returns unparseable output.
    GarbledOutput,
    /// `remove` fails once, then succeeds.
    RemoveFailsOnce,
}

#[derive(Debug, Clone, Default)]
pub struct EngineLedger {
    pub creates: Vec<(String, CreateRequest)>,
    /// (host, container id) pairs created and not yet removed.
    pub live: BTreeSet<(String, String)>,
    pub removed: usize,
}

#[derive(Clone)]
pub struct RecordingFactory {
    inner: Arc<dyn EngineFactory>,
    ledger: Arc<Mutex<EngineLedger>>,
    faults: Arc<Mutex<BTreeMap<String, Fault>>>,
}

impl Default for RecordingFactory {
    fn default() -> Self {
        Self::new(Arc::new(DefaultEngineFactory))
    }
}

impl RecordingFactory {
    pub fn new(inner: Arc<dyn EngineFactory>) -> Self {
        Self {
            inner,
            ledger: Arc::default(),
            faults: Arc::default(),
        }
    }

    pub fn inject(&self, host_id: &str, fault: Fault) {
        self.faults.lock().insert(host_id.to_string(), fault);
    }

    pub fn ledger(&self) -> EngineLedger {
        self.ledger.lock().clone()
    }

    pub fn live_containers(&self) -> usize {
        self.ledger.lock().live.len()
    }
}

impl EngineFactory for RecordingFactory {
    fn engine_for(
        &self,
        vm: &VmDescriptor,
        binding: &ExecutorBinding,
    ) -> Result<Arc<dyn ContainerEngine>, EngineError> {
        Ok(Arc::new(RecordingEngine {
            host: vm.id.clone(),
            inner: self.inner.engine_for(vm, binding)?,
            ledger: self.ledger.clone(),
            faults: self.faults.clone(),
        }))
    }
}

struct RecordingEngine {
    host: String,
    inner: Arc<dyn ContainerEngine>,
    ledger: Arc<Mutex<EngineLedger>>,
    faults: Arc<Mutex<BTreeMap<String, Fault>>>,
}

impl RecordingEngine {
    fn fault(&self) -> Option<Fault> {
        self.faults.lock().get(&self.host).copied()
    }
}

#[async_trait]
impl ContainerEngine for RecordingEngine {
    async fn ping(&self) -> Result<(), EngineError> {
        if self.fault() == Some(Fault::Unreachable) {
            return Err(EngineError::Unreachable(format!("{}: injected", self.host)));
        }
        self.inner.ping().await
    }

    async fn ensure_image(&self, image: &str) -> Result<(), EngineError> {
        self.inner.ensure_image(image).await
    }

    async fn create(&self, req: &CreateRequest) -> Result<String, EngineError> {
        self.ledger
            .lock()
            .creates
            .push((self.host.clone(), req.clone()));
        if self.fault() == Some(Fault::CreateRejected) {
            return Err(EngineError::Api {
                status: 500,
                message: "injected create failure".into(),
            });
        }
        let id = self.inner.create(req).await?;
        self.ledger
            .lock()
            .live
            .insert((self.host.clone(), id.clone()));
        Ok(id)
    }

    async fn start(&self, id: &str) -> Result<(), EngineError> {
        self.inner.start(id).await
    }

    async fn wait(&self, id: &str) -> Result<i64, EngineError> {
        match self.fault() {
            Some(Fault::Hang) => std::future::pending().await,
            Some(Fault::CrashDuringBenchmark) => Err(EngineError::Api {
                status: 500,
                message: "injected benchmark crash".into(),
            }),
            Some(Fault::NonZeroExit(code)) => {
                self.inner.wait(id).await?;
                Ok(code)
            }
            _ => self.inner.wait(id).await,
        }
    }

    async fn logs(&self, id: &str) -> Result<Vec<String>, EngineError> {
        if self.fault() == Some(Fault::GarbledOutput) {
            return Ok(vec!["Float div: fast ns".into()]);
        }
        self.inner.logs(id).await
    }

    async fn remove(&self, id: &str) -> Result<(), EngineError> {
        if self.fault() == Some(Fault::RemoveFailsOnce) {
            self.faults.lock().remove(&self.host);
            return Err(EngineError::Api {
                status: 500,
                message: "injected remove failure".into(),
            });
        }
        self.inner.remove(id).await?;
        let mut ledger = self.ledger.lock();
        ledger.live.remove(&(self.host.clone(), id.to_string()));
        ledger.removed += 1;
        Ok(())
    }
}
