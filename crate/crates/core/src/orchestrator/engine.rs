use std::collections::BTreeMap;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::model::{ContainerSpec, RunId, VmDescriptor};

use super::docker::DockerEngine;
use super::simulated::{SimProfile, SimulatedEngine};

pub const LABEL_RUN: &str = "vmrank.run";
pub const LABEL_HOST: &str = "vmrank.host";
pub const LABEL_MEMORY_MIB: &str = "vmrank.memory_mib";
pub const LABEL_CPU_MODE: &str = "vmrank.cpu_mode";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("engine unreachable: {0}")]
    Unreachable(String),
    #[error("engine returned {status}: {message}")]
    Api { status: u16, message: String },
    #[error("engine protocol error: {0}")]
    Protocol(String),
}

/// A container-create call with the resource caps already resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    pub name: String,
    pub image: String,
    pub memory_bytes: u64,
    pub cpuset_cpus: String,
    #[serde(default)]
    pub cmd: Option<Vec<String>>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

impl CreateRequest {
    /// Request for benchmarking `vm` under `spec` in run `run_id`.
    pub fn for_host(vm: &VmDescriptor, spec: &ContainerSpec, image: &str, run_id: &RunId) -> Self {
        let labels = BTreeMap::from([
            (LABEL_RUN.to_string(), run_id.to_string()),
            (LABEL_HOST.to_string(), vm.id.clone()),
            (LABEL_MEMORY_MIB.to_string(), spec.memory_mib.to_string()),
            (LABEL_CPU_MODE.to_string(), spec.cpu_mode.to_string()),
        ]);
        let name: String = format!("vmrank-{}-{}", run_id, vm.id)
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '-'
                }
            })
            .collect();
        Self {
            name,
            image: image.to_string(),
            memory_bytes: spec.memory_bytes(),
            cpuset_cpus: spec.cpu_mode.cpuset(vm.vcpus),
            cmd: None,
            labels,
        }
    }

    /// JSON body for the engine's `POST /containers/create`. Swap is capped
    /// at the memory limit so the container cannot page beyond its slice.
    pub fn engine_body(&self) -> serde_json::Value {
        let mut body = json!({
            "Image": self.image,
            "Labels": self.labels,
            "Tty": false,
            "AttachStdout": true,
            "AttachStderr": true,
            "HostConfig": {
                "Memory": self.memory_bytes,
                "MemorySwap": self.memory_bytes,
                "CpusetCpus": self.cpuset_cpus,
            },
        });
        if let Some(cmd) = &self.cmd {
            body["Cmd"] = json!(cmd);
        }
        body
    }
}

/// The subset of a container engine the orchestrator drives.
#[async_trait]
pub trait ContainerEngine: Send + Sync {
    async fn ping(&self) -> Result<(), EngineError> {
        Ok(())
    }

    async fn ensure_image(&self, _image: &str) -> Result<(), EngineError> {
        Ok(())
    }

    /// Returns the new container id.
    async fn create(&self, req: &CreateRequest) -> Result<String, EngineError>;

    async fn start(&self, id: &str) -> Result<(), EngineError>;

    /// Blocks until the container exits; returns its exit code.
    async fn wait(&self, id: &str) -> Result<i64, EngineError>;

    async fn logs(&self, id: &str) -> Result<Vec<String>, EngineError>;

    async fn remove(&self, id: &str) -> Result<(), EngineError>;
}

/// How a host is driven: a real engine endpoint or the in-process simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExecutorBinding {
    EngineApi { endpoint: String },
    Simulated(SimProfile),
}

/// Resolves the engine for a host.
pub trait EngineFactory: Send + Sync {
    fn engine_for(
        &self,
        vm: &VmDescriptor,
        binding: &ExecutorBinding,
    ) -> Result<Arc<dyn ContainerEngine>, EngineError>;
}

/// Docker-compatible HTTP engines for `engine-api` hosts, the simulator
/// otherwise.
#[derive(Debug, Default, Clone)]
pub struct DefaultEngineFactory;

impl EngineFactory for DefaultEngineFactory {
    fn engine_for(
        &self,
        vm: &VmDescriptor,
        binding: &ExecutorBinding,
    ) -> Result<Arc<dyn ContainerEngine>, EngineError> {
        match binding {
            ExecutorBinding::EngineApi { endpoint } => Ok(Arc::new(DockerEngine::new(endpoint)?)),
            ExecutorBinding::Simulated(profile) => {
                Ok(Arc::new(SimulatedEngine::new(vm.clone(), profile.clone())))
            }
        }
    }
}
