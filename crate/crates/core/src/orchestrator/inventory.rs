//! Host inventory files.
//!
//! ```toml
//! [[host]]
//! id = "vm-01"
//! vm_type = "m3.xlarge"
//! vcpus = 4
//! memory_gib = 15.0
//! endpoint = "tcp://10.0.0.11:2375"
//!
//! [[host]]
//! id = "vm-02"
//! vm_type = "cc2.8xlarge"
//! vcpus = 32
//! memory_gib = 60.5
//! executor = "simulated"
//! profile_seed = 7
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_fleet, ModelError, VmDescriptor};

use super::engine::ExecutorBinding;
use super::simulated::SimProfile;

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("inventory parse error: {0}")]
    Parse(String),
    #[error("inventory lists no hosts")]
    Empty,
    #[error("host `{0}` uses the engine API but has no endpoint")]
    MissingEndpoint(String),
    #[error(transparent)]
    Invalid(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutorKind {
    #[default]
    EngineApi,
    Simulated,
}

/// One `[[host]]` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub id: String,
    pub vm_type: String,
    pub vcpus: u32,
    pub memory_gib: f64,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub executor: ExecutorKind,
    #[serde(default)]
    pub profile_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_factors: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_noise_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_run_ms: Option<u64>,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl HostSpec {
    pub fn descriptor(&self) -> VmDescriptor {
        VmDescriptor {
            id: self.id.clone(),
            vm_type: self.vm_type.clone(),
            vcpus: self.vcpus,
            memory_gib: self.memory_gib,
            endpoint: self.endpoint.clone(),
            tags: self.tags.clone(),
        }
    }

    pub fn binding(&self) -> Result<ExecutorBinding, InventoryError> {
        match self.executor {
            ExecutorKind::EngineApi if self.endpoint.trim().is_empty() => {
                Err(InventoryError::MissingEndpoint(self.id.clone()))
            }
            ExecutorKind::EngineApi => Ok(ExecutorBinding::EngineApi {
                endpoint: self.endpoint.clone(),
            }),
            ExecutorKind::Simulated => {
                let defaults = SimProfile::default();
                Ok(ExecutorBinding::Simulated(SimProfile {
                    seed: self.profile_seed,
                    factors: self.sim_factors,
                    noise_pct: self.sim_noise_pct.unwrap_or(defaults.noise_pct),
                    run_ms: self.sim_run_ms.unwrap_or(defaults.run_ms),
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Inventory {
    #[serde(default, rename = "host")]
    pub hosts: Vec<HostSpec>,
}

impl Inventory {
    pub fn from_toml(text: &str) -> Result<Self, InventoryError> {
        let inv: Inventory =
            toml::from_str(text).map_err(|e| InventoryError::Parse(e.to_string()))?;
        inv.validate()?;
        Ok(inv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InventoryError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), InventoryError> {
        if self.hosts.is_empty() {
            return Err(InventoryError::Empty);
        }
        validate_fleet(&self.fleet())?;
        for h in &self.hosts {
            h.binding()?;
        }
        Ok(())
    }

    pub fn fleet(&self) -> Vec<VmDescriptor> {
        self.hosts.iter().map(HostSpec::descriptor).collect()
    }

    /// Every host switched to the simulated executor.
    pub fn simulated(mut self) -> Self {
        for h in &mut self.hosts {
            h.executor = ExecutorKind::Simulated;
        }
        self
    }
}
