//! In-process stand-in for a benchmark container.
//!
//! Each VM type has a performance factor per group (above 1 is better than
//! the reference machine). Output is deterministic in (vm, slice, seed).

use std::collections::HashMap;
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::{default_aliases, RawBenchmarkOutput};
use crate::model::{default_taxonomy, ContainerSpec, CpuMode, Polarity, VmDescriptor};

use super::engine::{
    ContainerEngine, CreateRequest, EngineError, LABEL_CPU_MODE, LABEL_MEMORY_MIB,
};

fn default_noise_pct() -> f64 {
    1.0
}

fn default_run_ms() -> u64 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimProfile {
    #[serde(default)]
    pub seed: u64,
    /// Group factors G1..G4; derived from the VM type when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<[f64; 4]>,
    /// Uniform measurement noise, in percent of the value.
    #[serde(default = "default_noise_pct")]
    pub noise_pct: f64,
    /// How long the simulated benchmark runs.
    #[serde(default = "default_run_ms")]
    pub run_ms: u64,
}

impl Default for SimProfile {
    fn default() -> Self {
        Self {
            seed: 0,
            factors: None,
            noise_pct: default_noise_pct(),
            run_ms: default_run_ms(),
        }
    }
}

fn base_value(key: &str) -> f64 {
    match key {
        "l1_cache_latency_ns" => 1.2,
        "l2_cache_latency_ns" => 4.5,
        "main_mem_latency_ns" => 90.0,
        "random_mem_latency_ns" => 180.0,
        "fork_latency_us" => 150.0,
        "exec_latency_us" => 500.0,
        "shell_latency_us" => 1500.0,
        "ctx_switch_latency_us" => 3.0,
        "syscall_latency_us" => 0.1,
        "signal_handler_latency_us" => 1.2,
        "pipe_bw_mbps" => 2500.0,
        "unix_socket_bw_mbps" => 5000.0,
        "tcp_local_bw_mbps" => 3000.0,
        "mem_read_bw_mbps" => 7000.0,
        "mem_write_bw_mbps" => 6000.0,
        "bcopy_libc_bw_mbps" => 5000.0,
        "bcopy_unrolled_bw_mbps" => 4500.0,
        "int_add_latency_ns" => 0.4,
        "int_mul_latency_ns" => 1.2,
        "int_div_latency_ns" => 10.0,
        "int_mod_latency_ns" => 11.0,
        "float_add_latency_ns" => 1.5,
        "float_mul_latency_ns" => 1.6,
        "float_div_latency_ns" => 7.8,
        "double_add_latency_ns" => 1.6,
        "double_mul_latency_ns" => 1.7,
        "double_div_latency_ns" => 9.0,
        "file_create_0k_us" => 10.0,
        "file_delete_0k_us" => 6.0,
        "file_create_10k_us" => 25.0,
        "file_delete_10k_us" => 12.0,
        "mmap_latency_us" => 300.0,
        "file_read_bw_mbps" => 4000.0,
        "mmap_read_bw_mbps" => 8000.0,
        _ => 100.0,
    }
}

fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Maps a hash into [lo, hi).
fn unit_interval(hash: u64, lo: f64, hi: f64) -> f64 {
    lo + (hash >> 11) as f64 / (1u64 << 53) as f64 * (hi - lo)
}

/// Group factors for the instance types of the reference fleet; other types
/// get factors derived from their name.
pub fn type_factors(vm_type: &str) -> [f64; 4] {
    match vm_type {
        "cr1.8xlarge" => [1.35, 1.5, 1.3, 1.1],
        "cc2.8xlarge" => [1.3, 1.3, 1.35, 1.0],
        "m3.2xlarge" => [1.2, 1.15, 1.25, 0.95],
        "m3.xlarge" => [1.2, 1.1, 1.25, 0.9],
        "m2.4xlarge" => [1.0, 1.0, 1.05, 0.9],
        "m2.2xlarge" => [0.98, 0.95, 1.05, 0.85],
        "m2.xlarge" => [0.97, 0.9, 1.05, 0.8],
        "hi1.4xlarge" => [0.9, 0.95, 0.95, 1.6],
        "hs1.8xlarge" => [0.85, 0.9, 0.9, 1.3],
        "m1.xlarge" => [0.75, 0.7, 0.8, 0.8],
        other => {
            let mut f = [0.0; 4];
            for (g, slot) in f.iter_mut().enumerate() {
                let h = stable_hash(&[other.as_bytes(), &[g as u8]]);
                *slot = unit_interval(h, 0.7, 1.4);
            }
            f
        }
    }
}

/// Benchmark output for `vm` under `spec`, in the tool's line format.
pub fn simulated_execute(
    vm: &VmDescriptor,
    spec: &ContainerSpec,
    profile: &SimProfile,
) -> RawBenchmarkOutput {
    let factors = profile.factors.unwrap_or_else(|| type_factors(&vm.vm_type));
    let labels: HashMap<&str, &str> = default_aliases().into_iter().map(|(l, k)| (k, l)).collect();
    let noise = profile.noise_pct / 100.0;

    let mut lines = vec![
        "# simulated microbenchmark run".to_string(),
        format!("# host {} ({}), slice {}", vm.id, vm.vm_type, spec),
    ];
    for def in default_taxonomy().iter() {
        let key = def.key.as_str();
        let Some(label) = labels.get(key) else {
            continue;
        };
        let factor = factors[def.group.index()];
        let jitter = unit_interval(
            stable_hash(&[vm.vm_type.as_bytes(), key.as_bytes()]),
            0.95,
            1.05,
        );
        let seed = stable_hash(&[
            &profile.seed.to_le_bytes(),
            vm.id.as_bytes(),
            key.as_bytes(),
            &spec.memory_mib.to_le_bytes(),
            spec.cpu_mode.as_str().as_bytes(),
        ]);
        let eps = if noise > 0.0 {
            ChaCha8Rng::seed_from_u64(seed).random_range(-noise..=noise)
        } else {
            0.0
        };
        let base = base_value(key) * jitter;
        let value = match def.polarity {
            Polarity::HigherBetter => base * factor,
            Polarity::LowerBetter => base / factor,
        } * (1.0 + eps);
        lines.push(format!("{label}: {value} {}", def.unit));
    }
    RawBenchmarkOutput {
        vm_id: vm.id.clone(),
        container: spec.clone(),
        lines,
    }
}

struct SimContainer {
    spec: ContainerSpec,
    started: bool,
}

/// Engine whose containers produce [`simulated_execute`] output.
pub struct SimulatedEngine {
    vm: VmDescriptor,
    profile: SimProfile,
    containers: Mutex<HashMap<String, SimContainer>>,
    next_id: Mutex<u64>,
}

impl SimulatedEngine {
    pub fn new(vm: VmDescriptor, profile: SimProfile) -> Self {
        Self {
            vm,
            profile,
            containers: Mutex::new(HashMap::new()),
            next_id: Mutex::new(0),
        }
    }

    pub fn live_containers(&self) -> usize {
        self.containers.lock().len()
    }

    fn not_found(id: &str) -> EngineError {
        EngineError::Api {
            status: 404,
            message: format!("no such container: {id}"),
        }
    }
}

fn spec_from_request(req: &CreateRequest) -> Result<ContainerSpec, EngineError> {
    let memory_mib = req
        .labels
        .get(LABEL_MEMORY_MIB)
        .and_then(|v| v.parse().ok())
        .unwrap_or(req.memory_bytes >> 20);
    let cpu_mode = match req.labels.get(LABEL_CPU_MODE) {
        Some(v) => v
            .parse()
            .map_err(|e| EngineError::Protocol(format!("{e}")))?,
        None if req.cpuset_cpus == "0" => CpuMode::SingleCore,
        None => CpuMode::AllCores,
    };
    ContainerSpec::new(memory_mib, cpu_mode).map_err(|e| EngineError::Api {
        status: 400,
        message: e.to_string(),
    })
}

#[async_trait]
impl ContainerEngine for SimulatedEngine {
    async fn create(&self, req: &CreateRequest) -> Result<String, EngineError> {
        let spec = spec_from_request(req)?;
        let id = {
            let mut n = self.next_id.lock();
            *n += 1;
            format!("sim-{}-{}", self.vm.id, *n)
        };
        self.containers.lock().insert(
            id.clone(),
            SimContainer {
                spec,
                started: false,
            },
        );
        Ok(id)
    }

    async fn start(&self, id: &str) -> Result<(), EngineError> {
        let mut containers = self.containers.lock();
        let c = containers.get_mut(id).ok_or_else(|| Self::not_found(id))?;
        c.started = true;
        Ok(())
    }

    async fn wait(&self, id: &str) -> Result<i64, EngineError> {
        if !self.containers.lock().get(id).is_some_and(|c| c.started) {
            return Err(Self::not_found(id));
        }
        tokio::time::sleep(Duration::from_millis(self.profile.run_ms)).await;
        Ok(0)
    }

    async fn logs(&self, id: &str) -> Result<Vec<String>, EngineError> {
        let spec = self
            .containers
            .lock()
            .get(id)
            .map(|c| c.spec.clone())
            .ok_or_else(|| Self::not_found(id))?;
        Ok(simulated_execute(&self.vm, &spec, &self.profile).lines)
    }

    async fn remove(&self, id: &str) -> Result<(), EngineError> {
        self.containers
            .lock()
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| Self::not_found(id))
    }
}
