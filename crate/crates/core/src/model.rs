//! Domain types shared by every other module: VM descriptors, container
//! slices, the attribute taxonomy, datasets, weights, rank tables and run
//! records.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest memory cap a container engine will accept.
pub const MIN_MEMORY_MIB: u64 = 4;
/// Upper bound for every group weight.
pub const MAX_WEIGHT: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid VM descriptor `{id}`: {reason}")]
    InvalidVm { id: String, reason: String },
    #[error("container memory must be at least {MIN_MEMORY_MIB} MiB, got {0}")]
    MemoryTooSmall(u64),
    #[error("weight {index} = {value} is outside [0, 5]")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("expected four comma-separated weights, got `{0}`")]
    WeightFormat(String),
    #[error("duplicate measurement for vm `{vm_id}` attribute `{attribute}`")]
    DuplicateMeasurement { vm_id: String, attribute: String },
    #[error("measurement container {found} differs from dataset container {expected}")]
    ContainerMismatch {
        expected: ContainerSpec,
        found: ContainerSpec,
    },
    #[error("non-finite value for vm `{vm_id}` attribute `{attribute}`")]
    NonFinite { vm_id: String, attribute: String },
    #[error("unknown {kind} `{value}`")]
    UnknownLabel { kind: &'static str, value: String },
    #[error("illegal status transition for host `{host}`: {from} -> {to}")]
    IllegalTransition {
        host: String,
        from: String,
        to: String,
    },
    #[error("unknown host `{0}` in run")]
    UnknownHost(String),
    #[error("taxonomy config: {0}")]
    TaxonomyConfig(String),
}

macro_rules! string_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn generate() -> Self {
                Self(format!(
                    concat!($prefix, "-{}"),
                    uuid::Uuid::new_v4().simple()
                ))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

string_id!(DatasetId, "ds");
string_id!(RunId, "run");

/// One VM (host) of the fleet being benchmarked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmDescriptor {
    pub id: String,
    pub vm_type: String,
    pub vcpus: u32,
    pub memory_gib: f64,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl VmDescriptor {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidVm {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(bad("empty id"));
        }
        if self.vcpus == 0 {
            return Err(bad("vcpus must be >= 1"));
        }
        if !(self.memory_gib.is_finite() && self.memory_gib > 0.0) {
            return Err(bad("memory_gib must be > 0"));
        }
        Ok(())
    }
}

/// Checks descriptor invariants and id uniqueness across an inventory.
pub fn validate_fleet(fleet: &[VmDescriptor]) -> Result<(), ModelError> {
    let mut seen = HashSet::new();
    for vm in fleet {
        vm.validate()?;
        if !seen.insert(vm.id.as_str()) {
            return Err(ModelError::InvalidVm {
                id: vm.id.clone(),
                reason: "duplicate id in inventory".into(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpuMode {
    SingleCore,
    AllCores,
}

impl CpuMode {
    /// CPU-set string handed to the container engine for a host with `vcpus`
    /// logical CPUs.
    pub fn cpuset(self, vcpus: u32) -> String {
        match self {
            CpuMode::SingleCore => "0".to_string(),
            CpuMode::AllCores if vcpus <= 1 => "0".to_string(),
            CpuMode::AllCores => format!("0-{}", vcpus - 1),
        }
    }

    /// Application execution mode this CPU cap is compared against.
    pub fn execution_mode(self) -> ExecutionMode {
        match self {
            CpuMode::SingleCore => ExecutionMode::Sequential,
            CpuMode::AllCores => ExecutionMode::Parallel,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CpuMode::SingleCore => "single-core",
            CpuMode::AllCores => "all-cores",
        }
    }
}

impl FromStr for CpuMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single-core" | "single" | "1" => Ok(CpuMode::SingleCore),
            "all-cores" | "all" => Ok(CpuMode::AllCores),
            _ => Err(ModelError::UnknownLabel {
                kind: "cpu mode",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for CpuMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The resource slice benchmarked on each host.
///
/// Two specs describe the same slice when memory and CPU mode agree; the
/// image reference is provenance only and is not part of the canonical
/// record format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerSpec {
    pub memory_mib: u64,
    pub cpu_mode: CpuMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl ContainerSpec {
    pub fn new(memory_mib: u64, cpu_mode: CpuMode) -> Result<Self, ModelError> {
        if memory_mib < MIN_MEMORY_MIB {
            return Err(ModelError::MemoryTooSmall(memory_mib));
        }
        Ok(Self {
            memory_mib,
            cpu_mode,
            image_ref: None,
        })
    }

    pub fn with_image(mut self, image: impl Into<String>) -> Self {
        self.image_ref = Some(image.into());
        self
    }

    /// Memory cap in bytes (MiB = 2^20 bytes).
    pub fn memory_bytes(&self) -> u64 {
        self.memory_mib << 20
    }

    pub fn same_slice(&self, other: &ContainerSpec) -> bool {
        self.memory_mib == other.memory_mib && self.cpu_mode == other.cpu_mode
    }
}

impl fmt::Display for ContainerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} MiB/{}", self.memory_mib, self.cpu_mode)
    }
}

/// The four attribute groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "G1", alias = "memory-process")]
    MemoryProcess,
    #[serde(rename = "G2", alias = "local-communication")]
    LocalCommunication,
    #[serde(rename = "G3", alias = "computation")]
    Computation,
    #[serde(rename = "G4", alias = "storage")]
    Storage,
}

impl Group {
    pub const ALL: [Group; 4] = [
        Group::MemoryProcess,
        Group::LocalCommunication,
        Group::Computation,
        Group::Storage,
    ];

    /// Zero-based position, matching the weight vector order.
    pub fn index(self) -> usize {
        match self {
            Group::MemoryProcess => 0,
            Group::LocalCommunication => 1,
            Group::Computation => 2,
            Group::Storage => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::MemoryProcess => "G1",
            Group::LocalCommunication => "G2",
            Group::Computation => "G3",
            Group::Storage => "G4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub key: String,
    pub group: Group,
    pub polarity: Polarity,
    pub unit: String,
}

impl AttributeDef {
    fn new(key: &str, group: Group, polarity: Polarity, unit: &str) -> Self {
        Self {
            key: key.to_string(),
            group,
            polarity,
            unit: unit.to_string(),
        }
    }
}

/// Attribute key → group, polarity and unit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Taxonomy {
    attributes: BTreeMap<String, AttributeDef>,
}

#[derive(Deserialize)]
struct TaxonomyFile {
    #[serde(default)]
    attributes: BTreeMap<String, TaxonomyEntry>,
}

#[derive(Deserialize)]
struct TaxonomyEntry {
    group: Group,
    polarity: Polarity,
    unit: String,
}

impl Taxonomy {
    pub fn from_defs(defs: impl IntoIterator<Item = AttributeDef>) -> Self {
        Self {
            attributes: defs.into_iter().map(|d| (d.key.clone(), d)).collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&AttributeDef> {
        self.attributes.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.attributes.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttributeDef> {
        self.attributes.values()
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn insert(&mut self, def: AttributeDef) {
        self.attributes.insert(def.key.clone(), def);
    }

    /// Applies a TOML override of the form
    ///
    /// ```toml
    /// [attributes.main_mem_latency_ns]
    /// group = "G1"
    /// polarity = "lower-better"
    /// unit = "ns"
    /// ```
    ///
    /// Entries replace or extend the current mapping.
    pub fn apply_overrides(&mut self, toml_text: &str) -> Result<(), ModelError> {
        let file: TaxonomyFile =
            toml::from_str(toml_text).map_err(|e| ModelError::TaxonomyConfig(e.to_string()))?;
        for (key, entry) in file.attributes {
            self.insert(AttributeDef {
                key,
                group: entry.group,
                polarity: entry.polarity,
                unit: entry.unit,
            });
        }
        Ok(())
    }
}

/// The shipped attribute mapping for lmbench-style microbenchmarks.
///
/// Latencies are lower-better, bandwidths higher-better.
pub fn default_taxonomy() -> Taxonomy {
    use Group::*;
    use Polarity::*;
    let defs = [
        // memory and process
        ("l1_cache_latency_ns", MemoryProcess, LowerBetter, "ns"),
        ("l2_cache_latency_ns", MemoryProcess, LowerBetter, "ns"),
        ("main_mem_latency_ns", MemoryProcess, LowerBetter, "ns"),
        ("random_mem_latency_ns", MemoryProcess, LowerBetter, "ns"),
        ("fork_latency_us", MemoryProcess, LowerBetter, "us"),
        ("exec_latency_us", MemoryProcess, LowerBetter, "us"),
        ("shell_latency_us", MemoryProcess, LowerBetter, "us"),
        ("ctx_switch_latency_us", MemoryProcess, LowerBetter, "us"),
        ("syscall_latency_us", MemoryProcess, LowerBetter, "us"),
        (
            "signal_handler_latency_us",
            MemoryProcess,
            LowerBetter,
            "us",
        ),
        // local communication
        ("pipe_bw_mbps", LocalCommunication, HigherBetter, "MB/s"),
        (
            "unix_socket_bw_mbps",
            LocalCommunication,
            HigherBetter,
            "MB/s",
        ),
        (
            "tcp_local_bw_mbps",
            LocalCommunication,
            HigherBetter,
            "MB/s",
        ),
        ("mem_read_bw_mbps", LocalCommunication, HigherBetter, "MB/s"),
        (
            "mem_write_bw_mbps",
            LocalCommunication,
            HigherBetter,
            "MB/s",
        ),
        (
            "bcopy_libc_bw_mbps",
            LocalCommunication,
            HigherBetter,
            "MB/s",
        ),
        (
            "bcopy_unrolled_bw_mbps",
            LocalCommunication,
            HigherBetter,
            "MB/s",
        ),
        // computation
        ("int_add_latency_ns", Computation, LowerBetter, "ns"),
        ("int_mul_latency_ns", Computation, LowerBetter, "ns"),
        ("int_div_latency_ns", Computation, LowerBetter, "ns"),
        ("int_mod_latency_ns", Computation, LowerBetter, "ns"),
        ("float_add_latency_ns", Computation, LowerBetter, "ns"),
        ("float_mul_latency_ns", Computation, LowerBetter, "ns"),
        ("float_div_latency_ns", Computation, LowerBetter, "ns"),
        ("double_add_latency_ns", Computation, LowerBetter, "ns"),
        ("double_mul_latency_ns", Computation, LowerBetter, "ns"),
        ("double_div_latency_ns", Computation, LowerBetter, "ns"),
        // storage
        ("file_create_0k_us", Storage, LowerBetter, "us"),
        ("file_delete_0k_us", Storage, LowerBetter, "us"),
        ("file_create_10k_us", Storage, LowerBetter, "us"),
        ("file_delete_10k_us", Storage, LowerBetter, "us"),
        ("mmap_latency_us", Storage, LowerBetter, "us"),
        ("file_read_bw_mbps", Storage, HigherBetter, "MB/s"),
        ("mmap_read_bw_mbps", Storage, HigherBetter, "MB/s"),
    ];
    Taxonomy::from_defs(
        defs.iter()
            .map(|&(key, group, polarity, unit)| AttributeDef::new(key, group, polarity, unit)),
    )
}

/// One benchmarked value for one VM under one container slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMeasurement {
    pub vm_id: String,
    pub attribute_key: String,
    pub value: f64,
    pub unit: String,
    pub container: ContainerSpec,
    pub captured_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetRole {
    Current,
    Historic,
}

impl DatasetRole {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetRole::Current => "current",
            DatasetRole::Historic => "historic",
        }
    }
}

impl fmt::Display for DatasetRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetRole {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "current" => Ok(DatasetRole::Current),
            "historic" => Ok(DatasetRole::Historic),
            _ => Err(ModelError::UnknownLabel {
                kind: "dataset role",
                value: s.to_string(),
            }),
        }
    }
}

/// The m VMs × n attributes measurement matrix for one container slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkDataset {
    pub id: DatasetId,
    pub role: DatasetRole,
    pub container: ContainerSpec,
    measurements: Vec<AttributeMeasurement>,
}

impl BenchmarkDataset {
    pub fn new(id: DatasetId, role: DatasetRole, container: ContainerSpec) -> Self {
        Self {
            id,
            role,
            container,
            measurements: Vec::new(),
        }
    }

    /// Adds a measurement, rejecting duplicates, foreign container slices and
    /// non-finite values.
    pub fn insert(&mut self, m: AttributeMeasurement) -> Result<(), ModelError> {
        if !m.value.is_finite() {
            return Err(ModelError::NonFinite {
                vm_id: m.vm_id,
                attribute: m.attribute_key,
            });
        }
        if !m.container.same_slice(&self.container) {
            return Err(ModelError::ContainerMismatch {
                expected: self.container.clone(),
                found: m.container,
            });
        }
        if self.get(&m.vm_id, &m.attribute_key).is_some() {
            return Err(ModelError::DuplicateMeasurement {
                vm_id: m.vm_id,
                attribute: m.attribute_key,
            });
        }
        self.measurements.push(m);
        Ok(())
    }

    pub fn measurements(&self) -> &[AttributeMeasurement] {
        &self.measurements
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn get(&self, vm_id: &str, attribute: &str) -> Option<&AttributeMeasurement> {
        self.measurements
            .iter()
            .find(|m| m.vm_id == vm_id && m.attribute_key == attribute)
    }

    pub fn vm_ids(&self) -> BTreeSet<String> {
        self.measurements.iter().map(|m| m.vm_id.clone()).collect()
    }

    pub fn attribute_keys(&self) -> BTreeSet<String> {
        self.measurements
            .iter()
            .map(|m| m.attribute_key.clone())
            .collect()
    }

    /// True iff non-empty, duplicate-free, and every VM has every attribute.
    pub fn is_complete(&self) -> bool {
        let m = self.vm_ids().len();
        let n = self.attribute_keys().len();
        let distinct: HashSet<(&str, &str)> = self
            .measurements
            .iter()
            .map(|x| (x.vm_id.as_str(), x.attribute_key.as_str()))
            .collect();
        !self.measurements.is_empty()
            && distinct.len() == self.measurements.len()
            && self.measurements.len() == m * n
    }

    /// Copy keeping only the VMs in `vm_ids`.
    pub fn restricted_to(&self, vm_ids: &BTreeSet<String>) -> BenchmarkDataset {
        BenchmarkDataset {
            id: self.id.clone(),
            role: self.role,
            container: self.container.clone(),
            measurements: self
                .measurements
                .iter()
                .filter(|m| vm_ids.contains(&m.vm_id))
                .cloned()
                .collect(),
        }
    }

    /// Measurements sorted by (vm, attribute); convenient for comparisons.
    pub fn sorted_values(&self) -> Vec<(String, String, f64)> {
        let mut v: Vec<_> = self
            .measurements
            .iter()
            .map(|m| (m.vm_id.clone(), m.attribute_key.clone(), m.value))
            .collect();
        v.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        v
    }
}

/// Result of [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub complete: bool,
    pub vm_count: usize,
    pub attribute_count: usize,
    pub missing: Vec<(String, String)>,
    pub duplicates: Vec<(String, String)>,
    pub unknown_keys: Vec<String>,
}

/// Reports gaps, duplicates and unknown keys.
///
/// The expected VM set is the union of the fleet and the VMs present in the
/// dataset; the expected attribute set is every key seen in the dataset.
/// Unknown keys are warnings and do not affect `complete`.
pub fn validate_dataset(
    dataset: &BenchmarkDataset,
    fleet: &[VmDescriptor],
    taxonomy: &Taxonomy,
) -> CompletenessReport {
    let mut vms = dataset.vm_ids();
    vms.extend(fleet.iter().map(|v| v.id.clone()));
    let attrs = dataset.attribute_keys();

    let mut seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for m in dataset.measurements() {
        *seen
            .entry((m.vm_id.as_str(), m.attribute_key.as_str()))
            .or_default() += 1;
    }
    let duplicates: Vec<_> = seen
        .iter()
        .filter(|(_, &c)| c > 1)
        .map(|((v, a), _)| (v.to_string(), a.to_string()))
        .collect();

    let mut missing = Vec::new();
    for vm in &vms {
        for attr in &attrs {
            if !seen.contains_key(&(vm.as_str(), attr.as_str())) {
                missing.push((vm.clone(), attr.clone()));
            }
        }
    }
    let unknown_keys: Vec<_> = attrs
        .iter()
        .filter(|k| !taxonomy.contains(k))
        .cloned()
        .collect();

    CompletenessReport {
        complete: !dataset.is_empty() && missing.is_empty() && duplicates.is_empty(),
        vm_count: vms.len(),
        attribute_count: attrs.len(),
        missing,
        duplicates,
        unknown_keys,
    }
}

/// User-supplied importance of G1..G4, each in [0, 5].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct WeightVector([f64; 4]);

impl WeightVector {
    pub fn new(weights: [f64; 4]) -> Result<Self, ModelError> {
        for (index, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && (0.0..=MAX_WEIGHT).contains(&value)) {
                return Err(ModelError::WeightOutOfRange { index, value });
            }
        }
        Ok(Self(weights))
    }

    pub fn get(&self, group: Group) -> f64 {
        self.0[group.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }
}

impl TryFrom<[f64; 4]> for WeightVector {
    type Error = ModelError;

    fn try_from(value: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<WeightVector> for [f64; 4] {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl FromStr for WeightVector {
    type Err = ModelError;

    /// Parses `w1,w2,w3,w4` in G1..G4 order.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(ModelError::WeightFormat(s.to_string()));
        }
        let mut w = [0.0; 4];
        for (slot, part) in w.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| ModelError::WeightFormat(s.to_string()))?;
        }
        Self::new(w)
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a},{b},{c},{d}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutionMode {
    Sequential,
    Parallel,
}

impl ExecutionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecutionMode::Sequential => "sequential",
            ExecutionMode::Parallel => "parallel",
        }
    }
}

impl FromStr for ExecutionMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Ok(ExecutionMode::Sequential),
            "parallel" | "par" => Ok(ExecutionMode::Parallel),
            _ => Err(ModelError::UnknownLabel {
                kind: "execution mode",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for ExecutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankMode {
    Lightweight,
    Hybrid,
    Empirical,
}

impl RankMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RankMode::Lightweight => "lightweight",
            RankMode::Hybrid => "hybrid",
            RankMode::Empirical => "empirical",
        }
    }
}

impl FromStr for RankMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lightweight" => Ok(RankMode::Lightweight),
            "hybrid" => Ok(RankMode::Hybrid),
            "empirical" => Ok(RankMode::Empirical),
            _ => Err(ModelError::UnknownLabel {
                kind: "rank mode",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub vm_id: String,
    /// Score for benchmark tables, wall time for empirical ones. Absent when
    /// only published ranks are known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub rank: u32,
}

/// Scores and competition ranks plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub mode: RankMode,
    pub entries: Vec<RankEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightVector>,
    #[serde(default)]
    pub dataset_ids: Vec<DatasetId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<ContainerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub application: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_mode: Option<ExecutionMode>,
}

impl RankTable {
    pub fn new(mode: RankMode, entries: Vec<RankEntry>) -> Self {
        Self {
            mode,
            entries,
            weights: None,
            dataset_ids: Vec::new(),
            container: None,
            application: None,
            execution_mode: None,
        }
    }

    pub fn rank_of(&self, vm_id: &str) -> Option<u32> {
        self.entries
            .iter()
            .find(|e| e.vm_id == vm_id)
            .map(|e| e.rank)
    }

    pub fn vm_ids(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.vm_id.clone()).collect()
    }

    /// Execution mode this table should be compared against: explicit for
    /// empirical tables, derived from the CPU cap for benchmark tables.
    pub fn effective_execution_mode(&self) -> Option<ExecutionMode> {
        self.execution_mode
            .or_else(|| self.container.as_ref().map(|c| c.cpu_mode.execution_mode()))
    }
}

/// Lifecycle of one host within a benchmarking run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "kebab-case")]
pub enum HostStatus {
    Pending,
    Provisioning,
    Benchmarking,
    Collecting,
    Done,
    Failed(String),
}

impl HostStatus {
    fn order(&self) -> u8 {
        match self {
            HostStatus::Pending => 0,
            HostStatus::Provisioning => 1,
            HostStatus::Benchmarking => 2,
            HostStatus::Collecting => 3,
            HostStatus::Done | HostStatus::Failed(_) => 4,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, HostStatus::Done | HostStatus::Failed(_))
    }

    /// Forward moves along the lifecycle; `Failed` from any non-terminal state.
    pub fn can_transition_to(&self, next: &HostStatus) -> bool {
        if self.is_terminal() {
            return false;
        }
        match next {
            HostStatus::Failed(_) => true,
            _ => next.order() > self.order(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HostStatus::Pending => "pending",
            HostStatus::Provisioning => "provisioning",
            HostStatus::Benchmarking => "benchmarking",
            HostStatus::Collecting => "collecting",
            HostStatus::Done => "done",
            HostStatus::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostRun {
    pub host_id: String,
    pub vm_type: String,
    pub status: HostStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
    /// Wall clock from container creation to cleanup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_secs: Option<f64>,
    /// Wall clock of the benchmark process alone (start to exit).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark_secs: Option<f64>,
}

/// State of one benchmarking campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: RunId,
    pub container: ContainerSpec,
    pub hosts: Vec<HostRun>,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<DatasetId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completeness: Option<CompletenessReport>,
}

impl RunRecord {
    pub fn new(run_id: RunId, container: ContainerSpec, fleet: &[VmDescriptor]) -> Self {
        Self {
            run_id,
            container,
            hosts: fleet
                .iter()
                .map(|vm| HostRun {
                    host_id: vm.id.clone(),
                    vm_type: vm.vm_type.clone(),
                    status: HostStatus::Pending,
                    started_at: None,
                    finished_at: None,
                    duration_secs: None,
                    benchmark_secs: None,
                })
                .collect(),
            started_at: Utc::now(),
            finished_at: None,
            dataset_id: None,
            completeness: None,
        }
    }

    pub fn host(&self, host_id: &str) -> Option<&HostRun> {
        self.hosts.iter().find(|h| h.host_id == host_id)
    }

    pub fn host_mut(&mut self, host_id: &str) -> Result<&mut HostRun, ModelError> {
        self.hosts
            .iter_mut()
            .find(|h| h.host_id == host_id)
            .ok_or_else(|| ModelError::UnknownHost(host_id.to_string()))
    }

    /// Moves a host to `next`, refusing backward transitions.
    pub fn transition(&mut self, host_id: &str, next: HostStatus) -> Result<(), ModelError> {
        let host = self.host_mut(host_id)?;
        if !host.status.can_transition_to(&next) {
            return Err(ModelError::IllegalTransition {
                host: host_id.to_string(),
                from: host.status.name().to_string(),
                to: next.name().to_string(),
            });
        }
        host.status = next;
        Ok(())
    }

    pub fn is_terminal(&self) -> bool {
        self.hosts.iter().all(|h| h.status.is_terminal())
    }

    pub fn failed_hosts(&self) -> Vec<(&str, &str)> {
        self.hosts
            .iter()
            .filter_map(|h| match &h.status {
                HostStatus::Failed(reason) => Some((h.host_id.as_str(), reason.as_str())),
                _ => None,
            })
            .collect()
    }

    /// Total campaign wall clock, once finished.
    pub fn total_secs(&self) -> Option<f64> {
        self.finished_at
            .map(|end| (end - self.started_at).num_microseconds().unwrap_or(0) as f64 / 1e6)
    }
}
