//! Dataset and run-record persistence.
//!
//! On-disk layout of [`FileStore`]:
//!
//! ```text
//! <root>/index.json            [{dataset_id, role, container, stored_at, checksum}, ...]
//! <root>/datasets/<id>.jsonl   canonical measurement records
//! <root>/runs/<run_id>.json    latest RunRecord snapshot
//! ```
//!
//! `checksum` is the hex SHA-256 of the payload file. Datasets are append-only;
//! run records are overwritten as a campaign progresses.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{canonical_string, read_canonical_str};
use crate::model::{BenchmarkDataset, ContainerSpec, DatasetId, DatasetRole, RunId, RunRecord};
use crate::ranking::age_days;

/// Default staleness limit for historic data.
pub const DEFAULT_MAX_AGE_DAYS: u32 = 30;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("dataset `{0}` not found")]
    NotFound(DatasetId),
    #[error("run `{0}` not found")]
    RunNotFound(RunId),
    #[error("dataset `{0}` already stored")]
    AlreadyExists(DatasetId),
    #[error("stored dataset `{id}` is corrupt: {reason}")]
    StorageCorrupt { id: String, reason: String },
    #[error("no eligible historic dataset: {0}")]
    NoEligibleHistoric(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("store I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub dataset_id: DatasetId,
    pub role: DatasetRole,
    pub container: ContainerSpec,
    pub stored_at: DateTime<Utc>,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredDataset {
    pub dataset: BenchmarkDataset,
    pub stored_at: DateTime<Utc>,
    pub checksum: String,
}

/// Persistence contract shared by the CLI, the orchestrator and the API.
pub trait Repository: Send + Sync {
    /// Stores `dataset` stamped with `stored_at`.
    fn put_dataset_at(
        &self,
        dataset: &BenchmarkDataset,
        stored_at: DateTime<Utc>,
    ) -> Result<DatasetId, StoreError>;

    fn get_dataset(&self, id: &DatasetId) -> Result<StoredDataset, StoreError>;

    /// Index entries ordered by `stored_at`, then id.
    fn list_datasets(&self) -> Result<Vec<IndexEntry>, StoreError>;

    fn put_run(&self, record: &RunRecord) -> Result<(), StoreError>;

    fn get_run(&self, id: &RunId) -> Result<RunRecord, StoreError>;

    fn list_runs(&self) -> Result<Vec<RunRecord>, StoreError>;

    fn put_dataset(&self, dataset: &BenchmarkDataset) -> Result<DatasetId, StoreError> {
        self.put_dataset_at(dataset, Utc::now())
    }

    /// Newest dataset for the same container slice, no older than
    /// `max_age_days`, whose VMs cover `vm_set` completely. Newer wins; equal
    /// timestamps fall back to the smaller dataset id. `exclude` skips the
    /// dataset currently being ranked.
    fn latest_historic(
        &self,
        vm_set: &BTreeSet<String>,
        container: &ContainerSpec,
        max_age_days: u32,
        now: DateTime<Utc>,
        exclude: Option<&DatasetId>,
    ) -> Result<StoredDataset, StoreError> {
        if max_age_days == 0 {
            return Err(StoreError::InvalidQuery("max_age_days must be > 0".into()));
        }
        let mut candidates: Vec<IndexEntry> = self
            .list_datasets()?
            .into_iter()
            .filter(|e| Some(&e.dataset_id) != exclude)
            .filter(|e| e.container.same_slice(container))
            .filter(|e| age_days(e.stored_at, now) <= max_age_days as f64)
            .collect();
        candidates.sort_by(|a, b| {
            b.stored_at
                .cmp(&a.stored_at)
                .then_with(|| a.dataset_id.cmp(&b.dataset_id))
        });
        let considered = candidates.len();
        for entry in candidates {
            let stored = self.get_dataset(&entry.dataset_id)?;
            let covered = vm_set.is_subset(&stored.dataset.vm_ids())
                && stored.dataset.restricted_to(vm_set).is_complete();
            if covered {
                return Ok(stored);
            }
        }
        Err(StoreError::NoEligibleHistoric(format!(
            "{considered} dataset(s) for {container} within {max_age_days} days, none covering all {} VMs",
            vm_set.len()
        )))
    }
}

/// Directory-backed [`Repository`]. One writer at a time; readers only see
/// files that were fully written and renamed into place.
#[derive(Debug)]
pub struct FileStore {
    root: PathBuf,
    writer: Mutex<()>,
}

fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Ids become file names, so only a conservative character set is allowed.
fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", uuid::Uuid::new_v4().simple()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("datasets"))?;
        fs::create_dir_all(root.join("runs"))?;
        Ok(Self {
            root,
            writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn payload_path(&self, id: &DatasetId) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.jsonl"))
    }

    fn run_path(&self, id: &RunId) -> PathBuf {
        self.root.join("runs").join(format!("{id}.json"))
    }

    fn read_index(&self) -> Result<Vec<IndexEntry>, StoreError> {
        match fs::read(self.index_path()) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::StorageCorrupt {
                id: "index".into(),
                reason: e.to_string(),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }
}

impl Repository for FileStore {
    fn put_dataset_at(
        &self,
        dataset: &BenchmarkDataset,
        stored_at: DateTime<Utc>,
    ) -> Result<DatasetId, StoreError> {
        if !is_safe_id(dataset.id.as_str()) {
            return Err(StoreError::InvalidQuery(format!(
                "dataset id `{}` contains unsupported characters",
                dataset.id
            )));
        }
        let _guard = self.writer.lock();
        let mut index = self.read_index()?;
        if index.iter().any(|e| e.dataset_id == dataset.id) {
            return Err(StoreError::AlreadyExists(dataset.id.clone()));
        }
        let payload = canonical_string(dataset);
        write_atomic(&self.payload_path(&dataset.id), payload.as_bytes())?;
        index.push(IndexEntry {
            dataset_id: dataset.id.clone(),
            role: dataset.role,
            container: dataset.container.clone(),
            stored_at,
            checksum: checksum(payload.as_bytes()),
        });
        let bytes = serde_json::to_vec_pretty(&index).expect("index serializes");
        write_atomic(&self.index_path(), &bytes)?;
        Ok(dataset.id.clone())
    }

    fn get_dataset(&self, id: &DatasetId) -> Result<StoredDataset, StoreError> {
        let entry = self
            .read_index()?
            .into_iter()
            .find(|e| &e.dataset_id == id)
            .ok_or_else(|| StoreError::NotFound(id.clone()))?;
        let corrupt = |reason: String| StoreError::StorageCorrupt {
            id: id.to_string(),
            reason,
        };
        let bytes = match fs::read(self.payload_path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(corrupt("payload file missing".into()))
            }
            Err(e) => return Err(e.into()),
        };
        let actual = checksum(&bytes);
        if actual != entry.checksum {
            return Err(corrupt(format!(
                "checksum mismatch (index {}, payload {actual})",
                entry.checksum
            )));
        }
        let text = String::from_utf8(bytes).map_err(|e| corrupt(e.to_string()))?;
        let parsed = read_canonical_str(&text).map_err(|e| corrupt(e.to_string()))?;
        let mut dataset = BenchmarkDataset::new(entry.dataset_id, entry.role, entry.container);
        for m in parsed.measurements() {
            let mut m = m.clone();
            m.container = dataset.container.clone();
            dataset.insert(m).map_err(|e| corrupt(e.to_string()))?;
        }
        Ok(StoredDataset {
            dataset,
            stored_at: entry.stored_at,
            checksum: entry.checksum,
        })
    }

    fn list_datasets(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let mut index = self.read_index()?;
        index.sort_by(|a, b| {
            a.stored_at
                .cmp(&b.stored_at)
                .then_with(|| a.dataset_id.cmp(&b.dataset_id))
        });
        Ok(index)
    }

    fn put_run(&self, record: &RunRecord) -> Result<(), StoreError> {
        if !is_safe_id(record.run_id.as_str()) {
            return Err(StoreError::InvalidQuery(format!(
                "run id `{}` contains unsupported characters",
                record.run_id
            )));
        }
        let _guard = self.writer.lock();
        let bytes = serde_json::to_vec_pretty(record).expect("run record serializes");
        write_atomic(&self.run_path(&record.run_id), &bytes)?;
        Ok(())
    }

    fn get_run(&self, id: &RunId) -> Result<RunRecord, StoreError> {
        if !is_safe_id(id.as_str()) {
            return Err(StoreError::RunNotFound(id.clone()));
        }
        match fs::read(self.run_path(id)) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| StoreError::StorageCorrupt {
                id: id.to_string(),
                reason: e.to_string(),
            }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Err(StoreError::RunNotFound(id.clone()))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn list_runs(&self) -> Result<Vec<RunRecord>, StoreError> {
        let mut runs = Vec::new();
        for entry in fs::read_dir(self.root.join("runs"))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bytes = fs::read(&path)?;
            if let Ok(run) = serde_json::from_slice::<RunRecord>(&bytes) {
                runs.push(run);
            }
        }
        runs.sort_by(|a, b| {
            a.started_at
                .cmp(&b.started_at)
                .then_with(|| a.run_id.cmp(&b.run_id))
        });
        Ok(runs)
    }
}
