#![allow(dead_code)]

pub mod oracle;
pub mod props;

use std::path::PathBuf;

use chrono::{TimeZone, Utc};
use vmrank_core::{AttributeMeasurement, BenchmarkDataset, ContainerSpec, CpuMode, DatasetRole};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn vm_name(i: usize) -> String {
    format!("vm-{i:02}")
}

pub fn slice() -> ContainerSpec {
    ContainerSpec::new(100, CpuMode::SingleCore).unwrap()
}

/// `rows[vm][attr]` for attributes `keys`; VM ids are `vm-00`, `vm-01`, …
pub fn dataset(id: &str, keys: &[&str], rows: &[Vec<f64>]) -> BenchmarkDataset {
    let spec = slice();
    let at = Utc.with_ymd_and_hms(2015, 6, 1, 0, 0, 0).unwrap();
    let mut ds = BenchmarkDataset::new(id.into(), DatasetRole::Current, spec.clone());
    for (i, row) in rows.iter().enumerate() {
        for (key, &value) in keys.iter().zip(row) {
            ds.insert(AttributeMeasurement {
                vm_id: vm_name(i),
                attribute_key: key.to_string(),
                value,
                unit: String::new(),
                container: spec.clone(),
                captured_at: at,
            })
            .unwrap();
        }
    }
    ds
}
