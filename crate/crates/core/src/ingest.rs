//! Turning benchmark container output and canonical record files into
//! measurements.
//!
//! Tool output follows a simple line grammar:
//!
//! ```text
//! <attribute label>: <number> [<unit>]
//! ```
//!
//! Labels are mapped to canonical attribute keys through an alias table.
//! Blank lines and `#` comments are skipped silently; any other line that
//! does not resolve to an attribute becomes a warning.
//!
//! Canonical records are JSON lines:
//!
//! ```text
//! {"vm_id":"vm-1","attribute":"float_div_latency_ns","value":7.82,"unit":"ns","memory_mib":100,"cpu_mode":"single-core","captured_at":"2015-06-01T10:00:00Z"}
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AttributeMeasurement, BenchmarkDataset, ContainerSpec, CpuMode, DatasetId, DatasetRole,
    Taxonomy, MIN_MEMORY_MIB,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("benchmark output is empty")]
    EmptyOutput,
    #[error("line {line}: `{label}` has a non-numeric value `{payload}`")]
    MalformedNumber {
        line: usize,
        label: String,
        payload: String,
    },
    #[error("line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("alias config: {0}")]
    AliasConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Captured stdout of one benchmark container.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBenchmarkOutput {
    pub vm_id: String,
    pub container: ContainerSpec,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseWarning {
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub measurements: Vec<AttributeMeasurement>,
    pub warnings: Vec<ParseWarning>,
}

/// Tool label → attribute key. Labels compare case-insensitively.
pub fn default_aliases() -> Vec<(&'static str, &'static str)> {
    vec![
        ("L1 latency", "l1_cache_latency_ns"),
        ("L2 latency", "l2_cache_latency_ns"),
        ("Main mem latency", "main_mem_latency_ns"),
        ("Random mem latency", "random_mem_latency_ns"),
        ("Process fork+exit", "fork_latency_us"),
        ("Process fork+execve", "exec_latency_us"),
        ("Process fork+/bin/sh -c", "shell_latency_us"),
        ("Context switch", "ctx_switch_latency_us"),
        ("Simple syscall", "syscall_latency_us"),
        ("Signal handler overhead", "signal_handler_latency_us"),
        ("Pipe bandwidth", "pipe_bw_mbps"),
        ("AF_UNIX sock stream bandwidth", "unix_socket_bw_mbps"),
        ("TCP local bandwidth", "tcp_local_bw_mbps"),
        ("Mem read", "mem_read_bw_mbps"),
        ("Mem write", "mem_write_bw_mbps"),
        ("Libc bcopy", "bcopy_libc_bw_mbps"),
        ("Unrolled bcopy", "bcopy_unrolled_bw_mbps"),
        ("Integer add", "int_add_latency_ns"),
        ("Integer mul", "int_mul_latency_ns"),
        ("Integer div", "int_div_latency_ns"),
        ("Integer mod", "int_mod_latency_ns"),
        ("Float add", "float_add_latency_ns"),
        ("Float mul", "float_mul_latency_ns"),
        ("Float div", "float_div_latency_ns"),
        ("Double add", "double_add_latency_ns"),
        ("Double mul", "double_mul_latency_ns"),
        ("Double div", "double_div_latency_ns"),
        ("0K file create", "file_create_0k_us"),
        ("0K file delete", "file_delete_0k_us"),
        ("10K file create", "file_create_10k_us"),
        ("10K file delete", "file_delete_10k_us"),
        ("Mmap latency", "mmap_latency_us"),
        ("File reread", "file_read_bw_mbps"),
        ("Mmap reread", "mmap_read_bw_mbps"),
    ]
}

/// Canonical spelling and factor to the base unit of its dimension.
fn unit_info(unit: &str) -> Option<(&'static str, f64)> {
    let u = unit.trim().to_ascii_lowercase();
    let info = match u.as_str() {
        "ns" | "nanosecond" | "nanoseconds" => ("time", 1.0),
        "us" | "µs" | "microsecond" | "microseconds" => ("time", 1e3),
        "ms" | "millisecond" | "milliseconds" => ("time", 1e6),
        "s" | "sec" | "second" | "seconds" => ("time", 1e9),
        "kb/s" | "kb/sec" => ("bandwidth", 1e-3),
        "mb/s" | "mb/sec" => ("bandwidth", 1.0),
        "gb/s" | "gb/sec" => ("bandwidth", 1e3),
        _ => return None,
    };
    Some(info)
}

/// Factor converting a value in `from` to `to`, when both share a dimension.
fn conversion(from: &str, to: &str) -> Option<f64> {
    if from.eq_ignore_ascii_case(to) {
        return Some(1.0);
    }
    let (dim_from, f_from) = unit_info(from)?;
    let (dim_to, f_to) = unit_info(to)?;
    (dim_from == dim_to).then_some(f_from / f_to)
}

/// Parser for the benchmark tool's line grammar.
#[derive(Debug, Clone)]
pub struct ToolOutputParser {
    taxonomy: Taxonomy,
    aliases: HashMap<String, String>,
}

#[derive(Deserialize)]
struct AliasFile {
    #[serde(default)]
    aliases: BTreeMap<String, String>,
}

impl ToolOutputParser {
    pub fn new(taxonomy: Taxonomy) -> Self {
        let aliases = default_aliases()
            .into_iter()
            .map(|(label, key)| (label.to_ascii_lowercase(), key.to_string()))
            .collect();
        Self { taxonomy, aliases }
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn add_alias(&mut self, label: &str, key: &str) {
        self.aliases
            .insert(label.trim().to_ascii_lowercase(), key.to_string());
    }

    /// Loads extra labels from TOML: `[aliases]` with `"Label" = "key"`.
    pub fn apply_alias_config(&mut self, toml_text: &str) -> Result<(), IngestError> {
        let file: AliasFile =
            toml::from_str(toml_text).map_err(|e| IngestError::AliasConfig(e.to_string()))?;
        for (label, key) in file.aliases {
            if !self.taxonomy.contains(&key) {
                return Err(IngestError::AliasConfig(format!(
                    "alias `{label}` targets unknown attribute `{key}`"
                )));
            }
            self.add_alias(&label, &key);
        }
        Ok(())
    }

    /// Canonical key for a tool label, if known.
    pub fn resolve(&self, label: &str) -> Option<&str> {
        self.aliases
            .get(&label.trim().to_ascii_lowercase())
            .map(String::as_str)
    }

    /// The label to print for `key` (first alias registered for it).
    pub fn label_for(&self, key: &str) -> Option<&'static str> {
        default_aliases()
            .into_iter()
            .find(|(_, k)| *k == key)
            .map(|(label, _)| label)
    }

    pub fn parse(&self, raw: &RawBenchmarkOutput) -> Result<ParsedOutput, IngestError> {
        self.parse_at(raw, Utc::now())
    }

    /// Parses with an explicit capture timestamp.
    pub fn parse_at(
        &self,
        raw: &RawBenchmarkOutput,
        captured_at: DateTime<Utc>,
    ) -> Result<ParsedOutput, IngestError> {
        if raw.lines.iter().all(|l| l.trim().is_empty()) {
            return Err(IngestError::EmptyOutput);
        }
        let mut measurements = Vec::new();
        let mut warnings = Vec::new();
        let mut seen = HashSet::new();
        let mut warn = |line: usize, text: &str, reason: String| {
            warnings.push(ParseWarning {
                line,
                text: text.to_string(),
                reason,
            })
        };

        for (idx, text) in raw.lines.iter().enumerate() {
            let line_no = idx + 1;
            let trimmed = text.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((label, payload)) = trimmed.rsplit_once(':') else {
                warn(line_no, text, "no `label: value` separator".into());
                continue;
            };
            let Some(key) = self.resolve(label) else {
                warn(
                    line_no,
                    text,
                    format!("unrecognized label `{}`", label.trim()),
                );
                continue;
            };
            let mut tokens = payload.split_whitespace();
            let number = tokens.next().unwrap_or("");
            let unit: String = tokens.collect::<Vec<_>>().join(" ");
            let value = match number.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    return Err(IngestError::MalformedNumber {
                        line: line_no,
                        label: label.trim().to_string(),
                        payload: payload.trim().to_string(),
                    })
                }
            };
            let target_unit = self
                .taxonomy
                .get(key)
                .map(|d| d.unit.clone())
                .unwrap_or_else(|| unit.clone());
            let factor = if unit.is_empty() {
                Some(1.0)
            } else {
                conversion(&unit, &target_unit)
            };
            let Some(factor) = factor else {
                warn(
                    line_no,
                    text,
                    format!("unit `{unit}` not convertible to `{target_unit}`"),
                );
                continue;
            };
            if !seen.insert(key.to_string()) {
                warn(
                    line_no,
                    text,
                    format!("repeated attribute `{key}`, keeping first"),
                );
                continue;
            }
            measurements.push(AttributeMeasurement {
                vm_id: raw.vm_id.clone(),
                attribute_key: key.to_string(),
                value: value * factor,
                unit: target_unit,
                container: raw.container.clone(),
                captured_at,
            });
        }
        Ok(ParsedOutput {
            measurements,
            warnings,
        })
    }
}

/// One line of a canonical record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalRecord {
    pub vm_id: String,
    pub attribute: String,
    pub value: f64,
    pub unit: String,
    pub memory_mib: u64,
    pub cpu_mode: CpuMode,
    pub captured_at: DateTime<Utc>,
}

impl From<&AttributeMeasurement> for CanonicalRecord {
    fn from(m: &AttributeMeasurement) -> Self {
        Self {
            vm_id: m.vm_id.clone(),
            attribute: m.attribute_key.clone(),
            value: m.value,
            unit: m.unit.clone(),
            memory_mib: m.container.memory_mib,
            cpu_mode: m.container.cpu_mode,
            captured_at: m.captured_at,
        }
    }
}

/// Reads a canonical record stream into a fresh current-role dataset.
///
/// An empty stream yields an empty dataset whose container is the minimal
/// single-core slice.
pub fn read_canonical_records(reader: impl BufRead) -> Result<BenchmarkDataset, IngestError> {
    let mut dataset: Option<BenchmarkDataset> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let violation = |message: String| IngestError::SchemaViolation {
            line: line_no,
            message,
        };
        let rec: CanonicalRecord =
            serde_json::from_str(&line).map_err(|e| violation(e.to_string()))?;
        if rec.memory_mib < MIN_MEMORY_MIB {
            return Err(violation(format!(
                "memory_mib {} below minimum",
                rec.memory_mib
            )));
        }
        let container = ContainerSpec {
            memory_mib: rec.memory_mib,
            cpu_mode: rec.cpu_mode,
            image_ref: None,
        };
        let ds = dataset.get_or_insert_with(|| {
            BenchmarkDataset::new(
                DatasetId::generate(),
                DatasetRole::Current,
                container.clone(),
            )
        });
        ds.insert(AttributeMeasurement {
            vm_id: rec.vm_id,
            attribute_key: rec.attribute,
            value: rec.value,
            unit: rec.unit,
            container,
            captured_at: rec.captured_at,
        })
        .map_err(|e| violation(e.to_string()))?;
    }
    Ok(dataset.unwrap_or_else(|| {
        BenchmarkDataset::new(
            DatasetId::generate(),
            DatasetRole::Current,
            ContainerSpec {
                memory_mib: MIN_MEMORY_MIB,
                cpu_mode: CpuMode::SingleCore,
                image_ref: None,
            },
        )
    }))
}

pub fn read_canonical_str(text: &str) -> Result<BenchmarkDataset, IngestError> {
    read_canonical_records(text.as_bytes())
}

/// Writes one JSON record per measurement, in insertion order.
pub fn write_canonical(dataset: &BenchmarkDataset, mut out: impl Write) -> Result<(), IngestError> {
    for m in dataset.measurements() {
        serde_json::to_writer(&mut out, &CanonicalRecord::from(m))
            .map_err(|e| IngestError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn canonical_string(dataset: &BenchmarkDataset) -> String {
    let mut buf = Vec::new();
    write_canonical(dataset, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
