//! Empirical ranks from application timings and their correlation with
//! benchmark ranks.
//!
//! Correlation is the Pearson product-moment coefficient of the two raw
//! competition-rank vectors, expressed in percent. Tied ranks are used as is
//! (no mid-rank correction).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContainerSpec, ExecutionMode, RankMode, RankTable};
use crate::ranking::{rank_entries, Direction, RankingError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("more than one timing for vm `{0}`")]
    DuplicateTiming(String),
    #[error("no timing for vm `{0}`")]
    MissingVm(String),
    #[error("timing for vm `{vm_id}` must be a positive number of seconds, got {seconds}")]
    InvalidTiming { vm_id: String, seconds: f64 },
    #[error("timings mix applications or execution modes; group them first")]
    MixedTimings,
    #[error("rank vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired ranks, got {0}")]
    TooFewPairs(usize),
    #[error("a rank vector has zero variance; correlation is undefined")]
    DegenerateRanks,
    #[error("VM sets differ (only empirical: {only_left:?}, only benchmark: {only_right:?})")]
    VmSetMismatch {
        only_left: Vec<String>,
        only_right: Vec<String>,
    },
    #[error("nothing to evaluate: no benchmark table matches the timings")]
    NothingToEvaluate,
    #[error("timings file: {0}")]
    TimingFormat(String),
    #[error("rank table file: {0}")]
    TableFormat(String),
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

/// Wall time of one application run on one VM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub vm_id: String,
    pub application: String,
    pub mode: ExecutionMode,
    pub seconds: f64,
}

/// Reads a CSV file with header `vm_id,application,mode,seconds`.
pub fn read_timings(reader: impl Read) -> Result<Vec<TimingRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(|e| EvalError::TimingFormat(e.to_string())))
        .collect()
}

/// Parses rank tables from a JSON array or from JSON lines.
pub fn read_rank_tables(text: &str) -> Result<Vec<RankTable>, EvalError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| EvalError::TableFormat(e.to_string()));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| EvalError::TableFormat(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// Competition ranks by wall time, lowest time first. All records must share
/// one application and execution mode. When `fleet` is given every member
/// needs a timing.
pub fn empirical_ranks(
    timings: &[TimingRecord],
    fleet: Option<&BTreeSet<String>>,
) -> Result<RankTable, EvalError> {
    let first = timings.first().ok_or(RankingError::EmptyInput)?;
    if timings
        .iter()
        .any(|t| t.application != first.application || t.mode != first.mode)
    {
        return Err(EvalError::MixedTimings);
    }
    let mut seen = BTreeSet::new();
    for t in timings {
        if !(t.seconds.is_finite() && t.seconds > 0.0) {
            return Err(EvalError::InvalidTiming {
                vm_id: t.vm_id.clone(),
                seconds: t.seconds,
            });
        }
        if !seen.insert(t.vm_id.clone()) {
            return Err(EvalError::DuplicateTiming(t.vm_id.clone()));
        }
    }
    if let Some(missing) = fleet.and_then(|f| f.difference(&seen).next()) {
        return Err(EvalError::MissingVm(missing.clone()));
    }
    let vm_ids: Vec<String> = timings.iter().map(|t| t.vm_id.clone()).collect();
    let secs: Vec<f64> = timings.iter().map(|t| t.seconds).collect();
    let mut table = RankTable::new(
        RankMode::Empirical,
        rank_entries(&vm_ids, &secs, Direction::LowerFirst, None)?,
    );
    table.application = Some(first.application.clone());
    table.execution_mode = Some(first.mode);
    Ok(table)
}

/// Pearson correlation of two equal-length vectors, in percent.
pub fn pearson_percent(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewPairs(a.len()));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(EvalError::DegenerateRanks);
    }
    Ok((100.0 * sab / (saa * sbb).sqrt()).clamp(-100.0, 100.0))
}

fn vm_mismatch(left: &BTreeSet<String>, right: &BTreeSet<String>) -> EvalError {
    EvalError::VmSetMismatch {
        only_left: left.difference(right).cloned().collect(),
        only_right: right.difference(left).cloned().collect(),
    }
}

/// Correlation of two rank tables, paired by VM id.
pub fn rank_correlation(a: &RankTable, b: &RankTable) -> Result<f64, EvalError> {
    let (va, vb) = (a.vm_ids(), b.vm_ids());
    if va != vb {
        return Err(vm_mismatch(&va, &vb));
    }
    let ra: Vec<f64> = va.iter().map(|v| a.rank_of(v).unwrap() as f64).collect();
    let rb: Vec<f64> = va.iter().map(|v| b.rank_of(v).unwrap() as f64).collect();
    pearson_percent(&ra, &rb)
}

/// Correlation between an empirical table and one benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub application: Option<String>,
    pub execution_mode: Option<ExecutionMode>,
    pub method: RankMode,
    pub container: Option<ContainerSpec>,
    pub correlation_percent: f64,
}

impl CorrelationReport {
    fn column_key(&self) -> (u8, u64, u8) {
        let mode = match self.execution_mode {
            Some(ExecutionMode::Sequential) => 0,
            Some(ExecutionMode::Parallel) => 1,
            None => 2,
        };
        let method = match self.method {
            RankMode::Lightweight => 0,
            RankMode::Hybrid => 1,
            RankMode::Empirical => 2,
        };
        (
            mode,
            self.container.as_ref().map_or(u64::MAX, |c| c.memory_mib),
            method,
        )
    }

    fn column_label(&self) -> String {
        self.column_label_for(self.method)
    }

    fn column_label_for(&self, method: RankMode) -> String {
        let mode = self.execution_mode.map_or("-", |m| match m {
            ExecutionMode::Sequential => "seq",
            ExecutionMode::Parallel => "par",
        });
        let size = self
            .container
            .as_ref()
            .map_or("?".to_string(), |c| format!("{} MiB", c.memory_mib));
        match method {
            RankMode::Hybrid => format!("{mode} {size} (hybrid)"),
            _ => format!("{mode} {size}"),
        }
    }
}

/// One empirical table against its benchmark tables (one per container size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub empirical: RankTable,
    pub benchmarks: Vec<RankTable>,
    pub correlations: Vec<CorrelationReport>,
}

pub fn build_report(
    empirical: &RankTable,
    benchmarks: &[RankTable],
) -> Result<EvaluationReport, EvalError> {
    let emp_vms = empirical.vm_ids();
    let mut columns: Vec<RankTable> = benchmarks.to_vec();
    columns.sort_by_key(|t| {
        (
            t.container.as_ref().map_or(u64::MAX, |c| c.memory_mib),
            t.mode == RankMode::Hybrid,
        )
    });
    let mut correlations = Vec::with_capacity(columns.len());
    for table in &columns {
        let vms = table.vm_ids();
        if vms != emp_vms {
            return Err(vm_mismatch(&emp_vms, &vms));
        }
        correlations.push(CorrelationReport {
            application: empirical.application.clone(),
            execution_mode: empirical.effective_execution_mode(),
            method: table.mode,
            container: table.container.clone(),
            correlation_percent: rank_correlation(empirical, table)?,
        });
    }
    Ok(EvaluationReport {
        empirical: empirical.clone(),
        benchmarks: columns,
        correlations,
    })
}

impl EvaluationReport {
    /// VM rows with the empirical rank followed by one column per benchmark
    /// table, then the correlation of each column.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let title = format!(
            "{} ({})",
            self.empirical
                .application
                .as_deref()
                .unwrap_or("application"),
            self.empirical
                .effective_execution_mode()
                .map_or("-", ExecutionMode::as_str)
        );
        let _ = writeln!(out, "{title}");
        let headers: Vec<String> = std::iter::once("Empirical".to_string())
            .chain(self.correlations.iter().map(|c| c.column_label()))
            .collect();
        let vm_width = self
            .empirical
            .entries
            .iter()
            .map(|e| e.vm_id.len())
            .max()
            .unwrap_or(2)
            .max("VM".len());
        let _ = write!(out, "{:<vm_width$}", "VM");
        for h in &headers {
            let _ = write!(out, "  {h:>w$}", w = h.len().max(9));
        }
        out.push('\n');
        for e in &self.empirical.entries {
            let _ = write!(out, "{:<vm_width$}", e.vm_id);
            let ranks = std::iter::once(Some(e.rank))
                .chain(self.benchmarks.iter().map(|t| t.rank_of(&e.vm_id)));
            for (h, r) in headers.iter().zip(ranks) {
                let cell = r.map_or("-".to_string(), |r| r.to_string());
                let _ = write!(out, "  {cell:>w$}", w = h.len().max(9));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<vm_width$}", "corr %");
        let _ = write!(out, "  {:>w$}", "", w = headers[0].len().max(9));
        for (h, c) in headers.iter().skip(1).zip(&self.correlations) {
            let _ = write!(out, "  {:>w$.1}", c.correlation_percent, w = h.len().max(9));
        }
        out.push('\n');
        out
    }
}

/// Correlation summary: one row per (application, method), one column per
/// (execution mode, container size), values to one decimal.
pub fn render_correlation_summary(reports: &[CorrelationReport]) -> String {
    type Column = (u8, u64);
    let mut columns: BTreeMap<Column, String> = BTreeMap::new();
    let mut rows: BTreeMap<(String, u8), (String, BTreeMap<Column, f64>)> = BTreeMap::new();
    for r in reports {
        let (mode, size, method) = r.column_key();
        columns
            .entry((mode, size))
            .or_insert_with(|| r.column_label_for(RankMode::Lightweight));
        let app = r.application.clone().unwrap_or_else(|| "-".into());
        let name = format!("{app} {}", r.method.as_str());
        rows.entry((app, method))
            .or_insert_with(|| (name, BTreeMap::new()))
            .1
            .insert((mode, size), r.correlation_percent);
    }
    let name_width = rows
        .values()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0)
        .max(11);
    let mut out = String::new();
    let _ = write!(out, "{:<name_width$}", "Application");
    for label in columns.values() {
        let _ = write!(out, "  {label:>w$}", w = label.len().max(6));
    }
    out.push('\n');
    for (name, values) in rows.values() {
        let _ = write!(out, "{name:<name_width$}");
        for (key, label) in &columns {
            let w = label.len().max(6);
            match values.get(key) {
                Some(v) => {
                    let _ = write!(out, "  {v:>w$.1}");
                }
                None => {
                    let _ = write!(out, "  {:>w$}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Groups timings by (application, mode), ranks each group, and pairs it
/// with the benchmark tables of the matching execution mode (and
/// application, when a table names one).
pub fn evaluate(
    timings: &[TimingRecord],
    tables: &[RankTable],
) -> Result<Vec<EvaluationReport>, EvalError> {
    let mut groups: BTreeMap<(String, &'static str), Vec<TimingRecord>> = BTreeMap::new();
    for t in timings {
        groups
            .entry((t.application.clone(), t.mode.as_str()))
            .or_default()
            .push(t.clone());
    }
    let mut reports = Vec::new();
    for group in groups.values() {
        let empirical = empirical_ranks(group, None)?;
        let mode = empirical.execution_mode;
        let matching: Vec<RankTable> = tables
            .iter()
            .filter(|t| t.effective_execution_mode() == mode)
            .filter(|t| t.application.is_none() || t.application == empirical.application)
            .cloned()
            .collect();
        if matching.is_empty() {
            continue;
        }
        reports.push(build_report(&empirical, &matching)?);
    }
    if reports.is_empty() {
        return Err(EvalError::NothingToEvaluate);
    }
    Ok(reports)
}
