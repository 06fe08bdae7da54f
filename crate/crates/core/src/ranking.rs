//! Grouping, z-score normalization, weighted scoring and competition ranking.
//!
//! The lightweight method ranks one dataset; the hybrid method adds the
//! scores of a current and a historic dataset, each normalized on its own,
//! under the same weights.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BenchmarkDataset, DatasetId, Group, Polarity, RankEntry, RankMode, RankTable, Taxonomy,
    WeightVector,
};
use crate::store::StoredDataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("dataset is incomplete: {} missing measurement(s), first {:?}", missing.len(), missing.first())]
    IncompleteDataset { missing: Vec<(String, String)> },
    #[error("non-finite value for vm `{vm_id}` attribute `{attribute}`")]
    NonFiniteValue { vm_id: String, attribute: String },
    #[error("attribute `{0}` is not in the taxonomy")]
    UnknownAttribute(String),
    #[error("nothing to rank")]
    EmptyInput,
    #[error("current and historic datasets cover different VMs (only current: {only_current:?}, only historic: {only_historic:?})")]
    VmSetMismatch {
        only_current: Vec<String>,
        only_historic: Vec<String>,
    },
    #[error("historic dataset is {age_days:.1} days old, limit is {max_age_days} days")]
    StaleHistoricData { age_days: f64, max_age_days: u32 },
}

/// How member z-values of a group combine before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupAggregate {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HigherFirst,
    LowerFirst,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RankingOptions {
    pub aggregate: GroupAggregate,
    /// Scores are rounded to multiples of this before tie detection.
    pub tie_quantum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeStats {
    pub attribute_key: String,
    pub mean: f64,
    /// Population standard deviation over the dataset's VMs.
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedColumn {
    pub group: Group,
    pub stats: AttributeStats,
}

/// Per-attribute z-values for every VM of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedMatrix {
    pub dataset_id: DatasetId,
    /// Sorted VM ids; row order of `z`.
    pub vm_ids: Vec<String>,
    /// Sorted by attribute key; column order of `z`.
    pub columns: Vec<NormalizedColumn>,
    /// `z[vm][attribute]`.
    pub z: Vec<Vec<f64>>,
}

impl NormalizedMatrix {
    pub fn column_index(&self, key: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.stats.attribute_key == key)
    }

    pub fn z_value(&self, vm_id: &str, key: &str) -> Option<f64> {
        let row = self.vm_ids.iter().position(|v| v == vm_id)?;
        let col = self.column_index(key)?;
        Some(self.z[row][col])
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        self.z.iter().map(move |row| row[col])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub vm_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub weights: WeightVector,
    pub mode: RankMode,
}

impl ScoreVector {
    pub fn score_of(&self, vm_id: &str) -> Option<f64> {
        self.vm_ids
            .iter()
            .position(|v| v == vm_id)
            .map(|i| self.scores[i])
    }
}

/// Standard competition ranks ("1224"): rank = 1 + number of strictly
/// better values.
pub fn competition_rank(
    values: &[f64],
    direction: Direction,
    tie_quantum: Option<f64>,
) -> Result<Vec<u32>, RankingError> {
    if values.is_empty() {
        return Err(RankingError::EmptyInput);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(RankingError::NonFiniteValue {
            vm_id: format!("#{i}"),
            attribute: "rank metric".into(),
        });
    }
    let keys: Vec<f64> = values
        .iter()
        .map(|&v| match tie_quantum {
            Some(q) if q > 0.0 => (v / q).round(),
            _ => v,
        })
        // total_cmp orders -0.0 before 0.0; they must tie.
        .map(|k| if k == 0.0 { 0.0 } else { k })
        .collect();
    let better_first = |a: f64, b: f64| match direction {
        Direction::HigherFirst => b.total_cmp(&a),
        Direction::LowerFirst => a.total_cmp(&b),
    };
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&i, &j| better_first(keys[i], keys[j]));

    let mut ranks = vec![0u32; keys.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = if pos > 0 && better_first(keys[order[pos - 1]], keys[idx]) == Ordering::Equal
        {
            ranks[order[pos - 1]]
        } else {
            pos as u32 + 1
        };
    }
    Ok(ranks)
}

/// Builds rank-table entries sorted by rank, then VM id.
pub fn rank_entries(
    vm_ids: &[String],
    values: &[f64],
    direction: Direction,
    tie_quantum: Option<f64>,
) -> Result<Vec<RankEntry>, RankingError> {
    let ranks = competition_rank(values, direction, tie_quantum)?;
    let mut entries: Vec<RankEntry> = vm_ids
        .iter()
        .zip(values)
        .zip(ranks)
        .map(|((vm_id, &value), rank)| RankEntry {
            vm_id: vm_id.clone(),
            value: Some(value),
            rank,
        })
        .collect();
    entries.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.vm_id.cmp(&b.vm_id)));
    Ok(entries)
}

/// Age of a stored dataset in fractional days.
pub fn age_days(stored_at: DateTime<Utc>, now: DateTime<Utc>) -> f64 {
    (now - stored_at).num_seconds() as f64 / 86_400.0
}

/// Lightweight and hybrid ranking against a fixed taxonomy.
#[derive(Debug, Clone)]
pub struct Ranker {
    taxonomy: Taxonomy,
    options: RankingOptions,
}

impl Ranker {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Self {
            taxonomy,
            options: RankingOptions::default(),
        }
    }

    pub fn with_options(mut self, options: RankingOptions) -> Self {
        self.options = options;
        self
    }

    pub fn options(&self) -> &RankingOptions {
        &self.options
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    /// Applies polarity (lower-better values negated), then per-attribute
    /// z-scores with population moments. Constant attributes get z = 0.
    pub fn normalize(&self, dataset: &BenchmarkDataset) -> Result<NormalizedMatrix, RankingError> {
        if dataset.is_empty() {
            return Err(RankingError::EmptyInput);
        }
        let vm_ids: Vec<String> = dataset.vm_ids().into_iter().collect();
        let keys: Vec<String> = dataset.attribute_keys().into_iter().collect();

        let mut defs = Vec::with_capacity(keys.len());
        for key in &keys {
            let def = self
                .taxonomy
                .get(key)
                .ok_or_else(|| RankingError::UnknownAttribute(key.clone()))?;
            defs.push(def);
        }

        let rows: HashMap<&str, usize> = vm_ids
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect();
        let cols: HashMap<&str, usize> = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        let mut cells: Vec<Option<f64>> = vec![None; vm_ids.len() * keys.len()];
        let mut duplicated = false;
        for m in dataset.measurements() {
            if !m.value.is_finite() {
                return Err(RankingError::NonFiniteValue {
                    vm_id: m.vm_id.clone(),
                    attribute: m.attribute_key.clone(),
                });
            }
            let cell =
                &mut cells[rows[m.vm_id.as_str()] * keys.len() + cols[m.attribute_key.as_str()]];
            duplicated |= cell.is_some();
            *cell = Some(m.value);
        }
        let missing: Vec<(String, String)> = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| (vm_ids[i / keys.len()].clone(), keys[i % keys.len()].clone()))
            .collect();
        if !missing.is_empty() || duplicated {
            return Err(RankingError::IncompleteDataset { missing });
        }

        let m = vm_ids.len() as f64;
        let mut z = vec![vec![0.0; keys.len()]; vm_ids.len()];
        let mut columns = Vec::with_capacity(keys.len());
        for (col, (key, def)) in keys.iter().zip(&defs).enumerate() {
            let sign = match def.polarity {
                Polarity::HigherBetter => 1.0,
                Polarity::LowerBetter => -1.0,
            };
            let xs: Vec<f64> = (0..vm_ids.len())
                .map(|row| sign * cells[row * keys.len() + col].unwrap_or_default())
                .collect();
            let mean = xs.iter().sum::<f64>() / m;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m;
            let constant = xs.iter().all(|&x| x == xs[0]);
            let stddev = if constant { 0.0 } else { var.sqrt() };
            if stddev > 0.0 {
                for (row, x) in xs.iter().enumerate() {
                    z[row][col] = (x - mean) / stddev;
                }
            }
            columns.push(NormalizedColumn {
                group: def.group,
                stats: AttributeStats {
                    attribute_key: key.clone(),
                    mean,
                    stddev,
                },
            });
        }
        Ok(NormalizedMatrix {
            dataset_id: dataset.id.clone(),
            vm_ids,
            columns,
            z,
        })
    }

    /// S_i = Σ_k W_k · aggregate(z-values of VM i in group k). Empty groups
    /// contribute 0.
    pub fn score(&self, nm: &NormalizedMatrix, weights: &WeightVector) -> ScoreVector {
        let mut members: [Vec<usize>; 4] = Default::default();
        for (col, c) in nm.columns.iter().enumerate() {
            members[c.group.index()].push(col);
        }
        let scores =
            nm.z.iter()
                .map(|row| {
                    Group::ALL
                        .iter()
                        .map(|&g| {
                            let cols = &members[g.index()];
                            if cols.is_empty() {
                                return 0.0;
                            }
                            let sum: f64 = cols.iter().map(|&c| row[c]).sum();
                            let agg = match self.options.aggregate {
                                GroupAggregate::Mean => sum / cols.len() as f64,
                                GroupAggregate::Sum => sum,
                            };
                            weights.get(g) * agg
                        })
                        .sum()
                })
                .collect();
        ScoreVector {
            vm_ids: nm.vm_ids.clone(),
            scores,
            weights: *weights,
            mode: RankMode::Lightweight,
        }
    }

    pub fn lightweight_scores(
        &self,
        dataset: &BenchmarkDataset,
        weights: &WeightVector,
    ) -> Result<ScoreVector, RankingError> {
        let nm = self.normalize(dataset)?;
        Ok(self.score(&nm, weights))
    }

    pub fn lightweight_rank(
        &self,
        dataset: &BenchmarkDataset,
        weights: &WeightVector,
    ) -> Result<RankTable, RankingError> {
        let sv = self.lightweight_scores(dataset, weights)?;
        let mut table = self.table(&sv, RankMode::Lightweight)?;
        table.dataset_ids = vec![dataset.id.clone()];
        table.container = Some(dataset.container.clone());
        Ok(table)
    }

    pub fn hybrid_scores(
        &self,
        current: &BenchmarkDataset,
        historic: &BenchmarkDataset,
        weights: &WeightVector,
    ) -> Result<ScoreVector, RankingError> {
        let cur_vms = current.vm_ids();
        let hist_vms = historic.vm_ids();
        if cur_vms != hist_vms {
            return Err(vm_set_mismatch(&cur_vms, &hist_vms));
        }
        let cur = self.score(&self.normalize(current)?, weights);
        let hist = self.score(&self.normalize(historic)?, weights);
        // Both vectors are ordered by sorted VM id.
        let scores = cur
            .scores
            .iter()
            .zip(&hist.scores)
            .map(|(a, b)| a + b)
            .collect();
        Ok(ScoreVector {
            vm_ids: cur.vm_ids,
            scores,
            weights: *weights,
            mode: RankMode::Hybrid,
        })
    }

    pub fn hybrid_rank(
        &self,
        current: &BenchmarkDataset,
        historic: &BenchmarkDataset,
        weights: &WeightVector,
    ) -> Result<RankTable, RankingError> {
        let sv = self.hybrid_scores(current, historic, weights)?;
        let mut table = self.table(&sv, RankMode::Hybrid)?;
        table.dataset_ids = vec![current.id.clone(), historic.id.clone()];
        table.container = Some(current.container.clone());
        Ok(table)
    }

    /// Hybrid ranking that first enforces the historic staleness limit.
    pub fn hybrid_rank_checked(
        &self,
        current: &BenchmarkDataset,
        historic: &StoredDataset,
        weights: &WeightVector,
        max_age_days: u32,
        now: DateTime<Utc>,
    ) -> Result<RankTable, RankingError> {
        let age = age_days(historic.stored_at, now);
        if age > max_age_days as f64 {
            return Err(RankingError::StaleHistoricData {
                age_days: age,
                max_age_days,
            });
        }
        self.hybrid_rank(current, &historic.dataset, weights)
    }

    fn table(&self, sv: &ScoreVector, mode: RankMode) -> Result<RankTable, RankingError> {
        let entries = rank_entries(
            &sv.vm_ids,
            &sv.scores,
            Direction::HigherFirst,
            self.options.tie_quantum,
        )?;
        let mut table = RankTable::new(mode, entries);
        table.weights = Some(sv.weights);
        Ok(table)
    }
}

fn vm_set_mismatch(cur: &BTreeSet<String>, hist: &BTreeSet<String>) -> RankingError {
    RankingError::VmSetMismatch {
        only_current: cur.difference(hist).cloned().collect(),
        only_historic: hist.difference(cur).cloned().collect(),
    }
}
