//! Ranking a stored dataset, shared by the command line and the HTTP API so
//! both answer the same query identically.

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::model::{DatasetId, RankMode, RankTable, WeightVector};
use crate::ranking::{Ranker, RankingError};
use crate::store::{Repository, StoreError, StoredDataset, DEFAULT_MAX_AGE_DAYS};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error("mode `{}` is computed from application timings, not from a dataset", .0.as_str())]
    UnsupportedMode(RankMode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankQuery {
    pub dataset_id: DatasetId,
    pub weights: WeightVector,
    pub mode: RankMode,
    pub max_age_days: u32,
    pub now: DateTime<Utc>,
}

impl RankQuery {
    pub fn new(dataset_id: DatasetId, weights: WeightVector, mode: RankMode) -> Self {
        Self {
            dataset_id,
            weights,
            mode,
            max_age_days: DEFAULT_MAX_AGE_DAYS,
            now: Utc::now(),
        }
    }
}

/// Ranks a stored dataset. Hybrid mode pairs it with the newest eligible
/// historic dataset for the same slice, other than itself, restricted to
/// the current VM set.
pub fn rank_stored(
    store: &dyn Repository,
    ranker: &Ranker,
    query: &RankQuery,
) -> Result<RankTable, WorkflowError> {
    let current = store.get_dataset(&query.dataset_id)?.dataset;
    match query.mode {
        RankMode::Lightweight => Ok(ranker.lightweight_rank(&current, &query.weights)?),
        RankMode::Hybrid => {
            let vms = current.vm_ids();
            let historic = store.latest_historic(
                &vms,
                &current.container,
                query.max_age_days,
                query.now,
                Some(&current.id),
            )?;
            let restricted = StoredDataset {
                dataset: historic.dataset.restricted_to(&vms),
                ..historic
            };
            Ok(ranker.hybrid_rank_checked(
                &current,
                &restricted,
                &query.weights,
                query.max_age_days,
                query.now,
            )?)
        }
        RankMode::Empirical => Err(WorkflowError::UnsupportedMode(query.mode)),
    }
}
