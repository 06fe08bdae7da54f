//! Benchmark-driven VM ranking.
//!
//! Microbenchmark results from capped containers are normalized per
//! attribute, combined into weighted group scores and ranked. Rankings can
//! be checked against application timings with a rank correlation.

pub mod evaluation;
pub mod ingest;
pub mod model;
pub mod orchestrator;
pub mod ranking;
pub mod store;
pub mod workflow;

pub use evaluation::{
    build_report, empirical_ranks, evaluate, pearson_percent, rank_correlation, read_rank_tables,
    read_timings, render_correlation_summary, CorrelationReport, EvalError, EvaluationReport,
    TimingRecord,
};
pub use ingest::{
    read_canonical_records, read_canonical_str, write_canonical, IngestError, ParsedOutput,
    RawBenchmarkOutput, ToolOutputParser,
};
pub use model::{
    default_taxonomy, AttributeDef, AttributeMeasurement, BenchmarkDataset, CompletenessReport,
    ContainerSpec, CpuMode, DatasetId, DatasetRole, ExecutionMode, Group, HostRun, HostStatus,
    ModelError, Polarity, RankEntry, RankMode, RankTable, RunId, RunRecord, Taxonomy, VmDescriptor,
    WeightVector,
};
pub use orchestrator::{
    CampaignHost, CampaignOutcome, CampaignRequest, HostFailure, Orchestrator, OrchestratorConfig,
    OrchestratorError,
};
pub use ranking::{GroupAggregate, Ranker, RankingError, RankingOptions};
pub use store::{FileStore, Repository, StoreError, StoredDataset};
pub use workflow::{rank_stored, RankQuery, WorkflowError};
