//! `vmrank`: benchmark VMs in capped containers, rank them, and check the
//! rankings against application timings.
//!
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use vmrank_api::AppState;
use vmrank_core::orchestrator::engine::DefaultEngineFactory;
use vmrank_core::orchestrator::inventory::Inventory;
use vmrank_core::{
    default_taxonomy, evaluate, rank_stored, read_canonical_str, read_rank_tables, read_timings,
    render_correlation_summary, CampaignRequest, ContainerSpec, CpuMode, DatasetId, DatasetRole,
    FileStore, Orchestrator, OrchestratorConfig, RankMode, RankQuery, RankTable, Ranker,
    Repository, StoreError, ToolOutputParser, WeightVector, WorkflowError,
};

#[derive(Debug, Parser)]
#[command(
    name = "vmrank",
    version,
    about = "Benchmark, rank and evaluate cloud VMs"
)]
struct Cli {
    /// Dataset store directory.
    #[arg(
        long,
        global = true,
        env = "VMRANK_STORE",
        default_value = "vmrank-store"
    )]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Records,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the micro-benchmark campaign on every host of an inventory.
    Benchmark {
        /// TOML inventory with one `[[host]]` table per VM.
        inventory: PathBuf,
        #[arg(long, default_value_t = 100)]
        memory_mib: u64,
        #[arg(long, default_value = "single-core")]
        cpu_mode: CpuMode,
        /// Benchmark image reference.
        #[arg(long)]
        image: Option<String>,
        /// Per-host benchmark deadline in seconds.
        #[arg(long, default_value_t = 1800)]
        timeout: u64,
        #[arg(long, default_value = "current")]
        role: DatasetRole,
        /// Use the simulated executor for every host.
        #[arg(long)]
        simulated: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Rank the VMs of a stored dataset.
    Rank {
        #[arg(long)]
        dataset: String,
        /// Group weights G1..G4, each in [0, 5], e.g. 4,3,5,0.
        #[arg(long, allow_hyphen_values = true)]
        weights: WeightVector,
        #[arg(long, default_value = "lightweight", value_parser = parse_rank_mode)]
        mode: RankMode,
        #[arg(long, default_value_t = vmrank_core::store::DEFAULT_MAX_AGE_DAYS,
              value_parser = clap::value_parser!(u32).range(1..))]
        historic_max_age_days: u32,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Correlate benchmark rank tables with ranks derived from application timings.
    Evaluate {
        /// CSV with columns vm_id, application, mode, seconds.
        #[arg(long)]
        timings: PathBuf,
        /// Rank tables as JSON arrays or JSON lines.
        #[arg(long, num_args = 1.., required = true)]
        ranktables: Vec<PathBuf>,
        /// Also print every empirical table next to its benchmark tables.
        #[arg(long)]
        detail: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Store a dataset from canonical JSON lines.
    Import {
        file: PathBuf,
        /// Overrides the role in the file.
        #[arg(long)]
        role: Option<DatasetRole>,
    },
    /// List stored datasets.
    Datasets,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
    },
}

fn parse_rank_mode(s: &str) -> Result<RankMode, String> {
    match s.parse::<RankMode>().map_err(|e| e.to_string())? {
        RankMode::Empirical => Err("empirical ranks come from `evaluate`".into()),
        m => Ok(m),
    }
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("VMRANK_LOG")
                .unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

async fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Benchmark {
            inventory,
            memory_mib,
            cpu_mode,
            image,
            timeout,
            role,
            simulated,
            format,
        } => {
            let mut container = ContainerSpec::new(memory_mib, cpu_mode).map_err(Failure::usage)?;
            if let Some(image) = image {
                container = container.with_image(image);
            }
            let config = OrchestratorConfig {
                deadline: Duration::from_secs(timeout),
                ..OrchestratorConfig::default()
            };
            benchmark(
                &cli.store, &inventory, container, role, simulated, config, format,
            )
            .await
        }
        Command::Rank {
            dataset,
            weights,
            mode,
            historic_max_age_days,
            format,
        } => {
            let mut query = RankQuery::new(DatasetId::from(dataset.as_str()), weights, mode);
            query.max_age_days = historic_max_age_days;
            rank(&cli.store, &query, format)
        }
        Command::Evaluate {
            timings,
            ranktables,
            detail,
            format,
        } => evaluate_files(&timings, &ranktables, detail, format),
        Command::Import { file, role } => import(&cli.store, &file, role),
        Command::Datasets => datasets(&cli.store),
        Command::Serve { listen } => serve(&cli.store, listen).await,
    }
}

fn open_store(path: &Path) -> Result<Arc<dyn Repository>, Failure> {
    let store =
        FileStore::open(path).with_context(|| format!("opening store {}", path.display()))?;
    Ok(Arc::new(store))
}

fn orchestrator(store: Arc<dyn Repository>, config: OrchestratorConfig) -> Orchestrator {
    Orchestrator::new(
        store,
        Arc::new(DefaultEngineFactory),
        ToolOutputParser::new(default_taxonomy()),
        config,
    )
}

async fn benchmark(
    store: &Path,
    inventory: &Path,
    container: ContainerSpec,
    role: DatasetRole,
    simulated: bool,
    config: OrchestratorConfig,
    format: Format,
) -> CliResult {
    let mut inv = Inventory::load(inventory)
        .with_context(|| format!("inventory {}", inventory.display()))
        .map_err(Failure::usage)?;
    if simulated {
        inv = inv.simulated();
    }
    let req = CampaignRequest::from_inventory(&inv, container)
        .map_err(Failure::usage)?
        .with_role(role);
    let orch = orchestrator(open_store(store)?, config);
    let outcome = orch.run_campaign(req).await.map_err(anyhow::Error::from)?;
    let record = &outcome.record;

    match format {
        Format::Records => println!(
            "{}",
            serde_json::to_string(record).map_err(anyhow::Error::from)?
        ),
        Format::Text => {
            println!("run {}", record.run_id);
            for h in &record.hosts {
                let secs = h
                    .duration_secs
                    .map_or_else(|| "-".to_string(), |s| format!("{s:.2}s"));
                let state = match &h.status {
                    vmrank_core::HostStatus::Failed(reason) => format!("failed: {reason}"),
                    other => other.name().to_string(),
                };
                println!("  {:<16} {:<12} {:>9}  {state}", h.host_id, h.vm_type, secs);
            }
            match &record.dataset_id {
                Some(id) => println!("dataset {id}"),
                None => println!("no dataset stored"),
            }
        }
    }
    let failed = record.failed_hosts();
    let incomplete = record.completeness.as_ref().is_some_and(|c| !c.complete);
    if failed.is_empty() && !incomplete {
        return Ok(());
    }
    let mut summary = format!("{} of {} host(s) failed", failed.len(), record.hosts.len());
    for (host, reason) in &failed {
        let _ = write!(summary, "\n  {host}: {reason}");
    }
    if incomplete && failed.is_empty() {
        summary = "dataset is incomplete".into();
    }
    Err(anyhow::anyhow!(summary).into())
}

/// Ranks as the API does and renders the table.
fn rank(store: &Path, query: &RankQuery, format: Format) -> CliResult {
    let store = open_store(store)?;
    let table = rank_stored(store.as_ref(), &Ranker::new(default_taxonomy()), query).map_err(
        |e| match e {
            WorkflowError::Store(StoreError::NoEligibleHistoric(msg)) => anyhow::anyhow!(
                "no eligible historic dataset ({msg}); rerun with --mode lightweight or store a recent historic dataset"
            ),
            other => other.into(),
        },
    )?;
    match format {
        Format::Records => {
            println!(
                "{}",
                serde_json::to_string(&table).map_err(anyhow::Error::from)?
            )
        }
        Format::Text => print!("{}", render_rank_table(&table)),
    }
    Ok(())
}

fn render_rank_table(table: &RankTable) -> String {
    let width = table
        .entries
        .iter()
        .map(|e| e.vm_id.len())
        .max()
        .unwrap_or(0)
        .max(2);
    let mut out = String::new();
    let _ = write!(out, "{} ranking", table.mode.as_str());
    if let Some(w) = &table.weights {
        let _ = write!(out, ", weights {w}");
    }
    if let Some(c) = &table.container {
        let _ = write!(out, ", {c}");
    }
    out.push('\n');
    let _ = writeln!(out, "{:>4}  {:<width$}  {:>10}", "rank", "vm", "score");
    for e in &table.entries {
        let value = e
            .value
            .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(out, "{:>4}  {:<width$}  {value:>10}", e.rank, e.vm_id);
    }
    out
}

fn evaluate_files(timings: &Path, tables: &[PathBuf], detail: bool, format: Format) -> CliResult {
    let file =
        std::fs::File::open(timings).with_context(|| format!("timings {}", timings.display()))?;
    let timings = read_timings(file).with_context(|| format!("timings {}", timings.display()))?;
    let mut all = Vec::new();
    for path in tables {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("rank tables {}", path.display()))?;
        all.extend(
            read_rank_tables(&text).with_context(|| format!("rank tables {}", path.display()))?,
        );
    }
    let reports = evaluate(&timings, &all).map_err(anyhow::Error::from)?;
    match format {
        Format::Records => {
            println!(
                "{}",
                serde_json::to_string(&reports).map_err(anyhow::Error::from)?
            )
        }
        Format::Text => {
            if detail {
                for r in &reports {
                    println!("{}", r.render());
                }
            }
            let correlations: Vec<_> = reports
                .iter()
                .flat_map(|r| r.correlations.clone())
                .collect();
            print!("{}", render_correlation_summary(&correlations));
        }
    }
    Ok(())
}

fn import(store: &Path, file: &Path, role: Option<DatasetRole>) -> CliResult {
    let text = std::fs::read_to_string(file)
        .with_context(|| format!("reading {}", file.display()))
        .map_err(Failure::usage)?;
    let mut dataset = read_canonical_str(&text)
        .with_context(|| format!("parsing {}", file.display()))
        .map_err(Failure::usage)?;
    if let Some(role) = role {
        dataset.role = role;
    }
    let id = open_store(store)?
        .put_dataset(&dataset)
        .map_err(anyhow::Error::from)?;
    println!("{id}");
    Ok(())
}

fn datasets(store: &Path) -> CliResult {
    for e in open_store(store)?
        .list_datasets()
        .map_err(anyhow::Error::from)?
    {
        println!(
            "{}  {:<10} {:<24} {}",
            e.dataset_id,
            e.role.as_str(),
            e.container.to_string(),
            e.stored_at.to_rfc3339()
        );
    }
    Ok(())
}

async fn serve(store: &Path, listen: SocketAddr) -> CliResult {
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .with_context(|| format!("binding {listen}"))?;
    let addr = listener.local_addr().map_err(anyhow::Error::from)?;
    let orch = orchestrator(open_store(store)?, OrchestratorConfig::default());
    let state = AppState::new(orch, Ranker::new(default_taxonomy()));
    println!("listening on http://{addr}");
    vmrank_api::serve(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(anyhow::Error::from)?;
    Ok(())
}
