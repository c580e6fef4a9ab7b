use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use taskloom_core::orchestrator::ControllerConfig;
use taskloom_core::reasoner::{BackendConfig, API_KEY_ENV};
use taskloom_core::registry::{Registry, ReqwestTransport};
use taskloom_eval::bench::{Backend, BenchExecutor};
use taskloom_eval::classify::{ClassificationStore, Taxonomy};
use taskloom_eval::compare::compare_runs;
use taskloom_eval::fixtures::{full_run, levels_run};
use taskloom_eval::manifest::bundled_manifest;
use taskloom_eval::metrics::compute_metrics;
use taskloom_eval::replay::replay;
use taskloom_eval::runner::{run_benchmark, RunOptions, TaskExecutor};
use taskloom_eval::sample::{draw_sample, SampleName, SampleSpec, DEFAULT_SEED};
use taskloom_eval::service::{serve, AppState};
use taskloom_eval::store::RunStore;
use taskloom_eval::trajectory_store::TrajectoryStore;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "agent", version, about = "Run, score and inspect multi-agent benchmark runs")]
struct Cli {
    /// Where runs, trajectories and classifications live.
    #[arg(long, global = true, default_value = "agent-data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleArg {
    Initial,
    Nano,
    Micro,
    Mini,
    Full,
}

impl From<SampleArg> for SampleName {
    fn from(s: SampleArg) -> Self {
        match s {
            SampleArg::Initial => SampleName::Initial,
            SampleArg::Nano => SampleName::Nano,
            SampleArg::Micro => SampleName::Micro,
            SampleArg::Mini => SampleName::Mini,
            SampleArg::Full => SampleName::Full,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a ladder sample of the bundled benchmark.
    Run {
        #[arg(long, value_enum, default_value = "initial")]
        sample: SampleArg,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value = "dev")]
        agent_version: String,
        #[arg(long, value_enum, default_value = "scripted")]
        backend: BackendArg,
        /// Chat-completion endpoint (remote backend).
        #[arg(long)]
        endpoint: Option<String>,
        /// Model name sent to the endpoint (remote backend).
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Defaults to `<agent-version>-<sample>-<UTC timestamp>`.
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Bucket the tasks of NEW by how they moved since BASE.
    Compare { base: String, new: String },
    /// Completion rates and interaction counts of a stored run.
    Metrics { run: String },
    /// Serve the results API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Also load the two bundled fixture runs.
        #[arg(long)]
        with_fixtures: bool,
    },
    /// Tool registry maintenance.
    Registry {
        #[command(subcommand)]
        action: RegistryAction,
    },
    /// Re-execute one task from its saved script and diff the trace.
    Replay { run: String, task: String },
}

#[derive(Subcommand)]
enum RegistryAction {
    /// Minimise an OpenAPI document and print the resulting manifest.
    Ingest {
        spec: PathBuf,
        #[arg(long)]
        app: String,
        #[arg(long)]
        base_url: String,
    },
}

fn runs_root(data: &Path) -> PathBuf {
    data.join("runs")
}

fn open_runs(data: &Path) -> Result<RunStore> {
    Ok(RunStore::open(runs_root(data))?)
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    data: &Path,
    sample: SampleArg,
    workers: usize,
    agent_version: String,
    backend: BackendArg,
    endpoint: Option<String>,
    model: Option<String>,
    seed: u64,
    run_id: Option<String>,
) -> Result<()> {
    let backend = match backend {
        BackendArg::Scripted => Backend::Scripted,
        BackendArg::Remote => {
            let endpoint = endpoint.ok_or("--endpoint is required with --backend remote")?;
            let model = model.ok_or("--model is required with --backend remote")?;
            if std::env::var(API_KEY_ENV).is_err() {
                eprintln!("note: {API_KEY_ENV} is not set; requests go out without an API key");
            }
            Backend::Remote(BackendConfig::remote(endpoint, model))
        }
    };
    // Fail early on a bad backend instead of once per worker.
    BenchExecutor::new(backend.clone(), ControllerConfig::default())?;
    let spec = SampleSpec::ladder(sample.into(), seed);
    let manifest = bundled_manifest();
    let tasks = draw_sample(&manifest, &spec)?;
    let run_id = run_id.unwrap_or_else(|| {
        format!(
            "{agent_version}-{}-{}",
            spec.name.as_str(),
            chrono::Utc::now().format("%Y%m%dT%H%M%S")
        )
    });
    let runs = open_runs(data)?;
    if runs.contains(&run_id) {
        return Err(format!("run `{run_id}` already exists").into());
    }
    let trajectories = Arc::new(TrajectoryStore::new(runs_root(data), true));
    let opts = RunOptions {
        run_id: run_id.clone(),
        agent_version,
        sample: spec,
        workers,
    };
    let factory = || {
        Box::new(BenchExecutor::new(backend.clone(), ControllerConfig::default()).expect("backend checked above"))
            as Box<dyn TaskExecutor>
    };
    let out = run_benchmark(&tasks, factory, &opts, Some(trajectories))?;
    for (task, script) in &out.scripts {
        runs.save_script(&run_id, task, script)?;
    }
    let metrics = compute_metrics(&out.record)?;
    runs.save(out.record)?;
    eprintln!(
        "run {run_id}: {}/{} tasks passed ({:.2}%)",
        metrics.overall.successes, metrics.overall.tasks, metrics.overall.task_completion_rate
    );
    print_json(&metrics)
}

fn get_run(runs: &RunStore, id: &str) -> Result<taskloom_eval::record::RunRecord> {
    runs.get(id).ok_or_else(|| format!("unknown run `{id}`").into())
}

fn cmd_serve(data: &Path, host: &str, port: u16, with_fixtures: bool) -> Result<()> {
    let runs = open_runs(data)?;
    if with_fixtures {
        runs.save(full_run())?;
        runs.save(levels_run())?;
    }
    let state = AppState {
        runs: Arc::new(runs),
        trajectories: Some(Arc::new(TrajectoryStore::new(runs_root(data), true))),
        classifications: Arc::new(ClassificationStore::open(
            data.join("classifications.jsonl"),
            Taxonomy::default(),
        )?),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        serve(listener, state).await
    })?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let data = cli.data_dir.as_path();
    match cli.command {
        Command::Run {
            sample,
            workers,
            agent_version,
            backend,
            endpoint,
            model,
            seed,
            run_id,
        } => cmd_run(data, sample, workers, agent_version, backend, endpoint, model, seed, run_id)?,
        Command::Compare { base, new } => {
            let runs = open_runs(data)?;
            print_json(&compare_runs(&get_run(&runs, &base)?, &get_run(&runs, &new)?))?;
        }
        Command::Metrics { run } => {
            let runs = open_runs(data)?;
            print_json(&compute_metrics(&get_run(&runs, &run)?)?)?;
        }
        Command::Serve {
            port,
            host,
            with_fixtures,
        } => cmd_serve(data, &host, port, with_fixtures)?,
        Command::Registry {
            action: RegistryAction::Ingest { spec, app, base_url },
        } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| format!("{}: {e}", spec.display()))?;
            let registry = Registry::new(Arc::new(ReqwestTransport::new()?));
            let manifest = registry.ingest_spec(&text, &app, &base_url)?;
            eprintln!("{}: {} tools", manifest.app_id, manifest.tools.len());
            print_json(&manifest)?;
        }
        Command::Replay { run, task } => {
            let runs = open_runs(data)?;
            let trajectories = TrajectoryStore::new(runs_root(data), true);
            let exec = BenchExecutor::scripted();
            let report = replay(&runs, &trajectories, &bundled_manifest(), &exec, &run, &task)?;
            print_json(&report)?;
            if !report.identical() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
