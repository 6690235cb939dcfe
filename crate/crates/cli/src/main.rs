//! `vobs`: status, checks, trace replay, exploration and the HTTP server
//! over a project directory.
//!
//! Exit codes: 0 when every requested obligation is discharged, 1 when some
//! are failed, stale or unchecked, 2 on usage, load or I/O errors.

mod render;

use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgGroup, Parser, Subcommand};
use thiserror::Error;
use vobs_core::engine::{explore, Limits, Model, DEFAULT_MAX_TRANSITIONS};
use vobs_core::refinement::{parse_trace, replay_trace};
use vobs_core::vo::{
    replay_evidence, status_report, Clock, FixedClock, LedgerError, LoadError, ManagerError,
    Project, SystemClock, VoManager, VoRecord,
};
use vobs_server::{AppState, ServerConfig};

#[derive(Debug, Parser)]
#[command(
    name = "vobs",
    version,
    about = "Validation obligations over refinement lattices of state machines"
)]
struct Cli {
    /// Project directory, or the project.vobs file itself.
    #[arg(short = 'C', long = "project", global = true, default_value = ".")]
    project: PathBuf,

    /// Exploration cap on states used when neither the project nor the
    /// obligation sets one.
    #[arg(long, global = true, env = "VOBS_LIMITS_MAX_STATES", value_name = "N")]
    max_states: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Refresh staleness and print the obligation table.
    Status {
        /// Print the ledger records as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check one obligation or all of them and update the ledger.
    #[command(group(ArgGroup::new("which").required(true).args(["id", "all"])))]
    Check {
        id: Option<String>,
        #[arg(long)]
        all: bool,
        /// `STATES` or `STATES,TRANSITIONS`, replacing every other limit.
        #[arg(long, value_parser = parse_limits, value_name = "STATES[,TRANSITIONS]")]
        limits: Option<Limits>,
        /// Print the checked records as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Replay a trace file on a project model.
    Replay {
        trace: PathBuf,
        /// Model to replay on instead of the one named in the trace.
        #[arg(long)]
        machine: Option<String>,
    },
    /// Explore a model and print state-space counts.
    Explore {
        machine: String,
        /// Also print the transitions as `from<TAB>label<TAB>to`.
        #[arg(long)]
        edges: bool,
        #[arg(long, value_parser = parse_limits, value_name = "STATES[,TRANSITIONS]")]
        limits: Option<Limits>,
    },
    /// Serve the JSON API on localhost.
    Serve {
        /// 0 picks a free port and prints it.
        #[arg(long, default_value_t = 7070)]
        port: u16,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Manager(#[from] ManagerError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn parse_limits(s: &str) -> Result<Limits, String> {
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    let (states, transitions) = match s.split_once(',') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => (num(s)?, DEFAULT_MAX_TRANSITIONS),
    };
    if states == 0 || transitions == 0 {
        return Err("limits must be positive".into());
    }
    Ok(Limits {
        max_states: states,
        max_transitions: transitions,
    })
}

/// `VOBS_NOW` pins record timestamps.
fn clock() -> Arc<dyn Clock> {
    match std::env::var("VOBS_NOW") {
        Ok(now) if !now.is_empty() => Arc::new(FixedClock(now)),
        _ => Arc::new(SystemClock),
    }
}

/// Writes to stdout; a closed pipe ends the process quietly.
fn emit(text: &str) {
    if let Err(e) = io::stdout().lock().write_all(text.as_bytes()) {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed writing to stdout: {e}");
    }
}

fn code(all_discharged: bool) -> ExitCode {
    ExitCode::from(if all_discharged { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let mut base = Limits::default();
    if let Some(n) = cli.max_states {
        base.max_states = n;
    }
    match cli.command {
        Command::Status { json } => status(&cli.project, base, json),
        Command::Check {
            id,
            all,
            limits,
            json,
        } => check(&cli.project, base, id.filter(|_| !all), limits, json),
        Command::Replay { trace, machine } => replay(&cli.project, base, &trace, machine),
        Command::Explore {
            machine,
            edges,
            limits,
        } => explore_cmd(&cli.project, base, &machine, edges, limits),
        Command::Serve { port } => serve(&cli.project, base, port),
    }
}

fn status(project: &Path, base: Limits, json: bool) -> Result<ExitCode, CliError> {
    let m = VoManager::load(project, base, clock())?;
    let (ledger, stale) = m.refreshed_ledger()?;
    if !stale.is_empty() {
        m.write_ledger(&ledger)?;
    }
    let report = status_report(m.project(), &ledger);
    if json {
        emit(&format!("{}\n", ledger.to_json()));
    } else {
        emit(&report.to_string());
    }
    Ok(code(report.totals.discharged == report.totals.total()))
}

fn check(
    project: &Path,
    base: Limits,
    id: Option<String>,
    limits: Option<Limits>,
    json: bool,
) -> Result<ExitCode, CliError> {
    let m = VoManager::load(project, base, clock())?.with_limits(limits);
    let (mut ledger, _) = m.refreshed_ledger()?;
    let records: Vec<VoRecord> = match id {
        None => m.check_all(&mut ledger),
        Some(id) => {
            let r = match m.check_vo(&id, None, &ledger) {
                Ok(r) => r,
                Err(e @ ManagerError::UnknownVo(_)) => return Err(e.into()),
                Err(e) => m.error_record(&id, &e),
            };
            ledger.upsert(r.clone());
            vec![r]
        }
    };
    m.write_ledger(&ledger)?;
    if json {
        let text = serde_json::to_string_pretty(&records).expect("records serialize");
        emit(&format!("{text}\n"));
    } else {
        for r in &records {
            emit(&render::record(r));
        }
    }
    Ok(code(records.iter().all(VoRecord::is_discharged)))
}

fn load_project(project: &Path, base: Limits) -> Result<Project, CliError> {
    let m = VoManager::load(project, base, clock())?;
    Ok(m.project().clone())
}

fn model_of(project: &Project, name: &str) -> Result<Model, CliError> {
    let machine = project
        .machine(name)
        .ok_or_else(|| CliError::Usage(format!("unknown model {name}")))?;
    Model::new(machine).map_err(|e| CliError::Usage(e.to_string()))
}

fn replay(
    project: &Path,
    base: Limits,
    trace: &Path,
    machine: Option<String>,
) -> Result<ExitCode, CliError> {
    let p = load_project(project, base)?;
    let path = if trace.exists() {
        trace.to_path_buf()
    } else {
        p.resolve(&trace.to_string_lossy())
    };
    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: trace.display().to_string(),
        source,
    })?;
    let t = parse_trace(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let model = model_of(&p, machine.as_deref().unwrap_or(&t.machine))?;
    let out = replay_trace(&model, &t);
    let ev = replay_evidence(&model, &t, &out);
    emit(&format!("{}\n", ev.summary));
    if let Some(text) = &ev.text {
        emit(&format!("{text}\n"));
    }
    Ok(code(out.is_pass()))
}

fn explore_cmd(
    project: &Path,
    base: Limits,
    machine: &str,
    edges: bool,
    limits: Option<Limits>,
) -> Result<ExitCode, CliError> {
    let p = load_project(project, base)?;
    let model = model_of(&p, machine)?;
    let space =
        explore(&model, limits.unwrap_or(p.limits)).map_err(|e| CliError::Usage(e.to_string()))?;
    emit(&render::space(&model, &space));
    if edges {
        emit(&space.edge_list());
    }
    Ok(code(
        space.is_complete() && space.invariant_violations.is_empty(),
    ))
}

fn serve(project: &Path, base: Limits, port: u16) -> Result<ExitCode, CliError> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let config = ServerConfig {
        limits: base,
        ..ServerConfig::default()
    };
    let state = AppState::load(project, config, clock())?;
    let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
        path: "runtime".into(),
        source,
    })?;
    rt.block_on(async move {
        let addr = format!("127.0.0.1:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|source| CliError::Io {
                path: addr.clone(),
                source,
            })?;
        let local = listener
            .local_addr()
            .map_err(|source| CliError::Io { path: addr, source })?;
        println!("listening on http://{local}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        vobs_server::serve(listener, state, shutdown)
            .await
            .map_err(|source| CliError::Io {
                path: local.to_string(),
                source,
            })
    })?;
    Ok(ExitCode::SUCCESS)
}
