//! Command-line front end: `generate`, `record`, `run`, `inspect`.

mod table;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

pub use table::{
    format_table, inspect_csv, parse_table, per_query_csv, run_matrix, Budget, ExperimentMatrix,
    MatrixRow, TableFormat,
};

use crate::metrics::MetricsError;
use crate::policy::{PolicyConfig, PolicyError};
use crate::recorder::{load_registrations, record_revision, EndpointConfig, RecorderError, SparqlClient, TraceRecorder};
use crate::sim::{write_log, SimError};
use crate::trace::{load_trace, save_trace, TraceError};
use crate::tracegen::{generate_trace, GeneratorConfig, GeneratorError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Policy(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qrefresh", version, about = "Refresh-query scheduling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic change trace.
    Generate(GenerateArgs),
    /// Record a change trace from a live SPARQL endpoint.
    Record(RecordArgs),
    /// Replay a trace under a matrix of policies and budgets.
    Run(RunArgs),
    /// Emit per-revision (and optionally per-query) change statistics.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub revisions: Option<usize>,
    /// key=value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set churn=0.5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub settings: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[arg(long)]
    pub endpoint: String,
    /// Query list: `<id>\t<form>\t<ordered>\t<query-base64>` per line.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub polls: usize,
    /// Seconds to wait between polls.
    #[arg(long, default_value_t = 3600)]
    pub interval: u64,
    #[arg(long, default_value_t = 60_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 100)]
    pub delay_ms: u64,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// `NAME[:k=v,...]`, e.g. `cr:lambda=0.5` or `ttl:max=32,on_change=reset`.
    #[arg(long = "policy", value_parser = parse_policy)]
    pub policies: Vec<PolicyConfig>,
    /// `inf`, `<sec>s` or `<ms>ms`.
    #[arg(long = "budget", value_parser = parse_budget)]
    pub budgets: Vec<Budget>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one execution audit log per run into this directory.
    #[arg(long)]
    pub audit_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-query change slots here as well.
    #[arg(long)]
    pub per_query: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<PolicyConfig, String> {
    s.parse().map_err(|e: PolicyError| e.to_string())
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn parse_format(s: &str) -> Result<TableFormat, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut cfg = GeneratorConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for kv in &args.settings {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.queries {
        cfg.n_queries = n;
    }
    if let Some(n) = args.revisions {
        cfg.n_revisions = n;
    }
    let trace = generate_trace(&cfg)?;
    save_trace(&trace, &args.out)?;
    info!(
        "wrote {} queries x {} revisions ({} changes) to {}",
        trace.n_queries(),
        trace.n_revisions(),
        trace.total_changes(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_record(args: &RecordArgs) -> Result<(), CliError> {
    let registrations = load_registrations(&args.queries)?;
    let mut client = SparqlClient::new(EndpointConfig {
        endpoint_url: args.endpoint.clone(),
        timeout_ms: args.timeout_ms,
        delay_ms: args.delay_ms,
        max_retries: args.retries,
    });
    let mut progress = TraceRecorder::open(&args.out, registrations.len())?;
    for poll in 0..args.polls {
        if poll > 0 {
            thread::sleep(Duration::from_secs(args.interval));
        }
        let trace = record_revision(&mut client, &registrations, &mut progress)?;
        info!("recorded revision {} to {}", trace.n_revisions(), args.out.display());
    }
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<String, CliError> {
    let matrix = ExperimentMatrix::new(args.policies.clone(), args.budgets.clone())?;
    let trace = load_trace(&args.trace)?;
    let rows = run_matrix(&trace, &matrix)?;
    if let Some(dir) = &args.audit_dir {
        fs::create_dir_all(dir)?;
        for (row, log) in &rows {
            let name = format!("{}_{}.log", row.policy, row.budget).replace([':', ',', '='], "_");
            write_log(log, io::BufWriter::new(fs::File::create(dir.join(name))?))?;
        }
    }
    let rows: Vec<MatrixRow> = rows.into_iter().map(|(row, _)| row).collect();
    let table = format_table(&rows, args.format);
    write_output(args.out.as_deref(), &table)?;
    Ok(table)
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<(), CliError> {
    let trace = load_trace(&args.trace)?;
    write_output(args.out.as_deref(), &inspect_csv(&trace))?;
    if let Some(path) = &args.per_query {
        fs::write(path, per_query_csv(&trace))?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Record(a) => cmd_record(a),
        Command::Run(a) => cmd_run(a).map(drop),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

/// Binary entry point.
pub fn main_entry() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
