//! The `gaitway` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. With `--json`
//! every command prints a single JSON document on stdout.

pub mod config;
mod ctl;
mod offline;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use gaitway_core::sim::{preset, synthesize, PresetKind};
use gaitway_core::store::track_to_csv;
use gaitway_server::client::{run_client, ClientConfig, Faults};
use gaitway_server::storage::read_secret_file;
use gaitway_server::ServerConfig;
use serde::Serialize;
use thiserror::Error;

pub use config::{resolve, FileConfig, Settings};
pub use ctl::{CtlCommand, API_PARITY};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "gaitway", version, about = "Gait assessment toolkit: ingestion server, simulator, features and classifiers")]
pub struct Cli {
    /// Root directory for projects and sessions.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Address the server binds to.
    #[arg(long, global = true)]
    pub listen: Option<String>,
    /// Seed for simulation and training (overrides the spec's seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Config file (default ./gaitway.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Server address for remote commands (host:port or URL).
    #[arg(long, global = true)]
    pub server: Option<String>,
    #[arg(long, global = true)]
    pub project: Option<String>,
    /// Project secret for remote commands.
    #[arg(long, global = true)]
    pub secret: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the ingestion server and HTTP API.
    Serve(ServeArgs),
    /// Generate a synthetic session and stream it to a server or write CSV.
    Simulate(SimulateArgs),
    /// Clinical features of a stored session.
    Extract(offline::ExtractArgs),
    /// Dashboard aggregations of a stored session.
    Dashboard(offline::DashboardArgs),
    /// Time-aligned forward acceleration of two stored sessions.
    Overlay(offline::OverlayArgs),
    /// Cross-validate a classifier and fit a final model.
    Train(offline::TrainArgs),
    /// Apply a trained model to stored sessions.
    Evaluate(offline::EvaluateArgs),
    /// Write stored sessions as CSV and JSON.
    Export(offline::ExportArgs),
    /// Call the HTTP API of a running server.
    Ctl {
        #[command(subcommand)]
        command: CtlCommand,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Bootstrap credentials (JSON); also GAITWAY_SECRET_FILE.
    #[arg(long)]
    pub secret_file: Option<PathBuf>,
    /// Static web UI assets served under /ui; also GAITWAY_UI_DIR.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Token lifetime in seconds (default one day).
    #[arg(long)]
    pub token_ttl_s: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// typical_child or impaired_gait.
    #[arg(long)]
    pub preset: PresetKind,
    #[arg(long, default_value_t = 360.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 50.0)]
    pub rate: f64,
    /// Playback speed relative to real time; 0 streams as fast as acks allow.
    #[arg(long, default_value_t = 1.0)]
    pub speedup: f64,
    #[arg(long, default_value_t = 50)]
    pub batch: usize,
    /// Write the synthetic track to this CSV file instead of streaming.
    #[arg(long)]
    pub emit_csv: Option<PathBuf>,
    /// Participant to record (default sim-<preset>-<seed>).
    #[arg(long)]
    pub participant: Option<String>,
    /// Create the participant with this class label if missing.
    #[arg(long)]
    pub label: Option<String>,
    /// Create the participant (unlabeled unless --label) if missing.
    #[arg(long)]
    pub create_participant: bool,
    /// Press record through the API as soon as the client is armed.
    #[arg(long)]
    pub auto_record: bool,
    /// Seconds to wait for the record button.
    #[arg(long, default_value_t = 600)]
    pub start_timeout: u64,
    #[arg(long, default_value_t = 0.0)]
    pub dup_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gap_rate: f64,
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(matches!(cli.command, Command::Serve(_)));
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(serving: bool) {
    use tracing_subscriber::EnvFilter;
    let default = if serving { "info" } else { "warn" };
    let filter = EnvFilter::try_from_env("GAITWAY_LOG").unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

pub fn settings(cli: &Cli) -> Result<Settings, CliError> {
    let mut flags = FileConfig {
        data_dir: cli.data_dir.clone(),
        listen: cli.listen.clone(),
        seed: cli.seed,
        server: cli.server.clone(),
        project: cli.project.clone(),
        secret: cli.secret.clone(),
        ..FileConfig::default()
    };
    if let Command::Serve(a) = &cli.command {
        flags.secret_file = a.secret_file.clone();
        flags.ui_dir = a.ui_dir.clone();
        flags.token_ttl_s = a.token_ttl_s;
    }
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("GAITWAY_CONFIG").map(PathBuf::from))
        .or_else(|| {
            let p = PathBuf::from(config::CONFIG_FILE);
            p.is_file().then_some(p)
        });
    let file = match path {
        Some(p) => FileConfig::load(&p)?,
        None => FileConfig::default(),
    };
    resolve(&flags, |k| std::env::var(k).ok(), &file)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let s = settings(&cli)?;
    let out = Output { json: cli.json };
    match cli.command {
        Command::Serve(_) => serve(&s),
        Command::Simulate(a) => simulate(&s, &out, &a),
        Command::Extract(a) => offline::extract(&s, &out, &a),
        Command::Dashboard(a) => offline::dashboard(&s, &out, &a),
        Command::Overlay(a) => offline::overlay(&s, &out, &a),
        Command::Train(a) => offline::train(&s, &out, &a),
        Command::Evaluate(a) => offline::evaluate(&s, &out, &a),
        Command::Export(a) => offline::export(&s, &out, &a),
        Command::Ctl { command } => ctl::run(&s, &out, command),
    }
}

pub(crate) struct Output {
    pub json: bool,
}

impl Output {
    /// JSON on stdout with `--json`, otherwise the human rendering.
    pub fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) -> Result<(), CliError> {
        let text = if self.json {
            serde_json::to_string(value).map_err(runtime)?
        } else {
            human()
        };
        let mut stdout = std::io::stdout().lock();
        writeln!(stdout, "{text}").map_err(runtime)
    }

    pub fn pretty<T: Serialize>(value: &T) -> String {
        serde_json::to_string_pretty(value).unwrap_or_default()
    }
}

fn serve(s: &Settings) -> Result<(), CliError> {
    let mut cfg = ServerConfig::new(&s.data_dir, s.listen);
    if let Some(ttl) = s.token_ttl_s {
        cfg.token_ttl = Duration::from_secs(ttl);
    }
    if let Some(path) = &s.secret_file {
        cfg.secrets = Some(read_secret_file(path).map_err(runtime)?);
    }
    cfg.ui_dir = s.ui_dir.clone();
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(gaitway_server::serve(cfg, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
    .map_err(runtime)
}

#[derive(Serialize)]
struct EmitReport<'a> {
    path: &'a str,
    samples: usize,
    steps: usize,
}

fn simulate(s: &Settings, out: &Output, a: &SimulateArgs) -> Result<(), CliError> {
    let profile = preset(a.preset, s.seed);
    if let Some(path) = &a.emit_csv {
        let (track, truth) = synthesize(&profile, a.duration, a.rate).map_err(|e| CliError::Usage(e.to_string()))?;
        std::fs::write(path, track_to_csv(&track)).map_err(runtime)?;
        let r = EmitReport {
            path: &path.to_string_lossy(),
            samples: track.len(),
            steps: truth.step_times_s.len(),
        };
        return out.emit(&r, || format!("wrote {} samples ({} steps) to {}", r.samples, r.steps, r.path));
    }
    let project = s.project.clone().ok_or_else(|| CliError::Usage("--project is required to stream".into()))?;
    let secret = s.secret.clone().ok_or_else(|| CliError::Usage("--secret is required to stream".into()))?;
    let participant = a
        .participant
        .clone()
        .unwrap_or_else(|| format!("sim-{}-{}", a.preset.as_str(), s.seed));
    let mut cfg = ClientConfig::new(&s.server, &project, &secret, &participant, profile);
    cfg.duration_s = a.duration;
    cfg.rate_hz = a.rate;
    cfg.speedup = a.speedup;
    cfg.batch_size = a.batch;
    cfg.auto_record = a.auto_record;
    cfg.start_timeout = Duration::from_secs(a.start_timeout);
    cfg.faults = Faults {
        dup_rate: a.dup_rate,
        gap_rate: a.gap_rate,
        seed: s.seed,
    };
    if a.create_participant || a.label.is_some() {
        cfg.create_participant = Some(a.label.clone());
    }
    if !a.auto_record && !out.json {
        eprintln!("waiting for the record button (session will appear for participant {participant})");
    }
    let r = run_client(&cfg).map_err(runtime)?;
    out.emit(&r, || {
        format!(
            "session {}: {} samples acked in {} batches ({:.1} s){}",
            r.session_id,
            r.samples_acked,
            r.batches_acked,
            r.elapsed_s,
            if r.stopped_by_server { ", stopped by server" } else { "" }
        )
    })
}
