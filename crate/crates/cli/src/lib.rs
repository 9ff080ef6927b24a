//! `spinekit`: batch spine-biomechanics analyses over pose keypoints, body
//! meshes, image sequences and muscle-model inputs.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use commands::{anthro, compare, kin, loads, msk, stability, track};
use config::RunConfig;
use error::{CliError, CliResult};
use report::{write_json, Report};

pub const DEFAULT_OUT_DIR: &str = "spinekit-out";

#[derive(Debug, Parser)]
#[command(
    name = "spinekit",
    version,
    about = "Spine biomechanics batch analyses"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for reports (default `spinekit-out`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Worker threads for processing independent inputs.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posture metrics from keypoint JSONL files.
    Kin(kin::KinArgs),
    /// Short- and long-term Lyapunov exponents.
    Stability(stability::StabilityArgs),
    /// Circumference, volume and mass from OBJ meshes.
    Anthro(anthro::AnthroArgs),
    /// Template tracking and acceleration from PGM frame directories.
    Track(track::TrackArgs),
    /// Muscle forces and disc loads from the musculoskeletal model.
    Msk(msk::MskArgs),
    /// Regression load equations.
    #[command(subcommand)]
    Loads(LoadsCommand),
    /// Correlation and absolute error between measured and estimated series.
    Compare(compare::CompareArgs),
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum LoadsCommand {
    /// Fit regression equations on a muscle-model grid.
    Fit(loads::FitArgs),
    /// Per-frame loads for keypoint files.
    Eval(loads::EvalArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kin(_) => "kin",
            Command::Stability(_) => "stability",
            Command::Anthro(_) => "anthro",
            Command::Track(_) => "track",
            Command::Msk(_) => "msk",
            Command::Loads(LoadsCommand::Fit(_)) => "loads fit",
            Command::Loads(LoadsCommand::Eval(_)) => "loads eval",
            Command::Compare(_) => "compare",
        }
    }
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            1
        }
    }
}

pub fn run(cli: Cli) -> CliResult<i32> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let workers = cli.workers.or(cfg.workers);
    if workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let command = cli.command.name();
    log::info!("running {command}");

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let report: Report = pool.install(|| match &cli.command {
        Command::Kin(a) => kin::run(a, &cfg),
        Command::Stability(a) => stability::run(a, &cfg),
        Command::Anthro(a) => anthro::run(a, &cfg),
        Command::Track(a) => track::run(a, &cfg),
        Command::Msk(a) => msk::run(a, &cfg),
        Command::Loads(LoadsCommand::Fit(a)) => loads::run_fit(a, &cfg),
        Command::Loads(LoadsCommand::Eval(a)) => loads::run_eval(a, &cfg),
        Command::Compare(a) => compare::run(a, &cfg),
    })?;

    let written = report.write(&out_dir)?;
    for p in &written {
        log::info!("wrote {}", p.display());
    }
    let summary = report.summary();
    for w in summary["warnings"].as_array().into_iter().flatten() {
        let code = w["code"].as_str().unwrap_or("");
        let message = w["message"].as_str().unwrap_or("");
        match w["input"].as_str() {
            Some(input) => log::warn!("[{code}] {input}: {message}"),
            None => log::warn!("[{code}] {message}"),
        }
    }
    for o in &report.outcomes {
        if let Err(e) = &o.result {
            eprintln!("error[{}]: {}: {e}", e.code(), o.input);
        }
    }
    let unix = |t: SystemTime| {
        t.duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0)
    };
    let metadata = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_s": unix(started),
        "elapsed_s": clock.elapsed().as_secs_f64(),
        "workers": pool.current_num_threads(),
        "config": cli.config.as_ref().map(|p| p.display().to_string()),
        "error_count": report.error_count(),
    });
    write_json(&out_dir.join("run_metadata.json"), &metadata)?;
    Ok(if report.error_count() == 0 { 0 } else { 1 })
}
