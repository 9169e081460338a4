//! `pv-pipeline`: operator and CI front end.
//!
//! Exit codes: 0 ok, 1 configuration or usage error, 2 runtime error,
//! 3 verification failure. Verbosity comes from `PV_PIPELINE_LOG`
//! (`error`, `info` or `debug`; default `error`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "pv-pipeline", version, about = "UAV photovoltaic inspection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a synthetic mission and write report.json, report.kml, metrics.csv and summary.txt.
    Simulate(SimulateArgs),
    /// Cluster line-delimited projected detections into defect events.
    Dedup(DedupArgs),
    /// Run one simulated mission per parameter value and write a metrics table.
    Sweep(SweepArgs),
    /// Finite-difference check of every loss gradient plus closed-form loss identities.
    FuseCheck(FuseCheckArgs),
    /// Walk through one gimbal re-centering solution for a pixel.
    ReacquireDemo(ReacquireArgs),
    /// Convert a report JSON payload to KML.
    ExportKml(ExportKmlArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Pipeline configuration (JSON). Missing sections take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the projected detections, one JSON record per line.
    #[arg(long)]
    pub detections: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// Projected detections, one JSON record per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Neighborhood radius in meters.
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 2)]
    pub min_pts: usize,
    /// Report JSON with one record per event.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "OFFLINE")]
    pub site_id: String,
    #[arg(long, default_value = "UNKNOWN")]
    pub uav: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// altitude, speed, epsilon or along_overlap.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Seeds to run per value; rows are emitted for every seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding dimension.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    /// Test hook: corrupt one analytic gradient.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReacquireArgs {
    /// Target pixel as `U,V`.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_negative_numbers = true)]
    pub pixel: Vec<f64>,
    #[arg(long)]
    pub fx: f64,
    #[arg(long)]
    pub fy: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub cx: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub cy: f64,
    /// Height above the ground plane, meters.
    #[arg(long, allow_negative_numbers = true)]
    pub alt: f64,
    /// Gimbal pitch in degrees; -90 looks straight down, 0 at the horizon.
    #[arg(long, allow_negative_numbers = true)]
    pub gimbal_pitch: f64,
    /// Gimbal yaw relative to the body, degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gimbal_yaw: f64,
    /// Body heading, degrees clockwise from north.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub heading: f64,
}

#[derive(Debug, Args)]
pub struct ExportKmlArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("PV_PIPELINE_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Dedup(a) => commands::dedup(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::FuseCheck(a) => commands::fuse_check(&a),
        Command::ReacquireDemo(a) => commands::reacquire_demo(&a),
        Command::ExportKml(a) => commands::export_kml(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pv-pipeline: {f}");
            ExitCode::from(f.code())
        }
    }
}
