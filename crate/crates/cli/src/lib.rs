//! Command-line front end for the driving-style pipeline.
//!
//! `ingest` normalizes a kinematic log, `fit` segments it, `rank` orders the
//! clusters by urgency, `map` joins scene labels into a risk timeline and
//! report, and `synth` draws labelled test data. Every successful command
//! prints a one-line JSON summary on stdout.

mod commands;
pub mod config;
pub mod error;
pub mod files;

use clap::{Args, Parser, Subcommand};
use config::InputFormat;
use drivestyle_core::sticky::EmissionMode;
use std::path::PathBuf;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "drivestyle", version, about = "Driving-style segmentation, urgency ranking and scenario mapping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a CSV or oxts log into canonical CSV (t,v_f,v_l,a_f,a_l).
    Ingest(IngestArgs),
    /// Segment a canonical CSV with the sticky HDP-HMM sampler.
    Fit(FitArgs),
    /// Assign urgency levels to fitted clusters.
    Rank(RankArgs),
    /// Join scene labels with ranked clusters into a risk timeline and report.
    Map(MapArgs),
    /// Generate a synthetic sticky-HMM drive with ground-truth labels.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV file, oxts directory (or its parent with a data/ subdirectory), or oxts record file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input format [default: oxts for directories, csv otherwise].
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Output canonical CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recompute a_f and a_l (m/s^2) from the velocities by finite differences.
    #[arg(long)]
    pub derive_accel: bool,
    /// oxts sampling rate in Hz [default: 10].
    #[arg(long)]
    pub rate: Option<f64>,
    /// oxts field indices for v_f,v_l,a_f,a_l (0-based) [default: 8,9,14,15].
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub oxts_columns: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Canonical CSV input (t in s, velocities in m/s, accelerations in m/s^2).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output model JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output per-frame labels CSV (t,cluster_id).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Optional segments CSV (cluster_id,start,end,t_start,t_end) for timeline plots.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Random seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gibbs sweeps [default: 300].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Sweeps discarded before picking the point estimate [default: 150].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Weak-limit truncation level L (number of states) [default: 20].
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Transition concentration alpha (dimensionless) [default: 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Top-level concentration gamma (dimensionless) [default: 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Self-transition bias kappa (dimensionless) [default: 10].
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Independent chains run concurrently; the best final log-density wins [default: 1].
    #[arg(long)]
    pub chains: Option<u32>,
    /// Emission covariance structure [default: full].
    #[arg(long, value_parser = parse_emission_mode)]
    pub emission_mode: Option<EmissionMode>,
    /// Z-score channels before fitting (true|false) [default: true].
    #[arg(long)]
    pub standardize: Option<bool>,
}

fn parse_emission_mode(s: &str) -> Result<EmissionMode, String> {
    match s {
        "full" => Ok(EmissionMode::Full),
        "diagonal" => Ok(EmissionMode::Diagonal),
        other => Err(format!("expected full or diagonal, got {other}")),
    }
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Canonical CSV input in physical units.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Labels CSV (t,cluster_id) from fit.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output ranking JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output occupancy CSV [default: ranking path with .occupancy.csv].
    #[arg(long)]
    pub occupancy: Option<PathBuf>,
    /// |mean a_f| at or below this (m/s^2) counts as non-braking [default: 0.05].
    #[arg(long)]
    pub deadband: Option<f64>,
    /// Minimum v_f at or below this (m/s) counts as a stop [default: 0.5].
    #[arg(long)]
    pub stop_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Canonical CSV input in physical units.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Labels CSV (t,cluster_id) from fit.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Ranking JSON from rank.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    /// Tracking label file (frame track_id type ... location(m) rotation_y).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Output timeline CSV (t,cluster_id,level,coarse,number,distance,type,angle).
    #[arg(long)]
    pub out_timeline: Option<PathBuf>,
    /// Output correlation report JSON.
    #[arg(long)]
    pub out_report: Option<PathBuf>,
    /// Frames added to every label frame index before joining [default: 0].
    #[arg(long, allow_hyphen_values = true)]
    pub frame_offset: Option<i64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of hidden states K (>= 1) [default: 3].
    #[arg(long)]
    pub states: Option<usize>,
    /// Number of frames T [default: 2000].
    #[arg(long)]
    pub length: Option<usize>,
    /// Random seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Self-transition probability P in [0, 1) [default: 0.95].
    #[arg(long)]
    pub self_prob: Option<f64>,
    /// Distance between state means, in unit standard deviations [default: 10].
    #[arg(long)]
    pub separation: Option<f64>,
    /// Sampling rate in Hz [default: 10].
    #[arg(long)]
    pub rate: Option<f64>,
    /// Output canonical CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output ground-truth labels CSV (t,cluster_id).
    #[arg(long)]
    pub out_truth: Option<PathBuf>,
}

/// Runs one subcommand and returns its summary.
pub fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Fit(a) => commands::fit(a),
        Command::Rank(a) => commands::rank(a),
        Command::Map(a) => commands::map(a),
        Command::Synth(a) => commands::synth(a),
    }
}
