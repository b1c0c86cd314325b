//! Flat JSON run configuration. Command-line flags override file values,
//! which override built-in defaults.

use crate::error::CliError;
use drivestyle_core::sticky::EmissionMode;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Oxts,
}

/// Every field is optional; absent fields fall back to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,

    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub truncation: Option<usize>,
    pub niw_scale0: Option<f64>,
    pub niw_dof0: Option<f64>,
    pub psi_fraction: Option<f64>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub chains: Option<u32>,
    pub emission_mode: Option<EmissionMode>,
    pub standardize: Option<bool>,

    pub deadband: Option<f64>,
    pub stop_threshold: Option<f64>,

    pub format: Option<InputFormat>,
    pub rate_hz: Option<f64>,
    /// oxts field indices for `[v_f, v_l, a_f, a_l]`.
    pub oxts_columns: Option<[usize; 4]>,
    pub derive_accel: Option<bool>,
    pub frame_offset: Option<i64>,

    pub states: Option<usize>,
    pub length: Option<usize>,
    pub self_prob: Option<f64>,
    pub separation: Option<f64>,

    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub ranking: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub occupancy: Option<PathBuf>,
    pub out_timeline: Option<PathBuf>,
    pub out_report: Option<PathBuf>,
    pub out_truth: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::InputNotFound(path.to_path_buf()),
            _ => CliError::input(path, e),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// The file at `path`, or an empty config.
    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// `flag`, else `file`, else `default`.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// A path that must come from a flag or the config file.
pub fn require(flag: Option<PathBuf>, file: Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or(file)
        .ok_or_else(|| CliError::Usage(format!("missing required --{name} (flag or config field)")))
}

pub fn non_negative(name: &str, value: f64) -> Result<f64, CliError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::Config(format!("{name} must be a finite value >= 0, got {value}")))
    }
}
