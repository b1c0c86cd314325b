//! On-disk formats shared by the subcommands.

use crate::error::CliError;
use drivestyle_core::ingest::{parse_csv, DrivingSeries};
use drivestyle_core::ranking::{Coarse, Level, LevelAssignment, UrgencyRanking};
use drivestyle_core::segment::Segment;
use drivestyle_core::sticky::{FitOptions, PriorSettings};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const LABELS_HEADER: &str = "t,cluster_id";

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::InputNotFound(path.to_path_buf()),
        _ => CliError::input(path, e),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_series(path: &Path) -> Result<DrivingSeries, CliError> {
    let text = read_text(path)?;
    parse_csv(&text, &path.display().to_string()).map_err(|e| CliError::input(path, e))
}

pub fn labels_csv(timestamps: &[f64], labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 12);
    out.push_str(LABELS_HEADER);
    out.push('\n');
    for (t, z) in timestamps.iter().zip(labels) {
        let _ = writeln!(out, "{t},{z}");
    }
    out
}

/// Reads `t,cluster_id` rows; only the id column is used.
pub fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == LABELS_HEADER => {}
        Some((i, h)) => {
            return Err(CliError::input(
                path,
                format!("line {}: expected header `{LABELS_HEADER}`, found {h:?}", i + 1),
            ))
        }
        None => return Err(CliError::input(path, "empty labels file")),
    }
    lines
        .map(|(i, l)| {
            l.split(',')
                .nth(1)
                .and_then(|f| f.trim().parse::<usize>().ok())
                .ok_or_else(|| CliError::input(path, format!("line {}: bad label row {l:?}", i + 1)))
        })
        .collect()
}

pub fn segments_csv(timestamps: &[f64], segments: &[Segment]) -> String {
    let mut out = String::from("cluster_id,start,end,t_start,t_end\n");
    for s in segments {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.cluster_id,
            s.start,
            s.end,
            timestamps[s.start],
            timestamps[s.end - 1]
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub mean: [f64; 4],
    pub scale: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRecord {
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub truncation: usize,
    pub niw_mean0: Vec<f64>,
    pub niw_scale0: f64,
    pub niw_dof0: f64,
    /// Row-major.
    pub niw_psi0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub means: Vec<Vec<f64>>,
    /// One row-major matrix per state.
    pub covariances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub id: usize,
    /// Model state behind this cluster.
    pub state: usize,
    pub frames: usize,
    pub occupancy: f64,
    /// Emission mean mapped back to input units.
    pub mean: [f64; 4],
}

/// Model JSON written by `fit`. Emission parameters live in the
/// standardized space described by `transform`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub source: String,
    pub frames: usize,
    pub seed: u64,
    pub chains: u32,
    pub chain: u32,
    pub settings: PriorSettings,
    pub options: FitOptions,
    pub standardize: bool,
    pub transform: TransformRecord,
    pub hyper: HyperRecord,
    pub best_iteration: usize,
    pub n_clusters: usize,
    pub clusters: Vec<ClusterRecord>,
    pub weights: Vec<f64>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: EmissionRecord,
    /// Joint log-density after each sweep.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCluster {
    pub id: usize,
    pub rank: usize,
    pub level: Level,
    pub coarse: Coarse,
    pub score: f64,
    pub occupancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingThresholds {
    pub deadband: f64,
    pub stop_threshold: f64,
}

/// Ranking JSON written by `rank`; `clusters` runs safest to most dangerous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingFile {
    pub clusters: Vec<RankedCluster>,
    pub order: Vec<usize>,
    pub coarse_occupancy: std::collections::BTreeMap<String, f64>,
    pub thresholds: RankingThresholds,
}

impl RankingFile {
    pub fn from_ranking(ranking: &UrgencyRanking, thresholds: RankingThresholds) -> Self {
        Self {
            clusters: ranking
                .order
                .iter()
                .enumerate()
                .map(|(rank, a)| RankedCluster {
                    id: a.cluster_id,
                    rank,
                    level: a.level,
                    coarse: a.coarse,
                    score: a.score,
                    occupancy: a.occupancy,
                })
                .collect(),
            order: ranking.order.iter().map(|a| a.cluster_id).collect(),
            coarse_occupancy: Coarse::ALL
                .iter()
                .zip(ranking.coarse_occupancy)
                .map(|(c, v)| (c.as_str().to_string(), v))
                .collect(),
            thresholds,
        }
    }

    pub fn assignments(&self) -> Vec<LevelAssignment> {
        self.clusters
            .iter()
            .map(|c| LevelAssignment {
                cluster_id: c.id,
                level: c.level,
                coarse: c.level.coarse(),
                score: c.score,
                occupancy: c.occupancy,
            })
            .collect()
    }

    /// `coarse_level,cluster_id,occupancy,rank` rows in rank order.
    pub fn occupancy_csv(&self) -> String {
        let mut out = String::from("coarse_level,cluster_id,occupancy,rank\n");
        for c in &self.clusters {
            let _ = writeln!(out, "{},{},{},{}", c.coarse.as_str(), c.id, c.occupancy, c.rank);
        }
        out
    }
}
