//! Urgency ranking of driving-style clusters.
//!
//! Each cluster is first placed in one of four levels by the sign pattern
//! of its forward acceleration: always accelerating (Level 1), accelerating
//! then braking (Level 2), braking then accelerating (Level 3), always
//! braking (Level 4). Levels 3 and 4 split on whether the vehicle comes to a
//! stop during the braking part (x.1 stops, x.2 does not). Within a level,
//! clusters are ordered by mean forward speed (Levels 1-2, slower is safer)
//! or mean braking acceleration (Levels 3-4, milder is safer).

use crate::ingest::DrivingSeries;
use crate::segment::{ClusterSummary, Segment};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("cluster {0} has no samples")]
    EmptyCluster(usize),
    #[error("velocity part is empty")]
    EmptyPart,
    #[error("cluster {0} appears more than once")]
    DuplicateCluster(usize),
    #[error("nothing to rank")]
    NoClusters,
    #[error("cluster {0} has a non-finite score")]
    NonFiniteScore(usize),
    #[error("thresholds must be non-negative")]
    NegativeThreshold,
}

/// Thresholds for pattern detection and stop prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingConfig {
    /// Half-means with `|mean a_f|` at or below this (m/s^2) count as non-braking.
    pub deadband: f64,
    /// A part whose minimum `v_f` is at or below this (m/s) comes to a stop.
    pub stop_threshold: f64,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            deadband: 0.05,
            stop_threshold: 0.5,
        }
    }
}

/// Signs of the first-half and second-half mean forward acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignPattern {
    PP,
    PN,
    NP,
    NN,
}

impl SignPattern {
    /// 0 (PP, safest) .. 3 (NN, most dangerous).
    pub fn danger(self) -> usize {
        match self {
            SignPattern::PP => 0,
            SignPattern::PN => 1,
            SignPattern::NP => 2,
            SignPattern::NN => 3,
        }
    }

    const ALL: [SignPattern; 4] = [SignPattern::PP, SignPattern::PN, SignPattern::NP, SignPattern::NN];
}

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3_1,
    L3_2,
    L4_1,
    L4_2,
}

impl Level {
    /// Position in the safest-to-most-dangerous order
    /// `L1 < L2 < L3_2 < L3_1 < L4_2 < L4_1`.
    pub fn urgency(self) -> usize {
        match self {
            Level::L1 => 0,
            Level::L2 => 1,
            Level::L3_2 => 2,
            Level::L3_1 => 3,
            Level::L4_2 => 4,
            Level::L4_1 => 5,
        }
    }

    pub fn coarse(self) -> Coarse {
        match self {
            Level::L1 => Coarse::VerySafe,
            Level::L2 => Coarse::Safe,
            Level::L3_1 | Level::L3_2 => Coarse::Dangerous,
            Level::L4_1 | Level::L4_2 => Coarse::VeryDangerous,
        }
    }

    /// Whether the within-level score is a speed (as opposed to a braking acceleration).
    fn scored_by_speed(self) -> bool {
        matches!(self, Level::L1 | Level::L2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::L1 => "L1",
            Level::L2 => "L2",
            Level::L3_1 => "L3_1",
            Level::L3_2 => "L3_2",
            Level::L4_1 => "L4_1",
            Level::L4_2 => "L4_2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Coarse {
    VerySafe,
    Safe,
    Dangerous,
    VeryDangerous,
}

impl Coarse {
    pub const ALL: [Coarse; 4] = [Coarse::VerySafe, Coarse::Safe, Coarse::Dangerous, Coarse::VeryDangerous];

    pub fn as_str(self) -> &'static str {
        match self {
            Coarse::VerySafe => "VerySafe",
            Coarse::Safe => "Safe",
            Coarse::Dangerous => "Dangerous",
            Coarse::VeryDangerous => "VeryDangerous",
        }
    }

    pub fn is_safe_side(self) -> bool {
        matches!(self, Coarse::VerySafe | Coarse::Safe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelAssignment {
    pub cluster_id: usize,
    pub level: Level,
    pub coarse: Coarse,
    /// Mean `v_f` (m/s) for L1/L2, mean braking-part `a_f` (m/s^2) for L3/L4.
    pub score: f64,
    pub occupancy: f64,
}

/// Clusters from safest to most dangerous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrgencyRanking {
    pub order: Vec<LevelAssignment>,
    /// Occupancy share of each coarse level, in [`Coarse::ALL`] order.
    pub coarse_occupancy: [f64; 4],
}

impl UrgencyRanking {
    pub fn get(&self, cluster_id: usize) -> Option<&LevelAssignment> {
        self.order.iter().find(|a| a.cluster_id == cluster_id)
    }

    /// 0-based rank (0 = safest) of a cluster.
    pub fn rank_of(&self, cluster_id: usize) -> Option<usize> {
        self.order.iter().position(|a| a.cluster_id == cluster_id)
    }
}

fn halves(values: &[f64]) -> (&[f64], &[f64]) {
    let mid = values.len() / 2;
    (&values[..mid.max(1)], &values[mid..])
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pattern of one contiguous run of `a_f`. A single sample serves as both halves.
pub fn segment_pattern(a_f: &[f64], deadband: f64) -> SignPattern {
    let (first, second) = halves(a_f);
    let braking = |part: &[f64]| mean(part) < -deadband;
    match (braking(first), braking(second)) {
        (false, false) => SignPattern::PP,
        (false, true) => SignPattern::PN,
        (true, false) => SignPattern::NP,
        (true, true) => SignPattern::NN,
    }
}

fn vote(patterns: &[SignPattern]) -> SignPattern {
    let mut counts = [0usize; 4];
    for p in patterns {
        counts[p.danger()] += 1;
    }
    // iterate from most dangerous so ties resolve toward danger
    let mut best = SignPattern::NN;
    for p in SignPattern::ALL.iter().rev() {
        if counts[p.danger()] > counts[best.danger()] {
            best = *p;
        }
    }
    best
}

/// Cluster pattern: majority vote over its segments' patterns, ties going to
/// the more dangerous pattern (NN > NP > PN > PP).
pub fn classify_sign_pattern(segments: &[&[f64]], deadband: f64) -> Result<SignPattern, RankingError> {
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(RankingError::EmptyCluster(0));
    }
    let patterns: Vec<SignPattern> = segments.iter().map(|s| segment_pattern(s, deadband)).collect();
    Ok(vote(&patterns))
}

/// Whether the velocity in a part reaches the stop threshold (inclusive).
pub fn will_stop(v_f: &[f64], stop_threshold: f64) -> Result<bool, RankingError> {
    if v_f.is_empty() {
        return Err(RankingError::EmptyPart);
    }
    Ok(v_f.iter().copied().fold(f64::INFINITY, f64::min) <= stop_threshold)
}

/// Walks the level decision tree for one cluster.
pub fn assign_level(
    series: &DrivingSeries,
    cluster: &ClusterSummary,
    config: &RankingConfig,
) -> Result<LevelAssignment, RankingError> {
    if config.deadband < 0.0 || config.stop_threshold < 0.0 {
        return Err(RankingError::NegativeThreshold);
    }
    let id = cluster.cluster_id;
    let segments: Vec<&Segment> = cluster.segments.iter().filter(|s| !s.is_empty()).collect();
    if segments.is_empty() {
        return Err(RankingError::EmptyCluster(id));
    }
    let a_f = series.a_f();
    let v_f = series.v_f();
    let a_runs: Vec<&[f64]> = segments.iter().map(|s| &a_f[s.span()]).collect();
    let pattern = classify_sign_pattern(&a_runs, config.deadband).map_err(|_| RankingError::EmptyCluster(id))?;

    // first halves of the segments that exhibit the cluster's pattern
    let mut part_v = Vec::new();
    let mut part_a = Vec::new();
    for s in &segments {
        let a = &a_f[s.span()];
        if segment_pattern(a, config.deadband) == pattern {
            part_a.extend_from_slice(halves(a).0);
            part_v.extend_from_slice(halves(&v_f[s.span()]).0);
        }
    }
    let mut all_v = Vec::new();
    let mut all_a = Vec::new();
    for s in &segments {
        all_v.extend_from_slice(&v_f[s.span()]);
        all_a.extend_from_slice(&a_f[s.span()]);
    }

    let (level, score) = match pattern {
        SignPattern::PP => (Level::L1, mean(&all_v)),
        SignPattern::PN => (Level::L2, mean(&part_v)),
        SignPattern::NP => {
            let level = if will_stop(&part_v, config.stop_threshold)? {
                Level::L3_1
            } else {
                Level::L3_2
            };
            (level, mean(&part_a))
        }
        SignPattern::NN => {
            let level = if will_stop(&all_v, config.stop_threshold)? {
                Level::L4_1
            } else {
                Level::L4_2
            };
            (level, mean(&all_a))
        }
    };
    if !score.is_finite() {
        return Err(RankingError::NonFiniteScore(id));
    }
    Ok(LevelAssignment {
        cluster_id: id,
        level,
        coarse: level.coarse(),
        score,
        occupancy: cluster.occupancy,
    })
}

fn urgency_cmp(a: &LevelAssignment, b: &LevelAssignment) -> Ordering {
    a.level
        .urgency()
        .cmp(&b.level.urgency())
        .then_with(|| {
            if a.level.scored_by_speed() {
                a.score.total_cmp(&b.score)
            } else {
                b.score.total_cmp(&a.score)
            }
        })
        .then(a.cluster_id.cmp(&b.cluster_id))
}

/// Totally orders assignments from safest to most dangerous.
pub fn rank_clusters(assignments: &[LevelAssignment]) -> Result<UrgencyRanking, RankingError> {
    if assignments.is_empty() {
        return Err(RankingError::NoClusters);
    }
    let mut seen = BTreeSet::new();
    for a in assignments {
        if !seen.insert(a.cluster_id) {
            return Err(RankingError::DuplicateCluster(a.cluster_id));
        }
        if !a.score.is_finite() {
            return Err(RankingError::NonFiniteScore(a.cluster_id));
        }
    }
    let mut order = assignments.to_vec();
    for a in &mut order {
        a.coarse = a.level.coarse();
    }
    order.sort_by(urgency_cmp);

    let total: f64 = order.iter().map(|a| a.occupancy).sum();
    let mut coarse_occupancy = [0.0; 4];
    for a in &order {
        let share = if total > 0.0 {
            a.occupancy / total
        } else {
            1.0 / order.len() as f64
        };
        coarse_occupancy[a.coarse as usize] += share;
    }
    Ok(UrgencyRanking {
        order,
        coarse_occupancy,
    })
}

/// Summaries → assignments → ranking.
pub fn rank_summaries(
    series: &DrivingSeries,
    clusters: &[ClusterSummary],
    config: &RankingConfig,
) -> Result<UrgencyRanking, RankingError> {
    let assignments = clusters
        .iter()
        .map(|c| assign_level(series, c, config))
        .collect::<Result<Vec<_>, _>>()?;
    rank_clusters(&assignments)
}
