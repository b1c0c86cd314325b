//! Constant-label runs and per-cluster summaries.

use crate::ingest::DrivingSeries;
use crate::CHANNELS;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("{labels} labels for a series of {frames} frames")]
    LengthMismatch { labels: usize, frames: usize },
}

/// Maximal run `[start, end)` of one cluster id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub cluster_id: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn span(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Splits `labels` into maximal constant runs, in order.
pub fn extract_segments(labels: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (t, &z) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.cluster_id == z => seg.end = t + 1,
            _ => out.push(Segment {
                cluster_id: z,
                start: t,
                end: t + 1,
            }),
        }
    }
    out
}

/// Number of `t` with `labels[t] != labels[t - 1]`.
pub fn label_switches(labels: &[usize]) -> usize {
    labels.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Aggregate statistics of one cluster in the series' own units.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub frames: usize,
    pub occupancy: f64,
    pub mean: [f64; CHANNELS],
    /// Sample standard deviation (zero for single-frame clusters).
    pub std: [f64; CHANNELS],
    pub segments: Vec<Segment>,
}

/// Summaries for every cluster id with at least one frame, ascending by id.
pub fn summarize_clusters(
    series: &DrivingSeries,
    labels: &[usize],
) -> Result<Vec<ClusterSummary>, SegmentError> {
    if labels.len() != series.len() {
        return Err(SegmentError::LengthMismatch {
            labels: labels.len(),
            frames: series.len(),
        });
    }
    let n_ids = labels.iter().max().map_or(0, |m| m + 1);
    let mut frames = vec![0usize; n_ids];
    let mut sums = vec![[0.0; CHANNELS]; n_ids];
    for (row, &z) in series.channels().iter().zip(labels) {
        frames[z] += 1;
        for c in 0..CHANNELS {
            sums[z][c] += row[c];
        }
    }
    let means: Vec<[f64; CHANNELS]> = sums
        .iter()
        .zip(&frames)
        .map(|(s, &n)| std::array::from_fn(|c| if n > 0 { s[c] / n as f64 } else { 0.0 }))
        .collect();
    let mut sq = vec![[0.0; CHANNELS]; n_ids];
    for (row, &z) in series.channels().iter().zip(labels) {
        for c in 0..CHANNELS {
            sq[z][c] += (row[c] - means[z][c]).powi(2);
        }
    }
    let mut segments_by_id: Vec<Vec<Segment>> = vec![Vec::new(); n_ids];
    for seg in extract_segments(labels) {
        segments_by_id[seg.cluster_id].push(seg);
    }
    let total = labels.len() as f64;
    Ok((0..n_ids)
        .filter(|&k| frames[k] > 0)
        .map(|k| ClusterSummary {
            cluster_id: k,
            frames: frames[k],
            occupancy: frames[k] as f64 / total,
            mean: means[k],
            std: std::array::from_fn(|c| {
                if frames[k] > 1 {
                    (sq[k][c] / (frames[k] - 1) as f64).sqrt()
                } else {
                    0.0
                }
            }),
            segments: std::mem::take(&mut segments_by_id[k]),
        })
        .collect())
}
