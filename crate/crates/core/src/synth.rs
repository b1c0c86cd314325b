//! Synthetic sticky-HMM drives with known labels.

use crate::hmm::{generate, EmissionParams, HmmError, TransitionMatrix};
use crate::ingest::{DrivingSeries, IngestError};
use crate::rng::{substream, Stream};
use crate::CHANNELS;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("state count must be at least 1")]
    NoStates,
    #[error("self-transition probability must lie in [0, 1), got {0}")]
    BadSelfProb(f64),
    #[error("length must be at least 1")]
    ZeroLength,
    #[error("separation must be finite, got {0}")]
    BadSeparation(f64),
    #[error(transparent)]
    Model(#[from] HmmError),
    #[error(transparent)]
    Series(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub states: usize,
    pub length: usize,
    pub self_prob: f64,
    pub separation: f64,
    pub rate_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            states: 3,
            length: 2000,
            self_prob: 0.95,
            separation: 10.0,
            rate_hz: 10.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.states < 1 {
            return Err(SynthError::NoStates);
        }
        if !(0.0..1.0).contains(&self.self_prob) {
            return Err(SynthError::BadSelfProb(self.self_prob));
        }
        if self.length < 1 {
            return Err(SynthError::ZeroLength);
        }
        if !self.separation.is_finite() {
            return Err(SynthError::BadSeparation(self.separation));
        }
        Ok(())
    }
}

/// Mean of state `k`: `S * (1 + k / 4) * e_(k mod 4)` with integer division,
/// so the first four states sit on the coordinate axes at distance `S` and
/// later ones on the same axes further out.
pub fn state_mean(k: usize, separation: f64) -> DVector<f64> {
    let mut m = DVector::zeros(CHANNELS);
    m[k % CHANNELS] = separation * (1 + k / CHANNELS) as f64;
    m
}

/// Self-transition `P`, the rest spread evenly; uniform start; unit
/// covariance emissions.
pub fn synth_model(cfg: &SynthConfig) -> Result<(TransitionMatrix, EmissionParams), SynthError> {
    cfg.validate()?;
    let k = cfg.states;
    let rows = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| match (k, i == j) {
                    (1, _) => 1.0,
                    (_, true) => cfg.self_prob,
                    (_, false) => (1.0 - cfg.self_prob) / (k - 1) as f64,
                })
                .collect()
        })
        .collect();
    let trans = TransitionMatrix::new(rows, vec![1.0 / k as f64; k])?;
    let emit = EmissionParams::new(
        (0..k).map(|i| state_mean(i, cfg.separation)).collect(),
        vec![DMatrix::identity(CHANNELS, CHANNELS); k],
    )?;
    Ok((trans, emit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDrive {
    pub series: DrivingSeries,
    pub truth: Vec<usize>,
}

/// Draws a labelled series from the synth substream of `seed`.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SyntheticDrive, SynthError> {
    let (trans, emit) = synth_model(cfg)?;
    let mut rng = substream(seed, Stream::Synth, 0);
    let (truth, obs) = generate(&trans, &emit, cfg.length, &mut rng)?;
    let channels = obs
        .iter()
        .map(|o| std::array::from_fn(|c| o[c]))
        .collect();
    let series = DrivingSeries::from_rate(channels, cfg.rate_hz, format!("synth-{seed}"))?;
    Ok(SyntheticDrive { series, truth })
}
