//! Weak-limit sticky HDP-HMM.
//!
//! The infinite model is truncated to `L` states. Global weights `beta` come
//! from stick-breaking, each transition row is a Dirichlet centred on
//! `(alpha * beta + kappa * e_i) / (alpha + kappa)`, and emissions are full- or
//! diagonal-covariance Gaussians under a Normal-Inverse-Wishart base measure.
//! Inference is blocked Gibbs: the whole label sequence is drawn by message
//! passing, then counts, auxiliary table counts, `beta`, the rows and the
//! emission parameters are redrawn in turn.

mod tables;
mod emission;
mod sampler;
mod transition;
mod weights;

pub use tables::{sample_aux_counts, sample_table_count};
pub use emission::{niw_posterior, sample_emission_params, NiwParams, SufficientStats};
pub use sampler::{
    dense_relabel, fit, fit_chains, gibbs_sweep, initialize, joint_log_density, transition_counts,
    FitOptions, FitResult,
};
pub use transition::{prior_self_transition_mean, sample_transition_row};
pub use weights::{break_sticks, resample_global_weights, resample_global_weights_from_totals};

use crate::gaussian::cholesky_lower;
use crate::hmm::{EmissionParams, HmmError, TransitionMatrix};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("NIW scale matrix is not symmetric positive definite")]
    NonSpdPsi,
    #[error(transparent)]
    Model(#[from] HmmError),
    #[error("sweep {iteration} failed: {source}")]
    SweepFailed { iteration: usize, source: HmmError },
    #[error("joint log-density is not finite after sweep {iteration}")]
    NonFiniteDensity { iteration: usize },
    #[error("iterations ({iterations}) must exceed burn-in ({burn_in})")]
    BadSchedule { iterations: usize, burn_in: usize },
    #[error("no observations")]
    EmptyData,
}

impl SamplerError {
    /// Sweep index for failures raised inside the sweep loop.
    pub fn iteration(&self) -> Option<usize> {
        match self {
            SamplerError::SweepFailed { iteration, .. }
            | SamplerError::NonFiniteDensity { iteration } => Some(*iteration),
            _ => None,
        }
    }
}

/// Covariance structure of the Gaussian emissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmissionMode {
    #[default]
    Full,
    Diagonal,
}

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    /// Concentration of each transition row around `beta`.
    pub alpha: f64,
    /// Top-level concentration for `beta`.
    pub gamma: f64,
    /// Extra self-transition mass.
    pub kappa: f64,
    pub niw_mean0: DVector<f64>,
    pub niw_scale0: f64,
    pub niw_dof0: f64,
    pub niw_psi0: DMatrix<f64>,
    /// Number of states kept by the weak-limit truncation.
    pub truncation: usize,
}

impl Hyperparameters {
    pub fn dim(&self) -> usize {
        self.niw_mean0.len()
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::InvalidHyperparameter(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be >= 0, got {}", self.kappa));
        }
        if !(self.niw_scale0 > 0.0 && self.niw_scale0.is_finite()) {
            return bad(format!("niw_scale0 must be > 0, got {}", self.niw_scale0));
        }
        let d = self.dim();
        if d == 0 {
            return bad("NIW mean has dimension 0".into());
        }
        if !(self.niw_dof0 > (d + 1) as f64) {
            return bad(format!("niw_dof0 must exceed {}, got {}", d + 1, self.niw_dof0));
        }
        if self.truncation < 2 {
            return bad(format!("truncation must be >= 2, got {}", self.truncation));
        }
        if self.niw_psi0.nrows() != d || self.niw_psi0.ncols() != d {
            return bad("niw_psi0 shape does not match niw_mean0".into());
        }
        cholesky_lower(&self.niw_psi0).map_err(|_| SamplerError::NonSpdPsi)?;
        Ok(())
    }

    /// Data-adaptive NIW base measure: mean at the data mean, scale matrix a
    /// fraction of the data covariance. Channels with (near) zero variance
    /// get unit variance in the scale matrix.
    pub fn from_data(obs: &[DVector<f64>], settings: &PriorSettings) -> Result<Self, SamplerError> {
        if obs.is_empty() {
            return Err(SamplerError::EmptyData);
        }
        let stats = SufficientStats::from_observations(obs.iter());
        let d = stats.mean.len();
        let mut cov = if stats.n > 1 {
            &stats.scatter / (stats.n - 1) as f64
        } else {
            DMatrix::zeros(d, d)
        };
        for i in 0..d {
            if cov[(i, i)] < MIN_PRIOR_VARIANCE {
                for j in 0..d {
                    cov[(i, j)] = 0.0;
                    cov[(j, i)] = 0.0;
                }
                cov[(i, i)] = 1.0;
            }
        }
        let hyper = Self {
            alpha: settings.alpha,
            gamma: settings.gamma,
            kappa: settings.kappa,
            niw_mean0: stats.mean,
            niw_scale0: settings.niw_scale0,
            niw_dof0: settings.niw_dof0.unwrap_or((d + 3) as f64),
            niw_psi0: cov * settings.psi_fraction,
            truncation: settings.truncation,
        };
        hyper.validate()?;
        Ok(hyper)
    }
}

/// Channels whose data variance is below this are treated as unit variance
/// when building the prior scale matrix.
pub const MIN_PRIOR_VARIANCE: f64 = 1e-9;

/// User-facing knobs from which [`Hyperparameters`] are built.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorSettings {
    pub alpha: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub truncation: usize,
    pub niw_scale0: f64,
    /// Defaults to `dim + 3`.
    pub niw_dof0: Option<f64>,
    /// `niw_psi0 = psi_fraction * data covariance`.
    pub psi_fraction: f64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 1.0,
            kappa: 10.0,
            truncation: 20,
            niw_scale0: 0.01,
            niw_dof0: None,
            psi_fraction: 0.75,
        }
    }
}

/// Truncated global weights; `beta` plus the unbroken remainder sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalWeights {
    pub beta: Vec<f64>,
    pub remainder: f64,
}

impl GlobalWeights {
    /// Stick-breaking from explicit fractions `nu`.
    pub fn from_stick_fractions(nu: &[f64]) -> Self {
        let mut remaining = 1.0;
        let beta = nu
            .iter()
            .map(|&v| {
                let b = v * remaining;
                remaining -= b;
                b
            })
            .collect();
        Self {
            beta,
            remainder: remaining.max(0.0),
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// `beta` with the remainder added to the last slot.
    pub fn folded(&self) -> Vec<f64> {
        let mut out = self.beta.clone();
        if let Some(last) = out.last_mut() {
            *last += self.remainder;
        }
        out
    }
}

/// Complete sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub weights: GlobalWeights,
    pub trans: TransitionMatrix,
    pub emit: EmissionParams,
    pub labels: Vec<usize>,
    pub transition_counts: Vec<Vec<u64>>,
    pub aux_table_counts: Vec<Vec<u64>>,
}

impl ModelState {
    pub fn n_states(&self) -> usize {
        self.trans.n_states()
    }

    /// Per-state number of assigned timesteps.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut occ = vec![0; self.n_states()];
        for &z in &self.labels {
            occ[z] += 1;
        }
        occ
    }

    pub fn occupied_states(&self) -> usize {
        self.occupancy().iter().filter(|&&n| n > 0).count()
    }
}
