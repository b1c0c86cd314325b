//! Finite-state Gaussian HMM primitives: likelihood by the forward recursion,
//! a brute-force path enumeration oracle, exact posterior sampling of the
//! state sequence, and ancestral generation.
//!
//! Messages are kept in log space. Each step factors out the largest entry
//! before the linear-space matrix product, so only `K` exponentials per step
//! are needed and nothing underflows on long sequences.

use crate::gaussian::{cholesky_lower, log_sum_exp, sample_gaussian, GaussianDensity, SpdFailure};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

/// Tolerance for row sums of a stochastic matrix.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Largest number of state paths [`brute_force_likelihood`] will enumerate.
pub const BRUTE_FORCE_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("covariance of state {state} is not symmetric positive definite ({reason:?})")]
    NonSpdCovariance { state: usize, reason: SpdFailure },
    #[error("row {row} is not a probability vector")]
    InvalidTransition { row: usize },
    #[error("initial distribution is not a probability vector")]
    InvalidInitial,
    #[error("{states}^{steps} state paths exceed the enumeration cap")]
    TooLarge { states: usize, steps: usize },
    #[error("observation sequence has zero probability under the model at t={t}")]
    ZeroProbability { t: usize },
    #[error("empty observation sequence")]
    EmptySequence,
}

fn is_probability_vector(v: &[f64]) -> bool {
    v.iter().all(|&p| p >= 0.0 && p.is_finite()) && (v.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// Row-stochastic transition matrix plus initial-state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self, HmmError> {
        let k = initial.len();
        if k == 0 || rows.len() != k {
            return Err(HmmError::DimensionMismatch(format!(
                "{} rows for {} initial entries",
                rows.len(),
                k
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(HmmError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if !is_probability_vector(row) {
                return Err(HmmError::InvalidTransition { row: i });
            }
        }
        if !is_probability_vector(&initial) {
            return Err(HmmError::InvalidInitial);
        }
        Ok(Self { rows, initial })
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    fn log_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect()
    }
}

/// Per-state Gaussian emission parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionParams {
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl EmissionParams {
    pub fn new(means: Vec<DVector<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self, HmmError> {
        if means.is_empty() || means.len() != covariances.len() {
            return Err(HmmError::DimensionMismatch(format!(
                "{} means, {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        let dim = means[0].len();
        for (state, (m, c)) in means.iter().zip(&covariances).enumerate() {
            if m.len() != dim || c.nrows() != dim || c.ncols() != dim {
                return Err(HmmError::DimensionMismatch(format!(
                    "state {state} does not have dimension {dim}"
                )));
            }
            cholesky_lower(c).map_err(|reason| HmmError::NonSpdCovariance { state, reason })?;
        }
        Ok(Self { means, covariances })
    }

    pub fn n_states(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn densities(&self) -> Result<Vec<GaussianDensity>, HmmError> {
        self.means
            .iter()
            .zip(&self.covariances)
            .enumerate()
            .map(|(state, (m, c))| {
                GaussianDensity::new(m, c).map_err(|reason| HmmError::NonSpdCovariance { state, reason })
            })
            .collect()
    }
}

/// Emission log-likelihoods, row-major `T x K`.
#[derive(Debug, Clone)]
pub struct LogLikTable {
    steps: usize,
    states: usize,
    data: Vec<f64>,
}

impl LogLikTable {
    pub fn compute(obs: &[DVector<f64>], densities: &[GaussianDensity]) -> Result<Self, HmmError> {
        let states = densities.len();
        let mut data = Vec::with_capacity(obs.len() * states);
        for (t, o) in obs.iter().enumerate() {
            for d in densities {
                if o.len() != d.dim() {
                    return Err(HmmError::DimensionMismatch(format!(
                        "observation {t} has dimension {}, model has {}",
                        o.len(),
                        d.dim()
                    )));
                }
                data.push(d.ln_pdf(o.as_slice()));
            }
        }
        Ok(Self {
            steps: obs.len(),
            states,
            data,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn at(&self, t: usize) -> &[f64] {
        &self.data[t * self.states..(t + 1) * self.states]
    }
}

fn check_shapes(
    obs: &[DVector<f64>],
    trans: &TransitionMatrix,
    emit: &EmissionParams,
) -> Result<LogLikTable, HmmError> {
    if obs.is_empty() {
        return Err(HmmError::EmptySequence);
    }
    if trans.n_states() != emit.n_states() {
        return Err(HmmError::DimensionMismatch(format!(
            "{} transition states, {} emission states",
            trans.n_states(),
            emit.n_states()
        )));
    }
    LogLikTable::compute(obs, &emit.densities()?)
}

/// `log P(O)` by the forward recursion.
pub fn forward_log_likelihood(
    obs: &[DVector<f64>],
    trans: &TransitionMatrix,
    emit: &EmissionParams,
) -> Result<f64, HmmError> {
    let ll = check_shapes(obs, trans, emit)?;
    Ok(forward_from_table(&ll, trans))
}

pub(crate) fn forward_from_table(ll: &LogLikTable, trans: &TransitionMatrix) -> f64 {
    let k = ll.states();
    let mut alpha: Vec<f64> = trans
        .initial()
        .iter()
        .zip(ll.at(0))
        .map(|(p, e)| p.ln() + e)
        .collect();
    let mut scaled = vec![0.0; k];
    let mut next = vec![0.0; k];
    for t in 1..ll.steps() {
        let max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        for (s, a) in scaled.iter_mut().zip(&alpha) {
            *s = (a - max).exp();
        }
        next.fill(0.0);
        for (i, s) in scaled.iter().enumerate() {
            if *s == 0.0 {
                continue;
            }
            for (n, p) in next.iter_mut().zip(trans.row(i)) {
                *n += s * p;
            }
        }
        for ((a, n), e) in alpha.iter_mut().zip(&next).zip(ll.at(t)) {
            *a = max + n.ln() + e;
        }
    }
    log_sum_exp(&alpha)
}

/// `log P(O)` by enumerating every one of the `K^T` state paths.
pub fn brute_force_likelihood(
    obs: &[DVector<f64>],
    trans: &TransitionMatrix,
    emit: &EmissionParams,
) -> Result<f64, HmmError> {
    let k = trans.n_states();
    let t_len = obs.len();
    let too_large = HmmError::TooLarge {
        states: k,
        steps: t_len,
    };
    let paths = u32::try_from(t_len)
        .ok()
        .and_then(|t| (k as u64).checked_pow(t))
        .ok_or(too_large.clone())?;
    if paths > BRUTE_FORCE_CAP {
        return Err(too_large);
    }
    let ll = check_shapes(obs, trans, emit)?;
    let log_rows = trans.log_rows();
    let log_init: Vec<f64> = trans.initial().iter().map(|p| p.ln()).collect();
    let mut path = vec![0usize; t_len];
    let mut terms = Vec::with_capacity(paths as usize);
    for _ in 0..paths {
        terms.push(path_log_joint(&path, &ll, &log_init, &log_rows));
        for slot in path.iter_mut() {
            *slot += 1;
            if *slot < k {
                break;
            }
            *slot = 0;
        }
    }
    Ok(log_sum_exp(&terms))
}

/// `log P(O, X = path)`.
pub(crate) fn path_log_joint(
    path: &[usize],
    ll: &LogLikTable,
    log_init: &[f64],
    log_rows: &[Vec<f64>],
) -> f64 {
    let mut acc = log_init[path[0]] + ll.at(0)[path[0]];
    for t in 1..path.len() {
        acc += log_rows[path[t - 1]][path[t]] + ll.at(t)[path[t]];
    }
    acc
}

/// Draws `X ~ P(X | O)`: backward messages, then forward sampling.
pub fn sample_state_sequence<R: Rng + ?Sized>(
    obs: &[DVector<f64>],
    trans: &TransitionMatrix,
    emit: &EmissionParams,
    rng: &mut R,
) -> Result<Vec<usize>, HmmError> {
    let ll = check_shapes(obs, trans, emit)?;
    sample_states_from_table(&ll, trans, rng)
}

pub(crate) fn sample_states_from_table<R: Rng + ?Sized>(
    ll: &LogLikTable,
    trans: &TransitionMatrix,
    rng: &mut R,
) -> Result<Vec<usize>, HmmError> {
    let k = ll.states();
    let t_len = ll.steps();
    // log beta_t(i) = log P(o_{t+1..T} | x_t = i)
    let mut log_beta = vec![0.0; t_len * k];
    let mut scaled = vec![0.0; k];
    for t in (0..t_len - 1).rev() {
        let (head, tail) = log_beta.split_at_mut((t + 1) * k);
        let next = &tail[..k];
        let e = ll.at(t + 1);
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            scaled[j] = e[j] + next[j];
            max = max.max(scaled[j]);
        }
        if max == f64::NEG_INFINITY {
            return Err(HmmError::ZeroProbability { t: t + 1 });
        }
        for s in scaled.iter_mut() {
            *s = (*s - max).exp();
        }
        let cur = &mut head[t * k..];
        for (i, c) in cur.iter_mut().enumerate() {
            let dot: f64 = trans.row(i).iter().zip(&scaled).map(|(p, s)| p * s).sum();
            *c = max + dot.ln();
        }
    }

    let log_rows = trans.log_rows();
    let mut labels: Vec<usize> = Vec::with_capacity(t_len);
    let mut logw = vec![0.0; k];
    for t in 0..t_len {
        let e = ll.at(t);
        let b = &log_beta[t * k..(t + 1) * k];
        for j in 0..k {
            let prior = match labels.last() {
                None => trans.initial()[j].ln(),
                Some(&prev) => log_rows[prev][j],
            };
            logw[j] = prior + e[j] + b[j];
        }
        labels.push(sample_log_categorical(&logw, rng).ok_or(HmmError::ZeroProbability { t })?);
    }
    Ok(labels)
}

/// Draws an index with probability proportional to `exp(logw)`.
pub fn sample_log_categorical<R: Rng + ?Sized>(logw: &[f64], rng: &mut R) -> Option<usize> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let weights: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    sample_categorical(&weights, rng)
}

/// Draws an index with probability proportional to nonnegative `weights`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = Some(i);
        }
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    last_positive
}

/// Ancestral sampling of `steps` labels and observations.
pub fn generate<R: Rng + ?Sized>(
    trans: &TransitionMatrix,
    emit: &EmissionParams,
    steps: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<DVector<f64>>), HmmError> {
    if trans.n_states() != emit.n_states() {
        return Err(HmmError::DimensionMismatch(
            "transition and emission state counts differ".into(),
        ));
    }
    let factors: Vec<DMatrix<f64>> = emit
        .covariances()
        .iter()
        .enumerate()
        .map(|(state, c)| cholesky_lower(c).map_err(|reason| HmmError::NonSpdCovariance { state, reason }))
        .collect::<Result<_, _>>()?;
    let mut labels = Vec::with_capacity(steps);
    let mut obs = Vec::with_capacity(steps);
    for t in 0..steps {
        let dist = match labels.last() {
            None => trans.initial(),
            Some(&prev) => trans.row(prev),
        };
        let z = sample_categorical(dist, rng).ok_or(HmmError::ZeroProbability { t })?;
        obs.push(sample_gaussian(&emit.means()[z], &factors[z], rng));
        labels.push(z);
    }
    Ok((labels, obs))
}
