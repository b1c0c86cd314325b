use super::{EmissionMode, Hyperparameters, SamplerError};
use crate::gaussian::{
    cholesky_lower, ln_inverse_wishart, sample_gaussian, sample_inverse_wishart, GaussianDensity,
};
use crate::hmm::{EmissionParams, HmmError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Count, mean and centred scatter matrix of a set of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub n: usize,
    pub mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

impl SufficientStats {
    pub fn empty(dim: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        }
    }

    /// Two-pass statistics of a non-empty collection.
    pub fn from_observations<'a, I>(obs: I) -> Self
    where
        I: Iterator<Item = &'a DVector<f64>> + Clone,
    {
        let mut iter = obs.clone();
        let Some(first) = iter.next() else {
            return Self::empty(0);
        };
        let dim = first.len();
        let mut stats = Self::empty(dim);
        for o in obs.clone() {
            stats.mean += o;
            stats.n += 1;
        }
        stats.mean /= stats.n as f64;
        for o in obs {
            let d = o - &stats.mean;
            stats.scatter.ger(1.0, &d, &d, 1.0);
        }
        stats
    }

    /// Statistics per label in `0..states`.
    pub fn by_label(obs: &[DVector<f64>], labels: &[usize], states: usize) -> Vec<Self> {
        assert_eq!(obs.len(), labels.len());
        let dim = obs.first().map_or(0, |o| o.len());
        let mut stats = vec![Self::empty(dim); states];
        for (o, &z) in obs.iter().zip(labels) {
            stats[z].mean += o;
            stats[z].n += 1;
        }
        for s in stats.iter_mut().filter(|s| s.n > 0) {
            s.mean /= s.n as f64;
        }
        for (o, &z) in obs.iter().zip(labels) {
            let d = o - &stats[z].mean;
            stats[z].scatter.ger(1.0, &d, &d, 1.0);
        }
        stats
    }
}

/// Normal-Inverse-Wishart parameters `(mean, scale, dof, psi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwParams {
    pub mean: DVector<f64>,
    pub scale: f64,
    pub dof: f64,
    pub psi: DMatrix<f64>,
}

/// Conjugate NIW update:
/// `k_n = k_0 + n`, `nu_n = nu_0 + n`, `mu_n = (k_0 mu_0 + n xbar) / k_n`,
/// `Psi_n = Psi_0 + S + (k_0 n / k_n)(xbar - mu_0)(xbar - mu_0)^T`.
pub fn niw_posterior(stats: &SufficientStats, hyper: &Hyperparameters) -> NiwParams {
    let k0 = hyper.niw_scale0;
    if stats.n == 0 {
        return NiwParams {
            mean: hyper.niw_mean0.clone(),
            scale: k0,
            dof: hyper.niw_dof0,
            psi: hyper.niw_psi0.clone(),
        };
    }
    let n = stats.n as f64;
    let kn = k0 + n;
    let mean = (&hyper.niw_mean0 * k0 + &stats.mean * n) / kn;
    let d = &stats.mean - &hyper.niw_mean0;
    let mut psi = &hyper.niw_psi0 + &stats.scatter;
    psi.ger(k0 * n / kn, &d, &d, 1.0);
    let psi = (&psi + psi.transpose()) * 0.5;
    NiwParams {
        mean,
        scale: kn,
        dof: hyper.niw_dof0 + n,
        psi,
    }
}

/// Draws `(mu, Sigma)` for every state from its NIW posterior; states with no
/// observations draw from the prior. In diagonal mode each channel gets an
/// independent scalar Normal-Inverse-Wishart built from the diagonal of the
/// same statistics.
pub fn sample_emission_params<R: Rng + ?Sized>(
    stats: &[SufficientStats],
    hyper: &Hyperparameters,
    mode: EmissionMode,
    rng: &mut R,
) -> Result<EmissionParams, SamplerError> {
    cholesky_lower(&hyper.niw_psi0).map_err(|_| SamplerError::NonSpdPsi)?;
    let mut means = Vec::with_capacity(stats.len());
    let mut covs = Vec::with_capacity(stats.len());
    for (state, s) in stats.iter().enumerate() {
        let post = niw_posterior(s, hyper);
        let (mu, sigma) = match mode {
            EmissionMode::Full => draw_full(&post, state, rng)?,
            EmissionMode::Diagonal => draw_diagonal(&post, rng),
        };
        means.push(mu);
        covs.push(sigma);
    }
    Ok(EmissionParams::new(means, covs)?)
}

/// Log-density of `(mean, cov)` under the NIW base measure. Diagonal mode
/// uses the product of per-channel scalar NIW densities.
pub(crate) fn niw_log_density(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    hyper: &Hyperparameters,
    mode: EmissionMode,
) -> Result<f64, SamplerError> {
    let not_spd = |reason| SamplerError::Model(HmmError::NonSpdCovariance { state: 0, reason });
    match mode {
        EmissionMode::Full => {
            let mean_density = GaussianDensity::new(&hyper.niw_mean0, &(cov / hyper.niw_scale0))
                .map_err(not_spd)?;
            let iw = ln_inverse_wishart(cov, &hyper.niw_psi0, hyper.niw_dof0).map_err(not_spd)?;
            Ok(mean_density.ln_pdf(mean.as_slice()) + iw)
        }
        EmissionMode::Diagonal => {
            let mut acc = 0.0;
            for c in 0..mean.len() {
                let var = DMatrix::from_element(1, 1, cov[(c, c)]);
                let m0 = DVector::from_element(1, hyper.niw_mean0[c]);
                let g = GaussianDensity::new(&m0, &(&var / hyper.niw_scale0)).map_err(not_spd)?;
                let psi = DMatrix::from_element(1, 1, hyper.niw_psi0[(c, c)]);
                acc += g.ln_pdf(&[mean[c]])
                    + ln_inverse_wishart(&var, &psi, hyper.niw_dof0).map_err(not_spd)?;
            }
            Ok(acc)
        }
    }
}

fn draw_full<R: Rng + ?Sized>(
    post: &NiwParams,
    state: usize,
    rng: &mut R,
) -> Result<(DVector<f64>, DMatrix<f64>), SamplerError> {
    let psi_chol = cholesky_lower(&post.psi).map_err(|_| SamplerError::NonSpdPsi)?;
    let sigma = sample_inverse_wishart(&psi_chol, post.dof, rng);
    let sigma_chol = cholesky_lower(&sigma)
        .map_err(|reason| HmmError::NonSpdCovariance { state, reason })?;
    let mu = sample_gaussian(&post.mean, &(sigma_chol / post.scale.sqrt()), rng);
    Ok((mu, sigma))
}

fn draw_diagonal<R: Rng + ?Sized>(post: &NiwParams, rng: &mut R) -> (DVector<f64>, DMatrix<f64>) {
    let d = post.mean.len();
    let mut mu = DVector::zeros(d);
    let mut sigma = DMatrix::zeros(d, d);
    for c in 0..d {
        let psi = DMatrix::from_element(1, 1, post.psi[(c, c)].sqrt());
        let var = sample_inverse_wishart(&psi, post.dof, rng)[(0, 0)];
        let sd = DMatrix::from_element(1, 1, (var / post.scale).sqrt());
        let m = DVector::from_element(1, post.mean[c]);
        mu[c] = sample_gaussian(&m, &sd, rng)[0];
        sigma[(c, c)] = var;
    }
    (mu, sigma)
}
