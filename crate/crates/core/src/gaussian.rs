//! Multivariate Gaussian and Normal-Inverse-Wishart numerics.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use smallvec::SmallVec;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Symmetry tolerance applied to covariance inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Why a matrix was rejected as a covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpdFailure {
    NotSquare,
    Asymmetric,
    NotPositiveDefinite,
}

/// Checks symmetry (to [`SYMMETRY_TOL`], scaled by the largest entry) and
/// returns the lower Cholesky factor.
pub fn cholesky_lower(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, SpdFailure> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(SpdFailure::NotSquare);
    }
    let scale = cov.amax().max(1.0);
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(SpdFailure::Asymmetric);
            }
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(SpdFailure::NotPositiveDefinite);
    }
    let chol = Cholesky::new(cov.clone()).ok_or(SpdFailure::NotPositiveDefinite)?;
    let l = chol.unpack();
    if (0..n).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
        return Err(SpdFailure::NotPositiveDefinite);
    }
    Ok(l)
}

/// Gaussian log-density evaluator with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    dim: usize,
    mean: Vec<f64>,
    // row-major lower-triangular factor
    chol: Vec<f64>,
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self, SpdFailure> {
        if cov.nrows() != mean.len() {
            return Err(SpdFailure::NotSquare);
        }
        let l = cholesky_lower(cov)?;
        let dim = mean.len();
        let mut chol = vec![0.0; dim * dim];
        let mut log_det = 0.0;
        for i in 0..dim {
            for j in 0..=i {
                chol[i * dim + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        let log_norm = -0.5 * (dim as f64 * (2.0 * PI).ln() + log_det);
        Ok(Self {
            dim,
            mean: mean.iter().copied().collect(),
            chol,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Log-density at `x` (length must equal `dim`).
    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        let mut y: SmallVec<[f64; 8]> = SmallVec::with_capacity(d);
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            let mut acc = x[i] - self.mean[i];
            for (lij, yj) in row[..i].iter().zip(y.iter()) {
                acc -= lij * yj;
            }
            let yi = acc / row[i];
            quad += yi * yi;
            y.push(yi);
        }
        self.log_norm - 0.5 * quad
    }
}

/// Draws `mean + L z` with `L` the lower Cholesky factor of the covariance.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    chol_lower: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    mean + chol_lower * z
}

/// Draws from an inverse-Wishart with scale `psi` and `dof` degrees of freedom
/// (mean `psi / (dof - d - 1)`), using the Bartlett construction on the
/// Cholesky factor of `psi`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    psi_chol: &DMatrix<f64>,
    dof: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let d = psi_chol.nrows();
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(dof - i as f64).expect("dof > d - 1");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    // Sigma = (C A^-T)(C A^-T)^T
    let a_inv = a
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .expect("Bartlett factor has a positive diagonal");
    let b = psi_chol * a_inv.transpose();
    let sigma = &b * b.transpose();
    (&sigma + sigma.transpose()) * 0.5
}

/// Log multivariate gamma function of dimension `d`.
pub fn ln_multigamma(a: f64, d: usize) -> f64 {
    let df = d as f64;
    let mut acc = df * (df - 1.0) / 4.0 * PI.ln();
    for j in 0..d {
        acc += ln_gamma(a - j as f64 / 2.0);
    }
    acc
}

/// Log-density of an inverse-Wishart(psi, dof) at `sigma`.
pub fn ln_inverse_wishart(
    sigma: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    dof: f64,
) -> Result<f64, SpdFailure> {
    let d = sigma.nrows();
    let df = d as f64;
    let l_sigma = cholesky_lower(sigma)?;
    let l_psi = cholesky_lower(psi)?;
    let ln_det_sigma: f64 = (0..d).map(|i| 2.0 * l_sigma[(i, i)].ln()).sum();
    let ln_det_psi: f64 = (0..d).map(|i| 2.0 * l_psi[(i, i)].ln()).sum();
    // tr(psi sigma^-1) = ||L_sigma^-1 L_psi||_F^2
    let w = l_sigma
        .solve_lower_triangular(&l_psi)
        .ok_or(SpdFailure::NotPositiveDefinite)?;
    let trace = w.norm_squared();
    Ok(0.5 * dof * ln_det_psi
        - 0.5 * dof * df * std::f64::consts::LN_2
        - ln_multigamma(0.5 * dof, d)
        - 0.5 * (dof + df + 1.0) * ln_det_sigma
        - 0.5 * trace)
}

/// Log of a Gamma(shape, 1) draw. Small shapes go through
/// `Gamma(a + 1) * U^(1/a)` in log space so the result never underflows.
pub fn sample_ln_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        return g.ln();
    }
    let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
    let u: f64 = 1.0 - rng.random::<f64>();
    g.ln() + u.ln() / shape
}

/// Dirichlet draw that stays on the simplex for arbitrarily small
/// concentration entries. Non-positive entries yield exact zeros; at least one
/// entry must be positive.
pub fn sample_dirichlet<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = params.iter().map(|&a| sample_ln_gamma(a, rng)).collect();
    normalize_log_weights(&logs)
}

/// Exponentiates and normalizes log-weights; the max entry anchors the scale.
pub fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "at least one weight must be positive");
    let mut w: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// `ln(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}
