use super::GlobalWeights;
use crate::gaussian::sample_dirichlet;
use rand::Rng;

/// Draws transition row `i` from
/// `Dirichlet(alpha * beta_j + kappa * [j == i] + counts_row[j])`,
/// with the truncation remainder folded into the last slot of `beta`.
pub fn sample_transition_row<R: Rng + ?Sized>(
    i: usize,
    weights: &GlobalWeights,
    alpha: f64,
    kappa: f64,
    counts_row: &[u64],
    rng: &mut R,
) -> Vec<f64> {
    let beta = weights.folded();
    assert_eq!(beta.len(), counts_row.len());
    let params: Vec<f64> = beta
        .iter()
        .zip(counts_row)
        .enumerate()
        .map(|(j, (b, &n))| alpha * b + if j == i { kappa } else { 0.0 } + n as f64)
        .collect();
    sample_dirichlet(&params, rng)
}

/// Prior mean of the self-transition entry: `(alpha * beta_i + kappa) / (alpha + kappa)`.
pub fn prior_self_transition_mean(alpha: f64, kappa: f64, beta_i: f64) -> f64 {
    (alpha * beta_i + kappa) / (alpha + kappa)
}
