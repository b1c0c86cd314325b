use super::GlobalWeights;
use crate::gaussian::sample_dirichlet;
use rand::Rng;
use rand_distr::{Beta, Distribution};

/// Stick-breaking draw of `truncation` weights with `nu_i ~ Beta(1, gamma)`.
pub fn break_sticks<R: Rng + ?Sized>(gamma: f64, truncation: usize, rng: &mut R) -> GlobalWeights {
    let beta = Beta::new(1.0, gamma).expect("gamma > 0");
    let nu: Vec<f64> = (0..truncation).map(|_| beta.sample(rng)).collect();
    GlobalWeights::from_stick_fractions(&nu)
}

/// Weak-limit posterior of `beta` given auxiliary table counts:
/// `Dirichlet(mbar_j + gamma / L)` with `mbar_j` the column sums.
pub fn resample_global_weights<R: Rng + ?Sized>(
    aux_table_counts: &[Vec<u64>],
    gamma: f64,
    rng: &mut R,
) -> GlobalWeights {
    let l = aux_table_counts.len();
    let mut totals = vec![0u64; l];
    for row in aux_table_counts {
        for (t, m) in totals.iter_mut().zip(row) {
            *t += m;
        }
    }
    resample_global_weights_from_totals(&totals, gamma, rng)
}

/// As [`resample_global_weights`], from per-state table totals.
pub fn resample_global_weights_from_totals<R: Rng + ?Sized>(
    totals: &[u64],
    gamma: f64,
    rng: &mut R,
) -> GlobalWeights {
    let base = gamma / totals.len() as f64;
    let params: Vec<f64> = totals.iter().map(|&m| m as f64 + base).collect();
    GlobalWeights {
        beta: sample_dirichlet(&params, rng),
        remainder: 0.0,
    }
}
