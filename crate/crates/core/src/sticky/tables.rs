use super::{Hyperparameters, ModelState};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// Number of occupied tables after `customers` arrivals in a Chinese
/// restaurant with concentration `concentration`: customer `n` opens a new
/// table with probability `c / (n - 1 + c)`.
pub fn sample_table_count<R: Rng + ?Sized>(customers: u64, concentration: f64, rng: &mut R) -> u64 {
    if customers == 0 {
        return 0;
    }
    // the first customer always opens a table
    let mut tables = 1;
    if concentration <= 0.0 {
        return tables;
    }
    for n in 1..customers {
        let p = concentration / (n as f64 + concentration);
        if rng.random::<f64>() < p {
            tables += 1;
        }
    }
    tables
}

/// Auxiliary table counts for the `beta` update.
///
/// Entry `(i, j)` counts the tables serving dish `j` in restaurant `i`, with
/// concentration `alpha * beta_j + kappa * [i == j]`. On the diagonal each
/// table is then thinned with probability `kappa / (kappa + alpha * beta_i)`,
/// removing the tables attributable to the sticky override.
pub fn sample_aux_counts<R: Rng + ?Sized>(
    state: &ModelState,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Vec<Vec<u64>> {
    let beta = state.weights.folded();
    let l = beta.len();
    let mut out = vec![vec![0u64; l]; l];
    for i in 0..l {
        for j in 0..l {
            let n = state.transition_counts[i][j];
            if n == 0 {
                continue;
            }
            let sticky = if i == j { hyper.kappa } else { 0.0 };
            let mut m = sample_table_count(n, hyper.alpha * beta[j] + sticky, rng);
            if i == j && hyper.kappa > 0.0 && m > 0 {
                let rho = hyper.kappa / (hyper.kappa + hyper.alpha * beta[i]);
                let overridden = Binomial::new(m, rho.clamp(0.0, 1.0))
                    .expect("valid binomial")
                    .sample(rng);
                m -= overridden;
            }
            out[i][j] = m;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_and_one_customers() {
        let mut rng = seeded(0);
        for _ in 0..100 {
            assert_eq!(sample_table_count(0, 2.0, &mut rng), 0);
            assert_eq!(sample_table_count(1, 0.01, &mut rng), 1);
        }
    }

    #[test]
    fn matches_direct_crp_simulation() {
        // Independent route: seat customers one by one at existing tables in
        // proportion to occupancy, or at a new table in proportion to c.
        fn crp_tables(n: u64, c: f64, rng: &mut impl Rng) -> u64 {
            let mut tables: Vec<f64> = Vec::new();
            for _ in 0..n {
                let total: f64 = tables.iter().sum::<f64>() + c;
                let mut u = rng.random::<f64>() * total;
                let mut seated = false;
                for t in tables.iter_mut() {
                    if u < *t {
                        *t += 1.0;
                        seated = true;
                        break;
                    }
                    u -= *t;
                }
                if !seated {
                    tables.push(1.0);
                }
            }
            tables.len() as u64
        }
        let draws = 100_000;
        let mut rng = seeded(11);
        let fast: f64 = (0..draws)
            .map(|_| sample_table_count(5, 1.0, &mut rng) as f64)
            .sum::<f64>()
            / draws as f64;
        let mut rng = seeded(12);
        let slow: f64 = (0..draws)
            .map(|_| crp_tables(5, 1.0, &mut rng) as f64)
            .sum::<f64>()
            / draws as f64;
        // harmonic number H_5 for c = 1
        let h5 = 1.0 + 0.5 + 1.0 / 3.0 + 0.25 + 0.2;
        assert!((fast - slow).abs() < 0.02);
        assert!((fast - h5).abs() < 0.02);
    }
}
