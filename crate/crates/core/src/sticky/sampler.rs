use super::emission::niw_log_density;
use super::{
    break_sticks, resample_global_weights_from_totals, sample_aux_counts, sample_emission_params,
    sample_transition_row, EmissionMode, Hyperparameters, ModelState, SamplerError,
    SufficientStats,
};
use crate::hmm::{sample_states_from_table, LogLikTable, TransitionMatrix};
use crate::rng::{substream, Stream};
use nalgebra::DVector;
use rand::Rng;

/// Number of states that receive labels at initialization.
pub const INIT_STATES: usize = 10;

/// Sweep schedule and emission structure.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitOptions {
    pub iterations: usize,
    pub burn_in: usize,
    pub emission_mode: EmissionMode,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            iterations: 300,
            burn_in: 150,
            emission_mode: EmissionMode::Full,
        }
    }
}

/// Outcome of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// State after the last sweep.
    pub final_state: ModelState,
    /// Post-burn-in state with the highest joint log-density.
    pub best_state: ModelState,
    pub best_iteration: usize,
    /// Labels of `best_state` relabeled to `0..K` by descending occupancy.
    pub labels: Vec<usize>,
    /// `cluster_states[k]` is the model state behind dense cluster `k`.
    pub cluster_states: Vec<usize>,
    /// Joint log-density after each sweep.
    pub trace: Vec<f64>,
    pub seed: u64,
    pub chain: u32,
    pub hyper: Hyperparameters,
    pub options: FitOptions,
}

impl FitResult {
    pub fn n_clusters(&self) -> usize {
        self.cluster_states.len()
    }

    pub fn final_log_density(&self) -> f64 {
        *self.trace.last().expect("at least one sweep")
    }
}

/// `counts[i][j]` = number of `t` with `labels[t] = i`, `labels[t + 1] = j`.
pub fn transition_counts(labels: &[usize], states: usize) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; states]; states];
    for w in labels.windows(2) {
        counts[w[0]][w[1]] += 1;
    }
    counts
}

fn sample_rows<R: Rng + ?Sized>(
    state: &ModelState,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<TransitionMatrix, SamplerError> {
    let rows = (0..hyper.truncation)
        .map(|i| {
            sample_transition_row(
                i,
                &state.weights,
                hyper.alpha,
                hyper.kappa,
                &state.transition_counts[i],
                rng,
            )
        })
        .collect();
    Ok(TransitionMatrix::new(rows, state.weights.folded())?)
}

/// Starting state: labels uniform over the first `min(L, 10)` states, `beta`
/// by stick-breaking, then rows, emissions and table counts drawn given
/// those labels.
pub fn initialize<R: Rng + ?Sized>(
    obs: &[DVector<f64>],
    hyper: &Hyperparameters,
    mode: EmissionMode,
    rng: &mut R,
) -> Result<ModelState, SamplerError> {
    hyper.validate()?;
    if obs.is_empty() {
        return Err(SamplerError::EmptyData);
    }
    let l = hyper.truncation;
    let used = l.min(INIT_STATES);
    let labels: Vec<usize> = (0..obs.len()).map(|_| rng.random_range(0..used)).collect();
    let weights = break_sticks(hyper.gamma, l, rng);
    let transition_counts = transition_counts(&labels, l);
    let emit_stats = SufficientStats::by_label(obs, &labels, l);
    let mut state = ModelState {
        trans: TransitionMatrix::new(vec![weights.folded(); l], weights.folded())?,
        weights,
        emit: sample_emission_params(&emit_stats[..1], hyper, mode, rng)?,
        labels,
        transition_counts,
        aux_table_counts: vec![vec![0; l]; l],
    };
    state.trans = sample_rows(&state, hyper, rng)?;
    state.emit = sample_emission_params(&emit_stats, hyper, mode, rng)?;
    state.aux_table_counts = sample_aux_counts(&state, hyper, rng);
    Ok(state)
}

/// One blocked sweep: labels, transition counts, table counts, `beta`,
/// transition rows, emission parameters. The initial-state distribution is
/// tied to the new `beta`.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &ModelState,
    obs: &[DVector<f64>],
    hyper: &Hyperparameters,
    mode: EmissionMode,
    rng: &mut R,
) -> Result<ModelState, SamplerError> {
    let l = hyper.truncation;
    let ll = LogLikTable::compute(obs, &state.emit.densities()?)?;
    let labels = sample_states_from_table(&ll, &state.trans, rng)?;
    let mut next = ModelState {
        weights: state.weights.clone(),
        trans: state.trans.clone(),
        emit: state.emit.clone(),
        transition_counts: transition_counts(&labels, l),
        labels,
        aux_table_counts: Vec::new(),
    };
    next.aux_table_counts = sample_aux_counts(&next, hyper, rng);

    let mut totals = vec![0u64; l];
    for row in &next.aux_table_counts {
        for (t, m) in totals.iter_mut().zip(row) {
            *t += m;
        }
    }
    // the first label is a direct draw from beta
    totals[next.labels[0]] += 1;
    next.weights = resample_global_weights_from_totals(&totals, hyper.gamma, rng);
    next.trans = sample_rows(&next, hyper, rng)?;
    next.emit = sample_emission_params(
        &SufficientStats::by_label(obs, &next.labels, l),
        hyper,
        mode,
        rng,
    )?;
    Ok(next)
}

/// `log p(labels, obs | beta, pi, theta) + sum over occupied states of log H(theta_i)`.
pub fn joint_log_density(
    state: &ModelState,
    obs: &[DVector<f64>],
    hyper: &Hyperparameters,
    mode: EmissionMode,
) -> Result<f64, SamplerError> {
    let occupancy = state.occupancy();
    let mut acc = state.trans.initial()[state.labels[0]].ln();
    for (i, row) in state.transition_counts.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            if n > 0 {
                acc += n as f64 * state.trans.row(i)[j].ln();
            }
        }
    }
    let densities = state.emit.densities()?;
    for (o, &z) in obs.iter().zip(&state.labels) {
        acc += densities[z].ln_pdf(o.as_slice());
    }
    for (i, &n) in occupancy.iter().enumerate() {
        if n > 0 {
            acc += niw_log_density(&state.emit.means()[i], &state.emit.covariances()[i], hyper, mode)?;
        }
    }
    Ok(acc)
}

/// Relabels to `0..K` by descending occupancy (ties by state index). Returns
/// the dense labels and the state index behind each dense id.
pub fn dense_relabel(labels: &[usize], states: usize) -> (Vec<usize>, Vec<usize>) {
    let mut occ = vec![0usize; states];
    for &z in labels {
        occ[z] += 1;
    }
    let mut order: Vec<usize> = (0..states).filter(|&s| occ[s] > 0).collect();
    order.sort_by(|&a, &b| occ[b].cmp(&occ[a]).then(a.cmp(&b)));
    let mut map = vec![usize::MAX; states];
    for (dense, &s) in order.iter().enumerate() {
        map[s] = dense;
    }
    (labels.iter().map(|&z| map[z]).collect(), order)
}

/// Runs chain 0 from `seed`.
pub fn fit(
    obs: &[DVector<f64>],
    hyper: &Hyperparameters,
    options: &FitOptions,
    seed: u64,
) -> Result<FitResult, SamplerError> {
    fit_chain(obs, hyper, options, seed, 0)
}

fn fit_chain(
    obs: &[DVector<f64>],
    hyper: &Hyperparameters,
    options: &FitOptions,
    seed: u64,
    chain: u32,
) -> Result<FitResult, SamplerError> {
    if options.iterations <= options.burn_in {
        return Err(SamplerError::BadSchedule {
            iterations: options.iterations,
            burn_in: options.burn_in,
        });
    }
    let mode = options.emission_mode;
    let mut init_rng = substream(seed, Stream::Init, chain);
    let mut rng = substream(seed, Stream::Sweeps, chain);
    let mut state = initialize(obs, hyper, mode, &mut init_rng)?;
    let mut trace = Vec::with_capacity(options.iterations);
    let mut best: Option<(usize, f64, ModelState)> = None;
    for iteration in 0..options.iterations {
        state = gibbs_sweep(&state, obs, hyper, mode, &mut rng).map_err(|e| match e {
            SamplerError::Model(source) => SamplerError::SweepFailed { iteration, source },
            other => other,
        })?;
        let lp = joint_log_density(&state, obs, hyper, mode).map_err(|e| match e {
            SamplerError::Model(source) => SamplerError::SweepFailed { iteration, source },
            other => other,
        })?;
        if !lp.is_finite() {
            return Err(SamplerError::NonFiniteDensity { iteration });
        }
        trace.push(lp);
        if iteration >= options.burn_in && best.as_ref().is_none_or(|(_, b, _)| lp > *b) {
            best = Some((iteration, lp, state.clone()));
        }
    }
    let (best_iteration, _, best_state) = best.expect("iterations > burn_in");
    let (labels, cluster_states) = dense_relabel(&best_state.labels, hyper.truncation);
    Ok(FitResult {
        final_state: state,
        best_state,
        best_iteration,
        labels,
        cluster_states,
        trace,
        seed,
        chain,
        hyper: hyper.clone(),
        options: *options,
    })
}

/// Runs `chains` independent chains concurrently and keeps the one with the
/// highest final joint log-density (lowest chain index on ties).
pub fn fit_chains(
    obs: &[DVector<f64>],
    hyper: &Hyperparameters,
    options: &FitOptions,
    seed: u64,
    chains: u32,
) -> Result<FitResult, SamplerError> {
    let chains = chains.max(1);
    if chains == 1 {
        return fit(obs, hyper, options, seed);
    }
    let results: Vec<Result<FitResult, SamplerError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| scope.spawn(move || fit_chain(obs, hyper, options, seed, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    let mut best: Option<FitResult> = None;
    for r in results {
        let r = r?;
        if best
            .as_ref()
            .is_none_or(|b| r.final_log_density() > b.final_log_density())
        {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one chain"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use nalgebra::DMatrix;

    fn toy_obs(n: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|t| {
                let base = if (t / 40) % 2 == 0 { 0.0 } else { 8.0 };
                let jitter = ((t * 7919) % 13) as f64 / 13.0 - 0.5;
                DVector::from_vec(vec![base + jitter, -base + 0.3 * jitter])
            })
            .collect()
    }

    fn toy_hyper(obs: &[DVector<f64>]) -> Hyperparameters {
        Hyperparameters::from_data(
            obs,
            &super::super::PriorSettings {
                truncation: 6,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn check_invariants(state: &ModelState, hyper: &Hyperparameters) {
        let l = hyper.truncation;
        assert_eq!(state.transition_counts, transition_counts(&state.labels, l));
        for i in 0..l {
            assert!((state.trans.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            for j in 0..l {
                if state.transition_counts[i][j] > 0 {
                    assert!(state.aux_table_counts[i][j] <= state.transition_counts[i][j]);
                } else {
                    assert_eq!(state.aux_table_counts[i][j], 0);
                }
            }
        }
        let bsum: f64 = state.weights.beta.iter().sum::<f64>() + state.weights.remainder;
        assert!((bsum - 1.0).abs() <= 1e-10);
        assert!(state.labels.iter().all(|&z| z < l));
    }

    #[test]
    fn sweeps_preserve_invariants() {
        let obs = toy_obs(200);
        let hyper = toy_hyper(&obs);
        let mut rng = seeded(1);
        let mut state = initialize(&obs, &hyper, EmissionMode::Full, &mut rng).unwrap();
        check_invariants(&state, &hyper);
        for _ in 0..20 {
            state = gibbs_sweep(&state, &obs, &hyper, EmissionMode::Full, &mut rng).unwrap();
            check_invariants(&state, &hyper);
            assert!(joint_log_density(&state, &obs, &hyper, EmissionMode::Full)
                .unwrap()
                .is_finite());
        }
    }

    #[test]
    fn sweep_is_bit_reproducible() {
        let obs = toy_obs(120);
        let hyper = toy_hyper(&obs);
        let run = || {
            let mut rng = seeded(77);
            let mut s = initialize(&obs, &hyper, EmissionMode::Diagonal, &mut rng).unwrap();
            for _ in 0..5 {
                s = gibbs_sweep(&s, &obs, &hyper, EmissionMode::Diagonal, &mut rng).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn schedule_must_leave_post_burn_in_samples() {
        let obs = toy_obs(50);
        let hyper = toy_hyper(&obs);
        let opts = FitOptions {
            iterations: 10,
            burn_in: 20,
            ..Default::default()
        };
        assert_eq!(
            fit(&obs, &hyper, &opts, 1).unwrap_err(),
            SamplerError::BadSchedule {
                iterations: 10,
                burn_in: 20
            }
        );
        let opts = FitOptions {
            iterations: 5,
            burn_in: 5,
            ..Default::default()
        };
        assert!(fit(&obs, &hyper, &opts, 1).is_err());
    }

    #[test]
    fn fit_finds_two_blocks() {
        let obs = toy_obs(400);
        let hyper = toy_hyper(&obs);
        let opts = FitOptions {
            iterations: 60,
            burn_in: 30,
            ..Default::default()
        };
        let r = fit(&obs, &hyper, &opts, 3).unwrap();
        assert_eq!(r.trace.len(), 60);
        assert!(r.best_iteration >= 30);
        assert_eq!(r.n_clusters(), 2);
        // the first block of 40 frames shares one label, the next another
        assert!(r.labels[..40].iter().all(|&z| z == r.labels[0]));
        assert!(r.labels[40..80].iter().all(|&z| z != r.labels[0]));
    }

    #[test]
    fn chains_pick_highest_final_density() {
        let obs = toy_obs(160);
        let hyper = toy_hyper(&obs);
        let opts = FitOptions {
            iterations: 12,
            burn_in: 4,
            ..Default::default()
        };
        let best = fit_chains(&obs, &hyper, &opts, 9, 3).unwrap();
        for c in 0..3 {
            let single = fit_chain(&obs, &hyper, &opts, 9, c).unwrap();
            assert!(best.final_log_density() >= single.final_log_density());
        }
        assert_eq!(best, fit_chains(&obs, &hyper, &opts, 9, 3).unwrap());
    }

    #[test]
    fn dense_relabel_orders_by_occupancy() {
        let (dense, states) = dense_relabel(&[4, 4, 1, 4, 1, 2], 6);
        assert_eq!(states, vec![4, 1, 2]);
        assert_eq!(dense, vec![0, 0, 1, 0, 1, 2]);
    }

    #[test]
    fn initialization_uses_at_most_ten_states() {
        let obs: Vec<DVector<f64>> = (0..500).map(|t| DVector::from_element(1, t as f64)).collect();
        let hyper = Hyperparameters {
            alpha: 1.0,
            gamma: 1.0,
            kappa: 10.0,
            niw_mean0: DVector::zeros(1),
            niw_scale0: 0.01,
            niw_dof0: 4.0,
            niw_psi0: DMatrix::identity(1, 1),
            truncation: 20,
        };
        let s = initialize(&obs, &hyper, EmissionMode::Full, &mut seeded(0)).unwrap();
        assert!(s.labels.iter().all(|&z| z < 10));
        assert_eq!(s.occupied_states(), 10);
    }
}
