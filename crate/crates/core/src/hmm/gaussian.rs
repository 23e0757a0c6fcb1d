//! HMMs with diagonal-covariance Gaussian-mixture emissions over raw
//! frame feature vectors: the baseline the token models are compared
//! against. Computation runs in the log domain throughout.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::discrete::{Topology, TrainOptions, TrainReport};
use crate::error::{Error, Result};
use crate::signals::{composite_norm, ChannelGroup, Trial};

pub const VARIANCE_FLOOR: f64 = 1e-6;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-state mixture: `M` diagonal Gaussians with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    /// M x dim
    pub means: Vec<Vec<f64>>,
    /// M x dim, floored at [`VARIANCE_FLOOR`]
    pub vars: Vec<Vec<f64>>,
}

impl GaussianMixture {
    fn log_density(&self, x: &[f64]) -> f64 {
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(self.means.iter().zip(self.vars.iter()))
            .map(|(&w, (mean, var))| {
                if w <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                w.ln() + log_diag_normal(x, mean, var)
            })
            .collect();
        log_sum_exp(&logs)
    }
}

fn log_diag_normal(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&xi, &mu), &v) in x.iter().zip(mean.iter()).zip(var.iter()) {
        let d = xi - mu;
        acc += -0.5 * (LN_2PI + v.ln()) - d * d / (2.0 * v);
    }
    acc
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// A trained Gaussian-mixture HMM over feature vectors of width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHmm {
    pub n_states: usize,
    pub dim: usize,
    pub topology: Topology,
    pub pi: Vec<f64>,
    pub trans: Vec<f64>,
    pub states: Vec<GaussianMixture>,
}

impl GaussianHmm {
    fn trans_at(&self, i: usize, j: usize) -> f64 {
        self.trans[i * self.n_states + j]
    }
}

/// Which raw per-frame feature vector the baseline sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// v (3), w (3), |F|, |b| — 8 dimensions.
    Reduced,
    /// v (3), w (3), F (18), b (8) — 32 dimensions.
    Full,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Reduced => "reduced",
            FeatureMode::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureMode> {
        match s {
            "reduced" => Some(FeatureMode::Reduced),
            "full" => Some(FeatureMode::Full),
            _ => None,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            FeatureMode::Reduced => 8,
            FeatureMode::Full => 32,
        }
    }
}

/// Turns a trial into the per-frame feature sequence the raw baseline
/// trains on.
pub fn raw_features(trial: &Trial, mode: FeatureMode) -> Vec<Vec<f64>> {
    match mode {
        FeatureMode::Reduced => {
            let force = composite_norm(trial, ChannelGroup::Pressure);
            let bend = composite_norm(trial, ChannelGroup::Bend);
            trial
                .frames
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    let mut x = Vec::with_capacity(8);
                    x.extend_from_slice(&f.v);
                    x.extend_from_slice(&f.w);
                    x.push(force.values[k]);
                    x.push(bend.values[k]);
                    x
                })
                .collect()
        }
        FeatureMode::Full => trial
            .frames
            .iter()
            .map(|f| {
                let mut x = Vec::with_capacity(32);
                x.extend_from_slice(&f.v);
                x.extend_from_slice(&f.w);
                x.extend_from_slice(&f.pressure);
                x.extend_from_slice(&f.bend);
                x
            })
            .collect(),
    }
}

fn log_emissions(hmm: &GaussianHmm, seq: &[Vec<f64>]) -> Vec<f64> {
    let n = hmm.n_states;
    let mut out = vec![0.0; seq.len() * n];
    for (t, x) in seq.iter().enumerate() {
        for (i, state) in hmm.states.iter().enumerate() {
            out[t * n + i] = state.log_density(x);
        }
    }
    out
}

/// Log-domain forward pass; exact marginal log-density of the sequence.
pub fn gaussian_forward_loglik(hmm: &GaussianHmm, seq: &[Vec<f64>]) -> f64 {
    if seq.is_empty() {
        return 0.0;
    }
    let n = hmm.n_states;
    let lb = log_emissions(hmm, seq);
    let mut la: Vec<f64> = (0..n)
        .map(|i| safe_ln(hmm.pi[i]) + lb[i])
        .collect();
    let mut scratch = vec![f64::NEG_INFINITY; n];
    for t in 1..seq.len() {
        for (j, slot) in scratch.iter_mut().enumerate() {
            let terms: Vec<f64> = (0..n)
                .map(|i| la[i] + safe_ln(hmm.trans_at(i, j)))
                .collect();
            *slot = log_sum_exp(&terms) + lb[t * n + j];
        }
        std::mem::swap(&mut la, &mut scratch);
    }
    log_sum_exp(&la)
}

fn safe_ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn init_gaussian(
    sequences: &[Vec<Vec<f64>>],
    n_states: usize,
    n_components: usize,
    topology: Topology,
    rng: &mut ChaCha8Rng,
) -> GaussianHmm {
    let dim = sequences[0][0].len();
    let frames: Vec<&Vec<f64>> = sequences.iter().flatten().collect();
    let count = frames.len() as f64;
    let mut global_mean = vec![0.0; dim];
    for f in &frames {
        for (m, &x) in global_mean.iter_mut().zip(f.iter()) {
            *m += x;
        }
    }
    for m in &mut global_mean {
        *m /= count;
    }
    let mut global_var = vec![0.0; dim];
    for f in &frames {
        for ((v, &x), &m) in global_var.iter_mut().zip(f.iter()).zip(global_mean.iter()) {
            *v += (x - m) * (x - m);
        }
    }
    for v in &mut global_var {
        *v = (*v / count).max(VARIANCE_FLOOR);
    }

    let states = (0..n_states)
        .map(|_| {
            let means = (0..n_components)
                .map(|_| frames[rng.random_range(0..frames.len())].clone())
                .collect();
            GaussianMixture {
                weights: vec![1.0 / n_components as f64; n_components],
                means,
                vars: vec![global_var.clone(); n_components],
            }
        })
        .collect();

    let mut trans = vec![0.0; n_states * n_states];
    for i in 0..n_states {
        let allowed: Vec<usize> = (0..n_states)
            .filter(|&j| match topology {
                Topology::Ergodic => true,
                Topology::Bakis => j >= i && j <= i + 2,
            })
            .collect();
        let mut row: Vec<f64> = (0..allowed.len())
            .map(|_| rng.random_range(0.9..1.1))
            .collect();
        let sum: f64 = row.iter().sum();
        for x in &mut row {
            *x /= sum;
        }
        for (k, &j) in allowed.iter().enumerate() {
            trans[i * n_states + j] = row[k];
        }
    }
    let pi = match topology {
        Topology::Bakis => {
            let mut pi = vec![0.0; n_states];
            pi[0] = 1.0;
            pi
        }
        Topology::Ergodic => vec![1.0 / n_states as f64; n_states],
    };

    GaussianHmm {
        n_states,
        dim,
        topology,
        pi,
        trans,
        states,
    }
}

/// EM for the Gaussian-mixture HMM. Variances are floored at
/// [`VARIANCE_FLOOR`]; components whose variance sits at the floor with
/// negligible weight are pruned (counted in the report).
pub fn gaussian_baum_welch(
    sequences: &[Vec<Vec<f64>>],
    n_states: usize,
    n_components: usize,
    topology: Topology,
    opts: &TrainOptions,
) -> Result<(GaussianHmm, TrainReport, usize)> {
    if sequences.is_empty() || n_states == 0 || n_components == 0 {
        return Err(Error::Argument(
            "gaussian training needs sequences, states and components".into(),
        ));
    }
    let dim = sequences
        .first()
        .and_then(|s| s.first())
        .map(|f| f.len())
        .ok_or_else(|| Error::Argument("first sequence is empty".into()))?;
    for (i, s) in sequences.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::Argument(format!("sequence {i} is empty")));
        }
        for f in s {
            if f.len() != dim {
                return Err(Error::Argument(format!(
                    "sequence {i} mixes dimensions {} and {dim}",
                    f.len()
                )));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::Argument(format!("sequence {i} holds non-finite values")));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut hmm = init_gaussian(sequences, n_states, n_components, topology, &mut rng);
    let n = n_states;
    let min_len = sequences.iter().map(|s| s.len()).min().unwrap();
    let short_sequence_warning =
        topology == Topology::Bakis && n_states > 2 * (min_len - 1) + 1;

    let mut logliks = Vec::new();
    let mut converged = false;
    let mut pruned_total = 0usize;
    let mut prev_ll = f64::NEG_INFINITY;
    for iter in 0..opts.max_iter {
        let m_of: Vec<usize> = hmm.states.iter().map(|s| s.weights.len()).collect();
        let mut pi_acc = vec![0.0; n];
        let mut trans_num = vec![0.0; n * n];
        let mut trans_den = vec![0.0; n];
        let mut w_num: Vec<Vec<f64>> = m_of.iter().map(|&m| vec![0.0; m]).collect();
        let mut gamma_den = vec![0.0; n];
        let mut mean_num: Vec<Vec<f64>> =
            m_of.iter().map(|&m| vec![0.0; m * hmm.dim]).collect();
        let mut var_num: Vec<Vec<f64>> =
            m_of.iter().map(|&m| vec![0.0; m * hmm.dim]).collect();
        let mut total_ll = 0.0;

        for seq in sequences {
            let t_len = seq.len();
            let lb = log_emissions(&hmm, seq);
            // log-domain forward/backward
            let mut la = vec![f64::NEG_INFINITY; t_len * n];
            for i in 0..n {
                la[i] = safe_ln(hmm.pi[i]) + lb[i];
            }
            for t in 1..t_len {
                for j in 0..n {
                    let terms: Vec<f64> = (0..n)
                        .map(|i| la[(t - 1) * n + i] + safe_ln(hmm.trans_at(i, j)))
                        .collect();
                    la[t * n + j] = log_sum_exp(&terms) + lb[t * n + j];
                }
            }
            let seq_ll = log_sum_exp(&la[(t_len - 1) * n..]);
            total_ll += seq_ll;

            let mut lbeta = vec![f64::NEG_INFINITY; t_len * n];
            for i in 0..n {
                lbeta[(t_len - 1) * n + i] = 0.0;
            }
            for t in (0..t_len - 1).rev() {
                for i in 0..n {
                    let terms: Vec<f64> = (0..n)
                        .map(|j| {
                            safe_ln(hmm.trans_at(i, j))
                                + lb[(t + 1) * n + j]
                                + lbeta[(t + 1) * n + j]
                        })
                        .collect();
                    lbeta[t * n + i] = log_sum_exp(&terms);
                }
            }

            for t in 0..t_len {
                let x = &seq[t];
                for i in 0..n {
                    let lgamma = la[t * n + i] + lbeta[t * n + i] - seq_ll;
                    if lgamma < -700.0 {
                        continue;
                    }
                    let gamma = lgamma.exp();
                    gamma_den[i] += gamma;
                    if t == 0 {
                        pi_acc[i] += gamma;
                    }
                    if t + 1 < t_len {
                        trans_den[i] += gamma;
                    }
                    // split gamma across components
                    let comp_logs: Vec<f64> = hmm.states[i]
                        .weights
                        .iter()
                        .zip(hmm.states[i].means.iter().zip(hmm.states[i].vars.iter()))
                        .map(|(&w, (mean, var))| {
                            safe_ln(w) + log_diag_normal(x, mean, var)
                        })
                        .collect();
                    let denom = log_sum_exp(&comp_logs);
                    for (m, &cl) in comp_logs.iter().enumerate() {
                        let r = gamma * (cl - denom).exp();
                        if r == 0.0 {
                            continue;
                        }
                        w_num[i][m] += r;
                        let base = m * hmm.dim;
                        for (d, &xd) in x.iter().enumerate() {
                            mean_num[i][base + d] += r * xd;
                            var_num[i][base + d] += r * xd * xd;
                        }
                    }
                }
            }
            for t in 0..t_len - 1 {
                for i in 0..n {
                    for j in 0..n {
                        let a = hmm.trans_at(i, j);
                        if a == 0.0 {
                            continue;
                        }
                        let lxi = la[t * n + i]
                            + a.ln()
                            + lb[(t + 1) * n + j]
                            + lbeta[(t + 1) * n + j]
                            - seq_ll;
                        if lxi > -700.0 {
                            trans_num[i * n + j] += lxi.exp();
                        }
                    }
                }
            }
        }

        logliks.push(total_ll);
        if iter > 0 {
            let improvement = (total_ll - prev_ll) / prev_ll.abs().max(1e-300);
            if improvement < opts.tol {
                converged = true;
                break;
            }
        }
        prev_ll = total_ll;

        // M-step
        for i in 0..n {
            if trans_den[i] > 1e-300 {
                let mut row_sum = 0.0;
                for j in 0..n {
                    row_sum += trans_num[i * n + j];
                }
                if row_sum > 1e-300 {
                    for j in 0..n {
                        hmm.trans[i * n + j] = trans_num[i * n + j] / row_sum;
                    }
                }
            }
            if gamma_den[i] <= 1e-300 {
                continue; // state never visited, keep its parameters
            }
            let state = &mut hmm.states[i];
            for m in 0..m_of[i] {
                let r_total = w_num[i][m];
                state.weights[m] = r_total / gamma_den[i];
                if r_total <= 1e-300 {
                    continue;
                }
                let base = m * hmm.dim;
                for d in 0..hmm.dim {
                    let mean = mean_num[i][base + d] / r_total;
                    let var =
                        (var_num[i][base + d] / r_total - mean * mean).max(VARIANCE_FLOOR);
                    state.means[m][d] = mean;
                    state.vars[m][d] = var;
                }
            }
            let wsum: f64 = state.weights.iter().sum();
            if wsum > 0.0 {
                for w in &mut state.weights {
                    *w /= wsum;
                }
            }
        }
        if topology == Topology::Ergodic {
            let total: f64 = pi_acc.iter().sum();
            if total > 1e-300 {
                for (slot, &x) in hmm.pi.iter_mut().zip(pi_acc.iter()) {
                    *slot = x / total;
                }
            }
        }

        // prune singular components: variance pinned at the floor with
        // negligible responsibility mass (accumulators re-size next iter)
        {
            for state in &mut hmm.states {
                let keep: Vec<usize> = (0..state.weights.len())
                    .filter(|&m| {
                        !(state.weights[m] < 1e-8
                            && state.vars[m].iter().all(|&v| v <= VARIANCE_FLOOR))
                    })
                    .collect();
                if keep.len() < state.weights.len() && !keep.is_empty() {
                    pruned_total += state.weights.len() - keep.len();
                    state.weights = keep.iter().map(|&m| state.weights[m]).collect();
                    state.means = keep.iter().map(|&m| state.means[m].clone()).collect();
                    state.vars = keep.iter().map(|&m| state.vars[m].clone()).collect();
                    let wsum: f64 = state.weights.iter().sum();
                    for w in &mut state.weights {
                        *w /= wsum;
                    }
                }
            }
        }
    }

    Ok((
        hmm,
        TrainReport {
            logliks,
            converged,
            short_sequence_warning,
        },
        pruned_total,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn gaussian_data(
        mean: &[f64],
        std: &[f64],
        n_seqs: usize,
        len: usize,
        seed: u64,
    ) -> Vec<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_seqs)
            .map(|_| {
                (0..len)
                    .map(|_| {
                        mean.iter()
                            .zip(std.iter())
                            .map(|(&m, &s)| Normal::new(m, s).unwrap().sample(&mut rng))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_state_single_component_closed_form() {
        let data = gaussian_data(&[1.0, -2.0], &[0.5, 1.5], 4, 50, 3);
        let (hmm, _, _) = gaussian_baum_welch(
            &data,
            1,
            1,
            Topology::Ergodic,
            &TrainOptions {
                max_iter: 3,
                ..Default::default()
            },
        )
        .unwrap();
        // empirical mean/variance over all frames (MLE, n denominator)
        let frames: Vec<&Vec<f64>> = data.iter().flatten().collect();
        let count = frames.len() as f64;
        for d in 0..2 {
            let mean: f64 = frames.iter().map(|f| f[d]).sum::<f64>() / count;
            let var: f64 =
                frames.iter().map(|f| (f[d] - mean) * (f[d] - mean)).sum::<f64>() / count;
            assert!((hmm.states[0].means[0][d] - mean).abs() < 1e-9);
            assert!((hmm.states[0].vars[0][d] - var).abs() < 1e-6 * var.max(1.0));
        }
    }

    #[test]
    fn recovers_mean_within_three_standard_errors() {
        let truth_mean = [0.7, -1.2, 2.4];
        let truth_std = [0.4, 0.8, 0.2];
        let n_frames = 40 * 60;
        let data = gaussian_data(&truth_mean, &truth_std, 40, 60, 11);
        let (hmm, _, _) = gaussian_baum_welch(
            &data,
            1,
            1,
            Topology::Ergodic,
            &TrainOptions::default(),
        )
        .unwrap();
        for d in 0..3 {
            let se = truth_std[d] / (n_frames as f64).sqrt();
            let err = (hmm.states[0].means[0][d] - truth_mean[d]).abs();
            assert!(err <= 3.0 * se, "dim {d}: err {err} > 3 se {se}");
        }
    }

    #[test]
    fn constant_features_floor_variance_without_nan() {
        let data: Vec<Vec<Vec<f64>>> = vec![vec![vec![1.5, 3.0]; 30]; 3];
        let (hmm, report, _) = gaussian_baum_welch(
            &data,
            2,
            2,
            Topology::Bakis,
            &TrainOptions {
                max_iter: 10,
                ..Default::default()
            },
        )
        .unwrap();
        for state in &hmm.states {
            for var in &state.vars {
                for &v in var {
                    assert!(v >= VARIANCE_FLOOR && v.is_finite());
                }
            }
            for mean in &state.means {
                assert!(mean.iter().all(|x| x.is_finite()));
            }
        }
        assert!(report.logliks.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn gaussian_em_loglik_monotone() {
        // two-regime data so the model has something to learn
        let mut data = gaussian_data(&[0.0, 0.0], &[0.3, 0.3], 6, 25, 17);
        data.extend(gaussian_data(&[2.0, -1.0], &[0.4, 0.2], 6, 25, 18));
        for seed in 0..4 {
            let (_, report, _) = gaussian_baum_welch(
                &data,
                2,
                2,
                Topology::Ergodic,
                &TrainOptions {
                    seed,
                    max_iter: 60,
                    tol: 1e-7,
                    ..Default::default()
                },
            )
            .unwrap();
            for w in report.logliks.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "decrease {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn forward_matches_brute_force_on_tiny_model() {
        let hmm = GaussianHmm {
            n_states: 2,
            dim: 1,
            topology: Topology::Ergodic,
            pi: vec![0.6, 0.4],
            trans: vec![0.7, 0.3, 0.4, 0.6],
            states: vec![
                GaussianMixture {
                    weights: vec![1.0],
                    means: vec![vec![0.0]],
                    vars: vec![vec![1.0]],
                },
                GaussianMixture {
                    weights: vec![1.0],
                    means: vec![vec![2.0]],
                    vars: vec![vec![0.5]],
                },
            ],
        };
        let seq = vec![vec![0.1], vec![1.9], vec![1.0]];
        // path enumeration in linear space
        let mut total = 0.0;
        for s0 in 0..2 {
            for s1 in 0..2 {
                for s2 in 0..2 {
                    total += hmm.pi[s0]
                        * hmm.states[s0].log_density(&seq[0]).exp()
                        * hmm.trans_at(s0, s1)
                        * hmm.states[s1].log_density(&seq[1]).exp()
                        * hmm.trans_at(s1, s2)
                        * hmm.states[s2].log_density(&seq[2]).exp();
                }
            }
        }
        let fast = gaussian_forward_loglik(&hmm, &seq);
        assert!((fast - total.ln()).abs() < 1e-9);
    }

    #[test]
    fn training_is_deterministic() {
        let data = gaussian_data(&[1.0, 0.0], &[0.5, 0.5], 5, 20, 29);
        let opts = TrainOptions {
            seed: 42,
            max_iter: 15,
            ..Default::default()
        };
        let (a, _, _) =
            gaussian_baum_welch(&data, 2, 2, Topology::Ergodic, &opts).unwrap();
        let (b, _, _) =
            gaussian_baum_welch(&data, 2, 2, Topology::Ergodic, &opts).unwrap();
        assert_eq!(a, b);
    }
}
