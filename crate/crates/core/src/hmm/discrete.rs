//! Discrete-emission hidden Markov models: Baum-Welch training with
//! Laplace-smoothed emissions and the scaled forward algorithm.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Transition structure. Bakis (left-right) allows self, next, and
/// skip-one transitions and pins the start distribution on state 0;
/// ergodic is fully connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Bakis,
    Ergodic,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Bakis => "bakis",
            Topology::Ergodic => "ergodic",
        }
    }

    pub fn parse(s: &str) -> Option<Topology> {
        match s {
            "bakis" => Some(Topology::Bakis),
            "ergodic" => Some(Topology::Ergodic),
            _ => None,
        }
    }

    fn allows(self, from: usize, to: usize) -> bool {
        match self {
            Topology::Ergodic => true,
            Topology::Bakis => to >= from && to <= from + 2,
        }
    }
}

/// A trained discrete HMM. `trans` is N x N row-major, `emit` N x V.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    pub n_states: usize,
    pub vocab_size: usize,
    pub topology: Topology,
    pub pi: Vec<f64>,
    pub trans: Vec<f64>,
    pub emit: Vec<f64>,
}

impl DiscreteHmm {
    pub fn trans_at(&self, i: usize, j: usize) -> f64 {
        self.trans[i * self.n_states + j]
    }

    pub fn emit_at(&self, i: usize, v: usize) -> f64 {
        self.emit[i * self.vocab_size + v]
    }

    /// Row-stochasticity check used by tests and bank loading.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        let v = self.vocab_size;
        if self.pi.len() != n || self.trans.len() != n * n || self.emit.len() != n * v {
            return Err(Error::Validation("hmm dimension mismatch".into()));
        }
        let rows = std::iter::once(&self.pi[..])
            .chain(self.trans.chunks(n))
            .chain(self.emit.chunks(v));
        for row in rows {
            if row.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::Validation("negative or non-finite probability".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("row sums to {sum}, not 1")));
            }
        }
        Ok(())
    }
}

/// Baum-Welch knobs. `smoothing` is the Laplace epsilon added to emission
/// counts after every M-step.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub smoothing: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            smoothing: 0.01,
            max_iter: 100,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Total log-likelihood at the start of each EM iteration.
    pub logliks: Vec<f64>,
    pub converged: bool,
    /// Bakis states exceed what the shortest sequence can traverse.
    pub short_sequence_warning: bool,
}

impl TrainReport {
    pub fn final_loglik(&self) -> f64 {
        self.logliks.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

fn init_model(
    n_states: usize,
    vocab_size: usize,
    topology: Topology,
    rng: &mut ChaCha8Rng,
) -> DiscreteHmm {
    // near-uniform rows with a small multiplicative jitter to break
    // symmetry; structural zeros stay exactly zero
    let mut jitter = |allowed: usize| -> Vec<f64> {
        let mut row: Vec<f64> = (0..allowed).map(|_| rng.random_range(0.9..1.1)).collect();
        let sum: f64 = row.iter().sum();
        for x in &mut row {
            *x /= sum;
        }
        row
    };
    let mut trans = vec![0.0; n_states * n_states];
    for i in 0..n_states {
        let allowed: Vec<usize> = (0..n_states).filter(|&j| topology.allows(i, j)).collect();
        let row = jitter(allowed.len());
        for (k, &j) in allowed.iter().enumerate() {
            trans[i * n_states + j] = row[k];
        }
    }
    let mut emit = vec![0.0; n_states * vocab_size];
    for i in 0..n_states {
        let row = jitter(vocab_size);
        emit[i * vocab_size..(i + 1) * vocab_size].copy_from_slice(&row);
    }
    let pi = match topology {
        Topology::Bakis => {
            let mut pi = vec![0.0; n_states];
            pi[0] = 1.0;
            pi
        }
        Topology::Ergodic => jitter(n_states),
    };
    DiscreteHmm {
        n_states,
        vocab_size,
        topology,
        pi,
        trans,
        emit,
    }
}

struct ForwardBackward {
    loglik: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    scales: Vec<f64>,
}

fn forward_backward(hmm: &DiscreteHmm, seq: &[usize]) -> ForwardBackward {
    let n = hmm.n_states;
    let t_len = seq.len();
    let mut alpha = vec![0.0; t_len * n];
    let mut scales = vec![0.0; t_len];
    for i in 0..n {
        alpha[i] = hmm.pi[i] * hmm.emit_at(i, seq[0]);
    }
    let c0: f64 = alpha[..n].iter().sum();
    scales[0] = c0;
    for x in &mut alpha[..n] {
        *x /= c0;
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        for j in 0..n {
            let mut acc = 0.0;
            for (i, &p) in prev.iter().enumerate() {
                acc += p * hmm.trans_at(i, j);
            }
            cur[j] = acc * hmm.emit_at(j, seq[t]);
        }
        let c: f64 = cur[..n].iter().sum();
        scales[t] = c;
        for x in &mut cur[..n] {
            *x /= c;
        }
    }

    let mut beta = vec![0.0; t_len * n];
    for i in 0..n {
        beta[(t_len - 1) * n + i] = 1.0;
    }
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += hmm.trans_at(i, j) * hmm.emit_at(j, seq[t + 1]) * beta[(t + 1) * n + j];
            }
            beta[t * n + i] = acc / scales[t + 1];
        }
    }

    ForwardBackward {
        loglik: scales.iter().map(|c| c.ln()).sum(),
        alpha,
        beta,
        scales,
    }
}

/// Exact marginal log P(sequence | model) via the scaled forward
/// algorithm. Unknown tokens use the smoothed unknown emission column.
pub fn forward_loglik(hmm: &DiscreteHmm, seq: &[usize]) -> f64 {
    if seq.is_empty() {
        return 0.0;
    }
    let n = hmm.n_states;
    let mut alpha: Vec<f64> = (0..n).map(|i| hmm.pi[i] * hmm.emit_at(i, seq[0])).collect();
    let mut loglik = 0.0;
    let c0: f64 = alpha.iter().sum();
    if c0 <= 0.0 {
        return f64::NEG_INFINITY;
    }
    loglik += c0.ln();
    for x in &mut alpha {
        *x /= c0;
    }
    let mut next = vec![0.0; n];
    for &y in &seq[1..] {
        for (j, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &a) in alpha.iter().enumerate() {
                acc += a * hmm.trans_at(i, j);
            }
            *slot = acc * hmm.emit_at(j, y);
        }
        let c: f64 = next.iter().sum();
        if c <= 0.0 {
            return f64::NEG_INFINITY;
        }
        loglik += c.ln();
        for x in &mut next {
            *x /= c;
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    loglik
}

/// EM training from a seeded random initialization that respects the
/// topology's structural zeros. Emissions are Laplace-smoothed with
/// `smoothing` after every M-step and renormalized. Stops when the
/// relative log-likelihood improvement drops below `tol` or after
/// `max_iter` iterations.
pub fn baum_welch(
    sequences: &[Vec<usize>],
    n_states: usize,
    vocab_size: usize,
    topology: Topology,
    opts: &TrainOptions,
) -> Result<(DiscreteHmm, TrainReport)> {
    if n_states == 0 {
        return Err(Error::Argument("n_states must be >= 1".into()));
    }
    if vocab_size == 0 {
        return Err(Error::Argument("vocab_size must be >= 1".into()));
    }
    if sequences.is_empty() {
        return Err(Error::Argument("training needs at least one sequence".into()));
    }
    for (i, s) in sequences.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::Argument(format!("sequence {i} is empty")));
        }
        if let Some(&y) = s.iter().find(|&&y| y >= vocab_size) {
            return Err(Error::Argument(format!(
                "sequence {i} holds symbol {y} outside vocabulary of {vocab_size}"
            )));
        }
    }
    let min_len = sequences.iter().map(|s| s.len()).min().unwrap();
    let short_sequence_warning =
        topology == Topology::Bakis && n_states > 2 * (min_len - 1) + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut hmm = init_model(n_states, vocab_size, topology, &mut rng);
    let n = n_states;
    let v = vocab_size;

    let mut logliks = Vec::new();
    let mut converged = false;
    let mut prev_ll = f64::NEG_INFINITY;
    for iter in 0..opts.max_iter {
        let mut trans_num = vec![0.0; n * n];
        let mut trans_den = vec![0.0; n];
        let mut emit_num = vec![0.0; n * v];
        let mut emit_den = vec![0.0; n];
        let mut pi_acc = vec![0.0; n];
        let mut total_ll = 0.0;

        for seq in sequences {
            let t_len = seq.len();
            let fb = forward_backward(&hmm, seq);
            total_ll += fb.loglik;
            for t in 0..t_len {
                for i in 0..n {
                    let gamma = fb.alpha[t * n + i] * fb.beta[t * n + i];
                    emit_num[i * v + seq[t]] += gamma;
                    emit_den[i] += gamma;
                    if t == 0 {
                        pi_acc[i] += gamma;
                    }
                    if t + 1 < t_len {
                        trans_den[i] += gamma;
                    }
                }
            }
            for t in 0..t_len - 1 {
                for i in 0..n {
                    let a_ti = fb.alpha[t * n + i];
                    if a_ti == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        let a = hmm.trans_at(i, j);
                        if a == 0.0 {
                            continue;
                        }
                        trans_num[i * n + j] += a_ti
                            * a
                            * hmm.emit_at(j, seq[t + 1])
                            * fb.beta[(t + 1) * n + j]
                            / fb.scales[t + 1];
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
                let allowed: Vec<usize> =
                    (0..n).filter(|&j| topology.allows(i, j)).collect();
                let mut row_sum = 0.0;
                for &j in &allowed {
                    row_sum += trans_num[i * n + j];
                }
                if row_sum > 1e-300 {
                    for &j in &allowed {
                        hmm.trans[i * n + j] = trans_num[i * n + j] / row_sum;
                    }
                }
            }
            let den = emit_den[i] + opts.smoothing * v as f64;
            for sym in 0..v {
                hmm.emit[i * v + sym] = (emit_num[i * v + sym] + opts.smoothing) / den;
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
    }

    Ok((
        hmm,
        TrainReport {
            logliks,
            converged,
            short_sequence_warning,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(seqs: &[&[usize]]) -> Vec<Vec<usize>> {
        seqs.iter().map(|s| s.to_vec()).collect()
    }

    #[test]
    fn single_state_matches_empirical_frequencies() {
        let seqs = encode(&[&[0, 1, 1, 2], &[1, 1, 0, 2]]);
        let opts = TrainOptions {
            smoothing: 0.01,
            ..Default::default()
        };
        let (hmm, _) = baum_welch(&seqs, 1, 3, Topology::Ergodic, &opts).unwrap();
        // counts: 0 -> 2, 1 -> 4, 2 -> 2, total 8, V = 3
        let expect = |c: f64| (c + 0.01) / (8.0 + 0.03);
        assert!((hmm.emit_at(0, 0) - expect(2.0)).abs() < 1e-9);
        assert!((hmm.emit_at(0, 1) - expect(4.0)).abs() < 1e-9);
        assert!((hmm.emit_at(0, 2) - expect(2.0)).abs() < 1e-9);
        assert!((hmm.trans_at(0, 0) - 1.0).abs() < 1e-12);
    }

    fn pick(dist: &[f64], rng: &mut ChaCha8Rng) -> usize {
        let x: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in dist.iter().enumerate() {
            acc += p;
            if x < acc {
                return i;
            }
        }
        dist.len() - 1
    }

    fn sample_hmm(hmm: &DiscreteHmm, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut state = pick(&hmm.pi, rng);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let erow = &hmm.emit[state * hmm.vocab_size..(state + 1) * hmm.vocab_size];
            out.push(pick(erow, rng));
            let trow = &hmm.trans[state * hmm.n_states..(state + 1) * hmm.n_states];
            state = pick(trow, rng);
        }
        out
    }

    fn generator_2state() -> DiscreteHmm {
        DiscreteHmm {
            n_states: 2,
            vocab_size: 3,
            topology: Topology::Ergodic,
            pi: vec![0.7, 0.3],
            trans: vec![0.85, 0.15, 0.2, 0.8],
            emit: vec![0.8, 0.15, 0.05, 0.05, 0.2, 0.75],
        }
    }

    #[test]
    fn recovers_generator_heldout_likelihood() {
        let generator = generator_2state();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let train: Vec<Vec<usize>> =
            (0..60).map(|_| sample_hmm(&generator, 40, &mut rng)).collect();
        let heldout: Vec<Vec<usize>> =
            (0..30).map(|_| sample_hmm(&generator, 40, &mut rng)).collect();
        let opts = TrainOptions {
            seed: 3,
            max_iter: 500,
            tol: 1e-9,
            ..Default::default()
        };
        let (hmm, report) = baum_welch(&train, 2, 3, Topology::Ergodic, &opts).unwrap();
        assert!(report.logliks.len() > 2);
        let tokens: usize = heldout.iter().map(|s| s.len()).sum();
        let model_ll: f64 = heldout.iter().map(|s| forward_loglik(&hmm, s)).sum();
        let truth_ll: f64 = heldout.iter().map(|s| forward_loglik(&generator, s)).sum();
        let per_token_model = model_ll / tokens as f64;
        let per_token_truth = truth_ll / tokens as f64;
        assert!(
            (per_token_model - per_token_truth).abs() <= 0.05 * per_token_truth.abs(),
            "model {per_token_model} vs truth {per_token_truth}"
        );
    }

    #[test]
    fn bakis_band_structure_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let generator = generator_2state();
        let seqs: Vec<Vec<usize>> =
            (0..20).map(|_| sample_hmm(&generator, 25, &mut rng)).collect();
        let (hmm, _) =
            baum_welch(&seqs, 4, 3, Topology::Bakis, &TrainOptions::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if j < i || j > i + 2 {
                    assert_eq!(hmm.trans_at(i, j), 0.0, "trans[{i}][{j}] must stay zero");
                }
            }
        }
        assert_eq!(hmm.pi, vec![1.0, 0.0, 0.0, 0.0]);
        hmm.validate().unwrap();
    }

    #[test]
    fn forward_uniform_single_state_closed_form() {
        let v = 4;
        let hmm = DiscreteHmm {
            n_states: 1,
            vocab_size: v,
            topology: Topology::Ergodic,
            pi: vec![1.0],
            trans: vec![1.0],
            emit: vec![1.0 / v as f64; v],
        };
        let seq = vec![0, 1, 2, 3, 1, 0];
        let expected = (1.0 / v as f64).ln() * seq.len() as f64;
        assert!((forward_loglik(&hmm, &seq) - expected).abs() < 1e-12);
    }

    /// Brute-force path enumeration, the independent oracle for forward.
    pub fn brute_force_loglik(hmm: &DiscreteHmm, seq: &[usize]) -> f64 {
        fn recur(hmm: &DiscreteHmm, seq: &[usize], t: usize, state: usize, p: f64) -> f64 {
            let p = p * hmm.emit_at(state, seq[t]);
            if t + 1 == seq.len() {
                return p;
            }
            (0..hmm.n_states)
                .map(|next| recur(hmm, seq, t + 1, next, p * hmm.trans_at(state, next)))
                .sum()
        }
        let total: f64 = (0..hmm.n_states)
            .map(|s| recur(hmm, seq, 0, s, hmm.pi[s]))
            .sum();
        total.ln()
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let hmm = DiscreteHmm {
            n_states: 2,
            vocab_size: 2,
            topology: Topology::Ergodic,
            pi: vec![0.6, 0.4],
            trans: vec![0.7, 0.3, 0.4, 0.6],
            emit: vec![0.9, 0.1, 0.2, 0.8],
        };
        for seq in [[0, 1, 0], [1, 1, 1], [0, 0, 1]] {
            let fast = forward_loglik(&hmm, &seq);
            let brute = brute_force_loglik(&hmm, &seq);
            assert!(
                (fast - brute).abs() <= 1e-9 * brute.abs(),
                "fast {fast} vs brute {brute}"
            );
        }
    }

    #[test]
    fn likelihoods_sum_to_one_over_all_sequences() {
        let hmm = DiscreteHmm {
            n_states: 2,
            vocab_size: 3,
            topology: Topology::Ergodic,
            pi: vec![0.5, 0.5],
            trans: vec![0.6, 0.4, 0.3, 0.7],
            emit: vec![0.5, 0.3, 0.2, 0.1, 0.6, 0.3],
        };
        let len = 4;
        let mut total = 0.0;
        let mut seq = vec![0usize; len];
        loop {
            total += forward_loglik(&hmm, &seq).exp();
            // odometer over vocab^len
            let mut k = 0;
            loop {
                seq[k] += 1;
                if seq[k] < 3 {
                    break;
                }
                seq[k] = 0;
                k += 1;
                if k == len {
                    break;
                }
            }
            if k == len {
                break;
            }
        }
        assert!((total - 1.0).abs() <= 1e-9, "total = {total}");
    }

    #[test]
    fn em_loglik_is_monotone() {
        let generator = generator_2state();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let seqs: Vec<Vec<usize>> =
            (0..25).map(|_| sample_hmm(&generator, 30, &mut rng)).collect();
        for seed in 0..4 {
            for topology in [Topology::Bakis, Topology::Ergodic] {
                let opts = TrainOptions {
                    seed,
                    max_iter: 120,
                    tol: 1e-7,
                    ..Default::default()
                };
                let (_, report) = baum_welch(&seqs, 3, 3, topology, &opts).unwrap();
                for w in report.logliks.windows(2) {
                    assert!(
                        w[1] >= w[0] - 1e-9,
                        "loglik decreased: {} -> {} ({topology:?} seed {seed})",
                        w[0],
                        w[1]
                    );
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let generator = generator_2state();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seqs: Vec<Vec<usize>> =
            (0..10).map(|_| sample_hmm(&generator, 20, &mut rng)).collect();
        let opts = TrainOptions {
            seed: 99,
            ..Default::default()
        };
        let (a, _) = baum_welch(&seqs, 3, 3, Topology::Bakis, &opts).unwrap();
        let (b, _) = baum_welch(&seqs, 3, 3, Topology::Bakis, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_sequence() {
        let seqs = vec![vec![0, 1], vec![]];
        assert!(matches!(
            baum_welch(&seqs, 2, 2, Topology::Ergodic, &TrainOptions::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn warns_when_bakis_cannot_traverse() {
        let seqs = vec![vec![0, 1]];
        let (_, report) =
            baum_welch(&seqs, 6, 2, Topology::Bakis, &TrainOptions::default()).unwrap();
        assert!(report.short_sequence_warning);
    }

    #[test]
    fn stochastic_rows_after_every_training() {
        let generator = generator_2state();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let seqs: Vec<Vec<usize>> =
            (0..15).map(|_| sample_hmm(&generator, 18, &mut rng)).collect();
        for topology in [Topology::Bakis, Topology::Ergodic] {
            let (hmm, _) =
                baum_welch(&seqs, 4, 3, topology, &TrainOptions::default()).unwrap();
            hmm.validate().unwrap();
        }
    }
}
