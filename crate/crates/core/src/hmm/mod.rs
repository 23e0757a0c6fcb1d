//! Per-action sequence models: discrete-emission HMMs over token
//! sequences, plus the raw-frame Gaussian-mixture baseline. Model
//! selection trains every (topology, state count, restart) candidate and
//! keeps the one with maximum training likelihood.

pub mod discrete;
pub mod gaussian;
pub mod vocab;

use std::collections::BTreeMap;
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

pub use discrete::{baum_welch, forward_loglik, DiscreteHmm, Topology, TrainOptions, TrainReport};
pub use gaussian::{
    gaussian_baum_welch, gaussian_forward_loglik, raw_features, FeatureMode, GaussianHmm,
    GaussianMixture,
};
pub use vocab::Vocabulary;

use crate::error::{Error, Result};
use crate::par;
use crate::{mix_seed, ACTION_LABELS};

/// Search space for model selection.
#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub n_range: RangeInclusive<usize>,
    pub topologies: Vec<Topology>,
    pub restarts: usize,
    pub train: TrainOptions,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            n_range: 3..=10,
            topologies: vec![Topology::Bakis, Topology::Ergodic],
            restarts: 5,
            train: TrainOptions::default(),
        }
    }
}

/// Training metadata kept next to each selected model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub topology: Topology,
    pub n_states: usize,
    pub final_loglik: f64,
}

/// Trains every candidate and returns the one with maximum total training
/// log-likelihood. Ties break toward fewer states, then bakis.
pub fn select_model(
    sequences: &[Vec<usize>],
    vocab_size: usize,
    opts: &SelectOptions,
) -> Result<(DiscreteHmm, ModelMeta)> {
    if opts.n_range.is_empty() || opts.topologies.is_empty() || opts.restarts == 0 {
        return Err(Error::Argument(
            "model selection needs a non-empty search space".into(),
        ));
    }
    let mut candidates = Vec::new();
    for &topology in &opts.topologies {
        for n in opts.n_range.clone() {
            for restart in 0..opts.restarts {
                candidates.push((topology, n, restart));
            }
        }
    }
    let results = par::map_indices(candidates.len(), |idx| {
        let (topology, n, _restart) = candidates[idx];
        let train = TrainOptions {
            seed: mix_seed(opts.train.seed, idx as u64),
            ..opts.train.clone()
        };
        baum_welch(sequences, n, vocab_size, topology, &train)
            .map(|(hmm, report)| (hmm, report.final_loglik()))
    });

    let mut best: Option<(DiscreteHmm, ModelMeta)> = None;
    for result in results {
        let (hmm, loglik) = result?;
        let meta = ModelMeta {
            topology: hmm.topology,
            n_states: hmm.n_states,
            final_loglik: loglik,
        };
        best = Some(match best.take() {
            None => (hmm, meta),
            Some((cur_hmm, cur_meta)) => {
                if better_candidate(&meta, &cur_meta) {
                    (hmm, meta)
                } else {
                    (cur_hmm, cur_meta)
                }
            }
        });
    }
    best.ok_or_else(|| Error::Argument("empty candidate set".into()))
}

fn better_candidate(new: &ModelMeta, cur: &ModelMeta) -> bool {
    if new.final_loglik != cur.final_loglik {
        return new.final_loglik > cur.final_loglik;
    }
    if new.n_states != cur.n_states {
        return new.n_states < cur.n_states;
    }
    new.topology == Topology::Bakis && cur.topology == Topology::Ergodic
}

/// The per-action discrete model bank used by the primitive route.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionModelBank {
    pub vocab: Vocabulary,
    pub models: BTreeMap<String, (DiscreteHmm, ModelMeta)>,
}

impl ActionModelBank {
    /// Trains one selected model per action. Every one of the eight
    /// actions must be present in the training map.
    pub fn train(
        sequences_by_action: &BTreeMap<String, Vec<Vec<String>>>,
        opts: &SelectOptions,
    ) -> Result<ActionModelBank> {
        for required in ACTION_LABELS {
            if !sequences_by_action.contains_key(required) {
                return Err(Error::Data(format!(
                    "missing action {required} in training split"
                )));
            }
        }
        let all_sequences: Vec<Vec<String>> = sequences_by_action
            .values()
            .flat_map(|seqs| seqs.iter().cloned())
            .collect();
        let vocab = Vocabulary::build(&all_sequences)?;

        let actions: Vec<(&String, &Vec<Vec<String>>)> = sequences_by_action.iter().collect();
        let trained = par::map_indices(actions.len(), |idx| {
            let (label, seqs) = actions[idx];
            let encoded: Vec<Vec<usize>> = seqs.iter().map(|s| vocab.encode(s)).collect();
            let per_action = SelectOptions {
                train: TrainOptions {
                    seed: mix_seed(opts.train.seed, 0x4143 + idx as u64),
                    ..opts.train.clone()
                },
                ..opts.clone()
            };
            select_model(&encoded, vocab.size(), &per_action)
                .map(|(hmm, meta)| (label.clone(), hmm, meta))
        });

        let mut models = BTreeMap::new();
        for item in trained {
            let (label, hmm, meta) = item?;
            models.insert(label, (hmm, meta));
        }
        Ok(ActionModelBank { vocab, models })
    }

    fn check_complete(&self) -> Result<()> {
        for required in ACTION_LABELS {
            if !self.models.contains_key(required) {
                return Err(Error::State(format!(
                    "model bank is incomplete: missing {required}"
                )));
            }
        }
        Ok(())
    }

    /// Maximum-likelihood classification over the eight per-action models.
    /// Ties break to the lexicographically first action.
    pub fn classify(&self, tokens: &[String]) -> Result<(String, Vec<(String, f64)>)> {
        self.check_complete()?;
        let encoded = self.vocab.encode(tokens);
        let mut scores = Vec::with_capacity(self.models.len());
        let mut best: Option<(&str, f64)> = None;
        for (label, (hmm, _)) in &self.models {
            let ll = forward_loglik(hmm, &encoded);
            scores.push((label.clone(), ll));
            // strict > keeps the lexicographically first label on ties
            // (BTreeMap iterates in sorted order)
            if best.map_or(true, |(_, cur)| ll > cur) {
                best = Some((label, ll));
            }
        }
        let (label, _) = best.ok_or_else(|| Error::State("empty model bank".into()))?;
        Ok((label.to_string(), scores))
    }
}

/// Raw-baseline bank: Gaussian-mixture HMMs over per-frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBank {
    pub feature_mode: FeatureMode,
    pub models: BTreeMap<String, (GaussianHmm, ModelMeta)>,
}

/// Search space for the raw baseline.
#[derive(Debug, Clone)]
pub struct GaussianSelectOptions {
    pub n_range: RangeInclusive<usize>,
    pub topologies: Vec<Topology>,
    pub restarts: usize,
    pub n_components: usize,
    pub train: TrainOptions,
}

impl Default for GaussianSelectOptions {
    fn default() -> Self {
        GaussianSelectOptions {
            n_range: 3..=5,
            topologies: vec![Topology::Bakis, Topology::Ergodic],
            restarts: 2,
            n_components: 2,
            train: TrainOptions {
                max_iter: 30,
                ..Default::default()
            },
        }
    }
}

impl GaussianBank {
    pub fn train(
        sequences_by_action: &BTreeMap<String, Vec<Vec<Vec<f64>>>>,
        feature_mode: FeatureMode,
        opts: &GaussianSelectOptions,
    ) -> Result<GaussianBank> {
        for required in ACTION_LABELS {
            if !sequences_by_action.contains_key(required) {
                return Err(Error::Data(format!(
                    "missing action {required} in training split"
                )));
            }
        }
        let mut candidates = Vec::new();
        for (label, seqs) in sequences_by_action {
            for &topology in &opts.topologies {
                for n in opts.n_range.clone() {
                    for restart in 0..opts.restarts {
                        candidates.push((label, seqs, topology, n, restart));
                    }
                }
            }
        }
        let results = par::map_indices(candidates.len(), |idx| {
            let (label, seqs, topology, n, _restart) = candidates[idx];
            let train = TrainOptions {
                seed: mix_seed(opts.train.seed, 0x4742 + idx as u64),
                ..opts.train.clone()
            };
            gaussian_baum_welch(seqs, n, opts.n_components, topology, &train).map(
                |(hmm, report, _)| {
                    let meta = ModelMeta {
                        topology,
                        n_states: n,
                        final_loglik: report.final_loglik(),
                    };
                    (label.clone(), hmm, meta)
                },
            )
        });
        let mut models: BTreeMap<String, (GaussianHmm, ModelMeta)> = BTreeMap::new();
        for result in results {
            let (label, hmm, meta) = result?;
            match models.get(&label) {
                Some((_, cur)) if !better_candidate(&meta, cur) => {}
                _ => {
                    models.insert(label, (hmm, meta));
                }
            }
        }
        Ok(GaussianBank {
            feature_mode,
            models,
        })
    }

    pub fn classify(&self, seq: &[Vec<f64>]) -> Result<(String, Vec<(String, f64)>)> {
        for required in ACTION_LABELS {
            if !self.models.contains_key(required) {
                return Err(Error::State(format!(
                    "model bank is incomplete: missing {required}"
                )));
            }
        }
        let mut scores = Vec::with_capacity(self.models.len());
        let mut best: Option<(&str, f64)> = None;
        for (label, (hmm, _)) in &self.models {
            let ll = gaussian_forward_loglik(hmm, seq);
            scores.push((label.clone(), ll));
            if best.map_or(true, |(_, cur)| ll > cur) {
                best = Some((label, ll));
            }
        }
        let (label, _) = best.ok_or_else(|| Error::State("empty model bank".into()))?;
        Ok((label.to_string(), scores))
    }
}

// ---------------------------------------------------------------------
// Bank serialization: a single self-describing text file. Probabilities
// are written with 17 significant digits so files diff cleanly across
// implementations and round-trip f64 exactly.

const BANK_HEADER_DISCRETE: &str = "manip-bank v1 discrete";
const BANK_HEADER_GAUSSIAN: &str = "manip-bank v1 gaussian";

fn fmt_row(row: &[f64]) -> String {
    row.iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_bank(bank: &ActionModelBank, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(BANK_HEADER_DISCRETE);
    out.push('\n');
    out.push_str(&format!("vocab {}\n", bank.vocab.tokens().len()));
    for token in bank.vocab.tokens() {
        out.push_str(token);
        out.push('\n');
    }
    out.push_str(&format!("actions {}\n", bank.models.len()));
    for (label, (hmm, meta)) in &bank.models {
        out.push_str(&format!("action {label}\n"));
        out.push_str(&format!("topology {}\n", meta.topology.name()));
        out.push_str(&format!("states {}\n", hmm.n_states));
        out.push_str(&format!("loglik {:.16e}\n", meta.final_loglik));
        out.push_str(&fmt_row(&hmm.pi));
        out.push('\n');
        for row in hmm.trans.chunks(hmm.n_states) {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        for row in hmm.emit.chunks(hmm.vocab_size) {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct LineReader<'a> {
    lines: std::str::Lines<'a>,
    row: usize,
    path: &'a Path,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.row += 1;
        self.lines.next().ok_or_else(|| Error::Schema {
            path: self.path.to_path_buf(),
            detail: format!("unexpected end of file at line {}", self.row),
        })
    }

    fn expect_tag<'b>(&mut self, tag: &str, line: &'b str) -> Result<&'b str> {
        line.strip_prefix(tag)
            .map(str::trim)
            .ok_or_else(|| Error::Schema {
                path: self.path.to_path_buf(),
                detail: format!("line {}: expected `{tag} ...`, got `{line}`", self.row),
            })
    }

    fn parse_row(&mut self, expected_len: usize) -> Result<Vec<f64>> {
        let row = self.row + 1;
        let line = self.next()?;
        let values: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse).collect();
        let values = values.map_err(|_| Error::Value {
            row,
            column: "<row>".into(),
            detail: "non-numeric probability row".into(),
        })?;
        if values.len() != expected_len {
            return Err(Error::Value {
                row,
                column: "<row>".into(),
                detail: format!("expected {expected_len} values, got {}", values.len()),
            });
        }
        Ok(values)
    }

    fn parse_tagged<T: std::str::FromStr>(&mut self, tag: &str) -> Result<T> {
        let line = self.next()?;
        let body = self.expect_tag(tag, line)?;
        body.parse().map_err(|_| Error::Schema {
            path: self.path.to_path_buf(),
            detail: format!("line {}: bad `{tag}` value `{body}`", self.row),
        })
    }
}

pub fn read_bank(path: &Path) -> Result<ActionModelBank> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = LineReader {
        lines: text.lines(),
        row: 0,
        path,
    };
    let header = reader.next()?;
    if header != BANK_HEADER_DISCRETE {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            detail: format!("unsupported bank header `{header}`"),
        });
    }
    let vocab_len: usize = reader.parse_tagged("vocab")?;
    let mut tokens = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        tokens.push(reader.next()?.to_string());
    }
    let vocab = Vocabulary::from_tokens(tokens);
    let vocab_size = vocab.size();

    let n_actions: usize = reader.parse_tagged("actions")?;
    let mut models = BTreeMap::new();
    for _ in 0..n_actions {
        let line = reader.next()?;
        let label = reader.expect_tag("action", line)?.to_string();
        let topology_name: String = reader.parse_tagged("topology")?;
        let topology = Topology::parse(&topology_name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            detail: format!("unknown topology `{topology_name}`"),
        })?;
        let n_states: usize = reader.parse_tagged("states")?;
        let final_loglik: f64 = reader.parse_tagged("loglik")?;
        let pi = reader.parse_row(n_states)?;
        let mut trans = Vec::with_capacity(n_states * n_states);
        for _ in 0..n_states {
            trans.extend(reader.parse_row(n_states)?);
        }
        let mut emit = Vec::with_capacity(n_states * vocab_size);
        for _ in 0..n_states {
            emit.extend(reader.parse_row(vocab_size)?);
        }
        let hmm = DiscreteHmm {
            n_states,
            vocab_size,
            topology,
            pi,
            trans,
            emit,
        };
        hmm.validate()?;
        models.insert(
            label,
            (
                hmm,
                ModelMeta {
                    topology,
                    n_states,
                    final_loglik,
                },
            ),
        );
    }
    Ok(ActionModelBank { vocab, models })
}

pub fn write_gaussian_bank(bank: &GaussianBank, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(BANK_HEADER_GAUSSIAN);
    out.push('\n');
    out.push_str(&format!("features {}\n", bank.feature_mode.name()));
    out.push_str(&format!("actions {}\n", bank.models.len()));
    for (label, (hmm, meta)) in &bank.models {
        out.push_str(&format!("action {label}\n"));
        out.push_str(&format!("topology {}\n", meta.topology.name()));
        out.push_str(&format!("states {}\n", hmm.n_states));
        out.push_str(&format!("dim {}\n", hmm.dim));
        out.push_str(&format!("loglik {:.16e}\n", meta.final_loglik));
        out.push_str(&fmt_row(&hmm.pi));
        out.push('\n');
        for row in hmm.trans.chunks(hmm.n_states) {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        for state in &hmm.states {
            out.push_str(&format!("components {}\n", state.weights.len()));
            out.push_str(&fmt_row(&state.weights));
            out.push('\n');
            for mean in &state.means {
                out.push_str(&fmt_row(mean));
                out.push('\n');
            }
            for var in &state.vars {
                out.push_str(&fmt_row(var));
                out.push('\n');
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_gaussian_bank(path: &Path) -> Result<GaussianBank> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = LineReader {
        lines: text.lines(),
        row: 0,
        path,
    };
    let header = reader.next()?;
    if header != BANK_HEADER_GAUSSIAN {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            detail: format!("unsupported bank header `{header}`"),
        });
    }
    let mode_name: String = reader.parse_tagged("features")?;
    let feature_mode = FeatureMode::parse(&mode_name).ok_or_else(|| Error::Schema {
        path: path.to_path_buf(),
        detail: format!("unknown feature mode `{mode_name}`"),
    })?;
    let n_actions: usize = reader.parse_tagged("actions")?;
    let mut models = BTreeMap::new();
    for _ in 0..n_actions {
        let line = reader.next()?;
        let label = reader.expect_tag("action", line)?.to_string();
        let topology_name: String = reader.parse_tagged("topology")?;
        let topology = Topology::parse(&topology_name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            detail: format!("unknown topology `{topology_name}`"),
        })?;
        let n_states: usize = reader.parse_tagged("states")?;
        let dim: usize = reader.parse_tagged("dim")?;
        let final_loglik: f64 = reader.parse_tagged("loglik")?;
        let pi = reader.parse_row(n_states)?;
        let mut trans = Vec::with_capacity(n_states * n_states);
        for _ in 0..n_states {
            trans.extend(reader.parse_row(n_states)?);
        }
        let mut states = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            let m: usize = reader.parse_tagged("components")?;
            let weights = reader.parse_row(m)?;
            let mut means = Vec::with_capacity(m);
            for _ in 0..m {
                means.push(reader.parse_row(dim)?);
            }
            let mut vars = Vec::with_capacity(m);
            for _ in 0..m {
                vars.push(reader.parse_row(dim)?);
            }
            states.push(GaussianMixture {
                weights,
                means,
                vars,
            });
        }
        let hmm = GaussianHmm {
            n_states,
            dim,
            topology,
            pi,
            trans,
            states,
        };
        models.insert(
            label,
            (
                hmm,
                ModelMeta {
                    topology,
                    n_states,
                    final_loglik,
                },
            ),
        );
    }
    Ok(GaussianBank {
        feature_mode,
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn deterministic_sequences(token: &str, n: usize, len: usize) -> Vec<Vec<String>> {
        vec![vec![token.to_string(); len]; n]
    }

    #[test]
    fn select_model_prefers_high_likelihood() {
        let seqs = vec![vec![0usize, 1, 0, 1, 0, 1]; 6];
        let opts = SelectOptions {
            n_range: 3..=3,
            topologies: vec![Topology::Bakis],
            restarts: 3,
            train: TrainOptions::default(),
        };
        let (hmm, meta) = select_model(&seqs, 3, &opts).unwrap();
        // the selected candidate dominates a fresh single-restart train
        let single = SelectOptions {
            restarts: 1,
            ..opts
        };
        let (_, meta_single) = select_model(&seqs, 3, &single).unwrap();
        assert!(meta.final_loglik >= meta_single.final_loglik - 1e-9);
        assert_eq!(hmm.n_states, 3);
    }

    fn sample_from(hmm: &DiscreteHmm, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        use rand::Rng;
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
        let mut state = pick(&hmm.pi, rng);
        (0..len)
            .map(|_| {
                let y = pick(
                    &hmm.emit[state * hmm.vocab_size..(state + 1) * hmm.vocab_size],
                    rng,
                );
                state = pick(
                    &hmm.trans[state * hmm.n_states..(state + 1) * hmm.n_states],
                    rng,
                );
                y
            })
            .collect()
    }

    #[test]
    fn select_model_tracks_bakis_generator() {
        // 5-state bakis generator with distinctive per-state emissions
        let n = 5;
        let v = 4;
        let mut trans = vec![0.0; n * n];
        for i in 0..n {
            trans[i * n + i] = 0.55;
            if i + 1 < n {
                trans[i * n + i + 1] = 0.35;
            } else {
                trans[i * n + i] += 0.35;
            }
            if i + 2 < n {
                trans[i * n + i + 2] = 0.10;
            } else {
                trans[i * n + i] += 0.10;
            }
        }
        let mut emit = vec![0.04; n * v];
        for i in 0..n {
            emit[i * v + i % v] = 0.88;
        }
        for row in emit.chunks_mut(v) {
            let s: f64 = row.iter().sum();
            for x in row {
                *x /= s;
            }
        }
        let mut pi = vec![0.0; n];
        pi[0] = 1.0;
        let generator = DiscreteHmm {
            n_states: n,
            vocab_size: v,
            topology: Topology::Bakis,
            pi,
            trans,
            emit,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let train: Vec<Vec<usize>> =
            (0..40).map(|_| sample_from(&generator, 30, &mut rng)).collect();
        let heldout: Vec<Vec<usize>> =
            (0..20).map(|_| sample_from(&generator, 30, &mut rng)).collect();
        let opts = SelectOptions {
            n_range: 3..=8,
            topologies: vec![Topology::Bakis],
            restarts: 2,
            train: TrainOptions {
                seed: 1,
                max_iter: 80,
                ..Default::default()
            },
        };
        let (hmm, meta) = select_model(&train, v, &opts).unwrap();
        assert!(
            (4..=8).contains(&meta.n_states),
            "selected N = {}",
            meta.n_states
        );
        let tokens: usize = heldout.iter().map(|s| s.len()).sum();
        let model: f64 =
            heldout.iter().map(|s| forward_loglik(&hmm, s)).sum::<f64>() / tokens as f64;
        let truth: f64 = heldout
            .iter()
            .map(|s| forward_loglik(&generator, s))
            .sum::<f64>()
            / tokens as f64;
        assert!(
            (model - truth).abs() <= 0.05 * truth.abs(),
            "model {model} truth {truth}"
        );
    }

    fn tiny_bank() -> ActionModelBank {
        let mut sequences = BTreeMap::new();
        for (i, label) in ACTION_LABELS.iter().enumerate() {
            let token = crate::token::Symbol::all()[i].name();
            sequences.insert(label.to_string(), deterministic_sequences(token, 4, 6));
        }
        let opts = SelectOptions {
            n_range: 1..=2,
            topologies: vec![Topology::Bakis],
            restarts: 1,
            train: TrainOptions::default(),
        };
        ActionModelBank::train(&sequences, &opts).unwrap()
    }

    #[test]
    fn classify_round_trips_deterministic_actions() {
        let bank = tiny_bank();
        for (i, label) in ACTION_LABELS.iter().enumerate() {
            let token = crate::token::Symbol::all()[i].name().to_string();
            let (pred, scores) = bank.classify(&vec![token; 6]).unwrap();
            assert_eq!(&pred, label);
            assert_eq!(scores.len(), 8);
        }
    }

    #[test]
    fn classify_tie_breaks_lexicographically() {
        let mut bank = tiny_bank();
        // make every model identical: all logliks equal for any input
        let reference = bank.models.values().next().unwrap().clone();
        for slot in bank.models.values_mut() {
            *slot = reference.clone();
        }
        let (pred, _) = bank.classify(&["Gl".to_string()]).unwrap();
        assert_eq!(pred, "CloseCabinet");
    }

    #[test]
    fn classify_argmax_of_scores() {
        let bank = tiny_bank();
        let token = crate::token::Symbol::all()[3].name().to_string();
        let (pred, scores) = bank.classify(&vec![token; 6]).unwrap();
        let best = scores
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(pred, best.0);
    }

    #[test]
    fn incomplete_bank_is_rejected() {
        let mut bank = tiny_bank();
        bank.models.remove("Pour");
        match bank.classify(&["Gl".to_string()]) {
            Err(Error::State(msg)) => assert!(msg.contains("Pour")),
            other => panic!("expected state error, got {other:?}"),
        }
    }

    #[test]
    fn missing_action_in_training_is_named() {
        let mut sequences = BTreeMap::new();
        for label in ACTION_LABELS.iter().skip(1) {
            sequences.insert(label.to_string(), deterministic_sequences("Gl", 2, 4));
        }
        match ActionModelBank::train(&sequences, &SelectOptions::default()) {
            Err(Error::Data(msg)) => assert!(msg.contains("CloseCabinet")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn bank_serialization_round_trips_bitwise() {
        let bank = tiny_bank();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.txt");
        write_bank(&bank, &path).unwrap();
        let loaded = read_bank(&path).unwrap();
        assert_eq!(bank, loaded);
        // writing again is byte-identical
        let path2 = dir.path().join("bank2.txt");
        write_bank(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn gaussian_bank_round_trips() {
        let mut sequences = BTreeMap::new();
        for (i, label) in ACTION_LABELS.iter().enumerate() {
            let value = i as f64;
            sequences.insert(label.to_string(), vec![vec![vec![value, -value]; 12]; 3]);
        }
        let opts = GaussianSelectOptions {
            n_range: 1..=1,
            topologies: vec![Topology::Ergodic],
            restarts: 1,
            n_components: 1,
            train: TrainOptions {
                max_iter: 5,
                ..Default::default()
            },
        };
        let bank = GaussianBank::train(&sequences, FeatureMode::Reduced, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.txt");
        write_gaussian_bank(&bank, &path).unwrap();
        let loaded = read_gaussian_bank(&path).unwrap();
        assert_eq!(bank, loaded);
        let (pred, _) = loaded.classify(&vec![vec![3.0, -3.0]; 12]).unwrap();
        assert_eq!(pred, ACTION_LABELS[3]);
    }
}
