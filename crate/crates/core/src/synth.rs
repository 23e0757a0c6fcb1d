//! Synthetic trial generator: renders scripted primitive compositions for
//! the eight actions into labeled multi-modal recordings, together with
//! the token sequence the extraction pipeline should produce. At zero
//! noise the rendered trials reproduce their ground truth exactly, which
//! makes the generator the oracle for the rest of the pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::extraction::ExtractionConfig;
use crate::profile::{accumulate_bell, BellParams, ProfileModel};
use crate::signals::{write_trial_csv, Channel, Frame, Trial, BEND_CHANNELS, PRESSURE_CHANNELS};
use crate::token::{Axis, Level, Sign, SignedAxis, Symbol, Token, TokenSequence};
use crate::{mix_seed, ACTION_LABELS};

/// Canonical force/bend envelope plateau values, in raw sensor units.
/// Chosen so that, across the default subject-strength spread, every
/// scripted plateau sits on the intended side of every quantization level
/// regardless of which subjects land in the training split.
pub const PLATEAU_REST: f64 = 0.0;
pub const PLATEAU_LOW: f64 = 0.25;
pub const PLATEAU_MID: f64 = 0.55;
pub const PLATEAU_HIGH: f64 = 1.0;

/// Expected average of per-trial maxima of the composite force signal
/// over a balanced dataset (seven actions grasp to high, spray to mid).
pub fn nominal_force_average() -> f64 {
    (7.0 * PLATEAU_HIGH + PLATEAU_MID) / 8.0
}

/// Expected average of per-trial maxima of the composite bend signal
/// (only spray bends, to high).
pub fn nominal_bend_average() -> f64 {
    PLATEAU_HIGH / 8.0
}

/// Per-modality additive noise sigmas, in each modality's units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSigmas {
    pub velocity: f64,
    pub angular: f64,
    pub pressure: f64,
    pub bend: f64,
}

impl NoiseSigmas {
    /// The default sigmas scaled by a common factor; zero silences all
    /// channels.
    pub fn scaled(scale: f64) -> NoiseSigmas {
        NoiseSigmas {
            velocity: 0.02 * scale,
            angular: 0.05 * scale,
            pressure: 0.02 * nominal_force_average() * scale,
            bend: 0.02 * nominal_bend_average() * scale,
        }
    }

    pub fn zero() -> NoiseSigmas {
        NoiseSigmas::scaled(0.0)
    }
}

impl Default for NoiseSigmas {
    fn default() -> Self {
        NoiseSigmas::scaled(1.0)
    }
}

/// How widely subject factors spread. `Default` keeps grasp/bend strength
/// within +-10 % so level crossings stay unambiguous for every draw;
/// `High` stretches all factors to the +-30 % bound of the subject model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variability {
    Default,
    High,
}

impl Variability {
    pub fn name(self) -> &'static str {
        match self {
            Variability::Default => "default",
            Variability::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Variability> {
        match s {
            "default" => Some(Variability::Default),
            "high" => Some(Variability::High),
            _ => None,
        }
    }
}

/// Per-subject rendering parameters. Factors stay within [0.7, 1.3];
/// templates are non-negative with unit Euclidean norm, so the composite
/// signal equals the scripted envelope exactly.
#[derive(Debug, Clone)]
pub struct SubjectParams {
    pub id: String,
    pub duration_factor: f64,
    pub magnitude_factor: f64,
    pub grasp_strength: f64,
    pub bend_strength: f64,
    pub grasp_template: [f64; PRESSURE_CHANNELS],
    pub bend_template: [f64; BEND_CHANNELS],
}

impl SubjectParams {
    pub fn sample(id: &str, variability: Variability, rng: &mut ChaCha8Rng) -> SubjectParams {
        let (wide, narrow) = match variability {
            Variability::Default => (0.2, 0.1),
            Variability::High => (0.3, 0.3),
        };
        let mut factor = |spread: f64| rng.random_range(1.0 - spread..1.0 + spread);
        let duration_factor = factor(wide);
        let magnitude_factor = factor(wide);
        let grasp_strength = factor(narrow);
        let bend_strength = factor(narrow);
        let mut grasp_template = [0.0; PRESSURE_CHANNELS];
        for x in &mut grasp_template {
            *x = rng.random_range(0.2..1.0);
        }
        normalize(&mut grasp_template);
        let mut bend_template = [0.0; BEND_CHANNELS];
        for x in &mut bend_template {
            *x = rng.random_range(0.2..1.0);
        }
        normalize(&mut bend_template);
        SubjectParams {
            id: id.to_string(),
            duration_factor,
            magnitude_factor,
            grasp_strength,
            bend_strength,
            grasp_template,
            bend_template,
        }
    }
}

fn normalize(values: &mut [f64]) {
    let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in values {
        *x /= norm;
    }
}

/// Envelope plateau a grasp/bend event drives the composite signal to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeTarget {
    Rest,
    Low,
    Mid,
    High,
}

impl EnvelopeTarget {
    fn value(self) -> f64 {
        match self {
            EnvelopeTarget::Rest => PLATEAU_REST,
            EnvelopeTarget::Low => PLATEAU_LOW,
            EnvelopeTarget::Mid => PLATEAU_MID,
            EnvelopeTarget::High => PLATEAU_HIGH,
        }
    }

    fn index(self) -> usize {
        match self {
            EnvelopeTarget::Rest => 0,
            EnvelopeTarget::Low => 1,
            EnvelopeTarget::Mid => 2,
            EnvelopeTarget::High => 3,
        }
    }
}

fn level_of_index(idx: usize) -> Level {
    match idx {
        1 => Level::Low,
        2 => Level::Mid,
        3 => Level::High,
        _ => unreachable!("level index out of range"),
    }
}

/// Start placement of an event relative to the previous one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Offset {
    /// Uniformly sampled pause after the previous event ends.
    Gap(f64, f64),
    /// Start this fraction into the previous event's (jittered) duration;
    /// fractions below one half make reach/rotate events merge into a
    /// compound token.
    Overlap(f64),
}

/// One scripted primitive event with its parameter distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Reach {
        axis: SignedAxis,
        magnitude: (f64, f64),
        duration: (f64, f64),
    },
    Rotate {
        axis: SignedAxis,
        magnitude: (f64, f64),
        duration: (f64, f64),
    },
    GraspEnvelope {
        target: EnvelopeTarget,
        duration: (f64, f64),
    },
    BendEnvelope {
        target: EnvelopeTarget,
        duration: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEvent {
    pub kind: EventKind,
    pub offset: Offset,
}

/// A generative recipe for one action: ordered events rendered into a
/// synthetic trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionScript {
    pub label: String,
    pub events: Vec<ScriptEvent>,
}

fn signed(axis: Axis, sign: Sign) -> SignedAxis {
    SignedAxis { axis, sign }
}

fn reach(axis: Axis, sign: Sign, offset: Offset) -> ScriptEvent {
    ScriptEvent {
        kind: EventKind::Reach {
            axis: signed(axis, sign),
            magnitude: (0.25, 0.45),
            duration: (0.6, 1.0),
        },
        offset,
    }
}

fn rotate(axis: Axis, sign: Sign, offset: Offset) -> ScriptEvent {
    ScriptEvent {
        kind: EventKind::Rotate {
            axis: signed(axis, sign),
            magnitude: (1.0, 1.8),
            duration: (0.5, 0.9),
        },
        offset,
    }
}

fn grasp(target: EnvelopeTarget, offset: Offset) -> ScriptEvent {
    ScriptEvent {
        kind: EventKind::GraspEnvelope {
            target,
            duration: (0.4, 0.6),
        },
        offset,
    }
}

fn bend(target: EnvelopeTarget, offset: Offset) -> ScriptEvent {
    ScriptEvent {
        kind: EventKind::BendEnvelope {
            target,
            duration: (0.35, 0.55),
        },
        offset,
    }
}

fn gap() -> Offset {
    Offset::Gap(0.25, 0.45)
}

fn short_gap() -> Offset {
    Offset::Gap(0.15, 0.3)
}

/// The eight built-in action scripts. Every script starts with a reach
/// toward the object and ends with a reach retrieving the hand.
pub fn builtin_scripts() -> Vec<ActionScript> {
    use Axis::*;
    use EnvelopeTarget::*;
    use Sign::*;

    let approach = || reach(X, Neg, gap());
    let script = |label: &str, events: Vec<ScriptEvent>| ActionScript {
        label: label.to_string(),
        events,
    };

    let open_drawer = script(
        "OpenDrawer",
        vec![
            approach(),
            grasp(High, gap()),
            reach(X, Pos, gap()),
            grasp(Rest, gap()),
            reach(X, Neg, gap()),
        ],
    );
    let close_drawer = script(
        "CloseDrawer",
        vec![
            approach(),
            grasp(High, gap()),
            reach(X, Neg, gap()),
            grasp(Rest, gap()),
            reach(X, Pos, gap()),
        ],
    );
    let open_cabinet = script(
        "OpenCabinet",
        vec![
            approach(),
            grasp(High, gap()),
            reach(X, Pos, gap()),
            rotate(Z, Pos, Offset::Overlap(0.25)),
            grasp(Rest, gap()),
            reach(X, Neg, gap()),
        ],
    );
    let close_cabinet = script(
        "CloseCabinet",
        vec![
            approach(),
            grasp(High, gap()),
            reach(X, Neg, gap()),
            rotate(Z, Neg, Offset::Overlap(0.25)),
            grasp(Rest, gap()),
            reach(X, Pos, gap()),
        ],
    );
    let pick_place = script(
        "PickPlace",
        vec![
            approach(),
            grasp(High, gap()),
            reach(Z, Pos, gap()),
            reach(Y, Pos, Offset::Overlap(0.3)),
            grasp(Rest, gap()),
            reach(X, Pos, gap()),
        ],
    );
    let spray = script(
        "Spray",
        vec![
            approach(),
            grasp(Mid, gap()),
            bend(High, gap()),
            bend(Rest, short_gap()),
            bend(High, short_gap()),
            bend(Rest, short_gap()),
            grasp(Rest, gap()),
            reach(X, Pos, gap()),
        ],
    );
    let stir = script(
        "Stir",
        vec![
            approach(),
            grasp(High, gap()),
            rotate(Z, Pos, gap()),
            rotate(Z, Neg, short_gap()),
            rotate(Z, Pos, short_gap()),
            rotate(Z, Neg, short_gap()),
            grasp(Rest, gap()),
            reach(X, Pos, gap()),
        ],
    );
    let pour = script(
        "Pour",
        vec![
            approach(),
            grasp(High, gap()),
            reach(Z, Pos, gap()),
            rotate(X, Neg, Offset::Gap(0.2, 0.4)),
            rotate(X, Pos, Offset::Gap(0.5, 0.9)),
            reach(Z, Neg, gap()),
            grasp(Rest, gap()),
            reach(X, Pos, gap()),
        ],
    );

    let scripts = vec![
        close_cabinet,
        close_drawer,
        open_cabinet,
        open_drawer,
        pick_place,
        pour,
        spray,
        stir,
    ];
    debug_assert!(scripts
        .iter()
        .zip(ACTION_LABELS.iter())
        .all(|(s, l)| s.label == *l));
    scripts
}

// Placed events after jitter resolution.
enum PlacedKind {
    Bell {
        channel: Channel,
        params: BellParams,
    },
    Envelope {
        group: EnvelopeGroup,
        from: EnvelopeTarget,
        to: EnvelopeTarget,
        start: f64,
        duration: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum EnvelopeGroup {
    Force,
    Bend,
}

struct EnvelopeEdge {
    start: f64,
    duration: f64,
    from: f64,
    to: f64,
}

const LEAD_IN: f64 = 0.5;
const LEAD_OUT: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct RenderedTrial {
    pub trial: Trial,
    pub ground_truth: TokenSequence,
    pub clamped_events: usize,
}

/// Renders one trial plus its ground-truth token sequence. Deterministic
/// in (script, subject, seed). Jittered reach/rotate magnitudes that fall
/// below the pruning thresholds are re-sampled up to ten times, then
/// pinned to 1.2x the threshold.
pub fn render_trial(
    script: &ActionScript,
    subject: &SubjectParams,
    noise: &NoiseSigmas,
    rate: f64,
    seed: u64,
) -> Result<RenderedTrial> {
    if !(rate >= 20.0) {
        return Err(Error::Argument(format!(
            "render rate must be >= 20 Hz, got {rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prune = ExtractionConfig::default();

    let mut placed: Vec<PlacedKind> = Vec::new();
    let mut clamped_events = 0usize;
    let mut prev_start = 0.0f64;
    let mut prev_end = LEAD_IN;
    let mut prev_duration = 0.0f64;
    let mut force_level = EnvelopeTarget::Rest;
    let mut bend_level = EnvelopeTarget::Rest;

    for event in &script.events {
        let start = match event.offset {
            Offset::Gap(lo, hi) => prev_end + rng.random_range(lo..hi),
            Offset::Overlap(frac) => prev_start + frac * prev_duration,
        };
        let (kind, duration) = match &event.kind {
            EventKind::Reach {
                axis,
                magnitude,
                duration,
            }
            | EventKind::Rotate {
                axis,
                magnitude,
                duration,
            } => {
                let is_rotate = matches!(event.kind, EventKind::Rotate { .. });
                let threshold = if is_rotate {
                    prune.min_rotate_magnitude
                } else {
                    prune.min_reach_magnitude
                };
                let mut mag = 0.0;
                let mut ok = false;
                for _ in 0..10 {
                    mag = rng.random_range(magnitude.0..magnitude.1) * subject.magnitude_factor;
                    if mag >= threshold {
                        ok = true;
                        break;
                    }
                }
                if !ok {
                    mag = threshold * 1.2;
                    clamped_events += 1;
                }
                let dur = rng.random_range(duration.0..duration.1) * subject.duration_factor;
                let channel = match (is_rotate, axis.axis) {
                    (false, Axis::X) => Channel::Vx,
                    (false, Axis::Y) => Channel::Vy,
                    (false, Axis::Z) => Channel::Vz,
                    (true, Axis::X) => Channel::Wx,
                    (true, Axis::Y) => Channel::Wy,
                    (true, Axis::Z) => Channel::Wz,
                };
                (
                    PlacedKind::Bell {
                        channel,
                        params: BellParams {
                            axis: *axis,
                            magnitude: mag,
                            t_s: start,
                            duration: dur,
                        },
                    },
                    dur,
                )
            }
            EventKind::GraspEnvelope { target, duration } => {
                let dur = rng.random_range(duration.0..duration.1) * subject.duration_factor;
                let from = force_level;
                force_level = *target;
                (
                    PlacedKind::Envelope {
                        group: EnvelopeGroup::Force,
                        from,
                        to: *target,
                        start,
                        duration: dur,
                    },
                    dur,
                )
            }
            EventKind::BendEnvelope { target, duration } => {
                let dur = rng.random_range(duration.0..duration.1) * subject.duration_factor;
                let from = bend_level;
                bend_level = *target;
                (
                    PlacedKind::Envelope {
                        group: EnvelopeGroup::Bend,
                        from,
                        to: *target,
                        start,
                        duration: dur,
                    },
                    dur,
                )
            }
        };
        placed.push(kind);
        prev_start = start;
        prev_duration = duration;
        prev_end = prev_end.max(start + duration);
    }

    let trial_span = prev_end + LEAD_OUT;
    let n = (trial_span * rate).ceil() as usize + 1;
    let model = ProfileModel::MinJerk;

    // velocity and angular channels: superposed bells
    let mut channels: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for ch in [
        Channel::Vx,
        Channel::Vy,
        Channel::Vz,
        Channel::Wx,
        Channel::Wy,
        Channel::Wz,
    ] {
        channels.insert(channel_key(ch), vec![0.0; n]);
    }
    let mut force_edges: Vec<EnvelopeEdge> = Vec::new();
    let mut bend_edges: Vec<EnvelopeEdge> = Vec::new();
    for kind in &placed {
        match kind {
            PlacedKind::Bell { channel, params } => {
                let buf = channels.get_mut(&channel_key(*channel)).unwrap();
                accumulate_bell(buf, 0.0, rate, params, &model);
            }
            PlacedKind::Envelope {
                group,
                from,
                to,
                start,
                duration,
            } => {
                let edge = EnvelopeEdge {
                    start: *start,
                    duration: *duration,
                    from: from.value(),
                    to: to.value(),
                };
                match group {
                    EnvelopeGroup::Force => force_edges.push(edge),
                    EnvelopeGroup::Bend => bend_edges.push(edge),
                }
            }
        }
    }

    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Numeric(e.to_string()))?;
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / rate;
        let mut frame = Frame::zero(t);
        for (i, ch) in [Channel::Vx, Channel::Vy, Channel::Vz].iter().enumerate() {
            frame.v[i] = channels[&channel_key(*ch)][k] + noise.velocity * normal.sample(&mut rng);
        }
        for (i, ch) in [Channel::Wx, Channel::Wy, Channel::Wz].iter().enumerate() {
            frame.w[i] = channels[&channel_key(*ch)][k] + noise.angular * normal.sample(&mut rng);
        }
        let force = envelope_value(&force_edges, t, &model) * subject.grasp_strength;
        for (i, slot) in frame.pressure.iter_mut().enumerate() {
            *slot = (force * subject.grasp_template[i] + noise.pressure * normal.sample(&mut rng))
                .max(0.0);
        }
        let bend_value = envelope_value(&bend_edges, t, &model) * subject.bend_strength;
        for (i, slot) in frame.bend.iter_mut().enumerate() {
            *slot = (bend_value * subject.bend_template[i]
                + noise.bend * normal.sample(&mut rng))
            .max(0.0);
        }
        frames.push(frame);
    }

    let ground_truth = ground_truth_tokens(&placed);
    Ok(RenderedTrial {
        trial: Trial {
            id: format!("trial-{seed:016x}"),
            subject: subject.id.clone(),
            action_label: Some(script.label.clone()),
            frames,
            rate,
        },
        ground_truth,
        clamped_events,
    })
}

fn channel_key(ch: Channel) -> u8 {
    match ch {
        Channel::Vx => 0,
        Channel::Vy => 1,
        Channel::Vz => 2,
        Channel::Wx => 3,
        Channel::Wy => 4,
        Channel::Wz => 5,
    }
}

// Envelope edges trace the profile's rising (or falling) flank, so the
// plateau is approached with zero slope on both sides of every edge.
fn envelope_value(edges: &[EnvelopeEdge], t: f64, model: &ProfileModel) -> f64 {
    let mut value = 0.0;
    for edge in edges {
        if t < edge.start {
            break;
        }
        if t >= edge.start + edge.duration {
            value = edge.to;
        } else {
            let u = (t - edge.start) / edge.duration;
            let tau_peak = model.peak_tau();
            let flank = if edge.to >= edge.from {
                model.eval(tau_peak * u) / model.peak_value()
            } else {
                model.eval(tau_peak + (1.0 - tau_peak) * u) / model.peak_value()
            };
            value = if edge.to >= edge.from {
                edge.from + (edge.to - edge.from) * flank
            } else {
                edge.to + (edge.from - edge.to) * flank
            };
        }
    }
    value
}

// The token sequence extraction must produce at zero noise: bells merge
// under the first-half rule per family; envelope edges emit one crossing
// token per level passed, ordered within the edge.
fn ground_truth_tokens(placed: &[PlacedKind]) -> TokenSequence {
    let mut tokens: Vec<Token> = Vec::new();

    // motion families: replicate the merge rule on true parameters
    for rotate_family in [false, true] {
        let mut bells: Vec<(&BellParams, Channel)> = placed
            .iter()
            .filter_map(|kind| match kind {
                PlacedKind::Bell { channel, params }
                    if channel.is_angular() == rotate_family =>
                {
                    Some((params, *channel))
                }
                _ => None,
            })
            .collect();
        bells.sort_by(|a, b| a.0.t_s.partial_cmp(&b.0.t_s).unwrap());
        let mut open: Option<(f64, f64, Vec<Symbol>)> = None;
        for (params, channel) in bells {
            let sym = if channel.is_angular() {
                Symbol::Ang(params.axis.axis, params.axis.sign)
            } else {
                Symbol::Vel(params.axis.axis, params.axis.sign)
            };
            match &mut open {
                Some((ts, d, syms))
                    if params.t_s < *ts + *d / 2.0
                        && !syms.iter().any(|s| motion_axis(*s) == params.axis.axis) =>
                {
                    syms.push(sym);
                }
                _ => {
                    if let Some((ts, _, syms)) = open.take() {
                        tokens.push(Token::compound(syms, ts));
                    }
                    open = Some((params.t_s, params.duration, vec![sym]));
                }
            }
        }
        if let Some((ts, _, syms)) = open {
            tokens.push(Token::compound(syms, ts));
        }
    }

    for kind in placed {
        if let PlacedKind::Envelope {
            group,
            from,
            to,
            start,
            duration,
        } = kind
        {
            let rising = to.index() > from.index();
            let crossed: Vec<Level> = match group {
                EnvelopeGroup::Force => {
                    if rising {
                        (from.index() + 1..=to.index()).map(level_of_index).collect()
                    } else {
                        (to.index() + 1..=from.index())
                            .rev()
                            .map(level_of_index)
                            .collect()
                    }
                }
                // bend levels derive from a dataset average dominated by
                // rest trials, so every edge passes all three
                EnvelopeGroup::Bend => {
                    if rising {
                        vec![Level::Low, Level::Mid, Level::High]
                    } else {
                        vec![Level::High, Level::Mid, Level::Low]
                    }
                }
            };
            let count = crossed.len();
            for (k, level) in crossed.into_iter().enumerate() {
                let t_s = start + duration * (k + 1) as f64 / (count + 1) as f64;
                let symbol = match (group, rising) {
                    (EnvelopeGroup::Force, true) => Symbol::Grasp(level),
                    (EnvelopeGroup::Force, false) => Symbol::Release(level),
                    (EnvelopeGroup::Bend, true) => Symbol::Bend(level),
                    (EnvelopeGroup::Bend, false) => Symbol::Extend(level),
                };
                tokens.push(Token::single(symbol, t_s));
            }
        }
    }

    TokenSequence::new(tokens)
}

fn motion_axis(s: Symbol) -> Axis {
    match s {
        Symbol::Vel(a, _) | Symbol::Ang(a, _) => a,
        _ => unreachable!(),
    }
}

/// Train/test flag carried in the dataset manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetTrial {
    pub trial: Trial,
    pub ground_truth: TokenSequence,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub trials: Vec<DatasetTrial>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DatasetParams {
    pub n_subjects: usize,
    pub trials_per_action: usize,
    pub noise: NoiseSigmas,
    pub rate: f64,
    pub seed: u64,
    pub variability: Variability,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            n_subjects: 5,
            trials_per_action: 6,
            noise: NoiseSigmas::default(),
            rate: 50.0,
            seed: 42,
            variability: Variability::Default,
        }
    }
}

const SUBJECT_SEED_TAG: u64 = 0x53_5542_4a00;

/// Renders `n_subjects x 8 actions x trials_per_action` labeled trials.
/// Subjects whose (sorted) index falls in the first 60 % are flagged
/// `train`; this default split feeds level computation downstream.
pub fn generate_dataset(params: &DatasetParams) -> Result<Dataset> {
    if params.n_subjects < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 subjects, got {}",
            params.n_subjects
        )));
    }
    if params.trials_per_action == 0 {
        return Err(Error::Argument("trials_per_action must be >= 1".into()));
    }
    let subjects: Vec<SubjectParams> = (0..params.n_subjects)
        .map(|s| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(params.seed, SUBJECT_SEED_TAG + s as u64));
            SubjectParams::sample(&format!("s{:02}", s + 1), params.variability, &mut rng)
        })
        .collect();
    let n_train =
        ((0.6 * params.n_subjects as f64).round() as usize).clamp(1, params.n_subjects - 1);
    let scripts = builtin_scripts();

    let mut jobs = Vec::new();
    for (s_idx, subject) in subjects.iter().enumerate() {
        for script in &scripts {
            for k in 0..params.trials_per_action {
                jobs.push((s_idx, subject, script, k));
            }
        }
    }
    let rendered = crate::par::map_indices(jobs.len(), |idx| {
        let (s_idx, subject, script, k) = jobs[idx];
        let trial_seed = mix_seed(params.seed, idx as u64);
        render_trial(script, subject, &params.noise, params.rate, trial_seed).map(|mut r| {
            r.trial.id = format!("s{:02}_{}_{:02}", s_idx + 1, script.label, k + 1);
            (s_idx, r, trial_seed)
        })
    });

    let mut trials = Vec::with_capacity(jobs.len());
    for item in rendered {
        let (s_idx, r, trial_seed) = item?;
        trials.push(DatasetTrial {
            trial: r.trial,
            ground_truth: r.ground_truth,
            seed: trial_seed,
            split: if s_idx < n_train {
                Split::Train
            } else {
                Split::Test
            },
        });
    }
    Ok(Dataset {
        trials,
        seed: params.seed,
    })
}

// ---------------------------------------------------------------------
// Dataset directory layout: one trial-CSV per trial plus manifest.tsv.

const MANIFEST_HEADER: &str = "trial_id\tsubject\taction\tseed\tsplit\tground_truth";

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for item in &dataset.trials {
        let path = dir.join(format!("{}.csv", item.trial.id));
        write_trial_csv(&item.trial, &path)?;
        manifest.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            item.trial.id,
            item.trial.subject,
            item.trial.action_label.as_deref().unwrap_or(""),
            item.seed,
            item.split.name(),
            item.ground_truth.joined(),
        ));
    }
    let manifest_path = dir.join("manifest.tsv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub trial_id: String,
    pub subject: String,
    pub action: String,
    pub seed: u64,
    pub split: Split,
    pub ground_truth: Vec<String>,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join("manifest.tsv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != MANIFEST_HEADER {
        return Err(Error::Schema {
            path,
            detail: format!("unexpected manifest header `{header}`"),
        });
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::Value {
                row: i + 1,
                column: "<manifest>".into(),
                detail: format!("expected 6 tab-separated fields, got {}", fields.len()),
            });
        }
        entries.push(ManifestEntry {
            trial_id: fields[0].to_string(),
            subject: fields[1].to_string(),
            action: fields[2].to_string(),
            seed: fields[3].parse().map_err(|_| Error::Value {
                row: i + 1,
                column: "seed".into(),
                detail: format!("`{}` is not a seed", fields[3]),
            })?,
            split: Split::parse(fields[4]).ok_or_else(|| Error::Value {
                row: i + 1,
                column: "split".into(),
                detail: format!("unknown split `{}`", fields[4]),
            })?,
            ground_truth: fields[5].split_whitespace().map(String::from).collect(),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{composite_norm, ChannelGroup};
    use crate::token::Family;

    fn subject(seed: u64) -> SubjectParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SubjectParams::sample("s01", Variability::Default, &mut rng)
    }

    #[test]
    fn eight_distinct_scripts_in_label_order() {
        let scripts = builtin_scripts();
        assert_eq!(scripts.len(), 8);
        let labels: Vec<&str> = scripts.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ACTION_LABELS.to_vec());
    }

    #[test]
    fn scripts_start_and_end_with_reach_tokens() {
        for script in builtin_scripts() {
            let r = render_trial(&script, &subject(1), &NoiseSigmas::zero(), 50.0, 7).unwrap();
            let tokens = &r.ground_truth.tokens;
            assert!(!tokens.is_empty(), "{} is empty", script.label);
            let first = tokens.first().unwrap();
            let last = tokens.last().unwrap();
            assert!(
                first.symbols().iter().all(|s| s.family() == Family::Reach),
                "{} starts with {}",
                script.label,
                first.name()
            );
            assert!(
                last.symbols().iter().all(|s| s.family() == Family::Reach),
                "{} ends with {}",
                script.label,
                last.name()
            );
        }
    }

    #[test]
    fn stir_has_rotations_and_close_drawer_none() {
        let scripts = builtin_scripts();
        let count_rotate = |label: &str| -> usize {
            let script = scripts.iter().find(|s| s.label == label).unwrap();
            let r = render_trial(script, &subject(2), &NoiseSigmas::zero(), 50.0, 3).unwrap();
            r.ground_truth
                .tokens
                .iter()
                .flat_map(|t| t.symbols().to_vec())
                .filter(|s| s.family() == Family::Rotate)
                .count()
        };
        assert!(count_rotate("Stir") >= 4);
        assert_eq!(count_rotate("CloseDrawer"), 0);
    }

    #[test]
    fn same_seed_renders_identical_trials() {
        let scripts = builtin_scripts();
        let s = subject(3);
        let a = render_trial(&scripts[0], &s, &NoiseSigmas::default(), 50.0, 17).unwrap();
        let b = render_trial(&scripts[0], &s, &NoiseSigmas::default(), 50.0, 17).unwrap();
        assert_eq!(a.trial.frames, b.trial.frames);
        assert_eq!(a.ground_truth.names(), b.ground_truth.names());
    }

    #[test]
    fn high_plateau_reaches_target_within_two_percent() {
        let scripts = builtin_scripts();
        let s = subject(4);
        let r = render_trial(&scripts[3], &s, &NoiseSigmas::zero(), 50.0, 5).unwrap();
        let force = composite_norm(&r.trial, ChannelGroup::Pressure);
        let max = force.values.iter().cloned().fold(0.0f64, f64::max);
        let target = PLATEAU_HIGH * s.grasp_strength;
        assert!(
            (max - target).abs() <= 0.02 * target,
            "max {max} target {target}"
        );
    }

    #[test]
    fn composite_equals_envelope_at_zero_noise() {
        // unit-norm template: composite of the 18 channels == envelope
        let scripts = builtin_scripts();
        let s = subject(5);
        let r = render_trial(&scripts[1], &s, &NoiseSigmas::zero(), 50.0, 11).unwrap();
        let force = composite_norm(&r.trial, ChannelGroup::Pressure);
        for (k, frame) in r.trial.frames.iter().enumerate() {
            let envelope = frame.pressure[0] / s.grasp_template[0];
            assert!(
                (force.values[k] - envelope).abs() <= 1e-6 * envelope.max(1.0),
                "frame {k}"
            );
        }
    }

    #[test]
    fn dataset_counts_and_balance() {
        let params = DatasetParams {
            n_subjects: 2,
            trials_per_action: 1,
            noise: NoiseSigmas::zero(),
            ..Default::default()
        };
        let dataset = generate_dataset(&params).unwrap();
        assert_eq!(dataset.trials.len(), 16);
        let subjects: std::collections::BTreeSet<&str> = dataset
            .trials
            .iter()
            .map(|t| t.trial.subject.as_str())
            .collect();
        assert_eq!(subjects.len(), 2);
        let mut per_action: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &dataset.trials {
            *per_action
                .entry(t.trial.action_label.as_deref().unwrap())
                .or_default() += 1;
        }
        assert!(per_action.values().all(|&c| c == 2));
        // 60 % split of 2 subjects -> 1 train, 1 test
        assert!(dataset.trials.iter().any(|t| t.split == Split::Train));
        assert!(dataset.trials.iter().any(|t| t.split == Split::Test));
    }

    #[test]
    fn different_seeds_same_label_multiset() {
        let mk = |seed| {
            generate_dataset(&DatasetParams {
                n_subjects: 2,
                trials_per_action: 1,
                seed,
                ..Default::default()
            })
            .unwrap()
        };
        let a = mk(1);
        let b = mk(2);
        let labels = |d: &Dataset| {
            let mut v: Vec<String> = d
                .trials
                .iter()
                .map(|t| t.trial.action_label.clone().unwrap())
                .collect();
            v.sort();
            v
        };
        assert_eq!(labels(&a), labels(&b));
        // but the signal content differs
        let first_vx =
            |d: &Dataset| d.trials[0].trial.frames.iter().map(|f| f.v[0]).sum::<f64>();
        assert!((first_vx(&a) - first_vx(&b)).abs() > 1e-9);
    }

    #[test]
    fn dataset_requires_two_subjects() {
        let params = DatasetParams {
            n_subjects: 1,
            ..Default::default()
        };
        assert!(matches!(generate_dataset(&params), Err(Error::Argument(_))));
    }

    #[test]
    fn manifest_round_trips() {
        let params = DatasetParams {
            n_subjects: 2,
            trials_per_action: 1,
            noise: NoiseSigmas::zero(),
            ..Default::default()
        };
        let dataset = generate_dataset(&params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&dataset, dir.path()).unwrap();
        let entries = read_manifest(dir.path()).unwrap();
        assert_eq!(entries.len(), dataset.trials.len());
        for (entry, item) in entries.iter().zip(dataset.trials.iter()) {
            assert_eq!(entry.trial_id, item.trial.id);
            assert_eq!(entry.ground_truth, item.ground_truth.names());
            assert_eq!(entry.split, item.split);
            let loaded =
                crate::signals::load_trial(&dir.path().join(format!("{}.csv", entry.trial_id)))
                    .unwrap();
            assert_eq!(loaded.frames.len(), item.trial.frames.len());
        }
    }

    #[test]
    fn subject_factors_stay_in_bounds() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for variability in [Variability::Default, Variability::High] {
                let s = SubjectParams::sample("s", variability, &mut rng);
                for f in [
                    s.duration_factor,
                    s.magnitude_factor,
                    s.grasp_strength,
                    s.bend_strength,
                ] {
                    assert!((0.7..=1.3).contains(&f), "factor {f} out of bounds");
                }
                let norm: f64 = s.grasp_template.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-9);
            }
        }
    }
}
