//! Converts a trial into a token sequence over the 24-symbol alphabet:
//! level-crossing quantization for the composite force/bend signals,
//! bell-shape fitting for the six velocity channels, magnitude pruning,
//! and concurrent-event merging.

use crate::error::{Error, Result};
use crate::profile::{BellParams, ProfileModel};
use crate::signals::{
    channel_series, composite_norm, smooth, Channel, ChannelGroup, Series, Trial,
    ANGULAR_CHANNELS, VELOCITY_CHANNELS,
};
use crate::token::{Level, Sign, SignedAxis, Symbol, Token, TokenSequence};

/// Quantization thresholds at 15 / 45 / 75 % of the average per-trial
/// maximum of a composite signal over the training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSet {
    pub average_max: f64,
    pub low: f64,
    pub mid: f64,
    pub high: f64,
}

impl LevelSet {
    pub fn from_average(average_max: f64) -> Result<LevelSet> {
        if !(average_max > 0.0) || !average_max.is_finite() {
            return Err(Error::DegenerateLevels(format!(
                "average of per-trial maxima is {average_max}; need a nonzero training signal"
            )));
        }
        Ok(LevelSet {
            average_max,
            low: 0.15 * average_max,
            mid: 0.45 * average_max,
            high: 0.75 * average_max,
        })
    }

    pub fn value(&self, level: Level) -> f64 {
        match level {
            Level::Low => self.low,
            Level::Mid => self.mid,
            Level::High => self.high,
        }
    }
}

/// One fitted occurrence of a reach/rotate primitive.
#[derive(Debug, Clone)]
pub struct BellInstance {
    pub params: BellParams,
    pub channel: Channel,
    /// Mean squared error over this bell's support after the joint fit.
    pub residual: f64,
}

impl BellInstance {
    pub fn symbol(&self) -> Symbol {
        if self.channel.is_angular() {
            Symbol::Ang(self.params.axis.axis, self.params.axis.sign)
        } else {
            Symbol::Vel(self.params.axis.axis, self.params.axis.sign)
        }
    }
}

/// Crossing-detection family: which symbols rising/falling transitions map
/// onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingFamily {
    GraspRelease,
    BendExtend,
}

/// Motion family for pruning/merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionFamily {
    Reach,
    Rotate,
}

/// Extraction tuning knobs. Defaults match the pruning thresholds of the
/// primitive definitions (10 cm reach, 0.5 rad rotate) plus the debounce
/// and prominence guards for noisy signals.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionConfig {
    /// Reach bells below this magnitude (meters) are discarded.
    pub min_reach_magnitude: f64,
    /// Rotate bells below this magnitude (radians) are discarded.
    pub min_rotate_magnitude: f64,
    /// A crossing counts only if the signal stays on the far side for this
    /// many samples.
    pub debounce: usize,
    /// Peaks need prominence >= this fraction of the channel max.
    pub peak_min_prominence: f64,
    /// Moving-average window applied to composite signals before crossing
    /// detection.
    pub smooth_window: usize,
    /// Coordinate-descent sweep cap for the bell-duration fit.
    pub max_fit_sweeps: usize,
    /// Stop sweeping once the MSE improves by less than this.
    pub fit_tol: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            min_reach_magnitude: 0.10,
            min_rotate_magnitude: 0.5,
            debounce: 5,
            peak_min_prominence: 0.2,
            smooth_window: 5,
            max_fit_sweeps: 50,
            fit_tol: 1e-6,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("min_reach_magnitude", self.min_reach_magnitude),
            ("min_rotate_magnitude", self.min_rotate_magnitude),
            ("peak_min_prominence", self.peak_min_prominence),
            ("fit_tol", self.fit_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Argument(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.debounce == 0 || self.max_fit_sweeps == 0 {
            return Err(Error::Argument(
                "debounce and max_fit_sweeps must be >= 1".into(),
            ));
        }
        if self.smooth_window % 2 == 0 {
            return Err(Error::Argument("smooth_window must be odd".into()));
        }
        Ok(())
    }
}

/// Computes the level set from a training set: A is the mean over trials
/// of the maximum composite norm; levels sit at 15/45/75 % of A.
pub fn compute_levels(trials: &[Trial], group: ChannelGroup) -> Result<LevelSet> {
    if trials.is_empty() {
        return Err(Error::Argument(
            "compute_levels needs a non-empty training set".into(),
        ));
    }
    let mean_max = trials
        .iter()
        .map(|t| {
            composite_norm(t, group)
                .values
                .iter()
                .cloned()
                .fold(0.0f64, f64::max)
        })
        .sum::<f64>()
        / trials.len() as f64;
    LevelSet::from_average(mean_max)
}

/// Detects validated level crossings. Rising transitions map to
/// grasp/bend symbols, falling to release/extend, with the level suffix of
/// the crossed threshold. `t_s` is the interpolated crossing instant.
pub fn detect_crossings(
    series: &Series,
    levels: &LevelSet,
    family: CrossingFamily,
    debounce: usize,
) -> Result<Vec<Token>> {
    if debounce == 0 {
        return Err(Error::Argument("debounce must be >= 1".into()));
    }
    let v = &series.values;
    let n = v.len();
    let mut tokens = Vec::new();
    for level in Level::ALL {
        let threshold = levels.value(level);
        for i in 1..n {
            let rising = v[i - 1] < threshold && v[i] >= threshold;
            let falling = v[i - 1] > threshold && v[i] <= threshold;
            if !rising && !falling {
                continue;
            }
            let hold_until = (i + debounce).min(n);
            let held = if rising {
                v[i..hold_until].iter().all(|&x| x >= threshold)
            } else {
                v[i..hold_until].iter().all(|&x| x <= threshold)
            };
            if !held {
                continue;
            }
            let frac = (threshold - v[i - 1]) / (v[i] - v[i - 1]);
            let t_s = series.t0 + (i as f64 - 1.0 + frac) / series.rate;
            let symbol = match (family, rising) {
                (CrossingFamily::GraspRelease, true) => Symbol::Grasp(level),
                (CrossingFamily::GraspRelease, false) => Symbol::Release(level),
                (CrossingFamily::BendExtend, true) => Symbol::Bend(level),
                (CrossingFamily::BendExtend, false) => Symbol::Extend(level),
            };
            tokens.push(Token::single(symbol, t_s));
        }
    }
    tokens.sort_by(|a, b| {
        a.t_s
            .partial_cmp(&b.t_s)
            .unwrap()
            .then_with(|| a.name().cmp(&b.name()))
    });
    Ok(tokens)
}

/// Local extrema of |series| with prominence at least
/// `min_prominence * max|series|`, in time order, sign retained.
pub fn detect_peaks(series: &Series, min_prominence: f64) -> Vec<(usize, f64)> {
    let a: Vec<f64> = series.values.iter().map(|x| x.abs()).collect();
    let n = a.len();
    if n < 3 {
        return Vec::new();
    }
    let global_max = a.iter().cloned().fold(0.0f64, f64::max);
    if global_max <= 0.0 {
        return Vec::new();
    }
    let threshold = min_prominence * global_max;

    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 <= n - 1 {
        if a[i] > a[i - 1] {
            // ride out any plateau of equal samples
            let mut j = i;
            while j + 1 < n && a[j + 1] == a[i] {
                j += 1;
            }
            if j + 1 < n && a[j + 1] < a[i] {
                let idx = (i + j) / 2;
                if prominence(&a, idx) >= threshold {
                    peaks.push((idx, series.values[idx]));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

fn prominence(a: &[f64], peak: usize) -> f64 {
    let h = a[peak];
    let mut left_min = h;
    for k in (0..peak).rev() {
        if a[k] > h {
            break;
        }
        left_min = left_min.min(a[k]);
    }
    let mut right_min = h;
    for &x in &a[peak + 1..] {
        if x > h {
            break;
        }
        right_min = right_min.min(x);
    }
    h - left_min.max(right_min)
}

/// Result of a joint bell fit on one channel.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub instances: Vec<BellInstance>,
    /// Final mean squared error between the series and the bell sum.
    pub mse: f64,
    pub converged: bool,
}

struct BellShape<'a> {
    peak_time: f64,
    peak_value: f64,
    model: &'a ProfileModel,
}

impl BellShape<'_> {
    /// Bell value at time `t` for candidate duration `d`, anchored so the
    /// profile peak sits at (peak_time, peak_value).
    fn eval(&self, t: f64, d: f64) -> f64 {
        let u = self.model.peak_tau() + (t - self.peak_time) / d;
        self.peak_value * self.model.eval(u) / self.model.peak_value()
    }

    fn support(&self, d: f64) -> (f64, f64) {
        let start = self.peak_time - self.model.peak_tau() * d;
        (start, start + d)
    }
}

/// Fits one bell per detected peak, keeping the peak location and value
/// fixed and choosing durations to minimize the MSE between the series and
/// the superposed bells. Durations are optimized coordinate-wise with a
/// bracketing scan plus golden-section refinement, cycled until the MSE
/// improvement drops below `config.fit_tol` or `config.max_fit_sweeps`
/// sweeps have run.
pub fn fit_bells(
    series: &Series,
    peaks: &[(usize, f64)],
    model: &ProfileModel,
    channel: Channel,
    config: &ExtractionConfig,
) -> FitOutcome {
    let n = series.values.len();
    let power: f64 = series.values.iter().map(|x| x * x).sum();
    if peaks.is_empty() || n == 0 {
        return FitOutcome {
            instances: Vec::new(),
            mse: if n == 0 { 0.0 } else { power / n as f64 },
            converged: true,
        };
    }

    let shapes: Vec<BellShape> = peaks
        .iter()
        .map(|&(idx, value)| BellShape {
            peak_time: series.time_at(idx),
            peak_value: value,
            model,
        })
        .collect();
    let lo = 4.0 / series.rate;
    let hi = (n as f64 / series.rate).max(lo * 2.0);
    let mut durations = vec![lo.max(0.2_f64.min(hi)); shapes.len()];

    // running sum of all bells on the sample grid
    let mut bell_sum = vec![0.0f64; n];
    for (shape, &d) in shapes.iter().zip(durations.iter()) {
        add_shape(&mut bell_sum, series, shape, d, 1.0);
    }

    let mse_of = |bell_sum: &[f64]| -> f64 {
        series
            .values
            .iter()
            .zip(bell_sum.iter())
            .map(|(s, b)| (s - b) * (s - b))
            .sum::<f64>()
            / n as f64
    };

    let mut mse = mse_of(&bell_sum);
    let mut converged = false;
    for _sweep in 0..config.max_fit_sweeps {
        for (k, shape) in shapes.iter().enumerate() {
            // residual without bell k
            add_shape(&mut bell_sum, series, shape, durations[k], -1.0);
            let residual: Vec<f64> = series
                .values
                .iter()
                .zip(bell_sum.iter())
                .map(|(s, b)| s - b)
                .collect();
            let r2: f64 = residual.iter().map(|x| x * x).sum();
            let objective = |d: f64| -> f64 {
                let (t_lo, t_hi) = shape.support(d);
                let first = (((t_lo - series.t0) * series.rate).ceil().max(0.0)) as usize;
                let mut acc = 0.0;
                for (i, r) in residual.iter().enumerate().skip(first) {
                    let t = series.time_at(i);
                    if t > t_hi {
                        break;
                    }
                    let b = shape.eval(t, d);
                    acc += (r - b) * (r - b) - r * r;
                }
                (r2 + acc) / n as f64
            };
            durations[k] = minimize_duration(&objective, lo, hi);
            add_shape(&mut bell_sum, series, shape, durations[k], 1.0);
        }
        let new_mse = mse_of(&bell_sum);
        let improvement = mse - new_mse;
        mse = new_mse;
        if improvement.abs() < config.fit_tol {
            converged = true;
            break;
        }
    }

    let instances = shapes
        .iter()
        .zip(durations.iter())
        .map(|(shape, &d)| {
            let (t_lo, t_hi) = shape.support(d);
            let mut acc = 0.0;
            let mut count = 0usize;
            for (i, (s, b)) in series.values.iter().zip(bell_sum.iter()).enumerate() {
                let t = series.time_at(i);
                if t < t_lo {
                    continue;
                }
                if t > t_hi {
                    break;
                }
                acc += (s - b) * (s - b);
                count += 1;
            }
            BellInstance {
                params: BellParams {
                    axis: SignedAxis {
                        axis: channel.axis(),
                        sign: Sign::of(shape.peak_value),
                    },
                    magnitude: shape.peak_value.abs() * d / model.peak_value(),
                    t_s: t_lo,
                    duration: d,
                },
                channel,
                residual: if count > 0 { acc / count as f64 } else { 0.0 },
            }
        })
        .collect();

    FitOutcome {
        instances,
        mse,
        converged,
    }
}

fn add_shape(bell_sum: &mut [f64], series: &Series, shape: &BellShape, d: f64, factor: f64) {
    let (t_lo, t_hi) = shape.support(d);
    let first = (((t_lo - series.t0) * series.rate).ceil().max(0.0)) as usize;
    for k in first..bell_sum.len() {
        let t = series.time_at(k);
        if t > t_hi {
            break;
        }
        bell_sum[k] += factor * shape.eval(t, d);
    }
}

/// Coarse bracketing scan followed by golden-section refinement.
fn minimize_duration(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const COARSE: usize = 64;
    let step = (hi - lo) / (COARSE - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..COARSE {
        let d = lo + i as f64 * step;
        let v = f(d);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    golden_min(f, a, b).0
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const RESP: f64 = 2.0 - 1.618_033_988_749_895; // 2 - phi
    let mut x1 = a + RESP * (b - a);
    let mut x2 = b - RESP * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + RESP * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - RESP * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Drops bells below the magnitude floor for their family. The boundary is
/// inclusive: a magnitude exactly at the threshold is retained.
pub fn prune_bells(instances: Vec<BellInstance>, config: &ExtractionConfig) -> Vec<BellInstance> {
    instances
        .into_iter()
        .filter(|inst| {
            let min = if inst.channel.is_angular() {
                config.min_rotate_magnitude
            } else {
                config.min_reach_magnitude
            };
            inst.params.magnitude >= min
        })
        .collect()
}

/// Combines bells of one motion family that overlap in time: a later
/// instance joins an open token when its start falls within the first half
/// of the token's earliest member, on a different axis. Token symbols are
/// stored lexicographically; the token keeps the earliest start time.
pub fn merge_concurrent(instances: &[BellInstance], family: MotionFamily) -> Vec<Token> {
    let mut sorted: Vec<&BellInstance> = instances
        .iter()
        .filter(|inst| {
            matches!(
                (family, inst.channel.is_angular()),
                (MotionFamily::Reach, false) | (MotionFamily::Rotate, true)
            )
        })
        .collect();
    sorted.sort_by(|a, b| {
        a.params
            .t_s
            .partial_cmp(&b.params.t_s)
            .unwrap()
            .then_with(|| a.symbol().cmp(&b.symbol()))
    });

    let mut tokens = Vec::new();
    let mut open: Option<(f64, f64, Vec<Symbol>)> = None;
    for inst in sorted {
        let sym = inst.symbol();
        match &mut open {
            Some((anchor_ts, anchor_d, syms))
                if inst.params.t_s < *anchor_ts + *anchor_d / 2.0
                    && !syms
                        .iter()
                        .any(|s| symbol_axis(*s) == inst.params.axis.axis) =>
            {
                syms.push(sym);
            }
            _ => {
                if let Some((ts, _, syms)) = open.take() {
                    tokens.push(Token::compound(syms, ts));
                }
                open = Some((inst.params.t_s, inst.params.duration, vec![sym]));
            }
        }
    }
    if let Some((ts, _, syms)) = open {
        tokens.push(Token::compound(syms, ts));
    }
    tokens
}

fn symbol_axis(s: Symbol) -> crate::token::Axis {
    match s {
        Symbol::Vel(a, _) | Symbol::Ang(a, _) => a,
        _ => unreachable!("motion families only"),
    }
}

/// Runs the full extraction pipeline on one trial: smoothed crossings for
/// the composite force and bend signals, per-channel peak detection, bell
/// fitting, pruning and merging for the velocity channels, then one
/// interleaved sequence ordered by start time (ties by token name).
pub fn extract_sequence(
    trial: &Trial,
    levels_force: &LevelSet,
    levels_bend: &LevelSet,
    model: &ProfileModel,
    config: &ExtractionConfig,
) -> Result<TokenSequence> {
    config.validate()?;
    let mut tokens: Vec<Token> = Vec::new();

    for (group, levels, family) in [
        (
            ChannelGroup::Pressure,
            levels_force,
            CrossingFamily::GraspRelease,
        ),
        (ChannelGroup::Bend, levels_bend, CrossingFamily::BendExtend),
    ] {
        let composite = composite_norm(trial, group);
        let window = config.smooth_window.min(odd_cap(composite.len()));
        let smoothed = smooth(&composite, window)?;
        tokens.extend(detect_crossings(
            &smoothed,
            levels,
            family,
            config.debounce,
        )?);
    }

    for (channels, family) in [
        (VELOCITY_CHANNELS, MotionFamily::Reach),
        (ANGULAR_CHANNELS, MotionFamily::Rotate),
    ] {
        let mut instances = Vec::new();
        for channel in channels {
            let series = channel_series(trial, channel);
            let peaks = detect_peaks(&series, config.peak_min_prominence);
            let fit = fit_bells(&series, &peaks, model, channel, config);
            instances.extend(fit.instances);
        }
        let kept = prune_bells(instances, config);
        tokens.extend(merge_concurrent(&kept, family));
    }

    Ok(TokenSequence::new(tokens))
}

fn odd_cap(len: usize) -> usize {
    if len == 0 {
        1
    } else if len % 2 == 0 {
        len - 1
    } else {
        len
    }
}
