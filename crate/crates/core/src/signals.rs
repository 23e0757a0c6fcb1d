//! Ingestion, resampling, compositing, and smoothing of multi-modal
//! recordings. All operations are pure; values are immutable after
//! construction and safe to share across threads.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::token::Axis;

pub const PRESSURE_CHANNELS: usize = 18;
pub const BEND_CHANNELS: usize = 8;

/// One synchronized sample of every modality.
///
/// Velocity axes: x toward/away from body, y lateral, z vertical.
/// Angular velocities are about the hand principal axes. Pressure and
/// bend are raw sensor units, non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub v: [f64; 3],
    pub w: [f64; 3],
    pub pressure: [f64; PRESSURE_CHANNELS],
    pub bend: [f64; BEND_CHANNELS],
}

impl Frame {
    pub fn zero(t: f64) -> Self {
        Frame {
            t,
            v: [0.0; 3],
            w: [0.0; 3],
            pressure: [0.0; PRESSURE_CHANNELS],
            bend: [0.0; BEND_CHANNELS],
        }
    }
}

/// A recorded trial: ordered frames plus identity metadata. `rate` is the
/// nominal sampling rate; it is inferred on load and exact after
/// [`resample`].
#[derive(Debug, Clone)]
pub struct Trial {
    pub id: String,
    pub subject: String,
    pub action_label: Option<String>,
    pub frames: Vec<Frame>,
    pub rate: f64,
}

impl Trial {
    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// A scalar series on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub t0: f64,
    pub rate: f64,
    pub values: Vec<f64>,
}

impl Series {
    pub fn time_at(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.rate
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Channel group for composite signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelGroup {
    Pressure,
    Bend,
}

/// One of the six velocity channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Vx,
    Vy,
    Vz,
    Wx,
    Wy,
    Wz,
}

pub const VELOCITY_CHANNELS: [Channel; 3] = [Channel::Vx, Channel::Vy, Channel::Vz];
pub const ANGULAR_CHANNELS: [Channel; 3] = [Channel::Wx, Channel::Wy, Channel::Wz];

impl Channel {
    pub fn axis(self) -> Axis {
        match self {
            Channel::Vx | Channel::Wx => Axis::X,
            Channel::Vy | Channel::Wy => Axis::Y,
            Channel::Vz | Channel::Wz => Axis::Z,
        }
    }

    pub fn is_angular(self) -> bool {
        matches!(self, Channel::Wx | Channel::Wy | Channel::Wz)
    }

    pub fn value(self, frame: &Frame) -> f64 {
        match self {
            Channel::Vx => frame.v[0],
            Channel::Vy => frame.v[1],
            Channel::Vz => frame.v[2],
            Channel::Wx => frame.w[0],
            Channel::Wy => frame.w[1],
            Channel::Wz => frame.w[2],
        }
    }
}

/// Extracts one velocity channel of a trial as a series.
pub fn channel_series(trial: &Trial, channel: Channel) -> Series {
    Series {
        t0: trial.frames.first().map_or(0.0, |f| f.t),
        rate: trial.rate,
        values: trial.frames.iter().map(|f| channel.value(f)).collect(),
    }
}

fn expected_header() -> Vec<String> {
    let mut cols = vec!["t", "vx", "vy", "vz", "wx", "wy", "wz"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for i in 1..=PRESSURE_CHANNELS {
        cols.push(format!("F{i}"));
    }
    for i in 1..=BEND_CHANNELS {
        cols.push(format!("b{i}"));
    }
    cols
}

pub fn trial_csv_header() -> String {
    expected_header().join(",")
}

/// Loads a trial from a trial-CSV file. An optional sidecar `<stem>.meta`
/// file with `id=`, `subject=`, `action=` lines supplies metadata.
///
/// Row numbers in errors are 1-based data rows (the header is row 0).
pub fn load_trial(path: &Path) -> Result<Trial> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            detail: "empty file".into(),
        })?
        .trim_end_matches('\r');
    let expected = expected_header();
    let got: Vec<&str> = header.split(',').collect();
    for (i, exp) in expected.iter().enumerate() {
        if got.get(i).map(|s| s.trim()) != Some(exp.as_str()) {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                detail: format!(
                    "missing column `{exp}` (position {}, found `{}`)",
                    i + 1,
                    got.get(i).copied().unwrap_or("<none>")
                ),
            });
        }
    }
    if got.len() != expected.len() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            detail: format!(
                "expected {} columns, found {}",
                expected.len(),
                got.len()
            ),
        });
    }

    let mut frames = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let row = row_idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(Error::Value {
                row,
                column: "<row>".into(),
                detail: format!("expected {} fields, found {}", expected.len(), fields.len()),
            });
        }
        let mut parsed = [0.0f64; 33];
        for (c, field) in fields.iter().enumerate() {
            let x: f64 = field.trim().parse().map_err(|_| Error::Value {
                row,
                column: expected[c].clone(),
                detail: format!("`{field}` is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::Value {
                    row,
                    column: expected[c].clone(),
                    detail: "non-finite value".into(),
                });
            }
            parsed[c] = x;
        }
        let mut frame = Frame::zero(parsed[0]);
        frame.v = [parsed[1], parsed[2], parsed[3]];
        frame.w = [parsed[4], parsed[5], parsed[6]];
        for i in 0..PRESSURE_CHANNELS {
            let x = parsed[7 + i];
            if x < 0.0 {
                return Err(Error::Value {
                    row,
                    column: format!("F{}", i + 1),
                    detail: "negative pressure".into(),
                });
            }
            frame.pressure[i] = x;
        }
        for i in 0..BEND_CHANNELS {
            let x = parsed[7 + PRESSURE_CHANNELS + i];
            if x < 0.0 {
                return Err(Error::Value {
                    row,
                    column: format!("b{}", i + 1),
                    detail: "negative bend".into(),
                });
            }
            frame.bend[i] = x;
        }
        if let Some(prev) = frames.last() {
            let prev: &Frame = prev;
            if frame.t <= prev.t {
                return Err(Error::Ordering {
                    row,
                    detail: format!("t = {} does not increase past {}", frame.t, prev.t),
                });
            }
        }
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            detail: "no data rows".into(),
        });
    }

    let rate = if frames.len() >= 2 {
        (frames.len() - 1) as f64 / (frames.last().unwrap().t - frames[0].t)
    } else {
        0.0
    };

    let mut id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut subject = String::new();
    let mut action = None;
    let meta_path = path.with_extension("meta");
    if meta_path.exists() {
        let meta = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        for line in meta.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some(("id", v)) => id = v.trim().to_string(),
                Some(("subject", v)) => subject = v.trim().to_string(),
                Some(("action", v)) => action = Some(v.trim().to_string()),
                _ => {
                    return Err(Error::Schema {
                        path: meta_path.clone(),
                        detail: format!("unknown sidecar line `{line}`"),
                    })
                }
            }
        }
    }

    Ok(Trial {
        id,
        subject,
        action_label: action,
        frames,
        rate,
    })
}

/// Writes a trial in the trial-CSV format.
pub fn write_trial_csv(trial: &Trial, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(trial.frames.len() * 128);
    out.push_str(&trial_csv_header());
    out.push('\n');
    for f in &trial.frames {
        out.push_str(&format!("{}", f.t));
        for x in f.v.iter().chain(f.w.iter()) {
            out.push(',');
            out.push_str(&format!("{x}"));
        }
        for x in &f.pressure {
            out.push(',');
            out.push_str(&format!("{x}"));
        }
        for x in &f.bend {
            out.push(',');
            out.push_str(&format!("{x}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Resamples a trial onto a uniform grid at `rate`, spanning
/// `[t_first, t_last]` with linear interpolation per channel. Endpoints
/// are preserved exactly when the span is an integer number of steps.
pub fn resample(trial: &Trial, rate: f64) -> Result<Trial> {
    if !(rate > 0.0) {
        return Err(Error::Argument(format!("resample rate must be > 0, got {rate}")));
    }
    if trial.frames.is_empty() {
        return Err(Error::Argument("cannot resample an empty trial".into()));
    }
    let t0 = trial.frames[0].t;
    let t_last = trial.frames.last().unwrap().t;
    let span = t_last - t0;
    let steps = (span * rate + 1e-9).floor() as usize;
    let mut frames = Vec::with_capacity(steps + 1);
    let mut cursor = 0usize;
    for k in 0..=steps {
        let mut t = t0 + k as f64 / rate;
        if (t - t_last).abs() <= 1e-9 * t_last.abs().max(1.0) {
            t = t_last;
        }
        let t = t.min(t_last);
        while cursor + 1 < trial.frames.len() - 1 && trial.frames[cursor + 1].t < t {
            cursor += 1;
        }
        let a = &trial.frames[cursor];
        let frame = if trial.frames.len() == 1 {
            a.clone()
        } else {
            let b = &trial.frames[cursor + 1];
            let alpha = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
            let alpha = alpha.clamp(0.0, 1.0);
            lerp_frame(a, b, alpha, t)
        };
        frames.push(frame);
    }
    Ok(Trial {
        id: trial.id.clone(),
        subject: trial.subject.clone(),
        action_label: trial.action_label.clone(),
        frames,
        rate,
    })
}

fn lerp_frame(a: &Frame, b: &Frame, alpha: f64, t: f64) -> Frame {
    let lerp = |x: f64, y: f64| x + (y - x) * alpha;
    let mut f = Frame::zero(t);
    for i in 0..3 {
        f.v[i] = lerp(a.v[i], b.v[i]);
        f.w[i] = lerp(a.w[i], b.w[i]);
    }
    for i in 0..PRESSURE_CHANNELS {
        f.pressure[i] = lerp(a.pressure[i], b.pressure[i]);
    }
    for i in 0..BEND_CHANNELS {
        f.bend[i] = lerp(a.bend[i], b.bend[i]);
    }
    f
}

/// Per-frame Euclidean norm over a channel group: the composite "force
/// signal" (18 pressure channels) or "bend signal" (8 bend channels).
pub fn composite_norm(trial: &Trial, group: ChannelGroup) -> Series {
    let values = trial
        .frames
        .iter()
        .map(|f| {
            let sum: f64 = match group {
                ChannelGroup::Pressure => f.pressure.iter().map(|x| x * x).sum(),
                ChannelGroup::Bend => f.bend.iter().map(|x| x * x).sum(),
            };
            sum.sqrt()
        })
        .collect();
    Series {
        t0: trial.frames.first().map_or(0.0, |f| f.t),
        rate: trial.rate,
        values,
    }
}

/// Centered moving average. Near the edges the window shrinks
/// symmetrically, so output length equals input length.
pub fn smooth(series: &Series, window: usize) -> Result<Series> {
    let n = series.values.len();
    if window % 2 == 0 || window == 0 {
        return Err(Error::Argument(format!(
            "smoothing window must be odd and >= 1, got {window}"
        )));
    }
    if window > n {
        return Err(Error::Argument(format!(
            "smoothing window {window} exceeds series length {n}"
        )));
    }
    let half = window / 2;
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let h = half.min(i).min(n - 1 - i);
        let slice = &series.values[i - h..=i + h];
        values.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    Ok(Series {
        t0: series.t0,
        rate: series.rate,
        values,
    })
}
