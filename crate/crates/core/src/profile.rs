//! The canonical bell-shaped speed profile for reach/rotate primitives.
//!
//! The default is the analytic minimum-jerk speed density
//! `30 tau^2 (1 - tau)^2`: zero at both ends, peak 1.875 at tau = 0.5, and
//! unit area over [0, 1]. A tabulated variant loads user-supplied profiles
//! from CSV and renormalizes them to unit area.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signals::Series;
use crate::token::SignedAxis;

/// Parameters of one reach/rotate bell: direction, signed magnitude
/// carrier (meters for reach, radians for rotate), start time, duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellParams {
    pub axis: SignedAxis,
    pub magnitude: f64,
    pub t_s: f64,
    pub duration: f64,
}

/// Normalized speed profile on tau in [0, 1]: non-negative, zero at the
/// ends, unimodal, unit area.
#[derive(Debug, Clone)]
pub enum ProfileModel {
    MinJerk,
    Tabulated {
        tau: Vec<f64>,
        value: Vec<f64>,
        peak_tau: f64,
        peak_value: f64,
    },
}

const MIN_JERK_PEAK: f64 = 1.875;

fn min_jerk(tau: f64) -> f64 {
    let t2 = tau * tau;
    30.0 * t2 - 60.0 * t2 * tau + 30.0 * t2 * t2
}

/// Minimum-jerk speed density at `tau`. Errors outside [0, 1].
pub fn min_jerk_speed(tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Argument(format!(
            "tau must lie in [0, 1], got {tau}"
        )));
    }
    Ok(min_jerk(tau))
}

impl ProfileModel {
    /// Profile value at `tau`; zero outside [0, 1].
    pub fn eval(&self, tau: f64) -> f64 {
        if !(0.0..=1.0).contains(&tau) {
            return 0.0;
        }
        match self {
            ProfileModel::MinJerk => min_jerk(tau),
            ProfileModel::Tabulated { tau: xs, value: ys, .. } => {
                // xs strictly increasing and covering [0, 1]
                let idx = match xs.binary_search_by(|x| x.partial_cmp(&tau).unwrap()) {
                    Ok(i) => return ys[i],
                    Err(i) => i,
                };
                if idx == 0 {
                    return ys[0];
                }
                if idx >= xs.len() {
                    return *ys.last().unwrap();
                }
                let (x0, x1) = (xs[idx - 1], xs[idx]);
                let (y0, y1) = (ys[idx - 1], ys[idx]);
                y0 + (y1 - y0) * (tau - x0) / (x1 - x0)
            }
        }
    }

    /// Location of the profile peak in tau.
    pub fn peak_tau(&self) -> f64 {
        match self {
            ProfileModel::MinJerk => 0.5,
            ProfileModel::Tabulated { peak_tau, .. } => *peak_tau,
        }
    }

    /// Peak value of the unit-area profile.
    pub fn peak_value(&self) -> f64 {
        match self {
            ProfileModel::MinJerk => MIN_JERK_PEAK,
            ProfileModel::Tabulated { peak_value, .. } => *peak_value,
        }
    }

    /// Builds a tabulated profile from a (tau, value) table, enforcing the
    /// profile invariants and renormalizing to unit area.
    pub fn from_table(tau: Vec<f64>, mut value: Vec<f64>) -> Result<ProfileModel> {
        if tau.len() != value.len() || tau.len() < 3 {
            return Err(Error::Validation(format!(
                "profile table needs >= 3 matching rows, got {} tau / {} value",
                tau.len(),
                value.len()
            )));
        }
        for (i, pair) in tau.windows(2).enumerate() {
            if !(pair[1] > pair[0]) {
                return Err(Error::Validation(format!(
                    "tau must be strictly increasing; violated at row {}",
                    i + 2
                )));
            }
        }
        if tau[0].abs() > 1e-9 || (tau[tau.len() - 1] - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "tau must cover [0, 1], got [{}, {}]",
                tau[0],
                tau[tau.len() - 1]
            )));
        }
        let peak = value.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(peak > 0.0) {
            return Err(Error::Validation("profile has no positive values".into()));
        }
        for (i, &v) in value.iter().enumerate() {
            if v < 0.0 {
                return Err(Error::Validation(format!(
                    "negative value {} at row {}",
                    v,
                    i + 1
                )));
            }
        }
        if value[0] > 1e-9 * peak || value[value.len() - 1] > 1e-9 * peak {
            return Err(Error::Validation(
                "profile must be zero at tau = 0 and tau = 1".into(),
            ));
        }
        // unimodality: non-decreasing up to the peak, non-increasing after
        let mut falling = false;
        for i in 1..value.len() {
            if value[i] < value[i - 1] {
                falling = true;
            } else if value[i] > value[i - 1] && falling {
                return Err(Error::Validation(format!(
                    "not unimodal: value rises again at row {}",
                    i + 1
                )));
            }
        }
        let area = trapezoid(&tau, &value);
        if !(area > 0.0) {
            return Err(Error::Validation("profile area must be positive".into()));
        }
        for v in &mut value {
            *v /= area;
        }
        let (peak_idx, peak_value) = value
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        Ok(ProfileModel::Tabulated {
            peak_tau: tau[peak_idx],
            tau,
            value,
            peak_value,
        })
    }
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// Loads a tabulated profile from a two-column CSV (`tau,value` header,
/// tau strictly increasing from 0 to 1).
pub fn load_profile(path: &Path) -> Result<ProfileModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim_end_matches('\r');
    if header != "tau,value" {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            detail: format!("expected header `tau,value`, got `{header}`"),
        });
    }
    let mut tau = Vec::new();
    let mut value = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| Error::Value {
            row: i + 1,
            column: "<line>".into(),
            detail: "expected two comma-separated values".into(),
        })?;
        let parse = |s: &str, col: &str| -> Result<f64> {
            let x: f64 = s.trim().parse().map_err(|_| Error::Value {
                row: i + 1,
                column: col.into(),
                detail: format!("`{s}` is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::Value {
                    row: i + 1,
                    column: col.into(),
                    detail: "non-finite value".into(),
                });
            }
            Ok(x)
        };
        tau.push(parse(a, "tau")?);
        value.push(parse(b, "value")?);
    }
    ProfileModel::from_table(tau, value)
}

/// Renders one bell as a signed speed series at `rate`, starting at
/// `params.t_s` and lasting `params.duration`. The sampled series is
/// rescaled so its trapezoid integral equals the signed magnitude exactly.
pub fn render_bell(params: &BellParams, model: &ProfileModel, rate: f64) -> Result<Series> {
    let t_total = params.duration * rate;
    if !(t_total >= 2.0) || !(params.duration > 0.0) {
        return Err(Error::Argument(format!(
            "degenerate bell duration: {} s at {} Hz",
            params.duration, rate
        )));
    }
    if !(params.magnitude > 0.0) {
        return Err(Error::Argument(format!(
            "bell magnitude must be > 0, got {}",
            params.magnitude
        )));
    }
    let steps = (t_total + 1e-9).floor() as usize;
    let scale = params.magnitude / params.duration * params.axis.sign.factor();
    let mut values: Vec<f64> = (0..=steps)
        .map(|k| scale * model.eval(k as f64 / t_total))
        .collect();
    let dt = 1.0 / rate;
    let area: f64 = values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
    let target = params.magnitude * params.axis.sign.factor();
    if area.abs() > 0.0 {
        let fix = target / area;
        for v in &mut values {
            *v *= fix;
        }
    }
    Ok(Series {
        t0: params.t_s,
        rate,
        values,
    })
}

/// Accumulates a bell into a sample buffer that starts at `t0` with the
/// given rate. Samples outside the bell support are untouched. No area
/// renormalization: alignment with the grid is arbitrary here.
pub fn accumulate_bell(
    values: &mut [f64],
    t0: f64,
    rate: f64,
    params: &BellParams,
    model: &ProfileModel,
) {
    let scale = params.magnitude / params.duration * params.axis.sign.factor();
    let first = (((params.t_s - t0) * rate).ceil().max(0.0)) as usize;
    let last_t = params.t_s + params.duration;
    for k in first..values.len() {
        let t = t0 + k as f64 / rate;
        if t > last_t {
            break;
        }
        values[k] += scale * model.eval((t - params.t_s) / params.duration);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::{Axis, Sign};

    fn axis(sign: Sign) -> SignedAxis {
        SignedAxis {
            axis: Axis::X,
            sign,
        }
    }

    #[test]
    fn min_jerk_boundary_and_peak() {
        assert_eq!(min_jerk_speed(0.0).unwrap(), 0.0);
        assert_eq!(min_jerk_speed(1.0).unwrap(), 0.0);
        assert!((min_jerk_speed(0.5).unwrap() - 1.875).abs() < 1e-12);
        assert!(min_jerk_speed(-0.1).is_err());
        assert!(min_jerk_speed(1.1).is_err());
    }

    #[test]
    fn min_jerk_unit_area_by_quadrature() {
        // composite Simpson, independent of the rendering path
        let n = 10_000;
        let h = 1.0 / n as f64;
        let mut acc = min_jerk(0.0) + min_jerk(1.0);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * min_jerk(k as f64 * h);
        }
        let integral = acc * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-9, "integral = {integral}");
    }

    #[test]
    fn render_bell_peak_and_area() {
        let params = BellParams {
            axis: axis(Sign::Pos),
            magnitude: 0.4,
            t_s: 0.0,
            duration: 1.0,
        };
        let s = render_bell(&params, &ProfileModel::MinJerk, 50.0).unwrap();
        assert_eq!(s.values.len(), 51);
        let peak = s.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((peak - 0.75).abs() < 1e-3, "peak = {peak}");
        let area: f64 = s.values.windows(2).map(|w| 0.5 * (w[0] + w[1]) / 50.0).sum();
        assert!((area - 0.4).abs() < 1e-9);
    }

    #[test]
    fn render_bell_time_rescaling() {
        let short = BellParams {
            axis: axis(Sign::Pos),
            magnitude: 0.3,
            t_s: 0.0,
            duration: 0.8,
        };
        let long = BellParams {
            duration: 1.6,
            ..short
        };
        let a = render_bell(&short, &ProfileModel::MinJerk, 100.0).unwrap();
        let b = render_bell(&long, &ProfileModel::MinJerk, 100.0).unwrap();
        let pa = a.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pb = b.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((pb - pa / 2.0).abs() < 1e-3);
        let area = |s: &Series| -> f64 {
            s.values.windows(2).map(|w| 0.5 * (w[0] + w[1]) / s.rate).sum()
        };
        assert!((area(&a) - area(&b)).abs() < 1e-9);
    }

    #[test]
    fn render_bell_negative_sign_negates() {
        let pos = BellParams {
            axis: axis(Sign::Pos),
            magnitude: 0.4,
            t_s: 0.25,
            duration: 1.0,
        };
        let neg = BellParams {
            axis: axis(Sign::Neg),
            ..pos
        };
        let a = render_bell(&pos, &ProfileModel::MinJerk, 50.0).unwrap();
        let b = render_bell(&neg, &ProfileModel::MinJerk, 50.0).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert!((x + y).abs() < 1e-12);
        }
    }

    #[test]
    fn render_bell_rejects_degenerate_duration() {
        let params = BellParams {
            axis: axis(Sign::Pos),
            magnitude: 0.4,
            t_s: 0.0,
            duration: 0.01,
        };
        assert!(render_bell(&params, &ProfileModel::MinJerk, 50.0).is_err());
    }

    fn sampled_min_jerk_table(n: usize) -> (Vec<f64>, Vec<f64>) {
        let tau: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let value: Vec<f64> = tau.iter().map(|&t| min_jerk(t)).collect();
        (tau, value)
    }

    #[test]
    fn tabulated_profile_matches_analytic_render() {
        let (tau, value) = sampled_min_jerk_table(101);
        let model = ProfileModel::from_table(tau, value).unwrap();
        let params = BellParams {
            axis: axis(Sign::Pos),
            magnitude: 0.4,
            t_s: 0.0,
            duration: 1.0,
        };
        let a = render_bell(&params, &ProfileModel::MinJerk, 50.0).unwrap();
        let b = render_bell(&params, &model, 50.0).unwrap();
        let rms = (a
            .values
            .iter()
            .zip(b.values.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.values.len() as f64)
            .sqrt();
        assert!(rms < 1e-3, "rms = {rms}");
    }

    #[test]
    fn table_with_negative_entry_rejected() {
        let (tau, mut value) = sampled_min_jerk_table(21);
        value[4] = -0.05;
        match ProfileModel::from_table(tau, value) {
            Err(Error::Validation(msg)) => assert!(msg.contains("negative"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn two_bump_table_rejected() {
        let tau: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let value = vec![0.0, 1.0, 2.0, 1.0, 0.5, 0.4, 0.5, 2.0, 1.0, 0.5, 0.0];
        match ProfileModel::from_table(tau, value) {
            Err(Error::Validation(msg)) => assert!(msg.contains("unimodal"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn load_profile_from_csv() {
        use std::io::Write as _;
        let (tau, value) = sampled_min_jerk_table(101);
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        writeln!(f, "tau,value").unwrap();
        for (t, v) in tau.iter().zip(value.iter()) {
            writeln!(f, "{t},{v}").unwrap();
        }
        f.flush().unwrap();
        let model = load_profile(f.path()).unwrap();
        assert!((model.peak_value() - 1.875).abs() < 1e-3);
        assert!((model.peak_tau() - 0.5).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // area == signed magnitude across the duration/rate envelope
            #[test]
            fn render_area_matches_magnitude(
                duration in 0.2f64..5.0,
                rate_idx in 0usize..3,
                magnitude in 0.05f64..3.0,
                t_s in -2.0f64..2.0,
            ) {
                let rate = [20.0, 50.0, 100.0][rate_idx];
                let params = BellParams {
                    axis: axis(Sign::Pos), magnitude, t_s, duration,
                };
                let s = render_bell(&params, &ProfileModel::MinJerk, rate).unwrap();
                let area: f64 = s.values.windows(2)
                    .map(|w| 0.5 * (w[0] + w[1]) / rate).sum();
                prop_assert!((area - magnitude).abs() <= 1e-3 * magnitude);
                // shift equivariance: t0 follows t_s, values do not
                prop_assert!((s.t0 - t_s).abs() < 1e-12);
            }

            #[test]
            fn accepted_tables_have_unit_area(n in 5usize..40, skew in 0.2f64..0.8) {
                // unimodal test table with adjustable peak location
                let tau: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
                let value: Vec<f64> = tau.iter().map(|&t| {
                    if t < skew { (t / skew).powi(2) } else { ((1.0 - t) / (1.0 - skew)).powi(2) }
                }).collect();
                let model = ProfileModel::from_table(tau.clone(), value).unwrap();
                let area = match &model {
                    ProfileModel::Tabulated { tau, value, .. } => {
                        tau.windows(2).zip(value.windows(2))
                            .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0])).sum::<f64>()
                    }
                    _ => unreachable!(),
                };
                prop_assert!((area - 1.0).abs() < 1e-6);
            }
        }
    }
}
