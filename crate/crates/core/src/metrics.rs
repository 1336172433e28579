//! Step-response metrics and the weighted tuning cost.
//!
//! Windows, all relative to the reference phases:
//! - position step: from motion start to the end of the first dwell, with
//!   the plateau being the dwell itself;
//! - speed step: from motion start to the end of the cruise phase (the
//!   peak instant for triangular moves), plateau = cruise;
//! - infinity norm and ITAE: the whole run, origin at motion start;
//! - zero error: the last part of the terminal dwell after the return leg.

#[allow(unused_imports)]
use num_traits::Float;

use crate::refgen::ReferenceProfile;
use crate::simloop::SimTrace;
use crate::{Error, Result};

/// Position metrics, also used as the matching weight record.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PositionMetrics {
    pub overshoot: f64,
    pub undershoot: f64,
    pub settling_time: f64,
    pub inf_norm: f64,
    pub itae: f64,
    pub steady_state: f64,
    pub zero_error: f64,
}

/// Speed metrics, also used as the matching weight record.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpeedMetrics {
    pub overshoot: f64,
    pub undershoot: f64,
    pub settling_time: f64,
    pub inf_norm: f64,
    pub itae: f64,
    pub steady_state: f64,
}

impl PositionMetrics {
    pub const NAMES: [&'static str; 7] = [
        "overshoot",
        "undershoot",
        "settling_time",
        "inf_norm",
        "itae",
        "steady_state",
        "zero_error",
    ];

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.overshoot,
            self.undershoot,
            self.settling_time,
            self.inf_norm,
            self.itae,
            self.steady_state,
            self.zero_error,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        PositionMetrics {
            overshoot: a[0],
            undershoot: a[1],
            settling_time: a[2],
            inf_norm: a[3],
            itae: a[4],
            steady_state: a[5],
            zero_error: a[6],
        }
    }
}

impl SpeedMetrics {
    pub const NAMES: [&'static str; 6] = ["overshoot", "undershoot", "settling_time", "inf_norm", "itae", "steady_state"];

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.overshoot,
            self.undershoot,
            self.settling_time,
            self.inf_norm,
            self.itae,
            self.steady_state,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        SpeedMetrics {
            overshoot: a[0],
            undershoot: a[1],
            settling_time: a[2],
            inf_norm: a[3],
            itae: a[4],
            steady_state: a[5],
        }
    }
}

/// The 7 position and 6 speed metrics of one run.
///
/// A diverged run is represented by the sentinel: every entry `+inf` and
/// `diverged` set. The sentinel serializes with `null` metric groups, since
/// JSON has no infinity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "MetricRepr", into = "MetricRepr"))]
pub struct MetricVector {
    pub position: PositionMetrics,
    pub speed: SpeedMetrics,
    pub diverged: bool,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct MetricRepr {
    position: Option<PositionMetrics>,
    speed: Option<SpeedMetrics>,
    diverged: bool,
}

#[cfg(feature = "serde")]
impl From<MetricVector> for MetricRepr {
    fn from(m: MetricVector) -> Self {
        let live = !m.diverged;
        MetricRepr {
            position: live.then_some(m.position),
            speed: live.then_some(m.speed),
            diverged: m.diverged,
        }
    }
}

#[cfg(feature = "serde")]
impl From<MetricRepr> for MetricVector {
    fn from(r: MetricRepr) -> Self {
        match (r.diverged, r.position, r.speed) {
            (false, Some(position), Some(speed)) => MetricVector { position, speed, diverged: false },
            _ => MetricVector::sentinel(),
        }
    }
}

impl MetricVector {
    pub fn sentinel() -> Self {
        MetricVector {
            position: PositionMetrics::from_array([f64::INFINITY; 7]),
            speed: SpeedMetrics::from_array([f64::INFINITY; 6]),
            diverged: true,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.diverged
    }

    /// Flattened `[position..., speed...]`.
    pub fn to_array(&self) -> [f64; 13] {
        let mut out = [0.0; 13];
        out[..7].copy_from_slice(&self.position.to_array());
        out[7..].copy_from_slice(&self.speed.to_array());
        out
    }

    pub fn from_array(a: [f64; 13], diverged: bool) -> Self {
        let mut p = [0.0; 7];
        let mut s = [0.0; 6];
        p.copy_from_slice(&a[..7]);
        s.copy_from_slice(&a[7..]);
        MetricVector {
            position: PositionMetrics::from_array(p),
            speed: SpeedMetrics::from_array(s),
            diverged,
        }
    }

    /// Sum of the two ITAE entries.
    pub fn itae_sum(&self) -> f64 {
        self.position.itae + self.speed.itae
    }
}

/// Weights for [`cost`]; the records mirror the metric layout.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostWeights {
    pub position: PositionMetrics,
    pub speed: SpeedMetrics,
    /// Cost returned for a diverged run.
    pub divergence_penalty: f64,
}

impl CostWeights {
    pub const DEFAULT_PENALTY: f64 = 1e9;

    pub fn validate(&self) -> Result<()> {
        let all = self.position.to_array().into_iter().chain(self.speed.to_array());
        let mut any_positive = false;
        for w in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::param("weights", "must be finite and >= 0"));
            }
            any_positive |= w > 0.0;
        }
        if !any_positive {
            return Err(Error::param("weights", "at least one weight must be positive"));
        }
        if !(self.divergence_penalty.is_finite() && self.divergence_penalty >= 0.0) {
            return Err(Error::param("divergence_penalty", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Unit weights on the two ITAE entries only.
    pub fn itae_only() -> Self {
        CostWeights {
            position: PositionMetrics {
                itae: 1.0,
                ..Default::default()
            },
            speed: SpeedMetrics {
                itae: 1.0,
                ..Default::default()
            },
            divergence_penalty: Self::DEFAULT_PENALTY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum OvershootMode {
    /// Output units (m, m/s).
    Absolute,
    /// Percent of the step height.
    Percent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricConfig {
    /// Settling band as a fraction of the step height.
    pub settle_band: f64,
    /// Fraction of the plateau, at its end, averaged for the SS error.
    pub steady_state_fraction: f64,
    /// Fraction of the terminal dwell, at its end, used for the zero error.
    pub zero_error_fraction: f64,
    pub overshoot_mode: OvershootMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            settle_band: 0.02,
            steady_state_fraction: 0.1,
            zero_error_fraction: 0.5,
            overshoot_mode: OvershootMode::Absolute,
        }
    }
}

/// `integral (t - t0) |e(t)| dt` over the samples `e[i0..=i1]`.
///
/// The error is taken piecewise linear between samples and each interval
/// is integrated exactly, splitting at sign changes. This is the trapezoid
/// rule's interpolant, integrated without the extra quadrature error on
/// the time weight, so constant and linear errors come out exact.
pub fn itae_window(e: &[f64], dt: f64, i0: usize, i1: usize) -> Result<f64> {
    if e.is_empty() || i1 < i0 || i1 >= e.len() {
        return Err(Error::param("itae window", "empty or out of range"));
    }
    let mut acc = 0.0;
    for k in i0..i1 {
        let tau0 = (k - i0) as f64 * dt;
        let (e0, e1) = (e[k], e[k + 1]);
        if e0 * e1 < 0.0 {
            let frac = e0 / (e0 - e1);
            let h1 = frac * dt;
            acc += segment(tau0, h1, e0.abs(), 0.0);
            acc += segment(tau0 + h1, dt - h1, 0.0, e1.abs());
        } else {
            acc += segment(tau0, dt, e0.abs(), e1.abs());
        }
    }
    Ok(acc)
}

/// `integral_0^h (tau0 + u) (a + (b - a) u / h) du`.
#[inline]
fn segment(tau0: f64, h: f64, a: f64, b: f64) -> f64 {
    tau0 * h * (a + b) / 2.0 + h * h * (a + 2.0 * b) / 6.0
}

/// ITAE of a uniformly sampled signal (sample `k` at `k dt`) over
/// `[t_i, t_f]`; both ends are snapped to the nearest sample.
pub fn itae(e: &[f64], dt: f64, t_i: f64, t_f: f64) -> Result<f64> {
    if !(dt > 0.0) || !(t_f >= t_i) || t_i < -0.5 * dt {
        return Err(Error::param("itae window", "needs dt > 0 and 0 <= t_i <= t_f"));
    }
    let i0 = (t_i / dt).round() as usize;
    let i1 = (t_f / dt).round() as usize;
    itae_window(e, dt, i0, i1)
}

/// Step-response metrics on one channel.
struct StepMetrics {
    overshoot: f64,
    undershoot: f64,
    settling_time: f64,
    steady_state: f64,
}

/// `y` and `e` over `[start, end]`, plateau `[plateau, end]`, step height
/// `target` (signed). Settling is measured on `|e|` against `band |target|`.
fn step_metrics(
    y: &[f64],
    e: &[f64],
    dt: f64,
    start: usize,
    plateau: usize,
    end: usize,
    target: f64,
    cfg: &MetricConfig,
) -> StepMetrics {
    if target == 0.0 || end <= start {
        return StepMetrics {
            overshoot: 0.0,
            undershoot: 0.0,
            settling_time: 0.0,
            steady_state: 0.0,
        };
    }
    let sgn = target.signum();
    let mag = target.abs();
    let scale = match cfg.overshoot_mode {
        OvershootMode::Absolute => 1.0,
        OvershootMode::Percent => 100.0 / mag,
    };
    let over = (start..=end).fold(0.0_f64, |m, k| m.max(sgn * (y[k] - target)));
    let undershoot = match (start..=end).find(|&k| sgn * (y[k] - target) >= 0.0) {
        Some(c) => (c..=end).fold(0.0_f64, |m, k| m.max(sgn * (target - y[k]))),
        None => 0.0,
    };
    let band = cfg.settle_band * mag;
    let settling_time = match (start..=end).rev().find(|&k| e[k].abs() > band) {
        None => 0.0,
        Some(k) if k == end => (end - start) as f64 * dt,
        Some(k) => (k + 1 - start) as f64 * dt,
    };
    let len = end - plateau + 1;
    let n_ss = ((len as f64 * cfg.steady_state_fraction).ceil() as usize).clamp(1, len);
    let ss = e[end + 1 - n_ss..=end].iter().map(|v| v.abs()).sum::<f64>() / n_ss as f64;
    StepMetrics {
        overshoot: over * scale,
        undershoot: undershoot * scale,
        settling_time,
        steady_state: ss,
    }
}

/// Computes the full [`MetricVector`] of a run against its reference.
pub fn extract_metrics(trace: &SimTrace, profile: &ReferenceProfile, cfg: &MetricConfig) -> Result<MetricVector> {
    if trace.diverged() {
        return Ok(MetricVector::sentinel());
    }
    if trace.is_empty() || trace.len() != profile.len() {
        return Err(Error::param("trace", "must be non-empty and aligned with the profile"));
    }
    let dt = trace.dt;
    let ph = &profile.phases;
    let i0 = ph.forward.start;
    let last = ph.last;

    let pos = step_metrics(
        &trace.y_pos,
        &trace.e_pos,
        dt,
        i0,
        ph.forward.end,
        ph.dwell_end,
        profile.travel,
        cfg,
    );
    let speed_target = profile.travel.signum() * profile.peak_speed;
    let spd = step_metrics(
        &trace.y_speed,
        &trace.e_speed,
        dt,
        i0,
        ph.forward.accel_end,
        ph.forward.cruise_end,
        speed_target,
        cfg,
    );

    let inf = |e: &[f64]| e[i0..=last].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let zero_error = match ph.reverse {
        Some(rev) if last > rev.end => {
            let dwell = last - rev.end;
            let n = ((dwell as f64 * cfg.zero_error_fraction).ceil() as usize).clamp(1, dwell + 1);
            trace.e_pos[last + 1 - n..=last].iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        }
        Some(_) => trace.e_pos[last].abs(),
        None => 0.0,
    };

    Ok(MetricVector {
        position: PositionMetrics {
            overshoot: pos.overshoot,
            undershoot: pos.undershoot,
            settling_time: pos.settling_time,
            inf_norm: inf(&trace.e_pos),
            itae: itae_window(&trace.e_pos, dt, i0, last)?,
            steady_state: pos.steady_state,
            zero_error,
        },
        speed: SpeedMetrics {
            overshoot: spd.overshoot,
            undershoot: spd.undershoot,
            settling_time: spd.settling_time,
            inf_norm: inf(&trace.e_speed),
            itae: itae_window(&trace.e_speed, dt, i0, last)?,
            steady_state: spd.steady_state,
        },
        diverged: false,
    })
}

/// `f = f^p + f^s`, the weighted metric sum; the sentinel maps to the
/// divergence penalty.
pub fn cost(m: &MetricVector, w: &CostWeights) -> f64 {
    if m.is_sentinel() {
        return w.divergence_penalty;
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| if *y == 0.0 { 0.0 } else { x * y }).sum::<f64>();
    dot(&m.position.to_array(), &w.position.to_array()) + dot(&m.speed.to_array(), &w.speed.to_array())
}
