//! Classical tuning rules used as reference points: Ziegler-Nichols
//! ultimate-gain tuning, relay autotuning and ITAE minimization.
//!
//! ZN and relay tune the speed PI first (position loop open), using the
//! classic PI row `Kv = 0.45 Ku`, `Ti = Tu / 1.2`. The position gain is
//! then raised by bisection to the largest value whose position overshoot
//! stays below a percentage bound.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::metrics::{cost, CostWeights, MetricConfig, MetricVector, OvershootMode};
use crate::oracle::{MetricSource, SimulationOracle};
use crate::refgen::{LegPhases, Phases, ReferenceProfile};
use crate::simloop::{simulate, ControlMode, GainVector, SimConfig, SpeedController};
use crate::tuner::{argmin, metric_table, FeasibleSet};
use crate::{Error, Result};

/// Controller placed in the speed loop during a probe experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ProbeController {
    Proportional(f64),
    Relay(f64),
}

/// Sampled loop signals of one probe experiment.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeRecord {
    pub dt: f64,
    /// Loop error in controller units.
    pub error: Vec<f64>,
    /// Controller output.
    pub control: Vec<f64>,
    /// Output hit its limit during the analysis window.
    pub saturated: bool,
    pub diverged: bool,
}

/// A loop that can be closed with a P controller or a relay.
pub trait LoopProbe {
    fn run(&self, controller: ProbeController) -> Result<ProbeRecord>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineOptions {
    /// Speed step used to excite the P-controlled loop (m/s).
    pub probe_speed: f64,
    /// Length of each probe experiment (s).
    pub probe_duration: f64,
    /// The ultimate-gain search extends to this multiple of the `Kv` bound.
    pub search_factor: f64,
    /// Relay amplitude as a fraction of the current limit.
    pub relay_fraction: f64,
    /// Position overshoot bound for the `Kp` search (percent).
    pub overshoot_limit: f64,
    pub kp_bisection_steps: usize,
    pub ku_bisection_steps: usize,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            probe_speed: 0.01,
            probe_duration: 0.3,
            search_factor: 100.0,
            relay_fraction: 0.1,
            overshoot_limit: 25.0,
            kp_bisection_steps: 30,
            ku_bisection_steps: 60,
        }
    }
}

/// Classification of one probe run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Growth {
    /// Fewer than five oscillation peaks in the analysis window.
    NoOscillation,
    Decaying { ratio: f64, period: f64 },
    Sustained { ratio: f64, period: f64 },
    Growing { ratio: f64 },
    /// The run diverged or hit the current limit.
    Unstable,
}

/// Peak amplitudes and indices of the positive half-cycles of `e - mean`
/// over the second half of the record.
fn positive_peaks(e: &[f64]) -> Vec<(usize, f64)> {
    let start = e.len() / 2;
    let w = &e[start..];
    if w.is_empty() {
        return Vec::new();
    }
    let c = w.iter().sum::<f64>() / w.len() as f64;
    let mut peaks = Vec::new();
    let mut cur: Option<(usize, f64)> = None;
    let mut seen_negative = false;
    for (k, v) in w.iter().enumerate() {
        let d = v - c;
        if d > 0.0 {
            if seen_negative {
                cur = match cur {
                    Some((i, a)) if a >= d => Some((i, a)),
                    _ => Some((k, d)),
                };
            }
        } else if d < 0.0 {
            seen_negative = true;
            if let Some(p) = cur.take() {
                peaks.push((start + p.0, p.1));
            }
        }
    }
    peaks
}

/// Mean spacing of the last peaks, in samples.
fn peak_spacing(peaks: &[(usize, f64)]) -> f64 {
    let n = peaks.len();
    (peaks[n - 1].0 - peaks[0].0) as f64 / (n - 1) as f64
}

const PEAKS_USED: usize = 5;

/// Classifies a record by the growth of its last five oscillation peaks.
pub fn classify(rec: &ProbeRecord) -> Growth {
    if rec.diverged || rec.saturated {
        return Growth::Unstable;
    }
    let peaks = positive_peaks(&rec.error);
    if peaks.len() < PEAKS_USED {
        return Growth::NoOscillation;
    }
    let last = &peaks[peaks.len() - PEAKS_USED..];
    let ratio = (last[PEAKS_USED - 1].1 / last[0].1).powf(1.0 / (PEAKS_USED - 1) as f64);
    let period = peak_spacing(last) * rec.dt;
    if !ratio.is_finite() {
        Growth::Unstable
    } else if ratio > 1.02 {
        Growth::Growing { ratio }
    } else if ratio < 0.98 {
        Growth::Decaying { ratio, period }
    } else {
        Growth::Sustained { ratio, period }
    }
}

/// Ultimate gain and period of a loop.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UltimatePoint {
    pub ku: f64,
    pub tu: f64,
    /// Gains tried, with the classification of each run.
    pub trials: Vec<(f64, Growth)>,
}

/// Bisects the P gain between `lo` (must not grow) and `hi` (must grow or
/// sustain) to the sustained-oscillation boundary. Geometric bisection, as
/// the range spans decades.
pub fn ultimate_gain(probe: &impl LoopProbe, lo: f64, hi: f64, steps: usize) -> Result<UltimatePoint> {
    let mut trials = Vec::new();
    let run = |k: f64, trials: &mut Vec<(f64, Growth)>| -> Result<Growth> {
        let g = classify(&probe.run(ProbeController::Proportional(k))?);
        trials.push((k, g));
        Ok(g)
    };
    let g_hi = run(hi, &mut trials)?;
    if matches!(g_hi, Growth::NoOscillation | Growth::Decaying { .. }) {
        return Err(Error::Tuning(format!(
            "no oscillation boundary below gain {hi:e} (probe at the upper end: {g_hi:?})"
        )));
    }
    if let Growth::Sustained { period, .. } = g_hi {
        return Ok(UltimatePoint { ku: hi, tu: period, trials });
    }
    let g_lo = run(lo, &mut trials)?;
    if let Growth::Growing { .. } | Growth::Unstable = g_lo {
        return Err(Error::Tuning(format!("loop already unstable at the lower gain {lo:e}")));
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut period = match g_lo {
        Growth::Sustained { period, .. } => return Ok(UltimatePoint { ku: lo, tu: period, trials }),
        Growth::Decaying { period, .. } => Some(period),
        _ => None,
    };
    for _ in 0..steps {
        let mid = (lo * hi).sqrt();
        match run(mid, &mut trials)? {
            Growth::Sustained { period, .. } => return Ok(UltimatePoint { ku: mid, tu: period, trials }),
            Growth::Growing { .. } | Growth::Unstable => hi = mid,
            Growth::Decaying { period: p, .. } => {
                period = Some(p);
                lo = mid;
            }
            Growth::NoOscillation => lo = mid,
        }
        if hi / lo < 1.0 + 1e-9 {
            break;
        }
    }
    let tu = period.ok_or_else(|| Error::Tuning("oscillation period could not be measured".into()))?;
    Ok(UltimatePoint {
        ku: (lo * hi).sqrt(),
        tu,
        trials,
    })
}

/// Limit cycle measured under relay feedback.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RelayCycle {
    pub amplitude: f64,
    pub cycle_amplitude: f64,
    pub period: f64,
    /// `4 d / (pi a)`.
    pub ku: f64,
}

/// Runs the relay experiment and reads amplitude and period off the last
/// five cycles.
pub fn relay_experiment(probe: &impl LoopProbe, d: f64) -> Result<RelayCycle> {
    let rec = probe.run(ProbeController::Relay(d))?;
    if rec.diverged {
        return Err(Error::Tuning("relay experiment diverged".into()));
    }
    let peaks = positive_peaks(&rec.error);
    if peaks.len() < PEAKS_USED + 1 {
        return Err(Error::Tuning("no limit cycle within the simulation horizon".into()));
    }
    let last = &peaks[peaks.len() - PEAKS_USED - 1..];
    let (i0, i1) = (last[0].0, last[PEAKS_USED].0);
    let w = &rec.error[i0..=i1];
    let (mx, mn) = w.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(a, b), v| (a.max(*v), b.min(*v)));
    let a = 0.5 * (mx - mn);
    if !(a > 0.0) {
        return Err(Error::Tuning("relay limit cycle has zero amplitude".into()));
    }
    let period = peak_spacing(last) * rec.dt;
    Ok(RelayCycle {
        amplitude: d,
        cycle_amplitude: a,
        period,
        ku: 4.0 * d / (core::f64::consts::PI * a),
    })
}

/// Classic ZN PI row: `(Kv, Ki)`.
pub fn zn_pi(ku: f64, tu: f64) -> (f64, f64) {
    let kv = 0.45 * ku;
    let ti = tu / 1.2;
    (kv, kv / ti)
}

/// Speed loop of the simulator closed by a probe controller, position
/// loop open.
pub struct SpeedLoopProbe<'a> {
    pub oracle: &'a SimulationOracle,
    pub opts: BaselineOptions,
}

impl SpeedLoopProbe<'_> {
    fn profile(&self, speed: f64) -> Result<ReferenceProfile> {
        let dt = self.oracle.sim.controller_period;
        let n = ((self.opts.probe_duration / dt).round() as usize).max(2);
        let mut spd = vec![speed; n];
        spd[0] = 0.0;
        let mut pos = vec![0.0; n];
        for k in 1..n {
            pos[k] = pos[k - 1] + 0.5 * dt * (spd[k - 1] + spd[k]);
        }
        let last = n - 1;
        let phases = Phases {
            forward: LegPhases {
                start: 0,
                accel_end: 1,
                cruise_end: last,
                end: last,
            },
            dwell_end: last,
            reverse: None,
            last,
        };
        let travel = pos[last];
        ReferenceProfile::from_samples(dt, pos, spd, phases, travel, speed.abs(), 0.0)
    }
}

impl LoopProbe for SpeedLoopProbe<'_> {
    fn run(&self, controller: ProbeController) -> Result<ProbeRecord> {
        let o = self.oracle;
        let (gains, speed_controller, speed) = match controller {
            ProbeController::Proportional(k) => (GainVector::new(0.0, k, 0.0), SpeedController::Pi, self.opts.probe_speed),
            ProbeController::Relay(d) => (GainVector::new(0.0, 0.0, 0.0), SpeedController::Relay { amplitude: d }, 0.0),
        };
        let cfg = SimConfig {
            mode: ControlMode::Speed,
            speed_controller,
            ..o.sim.clone()
        };
        let profile = self.profile(speed)?;
        let tr = simulate(&o.plant, &gains, &o.current, &profile, &cfg)?;
        let unit = cfg.gain_units.speed_error_unit;
        let half = tr.len() / 2;
        let saturated = matches!(controller, ProbeController::Proportional(_))
            && tr.current_ref[half.min(tr.len())..]
                .iter()
                .any(|i| i.abs() >= cfg.current_limit * (1.0 - 1e-12));
        Ok(ProbeRecord {
            dt: tr.dt,
            error: tr.e_speed.iter().map(|e| e / unit).collect(),
            control: tr.current_ref.clone(),
            saturated,
            diverged: tr.diverged(),
        })
    }
}

/// Diagnostic data kept with each baseline result.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Diagnostics {
    ZieglerNichols {
        ultimate: UltimatePoint,
        kp_search: Vec<(f64, f64)>,
    },
    Relay {
        cycle: RelayCycle,
        kp_search: Vec<(f64, f64)>,
    },
    Itae {
        best_itae: f64,
        evaluations: usize,
    },
    Grid {
        evaluations: usize,
    },
    Bo {
        evaluations: usize,
        stop: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuningResult {
    pub method: String,
    pub gains: GainVector,
    /// Point in the search box (same parametrization as the feasible set).
    pub x: Vec<f64>,
    pub cost: f64,
    pub metrics: MetricVector,
    /// The rule landed outside the box and was clamped back in.
    pub clamped: bool,
    pub diagnostics: Diagnostics,
}

/// Largest `Kp` in the box whose position overshoot stays below the bound,
/// for fixed speed gains. Returns the chosen `Kp` and the search trace.
fn kp_by_overshoot(
    oracle: &SimulationOracle,
    set: &FeasibleSet,
    kv: f64,
    ki: f64,
    opts: &BaselineOptions,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let metric = MetricConfig {
        overshoot_mode: OvershootMode::Percent,
        ..oracle.metric
    };
    let probe = SimulationOracle {
        metric,
        ..oracle.clone()
    };
    let mut trace = Vec::new();
    let overshoot = |kp: f64, trace: &mut Vec<(f64, f64)>| -> Result<f64> {
        let m = probe.run(&GainVector::new(kp, kv, ki))?.1;
        let h = if m.is_sentinel() { f64::INFINITY } else { m.position.overshoot };
        trace.push((kp, h));
        Ok(h)
    };
    let (lo, hi) = (set.axes[0].min, set.axes[0].max);
    if overshoot(hi, &mut trace)? < opts.overshoot_limit {
        return Ok((hi, trace));
    }
    if overshoot(lo, &mut trace)? >= opts.overshoot_limit {
        return Ok((lo, trace));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..opts.kp_bisection_steps {
        let mid = 0.5 * (a + b);
        if overshoot(mid, &mut trace)? < opts.overshoot_limit {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a, trace))
}

/// Speed gains after clamping into the box, so that the `Kp` search runs
/// with the gains that will finally be reported.
fn clamped_speed_gains(oracle: &SimulationOracle, set: &FeasibleSet, kv: f64, ki: f64) -> GainVector {
    let p = oracle.parametrization.point(&GainVector::new(set.axes[0].min, kv, ki));
    oracle.gains(&set.clamp(&p).0)
}

fn finish(
    method: &str,
    oracle: &SimulationOracle,
    set: &FeasibleSet,
    raw: GainVector,
    diagnostics: Diagnostics,
) -> Result<TuningResult> {
    let p = oracle.parametrization.point(&raw);
    let (x, clamped) = set.clamp(&p);
    let gains = oracle.gains(&x);
    let m = oracle.run(&gains)?.1;
    Ok(TuningResult {
        method: method.into(),
        gains,
        x,
        cost: cost(&m, &oracle.weights),
        metrics: m,
        clamped,
        diagnostics,
    })
}

/// Ziegler-Nichols ultimate-gain tuning of the speed PI, then position `Kp`
/// by overshoot-bounded bisection.
pub fn ziegler_nichols(oracle: &SimulationOracle, set: &FeasibleSet, opts: &BaselineOptions) -> Result<TuningResult> {
    set.validate()?;
    let probe = SpeedLoopProbe { oracle, opts: *opts };
    let kv_axis = &set.axes[1];
    let up = ultimate_gain(&probe, kv_axis.min, kv_axis.max * opts.search_factor, opts.ku_bisection_steps)?;
    let (kv, ki) = zn_pi(up.ku, up.tu);
    let inside = clamped_speed_gains(oracle, set, kv, ki);
    let (kp, kp_search) = kp_by_overshoot(oracle, set, inside.kv, inside.ki, opts)?;
    finish(
        "ziegler-nichols",
        oracle,
        set,
        GainVector::new(kp, kv, ki),
        Diagnostics::ZieglerNichols { ultimate: up, kp_search },
    )
}

/// Relay autotuning of the speed PI, then position `Kp` as in ZN.
pub fn relay_tune(oracle: &SimulationOracle, set: &FeasibleSet, opts: &BaselineOptions) -> Result<TuningResult> {
    set.validate()?;
    let probe = SpeedLoopProbe { oracle, opts: *opts };
    let d = opts.relay_fraction * oracle.sim.current_limit;
    let cycle = relay_experiment(&probe, d)?;
    let (kv, ki) = zn_pi(cycle.ku, cycle.period);
    let inside = clamped_speed_gains(oracle, set, kv, ki);
    let (kp, kp_search) = kp_by_overshoot(oracle, set, inside.kv, inside.ki, opts)?;
    finish(
        "relay",
        oracle,
        set,
        GainVector::new(kp, kv, ki),
        Diagnostics::Relay { cycle, kp_search },
    )
}

/// Exhaustive grid minimization of `e^p_ITAE + e^s_ITAE`; the result is
/// then priced with `weights`.
pub fn itae_tune(
    source: &mut impl MetricSource,
    set: &FeasibleSet,
    weights: &CostWeights,
    parametrization: crate::oracle::GainParametrization,
) -> Result<TuningResult> {
    let table = metric_table(source, set)?;
    itae_from_table(&table, set, weights, parametrization)
}

/// [`itae_tune`] on an already computed metric table.
pub fn itae_from_table(
    table: &[MetricVector],
    set: &FeasibleSet,
    weights: &CostWeights,
    parametrization: crate::oracle::GainParametrization,
) -> Result<TuningResult> {
    let scores: Vec<f64> = table
        .iter()
        .map(|m| if m.is_sentinel() { f64::INFINITY } else { m.itae_sum() })
        .collect();
    let best = argmin(&scores).ok_or_else(|| Error::Tuning("empty metric table".into()))?;
    let x = set.point(best);
    let m = table[best];
    Ok(TuningResult {
        method: "itae".into(),
        gains: parametrization.gains(&x),
        x,
        cost: cost(&m, weights),
        metrics: m,
        clamped: false,
        diagnostics: Diagnostics::Itae {
            best_itae: scores[best],
            evaluations: table.len(),
        },
    })
}
