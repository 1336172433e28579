//! Interpolator: turns a point-to-point move request into sampled position
//! and speed references.
//!
//! Every phase boundary is placed on a sample instant. Ramp and cruise
//! durations are rounded up to whole ticks and the cruise speed is lowered
//! just enough to keep the commanded distance exact, so acceleration and
//! speed limits are never exceeded and the sampled position equals the
//! trapezoid-rule integral of the sampled speed.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{ensure_non_negative, ensure_positive};
use crate::{Error, Result};

/// A point-to-point move request.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectorySpec {
    /// Target position (m); may be negative.
    pub position_setpoint: f64,
    /// Cruise speed limit (m/s).
    pub speed_setpoint: f64,
    /// Acceleration (m/s^2).
    pub acceleration: f64,
    /// Deceleration (m/s^2).
    pub deceleration: f64,
    /// Hold time after each leg (s).
    pub dwell_time: f64,
    /// Append a mirrored leg back to zero followed by a second dwell.
    pub return_to_zero: bool,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if !self.position_setpoint.is_finite() {
            return Err(Error::param("position_setpoint", "must be finite"));
        }
        ensure_positive("speed_setpoint", self.speed_setpoint)?;
        ensure_positive("acceleration", self.acceleration)?;
        ensure_positive("deceleration", self.deceleration)?;
        ensure_non_negative("dwell_time", self.dwell_time)?;
        Ok(())
    }
}

/// Sample indices of the phase boundaries of one leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LegPhases {
    pub start: usize,
    pub accel_end: usize,
    pub cruise_end: usize,
    pub end: usize,
}

/// Phase boundaries, as sample indices into the profile arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Phases {
    pub forward: LegPhases,
    /// End of the dwell that follows the forward leg.
    pub dwell_end: usize,
    /// Return leg, when requested.
    pub reverse: Option<LegPhases>,
    /// Last sample index.
    pub last: usize,
}

/// Sampled reference trajectory.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReferenceProfile {
    pub dt: f64,
    pub position: Vec<f64>,
    pub speed: Vec<f64>,
    pub phases: Phases,
    /// Move distance of the forward leg (m, signed).
    pub travel: f64,
    /// Peak speed actually reached (m/s, non-negative).
    pub peak_speed: f64,
    /// Dwell time used after each leg (s).
    pub dwell_time: f64,
}

impl ReferenceProfile {
    /// Wraps externally built samples, e.g. synthetic fixtures.
    pub fn from_samples(
        dt: f64,
        position: Vec<f64>,
        speed: Vec<f64>,
        phases: Phases,
        travel: f64,
        peak_speed: f64,
        dwell_time: f64,
    ) -> Result<Self> {
        ensure_positive("dt", dt)?;
        if position.len() != speed.len() || position.is_empty() {
            return Err(Error::param("position", "position and speed must be non-empty and equally long"));
        }
        if phases.last + 1 != position.len() {
            return Err(Error::param("phases", "last phase index must be the final sample"));
        }
        Ok(ReferenceProfile {
            dt,
            position,
            speed,
            phases,
            travel,
            peak_speed,
            dwell_time,
        })
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.time(self.phases.last)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }
}

/// Tick counts and reduced peak speed of one leg.
#[derive(Debug, Clone, Copy)]
struct LegPlan {
    n_acc: usize,
    n_cruise: usize,
    n_dec: usize,
    peak: f64,
}

/// Converts a duration to ticks, rounding up but tolerating representation
/// error on exact multiples.
fn ticks(t: f64, dt: f64) -> usize {
    if t <= 0.0 {
        return 0;
    }
    let x = t / dt;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

fn plan_leg(distance: f64, v: f64, a: f64, d: f64, dt: f64) -> LegPlan {
    if distance == 0.0 {
        return LegPlan {
            n_acc: 0,
            n_cruise: 0,
            n_dec: 0,
            peak: 0.0,
        };
    }
    let ramp_dist = v * v / (2.0 * a) + v * v / (2.0 * d);
    let (vpk, t_cruise) = if distance >= ramp_dist {
        (v, (distance - ramp_dist) / v)
    } else {
        ((2.0 * a * d * distance / (a + d)).sqrt(), 0.0)
    };
    let n_acc = ticks(vpk / a, dt).max(1);
    let n_dec = ticks(vpk / d, dt).max(1);
    let n_cruise = ticks(t_cruise, dt);
    let peak = distance / (dt * (0.5 * n_acc as f64 + n_cruise as f64 + 0.5 * n_dec as f64));
    LegPlan {
        n_acc,
        n_cruise,
        n_dec,
        peak: peak.min(vpk),
    }
}

/// Speed and distance covered `k` ticks into a planned leg.
fn leg_state(plan: &LegPlan, k: usize, dt: f64) -> (f64, f64) {
    if plan.n_acc + plan.n_cruise + plan.n_dec == 0 {
        return (0.0, 0.0);
    }
    let ta = plan.n_acc as f64 * dt;
    let tc = plan.n_cruise as f64 * dt;
    let td = plan.n_dec as f64 * dt;
    let v = plan.peak;
    let t = k as f64 * dt;
    if k <= plan.n_acc {
        let acc = v / ta;
        (acc * t, 0.5 * acc * t * t)
    } else if k <= plan.n_acc + plan.n_cruise {
        (v, 0.5 * v * ta + v * (t - ta))
    } else if k < plan.n_acc + plan.n_cruise + plan.n_dec {
        let dec = v / td;
        let u = t - ta - tc;
        (v - dec * u, 0.5 * v * ta + v * tc + v * u - 0.5 * dec * u * u)
    } else {
        (0.0, 0.5 * v * ta + v * tc + 0.5 * v * td)
    }
}

/// Samples a trapezoidal (or triangular) move, its dwell and the optional
/// return leg at period `dt`.
pub fn generate_profile(spec: &TrajectorySpec, dt: f64) -> Result<ReferenceProfile> {
    ensure_positive("dt", dt)?;
    spec.validate()?;
    let dist = spec.position_setpoint.abs();
    let sign = if spec.position_setpoint < 0.0 { -1.0 } else { 1.0 };
    let plan = plan_leg(dist, spec.speed_setpoint, spec.acceleration, spec.deceleration, dt);
    let n_leg = plan.n_acc + plan.n_cruise + plan.n_dec;
    let n_dwell = ticks(spec.dwell_time, dt);

    let fwd = LegPhases {
        start: 0,
        accel_end: plan.n_acc,
        cruise_end: plan.n_acc + plan.n_cruise,
        end: n_leg,
    };
    let dwell_end = n_leg + n_dwell;
    // The return leg uses swapped ramps so it mirrors the forward leg in time.
    let back = if spec.return_to_zero {
        let bplan = LegPlan {
            n_acc: plan.n_dec,
            n_cruise: plan.n_cruise,
            n_dec: plan.n_acc,
            peak: plan.peak,
        };
        Some((bplan, dwell_end))
    } else {
        None
    };
    let last = match back {
        Some((_, s)) => s + n_leg + n_dwell,
        None => dwell_end,
    };

    let mut position = Vec::with_capacity(last + 1);
    let mut speed = Vec::with_capacity(last + 1);
    // Closed-form travel at the end of the leg, also used for the plateau.
    let travel = sign * leg_state(&plan, n_leg, dt).1;
    for k in 0..=last {
        let (v, x) = if k <= n_leg {
            let (v, x) = leg_state(&plan, k, dt);
            (sign * v, sign * x)
        } else if let Some((bplan, start)) = back.filter(|(_, s)| k > *s) {
            let (v, x) = leg_state(&bplan, k - start, dt);
            (-sign * v, travel - sign * x)
        } else {
            (0.0, travel)
        };
        speed.push(v);
        position.push(x);
    }
    // Pin the exact end points: the leg closed form can leave a 1-ulp residue.
    if n_leg > 0 {
        for k in n_leg..=dwell_end {
            position[k] = spec.position_setpoint;
        }
        if let Some((_, start)) = back {
            for x in position.iter_mut().skip(start + n_leg) {
                *x = 0.0;
            }
        }
    }

    let phases = Phases {
        forward: fwd,
        dwell_end,
        reverse: back.map(|(_, s)| LegPhases {
            start: s,
            accel_end: s + plan.n_dec,
            cruise_end: s + plan.n_dec + plan.n_cruise,
            end: s + n_leg,
        }),
        last,
    };
    Ok(ReferenceProfile {
        dt,
        position,
        speed,
        phases,
        travel: if n_leg > 0 { spec.position_setpoint } else { 0.0 },
        peak_speed: plan.peak,
        dwell_time: n_dwell as f64 * dt,
    })
}

/// Forward move, dwell, return to zero and terminal dwell, with equal
/// acceleration and deceleration.
pub fn bidirectional_step(mv: f64, dwell: f64, speed: f64, accel: f64, dt: f64) -> Result<ReferenceProfile> {
    generate_profile(
        &TrajectorySpec {
            position_setpoint: mv,
            speed_setpoint: speed,
            acceleration: accel,
            deceleration: accel,
            dwell_time: dwell,
            return_to_zero: true,
        },
        dt,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_rounding_tolerates_representation_error() {
        assert_eq!(ticks(0.1, 1e-3), 100);
        assert_eq!(ticks(0.1005, 1e-3), 101);
        assert_eq!(ticks(0.0, 1e-3), 0);
    }

    #[test]
    fn non_positive_dt_is_rejected() {
        let spec = TrajectorySpec {
            position_setpoint: 0.1,
            speed_setpoint: 0.1,
            acceleration: 1.0,
            deceleration: 1.0,
            dwell_time: 0.0,
            return_to_zero: false,
        };
        assert!(generate_profile(&spec, 0.0).is_err());
        assert!(generate_profile(&spec, -1e-3).is_err());
    }
}
