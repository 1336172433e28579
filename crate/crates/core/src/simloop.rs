//! Closed-loop simulation of the three-loop cascade around the drive.
//!
//! Position P and speed PI run at the controller period on motor-encoder
//! feedback. The current PID and the plant run at the integration substep:
//! the voltage is held over each substep and the linear plant is advanced
//! with one classical Runge-Kutta step, precomputed as a matrix map.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_non_negative, ensure_positive};
use crate::linalg::Matrix;
use crate::plant::{input, physical_state_model, rigid_state_model, state, PlantParams};
use crate::refgen::{generate_profile, ReferenceProfile, TrajectorySpec};
use crate::{Error, Result};

/// Outer-loop gains `(Kp, Kv, Ki)`, optionally carrying the integral time.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GainVector {
    pub kp: f64,
    pub kv: f64,
    pub ki: f64,
    /// Integral time; when present `ki == kv / tn`.
    pub tn: Option<f64>,
}

impl GainVector {
    pub const fn new(kp: f64, kv: f64, ki: f64) -> Self {
        GainVector { kp, kv, ki, tn: None }
    }

    /// Builds from the integral time, `Ki = Kv / Tn`.
    pub fn from_tn(kp: f64, kv: f64, tn: f64) -> Self {
        GainVector {
            kp,
            kv,
            ki: kv / tn,
            tn: Some(tn),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.kp, self.kv, self.ki]
    }

    /// Strict check used at user-facing boundaries: all gains positive and
    /// `Tn` consistent. The simulator itself also accepts zero gains.
    pub fn validate(&self) -> Result<()> {
        ensure_positive("kp", self.kp)?;
        ensure_positive("kv", self.kv)?;
        ensure_positive("ki", self.ki)?;
        if let Some(tn) = self.tn {
            ensure_positive("tn", tn)?;
            if (self.ki - self.kv / tn).abs() > 1e-12 * self.ki {
                return Err(Error::param("tn", "inconsistent with ki = kv / tn"));
            }
        }
        Ok(())
    }

    fn validate_non_negative(&self) -> Result<()> {
        ensure_non_negative("kp", self.kp)?;
        ensure_non_negative("kv", self.kv)?;
        ensure_non_negative("ki", self.ki)
    }
}

/// PID gains of the current loop.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurrentControllerGains {
    pub kcp: f64,
    pub kci: f64,
    pub kcd: f64,
}

impl CurrentControllerGains {
    pub const fn table1() -> Self {
        CurrentControllerGains {
            kcp: 60.0,
            kci: 1000.0,
            kcd: 18.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("kcp", self.kcp)?;
        ensure_non_negative("kci", self.kci)?;
        ensure_non_negative("kcd", self.kcd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ControlMode {
    /// All three loops closed.
    Position,
    /// Position loop open (`Kp` ignored); speed follows the speed reference.
    Speed,
    /// Only the current loop runs, regulating zero current.
    Current,
}

/// How the position controller output enters the speed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PositionLoopMode {
    /// Speed command = speed reference + `Kp e_p`.
    Correction,
    /// Speed command = `Kp e_p`, no feed-forward.
    FullCommand,
}

/// Signal differentiated by the current PID.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DerivativeSource {
    Error,
    Measurement,
}

/// Controller in the speed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SpeedController {
    /// `Kv + Ki / s`.
    Pi,
    /// Ideal relay `i_ref = d sign(e)`, used for relay autotuning.
    Relay { amplitude: f64 },
}

/// Units in which the outer-loop gains are expressed.
///
/// The speed PI sees its error in multiples of `speed_error_unit` (m/s)
/// and outputs amperes. The position P gain is a rate per
/// `position_gain_time_unit` seconds: a gain of `Kp` turns a position
/// error `e` (m) into a speed command of `Kp e / position_gain_time_unit`
/// m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GainUnits {
    pub speed_error_unit: f64,
    pub position_gain_time_unit: f64,
}

impl Default for GainUnits {
    /// Speed PI in A per mm/s, position gain in 1/min.
    fn default() -> Self {
        GainUnits {
            speed_error_unit: 1e-3,
            position_gain_time_unit: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseConfig {
    /// Std dev of the position measurement (m).
    pub position_std: f64,
    /// Std dev of the speed measurement (m/s).
    pub speed_std: f64,
    pub seed: u64,
}

/// Load torque pulse applied for one controller period starting at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Disturbance {
    pub time: f64,
    pub torque: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    /// Period of the position and speed loops (s).
    pub controller_period: f64,
    /// Integration step of plant and current loop (s); divides the period.
    pub substep: f64,
    pub voltage_limit: f64,
    pub current_limit: f64,
    /// Bandwidth `N` of the first-order filter on the current derivative (rad/s).
    pub derivative_filter: f64,
    pub derivative_source: DerivativeSource,
    /// Conditional integration in the speed PI and current PID.
    pub anti_windup: bool,
    pub mode: ControlMode,
    pub position_loop_mode: PositionLoopMode,
    pub speed_controller: SpeedController,
    pub gain_units: GainUnits,
    pub noise: NoiseConfig,
    pub disturbances: Vec<Disturbance>,
    /// Replace the two-mass screw by a single rigid inertia.
    pub rigid: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            controller_period: 1e-3,
            substep: 1e-6,
            voltage_limit: 325.0,
            current_limit: 10.0,
            derivative_filter: 100.0,
            derivative_source: DerivativeSource::Error,
            anti_windup: true,
            mode: ControlMode::Position,
            position_loop_mode: PositionLoopMode::Correction,
            speed_controller: SpeedController::Pi,
            gain_units: GainUnits::default(),
            noise: NoiseConfig::default(),
            disturbances: Vec::new(),
            rigid: false,
        }
    }
}

impl SimConfig {
    /// Rigid plant at a 10 us step: roughly a hundred times cheaper, for
    /// quick exploration.
    pub fn fast() -> Self {
        SimConfig {
            substep: 1e-5,
            rigid: true,
            ..SimConfig::default()
        }
    }

    /// Number of substeps per controller period.
    pub fn substeps(&self) -> Result<usize> {
        ensure_positive("controller_period", self.controller_period)?;
        ensure_positive("substep", self.substep)?;
        let n = (self.controller_period / self.substep).round();
        if n < 1.0 || (n * self.substep - self.controller_period).abs() > 1e-9 * self.controller_period {
            return Err(Error::param("substep", "must divide the controller period"));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.substeps()?;
        ensure_positive("voltage_limit", self.voltage_limit)?;
        ensure_positive("current_limit", self.current_limit)?;
        ensure_positive("derivative_filter", self.derivative_filter)?;
        ensure_positive("speed_error_unit", self.gain_units.speed_error_unit)?;
        ensure_positive("position_gain_time_unit", self.gain_units.position_gain_time_unit)?;
        ensure_non_negative("position_std", self.noise.position_std)?;
        ensure_non_negative("speed_std", self.noise.speed_std)?;
        if let SpeedController::Relay { amplitude } = self.speed_controller {
            ensure_positive("relay amplitude", amplitude)?;
        }
        for d in &self.disturbances {
            if !d.time.is_finite() || !d.torque.is_finite() {
                return Err(Error::param("disturbances", "entries must be finite"));
            }
        }
        Ok(())
    }
}

/// Sampled signals of one run, one row per controller tick.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimTrace {
    pub dt: f64,
    pub time: Vec<f64>,
    pub r_pos: Vec<f64>,
    pub y_pos: Vec<f64>,
    pub r_speed: Vec<f64>,
    pub y_speed: Vec<f64>,
    /// q-axis current (A).
    pub current: Vec<f64>,
    /// Current reference from the speed loop (A).
    pub current_ref: Vec<f64>,
    /// q-axis voltage applied over the first substep of the tick (V).
    pub voltage: Vec<f64>,
    pub e_pos: Vec<f64>,
    pub e_speed: Vec<f64>,
    /// Load-side (nut) position and speed.
    pub load_pos: Vec<f64>,
    pub load_speed: Vec<f64>,
    /// Motor speed (rad/s).
    pub omega_m: Vec<f64>,
    /// Time at which the state blew up; the arrays stop at that tick.
    pub diverged_at: Option<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn final_position(&self) -> f64 {
        self.y_pos.last().copied().unwrap_or(0.0)
    }

    fn with_capacity(n: usize, dt: f64) -> Self {
        let v = || Vec::with_capacity(n);
        SimTrace {
            dt,
            time: v(),
            r_pos: v(),
            y_pos: v(),
            r_speed: v(),
            y_speed: v(),
            current: v(),
            current_ref: v(),
            voltage: v(),
            e_pos: v(),
            e_speed: v(),
            load_pos: v(),
            load_speed: v(),
            omega_m: v(),
            diverged_at: None,
        }
    }
}

/// One classical RK4 step of `x' = f(t, x)`.
pub fn rk4_step(f: impl Fn(f64, &[f64]) -> Vec<f64>, t: f64, x: &[f64], h: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], k: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + k * v).collect() };
    let k1 = f(t, x);
    let k2 = f(t + h / 2.0, &add(x, &k1, h / 2.0));
    let k3 = f(t + h / 2.0, &add(x, &k2, h / 2.0));
    let k4 = f(t + h, &add(x, &k3, h));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// RK4 step of `x' = A x + B u` with `u` held, written as
/// `x+ = Phi x + Gamma u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRk4 {
    pub phi: Matrix,
    pub gamma: Matrix,
}

impl LinearRk4 {
    pub fn new(a: &Matrix, b: &Matrix, h: f64) -> Self {
        let n = a.rows();
        let z = a.scaled(h);
        let z2 = z.matmul(&z);
        let z3 = z2.matmul(&z);
        let z4 = z3.matmul(&z);
        let eye = Matrix::identity(n);
        let phi = eye
            .add(&z)
            .add(&z2.scaled(0.5))
            .add(&z3.scaled(1.0 / 6.0))
            .add(&z4.scaled(1.0 / 24.0));
        let s = eye
            .add(&z.scaled(0.5))
            .add(&z2.scaled(1.0 / 6.0))
            .add(&z3.scaled(1.0 / 24.0));
        let gamma = s.matmul(b).scaled(h);
        LinearRk4 { phi, gamma }
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = self.phi.matvec(x);
        let gu = self.gamma.matvec(u);
        for (o, g) in out.iter_mut().zip(gu) {
            *o += g;
        }
        out
    }
}

const N: usize = state::COUNT;
const BLOWUP: f64 = 1e12;

/// Fixed-size copy of the propagator for the inner loop.
struct Propagator {
    phi: [[f64; N]; N],
    g_v: [f64; N],
    g_d: [f64; N],
}

impl Propagator {
    fn new(p: &PlantParams, cfg: &SimConfig) -> Result<Self> {
        let model = if cfg.rigid {
            rigid_state_model(p)?
        } else {
            physical_state_model(p)?
        };
        let m = LinearRk4::new(&model.a, &model.b, cfg.substep);
        let mut phi = [[0.0; N]; N];
        let mut g_v = [0.0; N];
        let mut g_d = [0.0; N];
        for i in 0..N {
            for j in 0..N {
                phi[i][j] = m.phi[(i, j)];
            }
            g_v[i] = m.gamma[(i, input::VOLTAGE)];
            g_d[i] = m.gamma[(i, input::LOAD_TORQUE)];
        }
        Ok(Propagator { phi, g_v, g_d })
    }

    #[inline(always)]
    fn step(&self, x: &mut [f64; N], v: f64, tau: f64) {
        let mut out = [0.0; N];
        for i in 0..N {
            let row = &self.phi[i];
            let mut s = self.g_v[i] * v + self.g_d[i] * tau;
            for j in 0..N {
                s += row[j] * x[j];
            }
            out[i] = s;
        }
        *x = out;
    }
}

/// Current PID with filtered derivative, stepped at the substep.
struct CurrentLoop {
    kcp: f64,
    ki_h: f64,
    kd_n: f64,
    n_h: f64,
    vmax: f64,
    on_error: bool,
    anti_windup: bool,
    integ: f64,
    filt: f64,
}

impl CurrentLoop {
    #[inline(always)]
    fn step(&mut self, i_ref: f64, i: f64) -> f64 {
        let e = i_ref - i;
        let sig = if self.on_error { e } else { -i };
        let d = self.kd_n * (sig - self.filt);
        let integ = self.integ + self.ki_h * e;
        let unsat = self.kcp * e + integ + d;
        let v = unsat.clamp(-self.vmax, self.vmax);
        if !self.anti_windup || v == unsat || unsat * e < 0.0 {
            self.integ = integ;
        }
        self.filt += self.n_h * (sig - self.filt);
        v
    }
}

/// Runs the cascade over the whole profile.
///
/// Returns an error only for invalid inputs. A run whose state leaves
/// `|x| <= 1e12` is cut short and flagged through
/// [`SimTrace::diverged_at`].
pub fn simulate(
    p: &PlantParams,
    gains: &GainVector,
    cc: &CurrentControllerGains,
    profile: &ReferenceProfile,
    cfg: &SimConfig,
) -> Result<SimTrace> {
    p.validate()?;
    gains.validate_non_negative()?;
    cc.validate()?;
    cfg.validate()?;
    let t_ctrl = cfg.controller_period;
    if (profile.dt - t_ctrl).abs() > 1e-12 * t_ctrl {
        return Err(Error::param("profile", "must be sampled at the controller period"));
    }
    let n_sub = cfg.substeps()?;
    let h = cfg.substep;
    let prop = Propagator::new(p, cfg)?;
    let mpr = p.meters_per_radian();
    let units = cfg.gain_units;
    let speed_cap = p.omega_max * mpr;
    let imax = cfg.current_limit;

    let mut cl = CurrentLoop {
        kcp: cc.kcp,
        ki_h: cc.kci * h,
        kd_n: cc.kcd * cfg.derivative_filter,
        n_h: cfg.derivative_filter * h,
        vmax: cfg.voltage_limit,
        on_error: cfg.derivative_source == DerivativeSource::Error,
        anti_windup: cfg.anti_windup,
        integ: 0.0,
        filt: 0.0,
    };
    let kp = gains.kp / units.position_gain_time_unit;
    let mut speed_integ = 0.0;
    let mut x = [0.0; N];
    let noisy = cfg.noise.position_std > 0.0 || cfg.noise.speed_std > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise.seed);

    let n = profile.len();
    let mut tr = SimTrace::with_capacity(n, t_ctrl);
    for k in 0..n {
        let t = k as f64 * t_ctrl;
        let (mut y_p, mut y_s) = (x[state::THETA_M] * mpr, x[state::OMEGA_M] * mpr);
        if noisy {
            let np: f64 = rng.sample(StandardNormal);
            let ns: f64 = rng.sample(StandardNormal);
            y_p += cfg.noise.position_std * np;
            y_s += cfg.noise.speed_std * ns;
        }
        let (r_p, r_s) = (profile.position[k], profile.speed[k]);
        let e_p = r_p - y_p;

        let speed_cmd = match cfg.mode {
            ControlMode::Position => match cfg.position_loop_mode {
                PositionLoopMode::Correction => r_s + kp * e_p,
                PositionLoopMode::FullCommand => kp * e_p,
            },
            ControlMode::Speed => r_s,
            ControlMode::Current => 0.0,
        }
        .clamp(-speed_cap, speed_cap);
        let e_ctrl = (speed_cmd - y_s) / units.speed_error_unit;
        let i_ref = match (cfg.mode, cfg.speed_controller) {
            (ControlMode::Current, _) => 0.0,
            (_, SpeedController::Relay { amplitude }) => {
                if e_ctrl >= 0.0 {
                    amplitude.min(imax)
                } else {
                    -amplitude.min(imax)
                }
            }
            (_, SpeedController::Pi) => {
                let integ = speed_integ + gains.ki * e_ctrl * t_ctrl;
                let unsat = gains.kv * e_ctrl + integ;
                let out = unsat.clamp(-imax, imax);
                if !cfg.anti_windup || out == unsat || unsat * e_ctrl < 0.0 {
                    speed_integ = integ;
                }
                out
            }
        };

        let tau = cfg
            .disturbances
            .iter()
            .filter(|d| d.time >= t - 1e-12 && d.time < t + t_ctrl - 1e-12)
            .map(|d| d.torque)
            .sum::<f64>();

        tr.time.push(t);
        tr.r_pos.push(r_p);
        tr.y_pos.push(y_p);
        tr.r_speed.push(r_s);
        tr.y_speed.push(y_s);
        tr.current.push(x[state::CURRENT]);
        tr.current_ref.push(i_ref);
        tr.e_pos.push(e_p);
        tr.e_speed.push(r_s - y_s);
        tr.load_pos.push(x[state::THETA_L] * mpr);
        tr.load_speed.push(x[state::OMEGA_L] * mpr);
        tr.omega_m.push(x[state::OMEGA_M]);

        let mut v_first = 0.0;
        for s in 0..n_sub {
            let v = cl.step(i_ref, x[state::CURRENT]);
            if s == 0 {
                v_first = v;
            }
            prop.step(&mut x, v, tau);
        }
        tr.voltage.push(v_first);

        let blown = x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP)
            || !speed_integ.is_finite()
            || !cl.integ.is_finite();
        if blown {
            tr.diverged_at = Some(t + t_ctrl);
            break;
        }
    }
    Ok(tr)
}

/// Outcome of [`stability_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityReport {
    pub stable: bool,
    /// Ratio of the last-quarter to the second-quarter error envelope.
    pub decay: f64,
    /// Same ratio for the speed error.
    pub speed_decay: f64,
    pub diverged: bool,
}

/// Speed error envelope, relative to the probe speed, below which the
/// speed loop counts as at rest.
const SPEED_FLOOR: f64 = 1e-6;

/// Short position-step response (1 mm, 0.4 s) used to classify a gain
/// vector. Unstable when the run diverges, the error envelope of the last
/// quarter exceeds that of the second quarter, or the speed error keeps
/// oscillating without decaying to half.
pub fn stability_probe(
    p: &PlantParams,
    gains: &GainVector,
    cc: &CurrentControllerGains,
    cfg: &SimConfig,
) -> Result<StabilityReport> {
    let spec = TrajectorySpec {
        position_setpoint: 1e-3,
        speed_setpoint: 0.1,
        acceleration: 100.0,
        deceleration: 100.0,
        dwell_time: 0.4,
        return_to_zero: false,
    };
    let profile = generate_profile(&spec, cfg.controller_period)?;
    let tr = simulate(p, gains, cc, &profile, cfg)?;
    if tr.diverged() {
        return Ok(StabilityReport {
            stable: false,
            decay: f64::INFINITY,
            speed_decay: f64::INFINITY,
            diverged: true,
        });
    }
    let env = |e: &[f64], a: usize, b: usize| e[a..b].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let n = tr.len();
    let quarters = |e: &[f64]| (env(e, n / 4, n / 2), env(e, 3 * n / 4, n));
    let (q2, q4) = match cfg.mode {
        ControlMode::Position => quarters(&tr.e_pos),
        _ => quarters(&tr.e_speed),
    };
    let decay = if q2 > 0.0 { q4 / q2 } else if q4 > 0.0 { f64::INFINITY } else { 0.0 };
    // A saturated loop can chatter in a bounded limit cycle while the
    // position error still shrinks; the speed error exposes it.
    let (s2, s4) = quarters(&tr.e_speed);
    let chattering = s4 > SPEED_FLOOR * spec.speed_setpoint && s4 > 0.5 * s2;
    Ok(StabilityReport {
        stable: q4 <= q2 && !chattering,
        decay,
        speed_decay: if s2 > 0.0 { s4 / s2 } else if s4 > 0.0 { f64::INFINITY } else { 0.0 },
        diverged: false,
    })
}

/// All-zero trace of the given length, used as a neutral element in tests.
pub fn zero_trace(n: usize, dt: f64) -> SimTrace {
    let z = vec![0.0; n];
    SimTrace {
        dt,
        time: (0..n).map(|k| k as f64 * dt).collect(),
        r_pos: z.clone(),
        y_pos: z.clone(),
        r_speed: z.clone(),
        y_speed: z.clone(),
        current: z.clone(),
        current_ref: z.clone(),
        voltage: z.clone(),
        e_pos: z.clone(),
        e_speed: z.clone(),
        load_pos: z.clone(),
        load_speed: z.clone(),
        omega_m: z,
        diverged_at: None,
    }
}
