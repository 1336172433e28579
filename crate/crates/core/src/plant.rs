//! Electromechanical model of the ball-screw feed drive.
//!
//! A PMSM under field-oriented control (q-axis only) drives a ball screw
//! modelled as two inertias coupled by a spring-damper. The module offers
//! the transfer-function view used for analysis and a physical 5-state
//! realization used by the simulator.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{ensure_non_negative, ensure_positive};
use crate::linalg::{solve_complex, Matrix};
use crate::poly::Poly;
use crate::{Error, Result};

/// Physical constants of motor, screw and load, all in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlantParams {
    /// Stator resistance (ohm).
    pub rs: f64,
    /// Stator inductance (H).
    pub ls: f64,
    /// Torque constant (N m / A).
    pub kt: f64,
    /// Back-EMF constant (V s / rad).
    pub kb: f64,
    /// Motor inertia (kg m^2).
    pub jm: f64,
    /// Motor viscous damping (N m s / rad).
    pub bm: f64,
    /// Load inertia reflected to the screw (kg m^2).
    pub jl: f64,
    /// Coupling damping between motor and load (N m s / rad).
    pub bml: f64,
    /// Load viscous damping (N m s / rad).
    pub bl: f64,
    /// Axial stiffness reflected to the screw (N m / rad).
    pub ks: f64,
    /// Screw lead (m / rev).
    pub q: f64,
    /// Maximum motor speed (rad/s).
    pub omega_max: f64,
}

impl PlantParams {
    /// Motor and drivetrain constants of the reference desk axis.
    pub fn table1() -> Self {
        PlantParams {
            rs: 9.02,
            ls: 0.0187,
            kt: 0.515,
            kb: 0.55,
            jm: 2.7e-5,
            bm: 0.0074,
            jl: 6.53e-4,
            bml: 0.014,
            bl: 0.0,
            ks: 3e7,
            q: 0.018,
            omega_max: 8000.0 * 2.0 * core::f64::consts::PI / 60.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("rs", self.rs)?;
        ensure_positive("ls", self.ls)?;
        ensure_positive("kt", self.kt)?;
        ensure_positive("kb", self.kb)?;
        ensure_positive("jm", self.jm)?;
        ensure_positive("jl", self.jl)?;
        ensure_positive("ks", self.ks)?;
        ensure_positive("q", self.q)?;
        ensure_positive("omega_max", self.omega_max)?;
        ensure_non_negative("bm", self.bm)?;
        ensure_non_negative("bml", self.bml)?;
        ensure_non_negative("bl", self.bl)?;
        Ok(())
    }

    /// Metres of table travel per radian of screw rotation.
    pub fn meters_per_radian(&self) -> f64 {
        self.q / (2.0 * core::f64::consts::PI)
    }

    /// DC gain from q-axis voltage to motor speed, `Kt / (Kt Kb + Rs (Bm + Bl))`.
    pub fn dc_gain(&self) -> f64 {
        self.kt / (self.kt * self.kb + self.rs * (self.bm + self.bl))
    }
}

/// Rational function `num(s) / den(s)`.
///
/// Improper functions are representable because the mechanical impedance
/// `1/F1` is one; [`to_state_space`] rejects them.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransferFunction {
    num: Poly,
    den: Poly,
}

impl TransferFunction {
    /// Builds from descending coefficient vectors.
    pub fn new(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::from_polys(Poly::from_descending(num), Poly::from_descending(den))
    }

    pub fn from_polys(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Model("denominator is identically zero".into()));
        }
        if num.ascending().iter().chain(den.ascending()).any(|c| !c.is_finite()) {
            return Err(Error::Model("non-finite coefficient".into()));
        }
        Ok(TransferFunction { num, den })
    }

    pub fn constant(k: f64) -> Self {
        TransferFunction {
            num: Poly::constant(k),
            den: Poly::constant(1.0),
        }
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn is_proper(&self) -> bool {
        self.num.is_zero() || self.num.degree() <= self.den.degree()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num.is_zero() || self.num.degree() < self.den.degree()
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.num.eval_complex(s) / self.den.eval_complex(s)
    }

    /// Frequency response at `omega` rad/s.
    pub fn freq_response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    pub fn dc_gain(&self) -> f64 {
        self.num.eval(0.0) / self.den.eval(0.0)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.den.roots()
    }

    /// Series connection without pole/zero cancellation.
    pub fn series(&self, rhs: &TransferFunction) -> TransferFunction {
        TransferFunction {
            num: &self.num * &rhs.num,
            den: &self.den * &rhs.den,
        }
    }

    pub fn inverse(&self) -> Result<TransferFunction> {
        Self::from_polys(self.den.clone(), self.num.clone())
    }

    /// Copy with monic denominator.
    pub fn normalized(&self) -> TransferFunction {
        let lead = self.den.leading();
        TransferFunction {
            num: self.num.scale(1.0 / lead),
            den: self.den.scale(1.0 / lead),
        }
    }

    /// Whether `self` and `other` are the same rational function, compared
    /// by cross-multiplication so common factors need not be cancelled.
    pub fn same_rational(&self, other: &TransferFunction, rel_tol: f64) -> bool {
        let a = self.normalized();
        let b = other.normalized();
        let lhs = &a.num * &b.den;
        let rhs = &b.num * &a.den;
        let scale = lhs.max_abs().max(rhs.max_abs());
        if scale == 0.0 {
            return true;
        }
        let diff = &lhs - &rhs;
        diff.max_abs() <= rel_tol * scale
    }
}

/// `Kt / (Kt Kb + (Ls s + Rs) * mech_load)` with `mech_load = Tm / Omega_m`.
pub fn motor_tf(p: &PlantParams, mech_load: &TransferFunction) -> Result<TransferFunction> {
    let (n, d) = (mech_load.num(), mech_load.den());
    let elec = Poly::from_descending(&[p.ls, p.rs]);
    let num = d.scale(p.kt);
    let den = &d.scale(p.kt * p.kb) + &(&elec * n);
    if den.is_zero() {
        return Err(Error::Model("motor transfer function has a zero denominator".into()));
    }
    TransferFunction::from_polys(num, den)
}

/// Numerator of `F1`, the load-side diagonal entry of the stiffness matrix.
fn load_poly(p: &PlantParams) -> Poly {
    Poly::from_descending(&[p.jl, p.bl + p.bml, p.ks])
}

/// `det H(s) / s`; the determinant always carries a root at the origin
/// (rigid-body rotation), so dividing it out gives the speed-level
/// denominator.
fn drivetrain_den(p: &PlantParams) -> Poly {
    let hm = Poly::from_descending(&[p.jm, p.bm + p.bml, p.ks]);
    let hl = load_poly(p);
    let c = Poly::from_descending(&[p.bml, p.ks]);
    let det = &(&hm * &hl) - &(&c * &c);
    // The constant term cancels analytically; rebuild it exactly to avoid
    // rounding residue from Ks^2 - Ks^2.
    let mut asc = det.ascending().to_vec();
    if !asc.is_empty() {
        asc[0] = 0.0;
    }
    Poly::from_ascending(&asc).div_s().expect("constant term was zeroed")
}

/// Drivetrain transfer functions `(F1, F2, F3)`:
/// `F1 = Omega_m / T_m`, `F2 = Omega_l / T_m`, `F3 = F2 / F1`.
pub fn drivetrain_tfs(p: &PlantParams) -> Result<(TransferFunction, TransferFunction, TransferFunction)> {
    p.validate()?;
    let den = drivetrain_den(p);
    let coupling = Poly::from_descending(&[p.bml, p.ks]);
    let f1 = TransferFunction::from_polys(load_poly(p), den.clone())?;
    let f2 = TransferFunction::from_polys(coupling.clone(), den)?;
    let f3 = TransferFunction::from_polys(coupling, load_poly(p))?;
    Ok((f1, f2, f3))
}

/// Voltage to load-speed transfer function `G = M F3`.
///
/// With `approximate` the mechanical impedance `1/F1` is replaced by the
/// rigid-body form `(Jm + Jl) s + Bm`, valid well below the axial mode.
pub fn full_tf(p: &PlantParams, approximate: bool) -> Result<TransferFunction> {
    p.validate()?;
    let coupling = Poly::from_descending(&[p.bml, p.ks]);
    let elec = Poly::from_descending(&[p.ls, p.rs]);
    if approximate {
        let rigid = Poly::from_descending(&[p.jm + p.jl, p.bm]);
        let motor_den = &Poly::constant(p.kt * p.kb) + &(&elec * &rigid);
        let num = coupling.scale(p.kt);
        let den = &motor_den * &load_poly(p);
        TransferFunction::from_polys(num, den)
    } else {
        // M = Kt N1 / (Kt Kb N1 + (Ls s + Rs) D) and F3 = C / N1; N1 cancels.
        let n1 = load_poly(p);
        let d = drivetrain_den(p);
        let num = coupling.scale(p.kt);
        let den = &n1.scale(p.kt * p.kb) + &(&elec * &d);
        TransferFunction::from_polys(num, den)
    }
}

/// Linear state-space model `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateSpaceModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub output_labels: Vec<String>,
}

impl StateSpaceModel {
    pub fn new(
        a: Matrix,
        b: Matrix,
        c: Matrix,
        d: Matrix,
        state_labels: Vec<String>,
        input_labels: Vec<String>,
        output_labels: Vec<String>,
    ) -> Result<Self> {
        let n = a.rows();
        let dims_ok = a.cols() == n
            && b.rows() == n
            && c.cols() == n
            && d.rows() == c.rows()
            && d.cols() == b.cols()
            && state_labels.len() == n
            && input_labels.len() == b.cols()
            && output_labels.len() == c.rows();
        if !dims_ok {
            return Err(Error::Model("inconsistent state-space dimensions".into()));
        }
        Ok(StateSpaceModel {
            a,
            b,
            c,
            d,
            state_labels,
            input_labels,
            output_labels,
        })
    }

    pub fn states(&self) -> usize {
        self.a.rows()
    }

    /// Transfer from input `input` to output `output` at `omega` rad/s.
    pub fn freq_response(&self, output: usize, input: usize, omega: f64) -> Result<Complex64> {
        let n = self.states();
        let feed = Complex64::new(self.d[(output, input)], 0.0);
        if n == 0 {
            return Ok(feed);
        }
        let jw = Complex64::new(0.0, omega);
        let m: Vec<Vec<Complex64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let diag = if i == j { jw } else { Complex64::new(0.0, 0.0) };
                        diag - self.a[(i, j)]
                    })
                    .collect()
            })
            .collect();
        let rhs: Vec<Complex64> = (0..n).map(|i| Complex64::new(self.b[(i, input)], 0.0)).collect();
        let x = solve_complex(&m, &rhs)
            .ok_or_else(|| Error::Model("frequency lies on a pole of the realization".into()))?;
        let y: Complex64 = (0..n).map(|j| x[j] * self.c[(output, j)]).sum();
        Ok(y + feed)
    }
}

/// Controllable canonical realization of a proper SISO transfer function.
pub fn to_state_space(tf: &TransferFunction) -> Result<StateSpaceModel> {
    if !tf.is_proper() {
        return Err(Error::Model("improper transfer function has no state-space realization".into()));
    }
    let tf = tf.normalized();
    let n = tf.den().degree();
    // den = s^n + a_1 s^{n-1} + ... + a_n ; num = b_0 s^n + ... + b_n
    let a: Vec<f64> = (1..=n).map(|k| tf.den().coeff(n - k)).collect();
    let b: Vec<f64> = (0..=n).map(|k| tf.num().coeff(n - k)).collect();
    let d0 = b[0];
    let mut am = Matrix::zeros(n, n);
    for j in 0..n {
        am[(0, j)] = -a[j];
    }
    for i in 1..n {
        am[(i, i - 1)] = 1.0;
    }
    let mut bm = Matrix::zeros(n, 1);
    if n > 0 {
        bm[(0, 0)] = 1.0;
    }
    let mut cm = Matrix::zeros(1, n);
    for j in 0..n {
        cm[(0, j)] = b[j + 1] - d0 * a[j];
    }
    let dm = Matrix::from_rows(&[&[d0]]);
    let labels = (0..n).map(|k| alloc::format!("x{k}")).collect();
    StateSpaceModel::new(am, bm, cm, dm, labels, vec!["u".to_string()], vec!["y".to_string()])
}

/// State indices of the physical model.
pub mod state {
    pub const CURRENT: usize = 0;
    pub const OMEGA_M: usize = 1;
    pub const THETA_M: usize = 2;
    pub const OMEGA_L: usize = 3;
    pub const THETA_L: usize = 4;
    pub const COUNT: usize = 5;
}

/// Input indices of the physical model.
pub mod input {
    pub const VOLTAGE: usize = 0;
    pub const LOAD_TORQUE: usize = 1;
}

fn physical_labels() -> (Vec<String>, Vec<String>) {
    let states = ["i_sq", "omega_m", "theta_m", "omega_l", "theta_l"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let inputs = ["v_sq", "tau_l"].iter().map(|s| s.to_string()).collect();
    (states, inputs)
}

/// Two-mass model with states `(i_sq, omega_m, theta_m, omega_l, theta_l)`,
/// inputs `(v_sq, tau_l)` and all states as outputs.
pub fn physical_state_model(p: &PlantParams) -> Result<StateSpaceModel> {
    use state::*;
    p.validate()?;
    let mut a = Matrix::zeros(COUNT, COUNT);
    a[(CURRENT, CURRENT)] = -p.rs / p.ls;
    a[(CURRENT, OMEGA_M)] = -p.kb / p.ls;
    a[(OMEGA_M, CURRENT)] = p.kt / p.jm;
    a[(OMEGA_M, OMEGA_M)] = -(p.bm + p.bml) / p.jm;
    a[(OMEGA_M, THETA_M)] = -p.ks / p.jm;
    a[(OMEGA_M, OMEGA_L)] = p.bml / p.jm;
    a[(OMEGA_M, THETA_L)] = p.ks / p.jm;
    a[(THETA_M, OMEGA_M)] = 1.0;
    a[(OMEGA_L, OMEGA_M)] = p.bml / p.jl;
    a[(OMEGA_L, THETA_M)] = p.ks / p.jl;
    a[(OMEGA_L, OMEGA_L)] = -(p.bl + p.bml) / p.jl;
    a[(OMEGA_L, THETA_L)] = -p.ks / p.jl;
    a[(THETA_L, OMEGA_L)] = 1.0;
    let mut b = Matrix::zeros(COUNT, 2);
    b[(CURRENT, input::VOLTAGE)] = 1.0 / p.ls;
    b[(OMEGA_L, input::LOAD_TORQUE)] = 1.0 / p.jl;
    let (states, inputs) = physical_labels();
    StateSpaceModel::new(
        a,
        b,
        Matrix::identity(COUNT),
        Matrix::zeros(COUNT, 2),
        states.clone(),
        inputs,
        states,
    )
}

/// Rigid-screw variant in the same 5-state layout: load and motor share a
/// single inertia `Jm + Jl`, so the load states duplicate the motor states.
/// Drops the axial mode, which permits a much larger integration step.
pub fn rigid_state_model(p: &PlantParams) -> Result<StateSpaceModel> {
    use state::*;
    p.validate()?;
    let j = p.jm + p.jl;
    let bt = p.bm + p.bl;
    let mut a = Matrix::zeros(COUNT, COUNT);
    a[(CURRENT, CURRENT)] = -p.rs / p.ls;
    a[(CURRENT, OMEGA_M)] = -p.kb / p.ls;
    a[(OMEGA_M, CURRENT)] = p.kt / j;
    a[(OMEGA_M, OMEGA_M)] = -bt / j;
    a[(THETA_M, OMEGA_M)] = 1.0;
    a[(OMEGA_L, CURRENT)] = p.kt / j;
    a[(OMEGA_L, OMEGA_L)] = -bt / j;
    a[(THETA_L, OMEGA_L)] = 1.0;
    let mut b = Matrix::zeros(COUNT, 2);
    b[(CURRENT, input::VOLTAGE)] = 1.0 / p.ls;
    b[(OMEGA_M, input::LOAD_TORQUE)] = 1.0 / j;
    b[(OMEGA_L, input::LOAD_TORQUE)] = 1.0 / j;
    let (states, inputs) = physical_labels();
    StateSpaceModel::new(
        a,
        b,
        Matrix::identity(COUNT),
        Matrix::zeros(COUNT, 2),
        states.clone(),
        inputs,
        states,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_is_valid() {
        PlantParams::table1().validate().unwrap();
    }

    #[test]
    fn validate_rejects_zero_inductance() {
        let p = PlantParams { ls: 0.0, ..PlantParams::table1() };
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { name: "ls", .. })));
    }

    #[test]
    fn drivetrain_den_has_speed_level_dc_term() {
        let p = PlantParams::table1();
        let d = drivetrain_den(&p);
        assert_eq!(d.degree(), 3);
        assert!((d.coeff(0) - p.ks * (p.bm + p.bl)).abs() <= 1e-12 * p.ks * p.bm);
    }

    #[test]
    fn improper_tf_is_rejected() {
        let tf = TransferFunction::new(&[1.0, 0.0], &[1.0]).unwrap();
        assert!(to_state_space(&tf).is_err());
    }
}
