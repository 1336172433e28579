use num_complex::Complex64;
use proptest::prelude::*;
use servotune_core::plant::*;

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (n - 1) as f64))
        .collect()
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn dc_gain_of_g_matches_closed_form() {
    let p = PlantParams::table1();
    let expected = p.kt / (p.kt * p.kb + p.rs * p.bm);
    assert!((expected - 1.4714).abs() < 1e-4, "{expected}");
    for approximate in [true, false] {
        let g = full_tf(&p, approximate).unwrap();
        assert!((g.dc_gain() - expected).abs() <= 1e-9 * expected, "approx={approximate}: {}", g.dc_gain());
    }
    assert!((p.dc_gain() - expected).abs() <= 1e-12 * expected);
}

#[test]
fn f3_is_unity_at_dc() {
    let (_, _, f3) = drivetrain_tfs(&PlantParams::table1()).unwrap();
    assert_eq!(f3.dc_gain(), 1.0);
}

#[test]
fn f3_resonance_frequency() {
    let p = PlantParams::table1();
    let (_, _, f3) = drivetrain_tfs(&p).unwrap();
    // Undamped natural frequency from the monic denominator.
    let den = f3.normalized().den().clone();
    let wn = den.coeff(0).sqrt();
    assert!((wn - 2.143e5).abs() / 2.143e5 < 1e-3, "{wn}");
}

#[test]
fn f3_without_coupling_damping_is_undamped() {
    let p = PlantParams { bml: 0.0, ..PlantParams::table1() };
    let (_, _, f3) = drivetrain_tfs(&p).unwrap();
    assert_eq!(f3.num().degree(), 0);
    let den = f3.den();
    assert_eq!(den.degree(), 2);
    assert_eq!(den.coeff(1), 0.0);
}

#[test]
fn f3_is_ratio_of_f2_and_f1() {
    let (f1, f2, f3) = drivetrain_tfs(&PlantParams::table1()).unwrap();
    let ratio = f2.series(&f1.inverse().unwrap());
    assert!(ratio.same_rational(&f3, 1e-12));
}

#[test]
fn exact_and_approximate_agree_below_one_kilohertz() {
    let p = PlantParams::table1();
    let exact = full_tf(&p, false).unwrap();
    let approx = full_tf(&p, true).unwrap();
    let mut freqs = vec![0.0];
    freqs.extend(logspace(-2.0, 3.0, 200));
    for f in freqs {
        let w = 2.0 * std::f64::consts::PI * f;
        let (a, b) = (exact.freq_response(w).norm(), approx.freq_response(w).norm());
        assert!((a - b).abs() <= 0.01 * a, "f={f} Hz: {a} vs {b}");
    }
}

#[test]
fn approximate_form_is_fourth_order() {
    let g = full_tf(&PlantParams::table1(), true).unwrap();
    assert_eq!(g.den().degree(), 4);
    let ss = to_state_space(&g).unwrap();
    assert_eq!(ss.states(), 4);
}

#[test]
fn exact_form_factors_through_motor_tf() {
    let p = PlantParams::table1();
    let (f1, _, f3) = drivetrain_tfs(&p).unwrap();
    let m = motor_tf(&p, &f1.inverse().unwrap()).unwrap();
    let g = m.series(&f3);
    assert!(g.same_rational(&full_tf(&p, false).unwrap(), 1e-12));
}

#[test]
fn motor_tf_identity_case() {
    let p = PlantParams {
        kt: 1.0,
        kb: 0.0,
        rs: 1.0,
        ls: 0.0,
        ..PlantParams::table1()
    };
    let m = motor_tf(&p, &TransferFunction::constant(1.0)).unwrap();
    for w in [0.0, 1.0, 1e3] {
        assert!((m.freq_response(w) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn motor_tf_is_strictly_proper_and_stable() {
    let p = PlantParams::table1();
    let rigid = TransferFunction::new(&[p.jm + p.jl, p.bm], &[1.0]).unwrap();
    let m = motor_tf(&p, &rigid).unwrap();
    assert!(m.is_strictly_proper());
    assert!(m.poles().iter().all(|z| z.re < 0.0));
    assert!(m.den().is_hurwitz());
}

#[test]
fn motor_tf_rejects_zero_denominator() {
    let p = PlantParams {
        kb: 0.0,
        ..PlantParams::table1()
    };
    let zero = TransferFunction::new(&[0.0], &[1.0]).unwrap();
    assert!(motor_tf(&p, &zero).is_err());
}

#[test]
fn first_order_reduction() {
    // Ls = 0, Bml = 0 and a very stiff screw leave a first-order lag.
    let p = PlantParams {
        ls: 1e-12,
        bml: 0.0,
        ks: 1e15,
        ..PlantParams::table1()
    };
    let g = full_tf(&p, true).unwrap();
    for w in logspace(-1.0, 2.0, 20) {
        let s = Complex64::new(0.0, w);
        let lag = p.kt / (p.kt * p.kb + p.rs * ((p.jm + p.jl) * s + p.bm));
        assert!(rel(g.freq_response(w), lag) < 1e-6, "w={w}");
    }
}

#[test]
fn realization_matches_transfer_function() {
    let p = PlantParams::table1();
    for tf in [full_tf(&p, true).unwrap(), full_tf(&p, false).unwrap()] {
        let ss = to_state_space(&tf).unwrap();
        for w in logspace(-1.0, 5.0, 50) {
            let a = ss.freq_response(0, 0, w).unwrap();
            let b = tf.freq_response(w);
            assert!(rel(a, b) < 1e-9, "w={w}: {a} vs {b}");
        }
    }
}

#[test]
fn first_order_realization() {
    let ss = to_state_space(&TransferFunction::new(&[1.0], &[1.0, 1.0]).unwrap()).unwrap();
    assert_eq!(ss.a.as_slice(), &[-1.0]);
    assert_eq!(ss.b.as_slice(), &[1.0]);
    assert_eq!(ss.c.as_slice(), &[1.0]);
    assert_eq!(ss.d.as_slice(), &[0.0]);
}

#[test]
fn constant_realization_has_no_states() {
    let ss = to_state_space(&TransferFunction::constant(3.5)).unwrap();
    assert_eq!(ss.states(), 0);
    assert_eq!(ss.d.as_slice(), &[3.5]);
    assert_eq!(ss.freq_response(0, 0, 10.0).unwrap(), Complex64::new(3.5, 0.0));
}

#[test]
fn improper_transfer_function_is_rejected() {
    let tf = TransferFunction::new(&[1.0, 0.0, 0.0], &[1.0, 1.0]).unwrap();
    assert!(to_state_space(&tf).is_err());
}

#[test]
fn physical_model_matches_exact_transfer_function() {
    let p = PlantParams::table1();
    let ss = physical_state_model(&p).unwrap();
    let g = full_tf(&p, false).unwrap();
    for w in logspace(-1.0, 5.0, 120) {
        let a = ss.freq_response(state::OMEGA_L, input::VOLTAGE, w).unwrap();
        let b = g.freq_response(w);
        assert!(rel(a, b) < 1e-6, "w={w}: {a} vs {b}");
    }
}

#[test]
fn rigid_model_matches_approximation_below_the_axial_mode() {
    let p = PlantParams::table1();
    let ss = rigid_state_model(&p).unwrap();
    let g = full_tf(&p, true).unwrap();
    for w in logspace(-1.0, 3.0, 40) {
        let a = ss.freq_response(state::OMEGA_M, input::VOLTAGE, w).unwrap();
        assert!(rel(a, g.freq_response(w)) < 1e-3, "w={w}");
    }
}

fn eigenvalues(ss: &StateSpaceModel) -> Vec<Complex64> {
    let n = ss.states();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| ss.a[(i, j)]);
    m.complex_eigenvalues().iter().map(|z| Complex64::new(z.re, z.im)).collect()
}

#[test]
fn physical_model_eigenvalues() {
    let p = PlantParams::table1();
    let ev = eigenvalues(&physical_state_model(&p).unwrap());
    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let near_zero = ev.iter().filter(|z| z.norm() <= 1e-9 * scale).count();
    assert_eq!(near_zero, 1, "{ev:?}");
    for z in &ev {
        assert!(z.re <= 1e-9 * scale, "{z}");
        if z.norm() > 1e-9 * scale {
            assert!(z.re < 0.0, "{z}");
        }
    }
    // The non-integrator eigenvalues are the roots of the drivetrain and motor
    // denominator of the exact transfer function.
    let poles = full_tf(&p, false).unwrap().poles();
    for pole in poles {
        let d = ev.iter().map(|z| (z - pole).norm()).fold(f64::INFINITY, f64::min);
        assert!(d <= 1e-6 * pole.norm().max(1.0), "pole {pole} not an eigenvalue");
    }
}

#[test]
fn zero_input_keeps_zero_state() {
    let ss = physical_state_model(&PlantParams::table1()).unwrap();
    let x = [0.0; 5];
    let dx = ss.a.matvec(&x);
    assert!(dx.iter().all(|v| *v == 0.0));
}

#[test]
fn invalid_parameters_are_rejected() {
    let base = PlantParams::table1();
    for p in [
        PlantParams { rs: 0.0, ..base },
        PlantParams { ks: -1.0, ..base },
        PlantParams { q: 0.0, ..base },
        PlantParams { bm: -1e-3, ..base },
        PlantParams { omega_max: 0.0, ..base },
        PlantParams { jl: f64::NAN, ..base },
    ] {
        assert!(p.validate().is_err(), "{p:?}");
        assert!(full_tf(&p, false).is_err());
    }
}

fn params() -> impl Strategy<Value = PlantParams> {
    (
        0.5f64..20.0,
        1e-3f64..0.1,
        0.1f64..2.0,
        0.1f64..2.0,
        1e-6f64..1e-3,
        0.0f64..0.05,
        1e-5f64..1e-2,
        0.0f64..0.1,
        4.0f64..8.0,
    )
        .prop_map(|(rs, ls, kt, kb, jm, bm, jl, bml, log_ks)| PlantParams {
            rs,
            ls,
            kt,
            kb,
            jm,
            bm,
            jl,
            bml,
            bl: 0.0,
            ks: 10f64.powf(log_ks),
            ..PlantParams::table1()
        })
}

proptest! {
    #[test]
    fn prop_f3_unity_at_dc(p in params()) {
        let (_, _, f3) = drivetrain_tfs(&p).unwrap();
        prop_assert_eq!(f3.dc_gain(), 1.0);
    }

    #[test]
    fn prop_dc_gain_independent_of_screw(p in params()) {
        let expected = p.kt / (p.kt * p.kb + p.rs * p.bm);
        let g = full_tf(&p, false).unwrap();
        prop_assert!((g.dc_gain() - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn prop_exact_form_factors_through_motor_tf(p in params()) {
        let (f1, _, f3) = drivetrain_tfs(&p).unwrap();
        let g = motor_tf(&p, &f1.inverse().unwrap()).unwrap().series(&f3);
        prop_assert!(g.same_rational(&full_tf(&p, false).unwrap(), 1e-12));
    }

    #[test]
    fn prop_physical_model_matches_transfer_function(p in params(), lw in -1.0f64..5.0) {
        let w = 10f64.powf(lw);
        let ss = physical_state_model(&p).unwrap();
        let g = full_tf(&p, false).unwrap();
        let a = ss.freq_response(state::OMEGA_L, input::VOLTAGE, w).unwrap();
        prop_assert!(rel(a, g.freq_response(w)) < 1e-6);
    }
}
