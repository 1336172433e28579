use servotune_core::baselines::*;
use servotune_core::oracle::WeightedObjective;
use servotune_core::presets::{desk_oracle, feasible_sim};
use servotune_core::simloop::SimConfig;
use servotune_core::tuner::{argmin, grid_search, metric_table, TableSource};
use servotune_core::Result;

const TAU1: f64 = 0.1;
const TAU2: f64 = 0.05;
// Fine sampling keeps the relay switching delay out of the comparison.
const DT: f64 = 1e-4;

/// Analytic ultimate gain of `1 / (s (TAU1 s + 1)(TAU2 s + 1))`.
fn toy_ku() -> f64 {
    (TAU1 + TAU2) / (TAU1 * TAU2)
}

fn toy_tu() -> f64 {
    2.0 * std::f64::consts::PI * (TAU1 * TAU2).sqrt()
}

/// Unit step into a sampled loop around `k / (s (tau1 s + 1)(tau2 s + 1))`
/// or, with `integrator = false`, around `1 / (tau1 s + 1)`.
struct ToyLoop {
    integrator: bool,
    duration: f64,
}

impl ToyLoop {
    fn lagged() -> Self {
        ToyLoop { integrator: true, duration: 12.0 }
    }

    fn first_order() -> Self {
        ToyLoop { integrator: false, duration: 3.0 }
    }

    fn deriv(&self, x: [f64; 3], u: f64) -> [f64; 3] {
        if self.integrator {
            [x[1], (x[2] - x[1]) / TAU1, (u - x[2]) / TAU2]
        } else {
            [(u - x[0]) / TAU1, 0.0, 0.0]
        }
    }
}

impl LoopProbe for ToyLoop {
    fn run(&self, controller: ProbeController) -> Result<ProbeRecord> {
        let n = (self.duration / DT) as usize;
        let sub = 10;
        let h = DT / sub as f64;
        let mut x = [0.0; 3];
        let mut rec = ProbeRecord { dt: DT, ..Default::default() };
        for _ in 0..n {
            let e = 1.0 - x[0];
            let u = match controller {
                ProbeController::Proportional(k) => k * e,
                ProbeController::Relay(d) => {
                    if e >= 0.0 {
                        d
                    } else {
                        -d
                    }
                }
            };
            rec.error.push(e);
            rec.control.push(u);
            for _ in 0..sub {
                let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
                let k1 = self.deriv(x, u);
                let k2 = self.deriv(add(x, k1, 0.5 * h), u);
                let k3 = self.deriv(add(x, k2, 0.5 * h), u);
                let k4 = self.deriv(add(x, k3, h), u);
                for i in 0..3 {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            if !x[0].is_finite() || x[0].abs() > 1e9 {
                rec.diverged = true;
                break;
            }
        }
        Ok(rec)
    }
}

#[test]
fn ultimate_gain_of_lagged_integrator() {
    let up = ultimate_gain(&ToyLoop::lagged(), 1.0, 1000.0, 60).unwrap();
    assert!((up.ku - toy_ku()).abs() <= 0.03 * toy_ku(), "ku {} vs {}", up.ku, toy_ku());
    assert!((up.tu - toy_tu()).abs() <= 0.03 * toy_tu(), "tu {} vs {}", up.tu, toy_tu());
    assert!(!up.trials.is_empty());
}

#[test]
fn relay_matches_describing_function() {
    let c = relay_experiment(&ToyLoop::lagged(), 1.0).unwrap();
    assert!((c.ku - 4.0 / (std::f64::consts::PI * c.cycle_amplitude)).abs() < 1e-12);
    assert!((c.ku - toy_ku()).abs() <= 0.05 * toy_ku(), "relay ku {} vs {}", c.ku, toy_ku());
    assert!((c.period - toy_tu()).abs() <= 0.05 * toy_tu(), "period {} vs {}", c.period, toy_tu());
}

#[test]
fn relay_ku_is_amplitude_invariant() {
    let a = relay_experiment(&ToyLoop::lagged(), 1.0).unwrap();
    let b = relay_experiment(&ToyLoop::lagged(), 2.0).unwrap();
    assert!((b.cycle_amplitude / a.cycle_amplitude - 2.0).abs() < 0.2);
    assert!((a.ku - b.ku).abs() <= 0.1 * a.ku, "{} vs {}", a.ku, b.ku);
}

#[test]
fn first_order_lag_has_no_ultimate_gain() {
    let err = ultimate_gain(&ToyLoop::first_order(), 0.1, 50.0, 60).unwrap_err();
    assert!(err.to_string().contains("no oscillation boundary"), "{err}");
}

#[test]
fn first_order_lag_relay_has_no_limit_cycle() {
    // The sampled relay chatters with one-sample period; amplitude is tiny but
    // the loop never diverges.
    let rec = ToyLoop::first_order().run(ProbeController::Relay(1.0)).unwrap();
    assert!(!rec.diverged);
    assert!(rec.error.iter().skip(rec.error.len() / 2).all(|e| e.abs() < 0.05));
}

#[test]
fn ziegler_nichols_on_desk_preset() {
    let oracle = desk_oracle(SimConfig::fast()).unwrap();
    let set = feasible_sim();
    let opts = BaselineOptions::default();
    let a = ziegler_nichols(&oracle, &set, &opts).unwrap();
    let b = ziegler_nichols(&oracle, &set, &opts).unwrap();
    assert_eq!(a, b);
    assert!(set.contains(&a.x));
    let Diagnostics::ZieglerNichols { ultimate, kp_search } = &a.diagnostics else {
        panic!("wrong diagnostics: {:?}", a.diagnostics);
    };
    let (kv, ki) = zn_pi(ultimate.ku, ultimate.tu);
    let raw = [a.x[0], kv, ki];
    assert_eq!(set.clamp(&raw).0, a.x);
    assert_eq!(a.clamped, set.clamp(&raw).1);
    assert!(!kp_search.is_empty());
    assert!(a.cost.is_finite() && a.cost > 0.0);
}

#[test]
fn relay_on_desk_preset() {
    let oracle = desk_oracle(SimConfig::fast()).unwrap();
    let set = feasible_sim();
    let r = relay_tune(&oracle, &set, &BaselineOptions::default()).unwrap();
    assert!(set.contains(&r.x));
    let Diagnostics::Relay { cycle, .. } = &r.diagnostics else {
        panic!("wrong diagnostics");
    };
    assert!((cycle.amplitude - 0.1 * oracle.sim.current_limit).abs() < 1e-12);
    assert!(cycle.ku > 0.0 && cycle.period > 0.0);
    assert_eq!(r, relay_tune(&oracle, &set, &BaselineOptions::default()).unwrap());
}

#[test]
fn itae_argmin_differs_from_cost_argmin() {
    let oracle = desk_oracle(SimConfig::fast()).unwrap();
    let set = feasible_sim();
    let mut live = oracle.clone();
    let table = metric_table(&mut live, &set).unwrap();
    let itae = itae_from_table(&table, &set, &oracle.weights, oracle.parametrization).unwrap();
    let mut replay = TableSource::new(set.clone(), table.clone()).unwrap();
    let grid = grid_search(&mut WeightedObjective { source: &mut replay, weights: oracle.weights }, &set).unwrap();
    assert_ne!(itae.x, grid.best_x);
    assert!(grid.best_cost < itae.cost);

    let sums: Vec<f64> = table.iter().map(|m| m.itae_sum()).collect();
    let best = argmin(&sums).unwrap();
    assert_eq!(itae.x, set.point(best));
    assert_eq!(itae.cost, oracle.cost_of(&table[best]));
    let Diagnostics::Itae { best_itae, evaluations } = itae.diagnostics else {
        panic!("wrong diagnostics");
    };
    assert_eq!(best_itae, sums[best]);
    assert_eq!(evaluations, set.len());
}
