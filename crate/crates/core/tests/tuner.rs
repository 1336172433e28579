use proptest::prelude::*;
use servotune_core::gpr::{fit, Dataset, GpHyperparams};
use servotune_core::metrics::MetricVector;
use servotune_core::oracle::{Counted, FnObjective, MetricSource};
use servotune_core::tuner::*;
use servotune_core::Result;

fn cube(n: usize) -> FeasibleSet {
    FeasibleSet::new(vec![
        Axis::new("a", 1.0, 2.0, n),
        Axis::new("b", 1.0, 2.0, n),
        Axis::new("c", 1.0, 2.0, n),
    ])
    .unwrap()
}

const CENTER: [f64; 3] = [1.37, 1.62, 1.81];

fn quadratic(x: &[f64]) -> Result<f64> {
    Ok(x.iter().zip(CENTER).map(|(a, c)| (a - c).powi(2)).sum::<f64>() + 1.0)
}

fn grid_argmin(set: &FeasibleSet, f: impl Fn(&[f64]) -> Result<f64>) -> usize {
    let costs: Vec<f64> = (0..set.len()).map(|i| f(&set.point(i)).unwrap()).collect();
    argmin(&costs).unwrap()
}

#[test]
fn constant_oracle_halts_on_repeat_rule() {
    let set = cube(10);
    for seed in 0..5 {
        let cfg = BoConfig { seed, ..BoConfig::default() };
        let mut obj = Counted { inner: FnObjective(|_: &[f64]| Ok(5.0)), count: 0 };
        let state = run_bo(&mut obj, &set, &cfg).unwrap();
        assert_eq!(state.stop, Some(StopReason::RepeatedIncumbent), "seed {seed}");
        assert!(obj.count <= cfg.m0 + 4, "seed {seed}: {} evaluations", obj.count);
        assert_eq!(obj.count, state.evaluations());
    }
}

#[test]
fn quadratic_toy_finds_optimum_cell() {
    let set = cube(20);
    let opt = grid_argmin(&set, quadratic);
    let mut hits = 0;
    for seed in 0..100 {
        let cfg = BoConfig {
            m0: 10,
            max_iterations: 40,
            seed,
            ..BoConfig::default()
        };
        let state = run_bo(&mut FnObjective(quadratic), &set, &cfg).unwrap();
        if set.cell_distance(state.best().unwrap().index, opt) <= 1 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn proposals_are_invariant_to_power_of_two_scaling() {
    let set = cube(12);
    let cfg = BoConfig { m0: 8, max_iterations: 15, seed: 3, ..BoConfig::default() };
    let base = run_bo(&mut FnObjective(quadratic), &set, &cfg).unwrap();
    for alpha in [0.25, 8.0, 1024.0] {
        let scaled = run_bo(&mut FnObjective(|x: &[f64]| Ok(alpha * quadratic(x)?)), &set, &cfg).unwrap();
        let a: Vec<usize> = base.history.iter().map(|e| e.index).collect();
        let b: Vec<usize> = scaled.history.iter().map(|e| e.index).collect();
        assert_eq!(a, b, "alpha {alpha}");
    }
}

#[test]
fn same_seed_same_run() {
    let set = cube(12);
    let cfg = BoConfig { m0: 8, max_iterations: 10, seed: 17, ..BoConfig::default() };
    let a = run_bo(&mut FnObjective(quadratic), &set, &cfg).unwrap();
    let b = run_bo(&mut FnObjective(quadratic), &set, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.stop, b.stop);
}

#[test]
fn oracle_failure_ends_run_with_partial_history() {
    let set = cube(10);
    let cfg = BoConfig { m0: 6, max_iterations: 20, ..BoConfig::default() };
    let mut calls = 0;
    let mut obj = FnObjective(|x: &[f64]| {
        calls += 1;
        if calls > 8 {
            Err(servotune_core::Error::Oracle("boom".into()))
        } else {
            quadratic(x)
        }
    });
    let state = run_bo(&mut obj, &set, &cfg).unwrap();
    assert!(matches!(state.stop, Some(StopReason::OracleFailure(_))));
    assert_eq!(state.evaluations(), 8);
}

#[test]
fn invalid_config_is_rejected() {
    let set = cube(5);
    for cfg in [
        BoConfig { m0: 2, ..BoConfig::default() },
        BoConfig { beta: -1.0, ..BoConfig::default() },
        BoConfig { repeat_threshold: 0, ..BoConfig::default() },
        BoConfig { refit_every: 0, ..BoConfig::default() },
    ] {
        assert!(run_bo(&mut FnObjective(quadratic), &set, &cfg).is_err());
    }
}

#[test]
fn lcb_with_zero_beta_is_the_mean() {
    let x = vec![vec![0.1], vec![0.4], vec![0.9]];
    let post = fit(&Dataset::new(x, vec![1.0, -0.5, 0.3]).unwrap(), &GpHyperparams::isotropic(1.0, 0.3, 0.05, 1)).unwrap();
    for q in [0.0, 0.25, 0.6, 1.0] {
        let (mu, var) = post.predict(&[q]).unwrap();
        assert_eq!(lcb(&post, &[q], 0.0).unwrap(), mu);
        assert_eq!(lcb(&post, &[q], 2.0).unwrap(), mu - 2.0 * var.sqrt());
        assert_eq!(lcb_with(&post, &[q], 2.0, SpreadForm::Variance).unwrap(), mu - 2.0 * var);
    }
}

#[test]
fn beta_schedule() {
    let c = BoConfig { beta: 2.0, ..BoConfig::default() };
    assert_eq!(c.beta_at(50), 2.0);
    let s = BoConfig { beta: 2.0, beta_schedule: BetaSchedule::SqrtLog, ..BoConfig::default() };
    assert!((s.beta_at(20) - 2.0 * 20f64.ln().sqrt()).abs() < 1e-15);
}

#[test]
fn grid_search_toy() {
    let set = FeasibleSet::new(vec![Axis::new("a", 1.0, 3.0, 3)]).unwrap();
    let table = [5.0, 3.0, 9.0];
    let r = grid_search(&mut FnObjective(|x: &[f64]| Ok(table[x[0].round() as usize - 1])), &set).unwrap();
    assert_eq!(r.best_index, 1);
    assert_eq!(r.best_cost, 3.0);
    assert_eq!(r.best_x, vec![2.0]);
    assert_eq!(r.costs, table.to_vec());
}

#[test]
fn argmin_rules() {
    assert_eq!(argmin(&[2.0, 1.0, 1.0]), Some(1));
    assert_eq!(argmin(&[f64::NAN, 4.0, 3.0]), Some(2));
    assert_eq!(argmin(&[f64::NAN]), None);
    assert_eq!(argmin(&[]), None);
}

#[test]
fn latin_hypercube_covers_each_stratum() {
    use rand::SeedableRng;
    let set = cube(20);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let design = latin_hypercube(&set, 10, &mut rng);
    assert_eq!(design.len(), 10);
    for axis in 0..3 {
        let mut strata: Vec<usize> = design.iter().map(|&f| set.unflatten(f)[axis] / 2).collect();
        strata.sort();
        assert_eq!(strata, (0..10).collect::<Vec<_>>());
    }
}

#[test]
fn next_point_prefers_unexplored_low_region() {
    let set = FeasibleSet::new(vec![Axis::new("a", 1.0, 2.0, 11)]).unwrap();
    let cfg = BoConfig { m0: 3, max_iterations: 1, ..BoConfig::default() };
    // Costs fall toward x = 0; an explicit posterior is built by one BO step.
    let state = run_bo(&mut FnObjective(|x: &[f64]| Ok(x[0])), &set, &cfg).unwrap();
    let proposed = state.history.last().unwrap();
    assert!(proposed.mu.is_some());
    let design_best = state.history[..3].iter().map(|e| e.x[0]).fold(f64::INFINITY, f64::min);
    assert!(proposed.x[0] <= design_best, "{proposed:?}");
}

#[test]
fn next_point_needs_a_posterior() {
    let set = cube(3);
    let state = {
        let cfg = BoConfig { m0: 3, max_iterations: 0, ..BoConfig::default() };
        run_bo(&mut FnObjective(quadratic), &set, &cfg).unwrap()
    };
    assert!(state.posterior.is_none());
    assert!(next_point(&state, &set, &BoConfig::default()).is_err());
}

#[test]
fn feasible_set_geometry() {
    let set = FeasibleSet::new(vec![Axis::stepped("kp", 4200.0, 28), Axis::new("kv", 0.05, 0.5, 10)]).unwrap();
    assert_eq!(set.len(), 280);
    assert_eq!(set.point(0), vec![150.0, 0.05]);
    assert_eq!(set.point(279), vec![4200.0, 0.5]);
    let (c, clamped) = set.clamp(&[5000.0, 0.2]);
    assert!(clamped);
    assert_eq!(c, vec![4200.0, 0.2]);
    assert!(!set.clamp(&[300.0, 0.1]).1);
    assert_eq!(set.nearest(&[310.0, 0.06]), set.flatten(&[1, 0]));
    assert_eq!(set.cell_distance(set.flatten(&[0, 0]), set.flatten(&[3, 1])), 3);
    assert!(FeasibleSet::new(vec![Axis::new("x", 1.0, 0.0, 3)]).is_err());
}

#[derive(Clone)]
struct Counting {
    calls: usize,
}

impl MetricSource for Counting {
    fn metrics(&mut self, x: &[f64]) -> Result<MetricVector> {
        self.calls += 1;
        let mut a = [0.0; 13];
        a[0] = x[0];
        a[7] = 2.0 * x[0];
        Ok(MetricVector::from_array(a, false))
    }
}

#[test]
fn table_source_replays_metrics() {
    let set = FeasibleSet::new(vec![Axis::new("a", 1.0, 4.0, 4)]).unwrap();
    let mut live = Counting { calls: 0 };
    let table = metric_table(&mut live, &set).unwrap();
    assert_eq!(live.calls, 4);
    let mut replay = TableSource::new(set.clone(), table.clone()).unwrap();
    for i in 0..4 {
        assert_eq!(replay.metrics(&set.point(i)).unwrap(), live.metrics(&set.point(i)).unwrap());
    }
    assert!(replay.metrics(&[2.5]).is_err());
    assert!(TableSource::new(set, table[..3].to_vec()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prop_bo_run_invariants(seed in any::<u64>(), cx in 1.0f64..2.0, cy in 1.0f64..2.0) {
        let set = FeasibleSet::new(vec![Axis::new("a", 1.0, 2.0, 15), Axis::new("b", 1.0, 2.0, 15)]).unwrap();
        let cfg = BoConfig { m0: 6, max_iterations: 12, seed, ..BoConfig::default() };
        let f = |x: &[f64]| Ok((x[0] - cx).powi(2) + 0.5 * (x[1] - cy).powi(2));
        let state = run_bo(&mut FnObjective(f), &set, &cfg).unwrap();
        let h = &state.history;
        prop_assert!(h.len() <= cfg.m0 + cfg.max_iterations);
        let mut best = f64::INFINITY;
        for e in h {
            prop_assert!(set.contains(&e.x));
            prop_assert_eq!(&set.point(e.index), &e.x);
            best = best.min(e.y);
            prop_assert_eq!(h[e.incumbent].y, best);
        }
        let design_min = h[..cfg.m0].iter().map(|e| e.y).fold(f64::INFINITY, f64::min);
        prop_assert!(state.best().unwrap().y <= design_min);
        prop_assert!(state.stop.is_some());
    }

    #[test]
    fn prop_grid_search_is_exact_minimum(vals in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let set = FeasibleSet::new(vec![Axis::new("a", 1.0, vals.len().max(2) as f64, vals.len().max(2))]).unwrap();
        let mut padded = vals.clone();
        padded.resize(set.len(), f64::INFINITY);
        let r = grid_search(&mut FnObjective(|x: &[f64]| Ok(padded[x[0].round() as usize - 1])), &set).unwrap();
        let m = vals.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(r.best_cost, m);
        prop_assert!(r.costs.iter().all(|c| *c >= m));
    }

    #[test]
    fn prop_nearest_is_closest(a in 1.0f64..2.0, b in 1.0f64..2.0) {
        let set = FeasibleSet::new(vec![Axis::new("a", 1.0, 2.0, 7), Axis::new("b", 1.0, 2.0, 9)]).unwrap();
        let n = set.point(set.nearest(&[a, b]));
        prop_assert!((n[0] - a).abs() <= 0.5 / 6.0 + 1e-12);
        prop_assert!((n[1] - b).abs() <= 0.5 / 8.0 + 1e-12);
    }
}
