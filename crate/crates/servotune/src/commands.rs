//! The five subcommands. Each writes its artifacts and a `record.json`
//! under the configured output directory and returns the record.

use std::path::Path;

use rayon::prelude::*;
use servotune_core::baselines::{self, BaselineOptions, Diagnostics, TuningResult};
use servotune_core::oracle::{Objective, SimulationOracle, WeightedObjective};
use servotune_core::tuner::{argmin, run_bo, BoConfig, BoState, FeasibleSet, StopReason, TableSource};

use crate::cache::{grid_table, CachedTable};
use crate::config::RunConfig;
use crate::error::{config, CliError, Result};
use crate::output::{artifact, ensure_dir, metric_cells, metric_columns, num, opt, write_csv, write_json, write_trace};
use crate::parallel::ParallelOracle;
use crate::record::{IterationRow, RunRecord, SweepRow};

pub const RECORD_FILE: &str = "record.json";

fn finish(out: &Path, mut rec: RunRecord) -> Result<RunRecord> {
    rec.files.sort();
    write_json(&out.join(RECORD_FILE), &rec)?;
    Ok(rec)
}

fn prepare(cfg: &RunConfig) -> Result<(SimulationOracle, FeasibleSet)> {
    cfg.validate()?;
    ensure_dir(&cfg.out)?;
    let (set, _) = cfg.feasible_set()?;
    Ok((cfg.oracle()?, set))
}

fn cached_grid(cfg: &RunConfig, oracle: &SimulationOracle, set: &FeasibleSet) -> Result<CachedTable> {
    let t = grid_table(oracle, &cfg.trajectory, set, &cfg.out.join("cache"))?;
    println!(
        "grid table {} ({} points, {})",
        &t.key[..12],
        set.len(),
        if t.hit { "cached" } else { "computed" }
    );
    Ok(t)
}

/// Simulates the configured gains, writes the trace and reports metrics.
/// A diverged run is recorded and then reported as an error.
pub fn simulate(cfg: &RunConfig) -> Result<RunRecord> {
    let (oracle, set) = prepare(cfg)?;
    let x = cfg.gains.ok_or_else(|| config("simulate needs gains (--gains Kp,Kv,Ki)"))?;
    if !set.contains(&x) {
        return Err(config(format!(
            "gains {x:?} lie outside the feasible set {:?}",
            set.axes.iter().map(|a| (a.min, a.max)).collect::<Vec<_>>()
        )));
    }
    let gains = oracle.gains(&x);
    let (tr, m) = oracle.run(&gains)?;
    let cost = oracle.cost_of(&m);

    let mut rec = RunRecord::new("simulate", cfg);
    let (path, name) = artifact(&cfg.out, "trace.csv");
    write_trace(&path, &tr)?;
    rec.files.push(name);
    rec.final_gains = Some(gains);
    rec.final_metrics = Some(m);
    rec.final_cost = Some(cost);

    println!("gains: Kp = {}, Kv = {}, Ki = {}", gains.kp, gains.kv, gains.ki);
    for (name, v) in metric_columns().iter().zip(m.to_array()) {
        println!("  {name:<20} {v:.6e}");
    }
    println!("cost: {cost:.6}");
    let rec = finish(&cfg.out, rec)?;
    match tr.diverged_at {
        Some(at) => Err(CliError::Diverged { at }),
        None => Ok(rec),
    }
}

/// Prints each evaluation as the tuner requests it.
struct Logged<O> {
    inner: O,
    m: usize,
    best: f64,
}

impl<O: Objective> Logged<O> {
    fn note(&mut self, x: &[f64], y: f64) {
        self.m += 1;
        self.best = self.best.min(y);
        println!("{:>4}  x = {:<40}  f = {:<14.6}  best = {:.6}", self.m, format!("{x:?}"), y, self.best);
    }
}

impl<O: Objective> Objective for Logged<O> {
    fn evaluate(&mut self, x: &[f64]) -> servotune_core::Result<f64> {
        let y = self.inner.evaluate(x)?;
        self.note(x, y);
        Ok(y)
    }

    fn evaluate_batch(&mut self, xs: &[Vec<f64>]) -> servotune_core::Result<Vec<f64>> {
        let ys = self.inner.evaluate_batch(xs)?;
        for (x, y) in xs.iter().zip(&ys) {
            self.note(x, *y);
        }
        Ok(ys)
    }
}

fn iteration_rows(state: &BoState) -> Vec<IterationRow> {
    let mut best = f64::INFINITY;
    state
        .history
        .iter()
        .enumerate()
        .map(|(i, e)| {
            best = best.min(e.y);
            IterationRow {
                m: i + 1,
                x: e.x.clone(),
                y: e.y,
                mu: e.mu,
                sigma: e.sigma,
                incumbent_cost: best,
            }
        })
        .collect()
}

fn stop_text(stop: &Option<StopReason>) -> String {
    match stop {
        Some(StopReason::MaxIterations) => "max-iterations".into(),
        Some(StopReason::RepeatedIncumbent) => "repeated-incumbent".into(),
        Some(StopReason::OracleFailure(e)) => format!("oracle-failure: {e}"),
        None => "none".into(),
    }
}

fn write_convergence(path: &Path, set: &FeasibleSet, rows: &[IterationRow]) -> Result<()> {
    let mut header = vec!["m".to_string()];
    header.extend(set.axes.iter().map(|a| a.name.clone()));
    header.extend(
        ["cost", "incumbent_cost", "mu", "sigma", "lower_3sigma", "upper_3sigma"]
            .iter()
            .map(|s| s.to_string()),
    );
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut c = vec![r.m.to_string()];
            c.extend(r.x.iter().map(|v| num(*v)));
            let band = r.mu.zip(r.sigma);
            c.extend([
                num(r.y),
                num(r.incumbent_cost),
                opt(r.mu),
                opt(r.sigma),
                opt(band.map(|(m, s)| m - 3.0 * s)),
                opt(band.map(|(m, s)| m + 3.0 * s)),
            ]);
            c
        })
        .collect();
    write_csv(path, &header, &body)
}

fn bo_result(oracle: &SimulationOracle, state: &BoState) -> Result<TuningResult> {
    let best = state
        .best()
        .ok_or_else(|| CliError::Core(servotune_core::Error::Tuning("no evaluation succeeded".into())))?;
    let gains = oracle.gains(&best.x);
    let m = oracle.run(&gains)?.1;
    Ok(TuningResult {
        method: "bo".into(),
        gains,
        x: best.x.clone(),
        cost: oracle.cost_of(&m),
        metrics: m,
        clamped: false,
        diagnostics: Diagnostics::Bo {
            evaluations: state.evaluations(),
            stop: stop_text(&state.stop),
        },
    })
}

fn tune_live(oracle: &SimulationOracle, set: &FeasibleSet, bo: &BoConfig) -> Result<BoState> {
    let mut obj = Logged {
        inner: ParallelOracle::new(oracle.clone()),
        m: 0,
        best: f64::INFINITY,
    };
    Ok(run_bo(&mut obj, set, bo)?)
}

/// Bayesian tuning against the simulator.
pub fn tune(cfg: &RunConfig) -> Result<RunRecord> {
    let (oracle, set) = prepare(cfg)?;
    let bo = cfg.bo_config()?;
    let state = tune_live(&oracle, &set, &bo)?;

    let mut rec = RunRecord::new("tune", cfg);
    rec.iterations = iteration_rows(&state);
    rec.stop = Some(stop_text(&state.stop));
    rec.hyperparameters = state.hyper.clone();
    let (path, name) = artifact(&cfg.out, "convergence.csv");
    write_convergence(&path, &set, &rec.iterations)?;
    rec.files.push(name);

    if let Some(StopReason::OracleFailure(e)) = &state.stop {
        finish(&cfg.out, rec)?;
        return Err(CliError::Core(servotune_core::Error::Tuning(e.clone())));
    }
    let result = bo_result(&oracle, &state)?;
    let (tr, _) = oracle.run(&result.gains)?;
    let (path, name) = artifact(&cfg.out, "trace_bo.csv");
    write_trace(&path, &tr)?;
    rec.files.push(name);
    rec.final_gains = Some(result.gains);
    rec.final_metrics = Some(result.metrics);
    rec.final_cost = Some(result.cost);
    println!(
        "stop: {}; incumbent {:?} with cost {:.6} after {} evaluations",
        rec.stop.as_deref().unwrap_or(""),
        result.x,
        result.cost,
        state.evaluations()
    );
    finish(&cfg.out, rec)
}

/// Costs of the grid table and the index of the smallest.
fn grid_best(oracle: &SimulationOracle, t: &CachedTable) -> Result<(usize, Vec<f64>)> {
    let costs: Vec<f64> = t.table.iter().map(|m| oracle.cost_of(m)).collect();
    let best = argmin(&costs).ok_or_else(|| CliError::Core(servotune_core::Error::Tuning("empty grid".into())))?;
    Ok((best, costs))
}

/// Exhaustive search over the cached grid table.
pub fn grid(cfg: &RunConfig) -> Result<RunRecord> {
    let (oracle, set) = prepare(cfg)?;
    let t = cached_grid(cfg, &oracle, &set)?;
    let (best, costs) = grid_best(&oracle, &t)?;

    let mut header: Vec<String> = vec!["index".into()];
    header.extend(set.axes.iter().map(|a| a.name.clone()));
    header.push("cost".into());
    header.extend(metric_columns());
    let rows: Vec<Vec<String>> = (0..set.len())
        .map(|i| {
            let mut r = vec![i.to_string()];
            r.extend(set.point(i).iter().map(|v| num(*v)));
            r.push(num(costs[i]));
            r.extend(metric_cells(&t.table[i]));
            r
        })
        .collect();
    let mut rec = RunRecord::new("grid", cfg);
    let (path, name) = artifact(&cfg.out, "grid.csv");
    write_csv(&path, &header, &rows)?;
    rec.files.push(name);
    rec.grid_table = Some(t.key.clone());
    let x = set.point(best);
    rec.final_gains = Some(oracle.gains(&x));
    rec.final_metrics = Some(t.table[best]);
    rec.final_cost = Some(costs[best]);
    println!("grid minimum {x:?} with cost {:.6}", costs[best]);
    finish(&cfg.out, rec)
}

/// Grid, ZN, ITAE, relay and BO side by side.
pub fn compare(cfg: &RunConfig) -> Result<RunRecord> {
    let (oracle, set) = prepare(cfg)?;
    let t = cached_grid(cfg, &oracle, &set)?;
    let (best, _) = grid_best(&oracle, &t)?;
    let grid_x = set.point(best);
    let grid = TuningResult {
        method: "grid".into(),
        gains: oracle.gains(&grid_x),
        x: grid_x,
        cost: oracle.cost_of(&t.table[best]),
        metrics: t.table[best],
        clamped: false,
        diagnostics: Diagnostics::Grid { evaluations: set.len() },
    };
    let opts = BaselineOptions::default();
    let zn = baselines::ziegler_nichols(&oracle, &set, &opts)?;
    let itae = baselines::itae_from_table(&t.table, &set, &oracle.weights, oracle.parametrization)?;
    let relay = baselines::relay_tune(&oracle, &set, &opts)?;
    let state = tune_live(&oracle, &set, &cfg.bo_config()?)?;
    let bo = bo_result(&oracle, &state)?;

    let mut rec = RunRecord::new("compare", cfg);
    rec.grid_table = Some(t.key.clone());
    rec.iterations = iteration_rows(&state);
    rec.stop = Some(stop_text(&state.stop));
    rec.hyperparameters = state.hyper.clone();
    rec.methods = vec![grid, zn, itae, relay, bo];

    let mut header: Vec<String> = ["method", "kp", "kv", "ki", "cost", "clamped"].iter().map(|s| s.to_string()).collect();
    header.extend(metric_columns());
    let mut rows = Vec::new();
    println!("{:<16} {:>10} {:>10} {:>10} {:>14}", "method", "Kp", "Kv", "Ki", "f");
    for r in &rec.methods {
        println!(
            "{:<16} {:>10.4} {:>10.4} {:>10.4} {:>14.4}",
            r.method, r.gains.kp, r.gains.kv, r.gains.ki, r.cost
        );
        let mut row = vec![r.method.clone(), num(r.gains.kp), num(r.gains.kv), num(r.gains.ki), num(r.cost)];
        row.push(r.clamped.to_string());
        row.extend(metric_cells(&r.metrics));
        rows.push(row);
        let (tr, _) = oracle.run(&r.gains)?;
        let (path, name) = artifact(&cfg.out, &format!("trace_{}.csv", r.method));
        write_trace(&path, &tr)?;
        rec.files.push(name);
    }
    let (path, name) = artifact(&cfg.out, "comparison.csv");
    write_csv(&path, &header, &rows)?;
    rec.files.push(name);
    let (path, name) = artifact(&cfg.out, "convergence.csv");
    write_convergence(&path, &set, &rec.iterations)?;
    rec.files.push(name);
    let b = rec.methods.last().expect("five rows");
    rec.final_gains = Some(b.gains);
    rec.final_metrics = Some(b.metrics);
    rec.final_cost = Some(b.cost);
    finish(&cfg.out, rec)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seeds of the repeats: `seed, seed + 1, ...`, shared by every `m0`.
pub fn sweep_seeds(seed: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64).map(|r| seed.wrapping_add(r)).collect()
}

/// Repeated BO runs per initial design size, replayed on the grid table.
pub fn sweep_m0(cfg: &RunConfig) -> Result<RunRecord> {
    let (oracle, set) = prepare(cfg)?;
    let t = cached_grid(cfg, &oracle, &set)?;
    let (best, costs) = grid_best(&oracle, &t)?;
    let grid_min = costs[best];
    let base = cfg.bo_config()?;
    let seeds = sweep_seeds(cfg.seed, cfg.sweep.repeats);

    let mut rows = Vec::new();
    for &m0 in &cfg.sweep.m0 {
        let bo = BoConfig { m0, ..base.clone() };
        bo.validate()?;
        let runs: Vec<std::result::Result<(f64, f64), servotune_core::Error>> = seeds
            .par_iter()
            .map(|&seed| {
                let mut src = TableSource::new(set.clone(), t.table.clone())?;
                let mut obj = WeightedObjective {
                    source: &mut src,
                    weights: oracle.weights,
                };
                let s = run_bo(&mut obj, &set, &BoConfig { seed, ..bo.clone() })?;
                let y = s.best().map(|e| e.y).unwrap_or(f64::INFINITY);
                Ok((s.iteration as f64, y))
            })
            .collect();
        let runs = runs.into_iter().collect::<std::result::Result<Vec<_>, _>>()?;
        let mut its: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let mut ys: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let cost_median = median(&mut ys);
        rows.push(SweepRow {
            m0,
            seeds: seeds.clone(),
            median_iterations: median(&mut its),
            cost_min: ys[0],
            cost_median,
            cost_max: ys[ys.len() - 1],
            median_ratio: cost_median / grid_min,
        });
    }

    let header: Vec<String> = ["m0", "repeats", "median_iterations", "cost_min", "cost_median", "cost_max", "median_ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.m0.to_string(),
                r.seeds.len().to_string(),
                num(r.median_iterations),
                num(r.cost_min),
                num(r.cost_median),
                num(r.cost_max),
                num(r.median_ratio),
            ]
        })
        .collect();
    println!("{:>6} {:>10} {:>12} {:>12}", "m0", "median it", "median f", "f / f_grid");
    for r in &rows {
        println!("{:>6} {:>10} {:>12.4} {:>12.6}", r.m0, r.median_iterations, r.cost_median, r.median_ratio);
    }
    let mut rec = RunRecord::new("sweep-m0", cfg);
    rec.grid_table = Some(t.key.clone());
    let (path, name) = artifact(&cfg.out, "sweep_m0.csv");
    write_csv(&path, &header, &body)?;
    rec.files.push(name);
    rec.sweep = rows;
    finish(&cfg.out, rec)
}
