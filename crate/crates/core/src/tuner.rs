//! Bayesian gain tuning over a candidate grid, and exhaustive grid search.
//!
//! The tuner follows the usual GP-LCB loop: a seeded Latin-hypercube
//! initial design, an NLML hyperparameter fit, then one evaluation per
//! iteration at the grid point minimizing the lower confidence bound.
//! It stops after a fixed budget or once it keeps proposing points next to
//! the incumbent.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gpr::{fit, fit_hyperparams_with, Dataset, FitOptions, GpHyperparams, GpPosterior, HyperBounds, InputScaler, TargetScaler};
use crate::metrics::MetricVector;
use crate::oracle::{MetricSource, Objective};
use crate::{Error, Result};

/// One search dimension with its candidate values `linspace(min, max, points)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(name: &str, min: f64, max: f64, points: usize) -> Self {
        Axis {
            name: name.to_string(),
            min,
            max,
            points,
        }
    }

    /// Axis whose grid is `max/points, 2 max/points, ..., max`.
    pub fn stepped(name: &str, max: f64, points: usize) -> Self {
        Axis::new(name, max / points as f64, max, points)
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.points == 1 {
            return self.min;
        }
        if i + 1 == self.points {
            return self.max;
        }
        self.min + (self.max - self.min) * i as f64 / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }

    /// Index of the grid value nearest to `v`.
    pub fn nearest(&self, v: f64) -> usize {
        if self.points == 1 {
            return 0;
        }
        let t = (v - self.min) / (self.max - self.min) * (self.points - 1) as f64;
        (t.round().max(0.0) as usize).min(self.points - 1)
    }
}

/// Box of admissible gains and its candidate grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeasibleSet {
    pub axes: Vec<Axis>,
}

impl FeasibleSet {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        let s = FeasibleSet { axes };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::param("feasible set", "needs at least one axis"));
        }
        for a in &self.axes {
            if !(a.min.is_finite() && a.max.is_finite() && a.min > 0.0 && a.min < a.max) {
                return Err(Error::param("feasible set", alloc::format!("axis {} needs 0 < min < max", a.name)));
            }
            if a.points < 2 {
                return Err(Error::param("feasible set", alloc::format!("axis {} needs >= 2 grid points", a.name)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of a flat index (last axis varies fastest).
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % a.points;
            flat /= a.points;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        self.axes.iter().zip(idx).fold(0, |acc, (a, &i)| acc * a.points + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.point_at(&self.unflatten(flat))
    }

    pub fn point_at(&self, idx: &[usize]) -> Vec<f64> {
        self.axes.iter().zip(idx).map(|(a, &i)| a.value(i)).collect()
    }

    /// Flat index of the grid point nearest to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = self.axes.iter().zip(x).map(|(a, &v)| a.nearest(v)).collect();
        self.flatten(&idx)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.axes.iter().zip(x).all(|(a, &v)| v >= a.min && v <= a.max)
    }

    /// Clamps `x` into the box; reports whether anything moved.
    pub fn clamp(&self, x: &[f64]) -> (Vec<f64>, bool) {
        let y: Vec<f64> = self.axes.iter().zip(x).map(|(a, &v)| v.clamp(a.min, a.max)).collect();
        let moved = y.iter().zip(x).any(|(a, b)| a != b);
        (y, moved)
    }

    pub fn scaler(&self) -> InputScaler {
        InputScaler {
            lo: self.axes.iter().map(|a| a.min).collect(),
            hi: self.axes.iter().map(|a| a.max).collect(),
        }
    }

    /// Chebyshev distance between two grid points, in cells.
    pub fn cell_distance(&self, a: usize, b: usize) -> usize {
        let (ia, ib) = (self.unflatten(a), self.unflatten(b));
        ia.iter().zip(&ib).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
    }
}

/// How `beta` evolves with the number of observations `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BetaSchedule {
    Constant,
    /// `beta * sqrt(ln m)`.
    SqrtLog,
}

/// Which spread the bound subtracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SpreadForm {
    /// `mu - beta * sd`.
    StdDev,
    /// `mu - beta * var`.
    Variance,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoConfig {
    pub m0: usize,
    pub beta: f64,
    pub beta_schedule: BetaSchedule,
    pub spread: SpreadForm,
    /// BO iterations after the initial design.
    pub max_iterations: usize,
    /// The run ends once more than this many consecutive proposals land
    /// near the incumbent.
    pub repeat_threshold: usize,
    /// "Near" radius, in grid cells (Chebyshev).
    pub neighborhood_radius: usize,
    pub seed: u64,
    /// Refit hyperparameters every this many iterations.
    pub refit_every: usize,
    /// When no candidate's bound undercuts the incumbent by more than this
    /// (standardized units), the incumbent itself is proposed.
    pub convergence_tol: f64,
    pub hyper_bounds: HyperBounds,
    pub hyper_starts: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            m0: 20,
            beta: 2.0,
            beta_schedule: BetaSchedule::Constant,
            spread: SpreadForm::StdDev,
            max_iterations: 60,
            repeat_threshold: 3,
            neighborhood_radius: 1,
            seed: 0,
            refit_every: 5,
            convergence_tol: 1e-3,
            hyper_bounds: HyperBounds::default(),
            hyper_starts: 8,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m0 < 3 {
            return Err(Error::param("m0", "must be >= 3"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::param("beta", "must be finite and >= 0"));
        }
        if self.repeat_threshold < 1 {
            return Err(Error::param("repeat_threshold", "must be >= 1"));
        }
        if self.refit_every < 1 {
            return Err(Error::param("refit_every", "must be >= 1"));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol >= 0.0) {
            return Err(Error::param("convergence_tol", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Effective multiplier with `m` observations.
    pub fn beta_at(&self, m: usize) -> f64 {
        match self.beta_schedule {
            BetaSchedule::Constant => self.beta,
            BetaSchedule::SqrtLog => self.beta * (m.max(2) as f64).ln().sqrt(),
        }
    }
}

/// `mu - beta * sd` at `x`.
pub fn lcb(g: &GpPosterior, x: &[f64], beta: f64) -> Result<f64> {
    lcb_with(g, x, beta, SpreadForm::StdDev)
}

pub fn lcb_with(g: &GpPosterior, x: &[f64], beta: f64, spread: SpreadForm) -> Result<f64> {
    let (mu, var) = g.predict(x)?;
    Ok(match spread {
        SpreadForm::StdDev => mu - beta * var.sqrt(),
        SpreadForm::Variance => mu - beta * var,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StopReason {
    MaxIterations,
    RepeatedIncumbent,
    OracleFailure(String),
}

/// One evaluated point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Evaluation {
    /// Flat grid index.
    pub index: usize,
    pub x: Vec<f64>,
    pub y: f64,
    /// Predicted mean and standard deviation (cost units) when proposed;
    /// absent for the initial design.
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    /// Incumbent index after this evaluation.
    pub incumbent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoState {
    pub history: Vec<Evaluation>,
    pub m0: usize,
    /// Completed BO iterations (evaluations after the initial design).
    pub iteration: usize,
    pub incumbent: usize,
    pub repeat_count: usize,
    pub hyper: Option<GpHyperparams>,
    pub scaler: TargetScaler,
    pub posterior: Option<GpPosterior>,
    pub stop: Option<StopReason>,
}

impl BoState {
    fn new(m0: usize) -> Self {
        BoState {
            history: Vec::new(),
            m0,
            iteration: 0,
            incumbent: 0,
            repeat_count: 0,
            hyper: None,
            scaler: TargetScaler { mean: 0.0, std: 1.0 },
            posterior: None,
            stop: None,
        }
    }

    pub fn best(&self) -> Option<&Evaluation> {
        self.history.get(self.incumbent)
    }

    pub fn evaluations(&self) -> usize {
        self.history.len()
    }

    fn push(&mut self, index: usize, x: Vec<f64>, y: f64, pred: Option<(f64, f64)>) {
        let m = self.history.len();
        if m == 0 || y < self.history[self.incumbent].y {
            self.incumbent = m;
        }
        self.history.push(Evaluation {
            index,
            x,
            y,
            mu: pred.map(|p| p.0),
            sigma: pred.map(|p| p.1),
            incumbent: self.incumbent,
        });
    }

    fn dataset(&self, set: &FeasibleSet) -> Result<Dataset> {
        let sc = set.scaler();
        let xs = self.history.iter().map(|e| sc.to_unit(&e.x)).collect();
        let ys = self.history.iter().map(|e| self.scaler.forward(e.y)).collect();
        Dataset::new(xs, ys)
    }
}

/// Latin-hypercube sample of `m` grid points: each axis is cut into `m`
/// strata, one index drawn per stratum, and strata paired at random.
pub fn latin_hypercube(set: &FeasibleSet, m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let cols: Vec<Vec<usize>> = set
        .axes
        .iter()
        .map(|a| {
            let mut c: Vec<usize> = (0..m)
                .map(|j| {
                    let u = (j as f64 + rng.random::<f64>()) / m as f64;
                    ((u * a.points as f64) as usize).min(a.points - 1)
                })
                .collect();
            c.shuffle(rng);
            c
        })
        .collect();
    (0..m)
        .map(|j| {
            let idx: Vec<usize> = cols.iter().map(|c| c[j]).collect();
            set.flatten(&idx)
        })
        .collect()
}

fn initial_hyper(d: usize) -> GpHyperparams {
    GpHyperparams::isotropic(1.0, 0.3, 0.05, d)
}

/// Candidate minimizing the bound; ties go to the lowest flat index. When
/// the best bound does not undercut the incumbent by `convergence_tol`, the
/// incumbent's own grid point is returned.
pub fn next_point(state: &BoState, set: &FeasibleSet, cfg: &BoConfig) -> Result<usize> {
    let post = state
        .posterior
        .as_ref()
        .ok_or_else(|| Error::Tuning("posterior not fitted".into()))?;
    if set.is_empty() {
        return Err(Error::param("feasible set", "empty grid"));
    }
    let sc = set.scaler();
    let beta = cfg.beta_at(state.history.len());
    let mut best = (0, f64::INFINITY);
    for flat in 0..set.len() {
        let v = lcb_with(post, &sc.to_unit(&set.point(flat)), beta, cfg.spread)?;
        if v < best.1 {
            best = (flat, v);
        }
    }
    if let Some(inc) = state.best() {
        if best.1 >= state.scaler.forward(inc.y) - cfg.convergence_tol {
            return Ok(inc.index);
        }
    }
    Ok(best.0)
}

/// Runs the full tuning loop.
///
/// Configuration errors are returned as `Err`. An oracle failure ends the
/// run early with [`StopReason::OracleFailure`] and the partial history.
pub fn run_bo(oracle: &mut impl Objective, set: &FeasibleSet, cfg: &BoConfig) -> Result<BoState> {
    cfg.validate()?;
    set.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = BoState::new(cfg.m0);
    let fit_opts = FitOptions {
        starts: cfg.hyper_starts,
        ..FitOptions::default()
    };

    let design = latin_hypercube(set, cfg.m0, &mut rng);
    let xs: Vec<Vec<f64>> = design.iter().map(|&i| set.point(i)).collect();
    let ys = match oracle.evaluate_batch(&xs) {
        Ok(ys) => ys,
        Err(e) => {
            state.stop = Some(StopReason::OracleFailure(e.to_string()));
            return Ok(state);
        }
    };
    for ((i, x), y) in design.into_iter().zip(xs).zip(ys) {
        state.push(i, x, y, None);
    }
    state.scaler = TargetScaler::fit(&state.history.iter().map(|e| e.y).collect::<Vec<_>>());
    let data = state.dataset(set)?;
    state.hyper = Some(fit_hyperparams_with(&data, &initial_hyper(set.dim()), &cfg.hyper_bounds, &fit_opts)?);

    let sc = set.scaler();
    loop {
        if state.iteration >= cfg.max_iterations {
            state.stop = Some(StopReason::MaxIterations);
            break;
        }
        let data = state.dataset(set)?;
        if state.iteration > 0 && state.iteration % cfg.refit_every == 0 {
            let init = state.hyper.clone().unwrap_or_else(|| initial_hyper(set.dim()));
            state.hyper = Some(fit_hyperparams_with(&data, &init, &cfg.hyper_bounds, &fit_opts)?);
        }
        let hyper = state.hyper.clone().expect("fitted after the initial design");
        state.posterior = Some(fit(&data, &hyper)?);

        let proposal = next_point(&state, set, cfg)?;
        let x = set.point(proposal);
        let (mu, var) = state.posterior.as_ref().expect("set above").predict(&sc.to_unit(&x))?;
        let pred = (state.scaler.inverse(mu), var.sqrt() * state.scaler.std);
        let incumbent_index = state.best().expect("design is non-empty").index;
        if set.cell_distance(proposal, incumbent_index) <= cfg.neighborhood_radius {
            state.repeat_count += 1;
        } else {
            state.repeat_count = 0;
        }
        let y = match oracle.evaluate(&x) {
            Ok(y) => y,
            Err(e) => {
                state.stop = Some(StopReason::OracleFailure(e.to_string()));
                break;
            }
        };
        state.push(proposal, x, y, Some(pred));
        state.iteration += 1;
        if state.repeat_count > cfg.repeat_threshold {
            state.stop = Some(StopReason::RepeatedIncumbent);
            break;
        }
    }
    Ok(state)
}

/// Exhaustive search result; `costs` is in flat grid order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridResult {
    pub best_index: usize,
    pub best_x: Vec<f64>,
    pub best_cost: f64,
    pub costs: Vec<f64>,
}

/// Index of the smallest value, lowest index on ties; NaN never wins.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if !(*v < values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

fn grid_result(set: &FeasibleSet, costs: Vec<f64>) -> Result<GridResult> {
    let best = argmin(&costs).ok_or_else(|| Error::Tuning("grid produced no finite cost".into()))?;
    Ok(GridResult {
        best_index: best,
        best_x: set.point(best),
        best_cost: costs[best],
        costs,
    })
}

const GRID_CHUNK: usize = 4096;

/// Evaluates every grid point.
pub fn grid_search(oracle: &mut impl Objective, set: &FeasibleSet) -> Result<GridResult> {
    set.validate()?;
    let n = set.len();
    let mut costs = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + GRID_CHUNK).min(n);
        let xs: Vec<Vec<f64>> = (start..end).map(|i| set.point(i)).collect();
        costs.extend(oracle.evaluate_batch(&xs)?);
        start = end;
    }
    grid_result(set, costs)
}

/// Metric vectors of every grid point, in flat order.
pub fn metric_table(source: &mut impl MetricSource, set: &FeasibleSet) -> Result<Vec<MetricVector>> {
    set.validate()?;
    let n = set.len();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + GRID_CHUNK).min(n);
        let xs: Vec<Vec<f64>> = (start..end).map(|i| set.point(i)).collect();
        out.extend(source.metrics_batch(&xs)?);
        start = end;
    }
    Ok(out)
}

/// Replays a precomputed metric table as a [`MetricSource`].
#[derive(Debug, Clone, PartialEq)]
pub struct TableSource {
    pub set: FeasibleSet,
    pub table: Vec<MetricVector>,
}

impl TableSource {
    pub fn new(set: FeasibleSet, table: Vec<MetricVector>) -> Result<Self> {
        if table.len() != set.len() {
            return Err(Error::DimensionMismatch {
                expected: set.len(),
                got: table.len(),
            });
        }
        Ok(TableSource { set, table })
    }
}

impl MetricSource for TableSource {
    fn metrics(&mut self, x: &[f64]) -> Result<MetricVector> {
        let i = self.set.nearest(x);
        let p = self.set.point(i);
        let on_grid = p
            .iter()
            .zip(x)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300));
        if !on_grid {
            return Err(Error::Oracle("point is not on the cached grid".into()));
        }
        Ok(self.table[i])
    }
}
