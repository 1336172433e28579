//! Objective functions seen by the tuners.

use alloc::vec::Vec;

use crate::metrics::{cost, extract_metrics, CostWeights, MetricConfig, MetricVector};
use crate::plant::PlantParams;
use crate::refgen::ReferenceProfile;
use crate::simloop::{simulate, CurrentControllerGains, GainVector, SimConfig, SimTrace};
use crate::Result;

/// A black-box cost over gain vectors.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64>;

    /// Evaluates several points; implementations may run them in parallel
    /// but must return results in input order.
    fn evaluate_batch(&mut self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.evaluate(x)).collect()
    }
}

/// Adapts a closure into an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F: FnMut(&[f64]) -> Result<f64>> Objective for FnObjective<F> {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        (self.0)(x)
    }
}

/// Counts evaluations of an inner objective.
pub struct Counted<O> {
    pub inner: O,
    pub count: usize,
}

impl<O: Objective> Objective for Counted<O> {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        self.count += 1;
        self.inner.evaluate(x)
    }

    fn evaluate_batch(&mut self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.count += xs.len();
        self.inner.evaluate_batch(xs)
    }
}

/// How a point of the search box maps to controller gains.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum GainParametrization {
    /// `x = (Kp, Kv, Ki)`.
    KpKvKi,
    /// `x = (Kp, Kv, Tn)` with `Tn` in multiples of `time_unit` seconds.
    KpKvTn { time_unit: f64 },
}

impl GainParametrization {
    pub fn gains(&self, x: &[f64]) -> GainVector {
        match *self {
            GainParametrization::KpKvKi => GainVector::new(x[0], x[1], x[2]),
            GainParametrization::KpKvTn { time_unit } => GainVector::from_tn(x[0], x[1], x[2] * time_unit),
        }
    }

    pub fn point(&self, g: &GainVector) -> [f64; 3] {
        match *self {
            GainParametrization::KpKvKi => [g.kp, g.kv, g.ki],
            GainParametrization::KpKvTn { time_unit } => [g.kp, g.kv, g.kv / g.ki / time_unit],
        }
    }
}

/// Everything needed to score a gain vector by simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOracle {
    pub plant: PlantParams,
    pub current: CurrentControllerGains,
    pub profile: ReferenceProfile,
    pub sim: SimConfig,
    pub metric: MetricConfig,
    pub weights: CostWeights,
    pub parametrization: GainParametrization,
}

impl SimulationOracle {
    pub fn gains(&self, x: &[f64]) -> GainVector {
        self.parametrization.gains(x)
    }

    /// Simulates with explicit gains and optional config override.
    pub fn run_with(&self, gains: &GainVector, sim: &SimConfig) -> Result<(SimTrace, MetricVector)> {
        let tr = simulate(&self.plant, gains, &self.current, &self.profile, sim)?;
        let m = extract_metrics(&tr, &self.profile, &self.metric)?;
        Ok((tr, m))
    }

    pub fn run(&self, gains: &GainVector) -> Result<(SimTrace, MetricVector)> {
        self.run_with(gains, &self.sim)
    }

    /// Metric vector at a point of the search box. Pure in `self`.
    pub fn metrics(&self, x: &[f64]) -> Result<MetricVector> {
        Ok(self.run(&self.gains(x))?.1)
    }

    pub fn cost_of(&self, m: &MetricVector) -> f64 {
        cost(m, &self.weights)
    }
}

impl Objective for SimulationOracle {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let m = SimulationOracle::metrics(self, x)?;
        Ok(self.cost_of(&m))
    }
}

/// Source of metric vectors, either live simulation or a cached table.
pub trait MetricSource {
    fn metrics(&mut self, x: &[f64]) -> Result<MetricVector>;

    fn metrics_batch(&mut self, xs: &[Vec<f64>]) -> Result<Vec<MetricVector>> {
        xs.iter().map(|x| self.metrics(x)).collect()
    }
}

impl MetricSource for SimulationOracle {
    fn metrics(&mut self, x: &[f64]) -> Result<MetricVector> {
        SimulationOracle::metrics(self, x)
    }
}

/// Scores a [`MetricSource`] with fixed weights.
pub struct WeightedObjective<'a, S> {
    pub source: &'a mut S,
    pub weights: CostWeights,
}

impl<S: MetricSource> Objective for WeightedObjective<'_, S> {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        Ok(cost(&self.source.metrics(x)?, &self.weights))
    }

    fn evaluate_batch(&mut self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self
            .source
            .metrics_batch(xs)?
            .iter()
            .map(|m| cost(m, &self.weights))
            .collect())
    }
}
