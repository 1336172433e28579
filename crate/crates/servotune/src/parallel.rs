//! Data-parallel evaluation of a simulator oracle. Results come back in
//! input order, so runs are identical to sequential ones.

use rayon::prelude::*;
use servotune_core::metrics::MetricVector;
use servotune_core::oracle::{MetricSource, Objective, SimulationOracle};
use servotune_core::Result;

#[derive(Debug, Clone)]
pub struct ParallelOracle {
    pub inner: SimulationOracle,
}

impl ParallelOracle {
    pub fn new(inner: SimulationOracle) -> Self {
        ParallelOracle { inner }
    }
}

impl MetricSource for ParallelOracle {
    fn metrics(&mut self, x: &[f64]) -> Result<MetricVector> {
        self.inner.metrics(x)
    }

    fn metrics_batch(&mut self, xs: &[Vec<f64>]) -> Result<Vec<MetricVector>> {
        let o = &self.inner;
        xs.par_iter().map(|x| o.metrics(x)).collect()
    }
}

impl Objective for ParallelOracle {
    fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let m = self.inner.metrics(x)?;
        Ok(self.inner.cost_of(&m))
    }

    fn evaluate_batch(&mut self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.metrics_batch(xs)?.iter().map(|m| self.inner.cost_of(m)).collect())
    }
}
