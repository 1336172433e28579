//! The JSON record written by every command.

use serde::{Deserialize, Serialize};
use servotune_core::baselines::TuningResult;
use servotune_core::gpr::GpHyperparams;
use servotune_core::metrics::MetricVector;
use servotune_core::simloop::GainVector;

use crate::config::RunConfig;

/// One evaluation of a tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    /// 1-based evaluation count.
    pub m: usize,
    pub x: Vec<f64>,
    pub y: f64,
    /// Prediction at the proposal; absent for the initial design.
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub incumbent_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m0: usize,
    pub seeds: Vec<u64>,
    /// Median number of evaluations after the initial design.
    pub median_iterations: f64,
    pub cost_min: f64,
    pub cost_median: f64,
    pub cost_max: f64,
    /// Median incumbent cost over the grid minimum.
    pub median_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    /// RFC 3339 wall-clock time; the only field that differs between
    /// replays of the same config.
    pub timestamp: String,
    pub config: RunConfig,
    /// Cache key of the grid table used, if any.
    pub grid_table: Option<String>,
    pub iterations: Vec<IterationRow>,
    pub stop: Option<String>,
    pub hyperparameters: Option<GpHyperparams>,
    pub methods: Vec<TuningResult>,
    pub sweep: Vec<SweepRow>,
    pub final_gains: Option<GainVector>,
    pub final_metrics: Option<MetricVector>,
    pub final_cost: Option<f64>,
    /// Files written next to the record, relative to the output directory.
    pub files: Vec<String>,
}

impl RunRecord {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunRecord {
            command: command.into(),
            config_hash: config.hash(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            config: config.canonical(),
            grid_table: None,
            iterations: Vec::new(),
            stop: None,
            hyperparameters: None,
            methods: Vec::new(),
            sweep: Vec::new(),
            final_gains: None,
            final_metrics: None,
            final_cost: None,
            files: Vec::new(),
        }
    }

    /// Serialized record with the timestamp blanked; equal across replays.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut r = self.clone();
        r.timestamp.clear();
        serde_json::to_vec(&r).expect("record serializes")
    }
}
