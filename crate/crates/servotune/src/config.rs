//! Run configuration: a TOML file of preset names and overrides, resolved
//! into core types.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use servotune_core::metrics::{CostWeights, MetricConfig};
use servotune_core::oracle::{GainParametrization, SimulationOracle};
use servotune_core::plant::PlantParams;
use servotune_core::presets;
use servotune_core::refgen::{generate_profile, TrajectorySpec};
use servotune_core::simloop::SimConfig;
use servotune_core::tuner::{BetaSchedule, BoConfig, FeasibleSet};

use crate::error::{config, CliError, Result};

pub const PLANT_PRESETS: &[&str] = &["paper-table1"];
pub const WEIGHT_PRESETS: &[&str] = &["paper-table2-sim", "paper-table-exp"];
pub const FEASIBLE_PRESETS: &[&str] = &["sim", "sim-full", "exp"];
pub const SIM_PRESETS: &[&str] = &["fast", "full"];

/// Partial [`BoConfig`]; unset fields keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoOverrides {
    pub m0: Option<usize>,
    pub beta: Option<f64>,
    pub beta_schedule: Option<BetaSchedule>,
    pub max_iterations: Option<usize>,
    pub repeat_threshold: Option<usize>,
    pub neighborhood_radius: Option<usize>,
    pub refit_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub m0: Vec<usize>,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            m0: vec![5, 20, 50],
            repeats: 20,
        }
    }
}

/// Everything a command needs. Every field has a default, so an empty file
/// is the desk study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Plant preset name.
    pub plant: String,
    /// Individual plant constants replacing the preset's values.
    pub plant_overrides: BTreeMap<String, f64>,
    pub trajectory: TrajectorySpec,
    /// Simulation preset: `fast` (rigid plant, 10 us step) or `full`.
    pub sim: String,
    /// Replaces the preset's integration step when set.
    pub substep: Option<f64>,
    pub weights: String,
    pub feasible: String,
    pub metric: MetricConfig,
    pub bo: BoOverrides,
    pub sweep: SweepConfig,
    /// Gains for `simulate`, in the feasible set's parametrization.
    pub gains: Option<[f64; 3]>,
    pub seed: u64,
    /// Output directory. Not part of the config hash.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            plant: "paper-table1".into(),
            plant_overrides: BTreeMap::new(),
            trajectory: presets::trajectory_desk(),
            sim: "fast".into(),
            substep: None,
            weights: "paper-table2-sim".into(),
            feasible: "sim".into(),
            metric: MetricConfig::default(),
            bo: BoOverrides::default(),
            sweep: SweepConfig::default(),
            gains: None,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

fn unknown(kind: &str, name: &str, known: &[&str]) -> CliError {
    config(format!("unknown {kind} preset `{name}` (known: {})", known.join(", ")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
    }

    pub fn plant_params(&self) -> Result<PlantParams> {
        let base = match self.plant.as_str() {
            "paper-table1" => presets::plant_table1(),
            other => return Err(unknown("plant", other, PLANT_PRESETS)),
        };
        if self.plant_overrides.is_empty() {
            return Ok(base);
        }
        let mut v = serde_json::to_value(base).expect("plant params serialize");
        let map = v.as_object_mut().expect("struct serializes to a map");
        for (k, val) in &self.plant_overrides {
            if !map.contains_key(k) {
                return Err(config(format!("unknown plant parameter `{k}`")));
            }
            map.insert(k.clone(), serde_json::json!(val));
        }
        let p: PlantParams = serde_json::from_value(v).map_err(|e| config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut s = match self.sim.as_str() {
            "fast" => SimConfig::fast(),
            "full" => SimConfig::default(),
            other => return Err(unknown("sim", other, SIM_PRESETS)),
        };
        if let Some(h) = self.substep {
            s.substep = h;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn cost_weights(&self) -> Result<CostWeights> {
        match self.weights.as_str() {
            "paper-table2-sim" => Ok(presets::weights_sim()),
            "paper-table-exp" => Ok(presets::weights_exp()),
            other => Err(unknown("weights", other, WEIGHT_PRESETS)),
        }
    }

    pub fn feasible_set(&self) -> Result<(FeasibleSet, GainParametrization)> {
        match self.feasible.as_str() {
            "sim" => Ok((presets::feasible_sim(), GainParametrization::KpKvKi)),
            "sim-full" => Ok((presets::feasible_sim_with(280, 90, 100), GainParametrization::KpKvKi)),
            "exp" => Ok((presets::feasible_exp(), presets::parametrization_exp())),
            other => Err(unknown("feasible", other, FEASIBLE_PRESETS)),
        }
    }

    pub fn bo_config(&self) -> Result<BoConfig> {
        let d = BoConfig::default();
        let o = &self.bo;
        let c = BoConfig {
            m0: o.m0.unwrap_or(d.m0),
            beta: o.beta.unwrap_or(d.beta),
            beta_schedule: o.beta_schedule.unwrap_or(d.beta_schedule),
            max_iterations: o.max_iterations.unwrap_or(d.max_iterations),
            repeat_threshold: o.repeat_threshold.unwrap_or(d.repeat_threshold),
            neighborhood_radius: o.neighborhood_radius.unwrap_or(d.neighborhood_radius),
            refit_every: o.refit_every.unwrap_or(d.refit_every),
            seed: self.seed,
            ..d
        };
        c.validate()?;
        Ok(c)
    }

    pub fn oracle(&self) -> Result<SimulationOracle> {
        let sim = self.sim_config()?;
        let (_, parametrization) = self.feasible_set()?;
        Ok(SimulationOracle {
            plant: self.plant_params()?,
            current: presets::current_gains_table1(),
            profile: generate_profile(&self.trajectory, sim.controller_period)?,
            sim,
            metric: self.metric,
            weights: self.cost_weights()?,
            parametrization,
        })
    }

    /// Checks every preset name and derived object.
    pub fn validate(&self) -> Result<()> {
        self.oracle()?;
        self.bo_config()?;
        if self.sweep.repeats == 0 || self.sweep.m0.is_empty() {
            return Err(config("sweep needs at least one m0 value and one repeat"));
        }
        Ok(())
    }

    /// The config as stored in records: output directory cleared.
    pub fn canonical(&self) -> RunConfig {
        RunConfig {
            out: PathBuf::new(),
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical config in JSON.
    pub fn hash(&self) -> String {
        hash_json(&self.canonical())
    }
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value).expect("config serializes");
    format!("{:x}", Sha256::digest(bytes))
}

/// Parses `a,b,c` into three numbers.
pub fn parse_triple(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(config(format!("expected three comma-separated numbers, got `{s}`")));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| config(format!("`{p}` is not a number")))?;
    }
    Ok(out)
}

pub fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| config(format!("`{p}` is not a count"))))
        .collect()
}
