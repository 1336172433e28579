//! Named parameter sets shipped with the crate.

use alloc::vec;

use crate::metrics::{CostWeights, MetricConfig, PositionMetrics, SpeedMetrics};
use crate::oracle::{GainParametrization, SimulationOracle};
use crate::plant::PlantParams;
use crate::refgen::{generate_profile, TrajectorySpec};
use crate::simloop::{CurrentControllerGains, SimConfig};
use crate::tuner::{Axis, FeasibleSet};
use crate::Result;

/// Reference drive: motor, screw and current controller.
pub fn plant_table1() -> PlantParams {
    PlantParams::table1()
}

pub fn current_gains_table1() -> CurrentControllerGains {
    CurrentControllerGains::table1()
}

/// Weights used for the simulation study.
pub fn weights_sim() -> CostWeights {
    CostWeights {
        position: PositionMetrics {
            settling_time: 1e5,
            overshoot: 1e2,
            inf_norm: 1e3,
            ..Default::default()
        },
        speed: SpeedMetrics {
            settling_time: 5e2,
            overshoot: 2.0,
            inf_norm: 5e2,
            itae: 1e4,
            ..Default::default()
        },
        divergence_penalty: CostWeights::DEFAULT_PENALTY,
    }
}

/// Weights used on the physical test bench.
pub fn weights_exp() -> CostWeights {
    CostWeights {
        position: PositionMetrics {
            settling_time: 20.0,
            overshoot: 5e4,
            inf_norm: 5e4,
            zero_error: 1e5,
            ..Default::default()
        },
        speed: SpeedMetrics {
            settling_time: 20.0,
            overshoot: 1e3,
            itae: 2.5e5,
            steady_state: 5e2,
            undershoot: 2e3,
            ..Default::default()
        },
        divergence_penalty: CostWeights::DEFAULT_PENALTY,
    }
}

/// Simulation gain box `Kp <= 4200`, `Kv <= 0.5`, `Ki <= 900` on the
/// desk-scale 28 x 10 x 10 grid (each axis starts at its first step).
pub fn feasible_sim() -> FeasibleSet {
    feasible_sim_with(28, 10, 10)
}

/// Simulation box at an arbitrary resolution; `(280, 90, 100)` is the
/// full-resolution grid.
pub fn feasible_sim_with(n_kp: usize, n_kv: usize, n_ki: usize) -> FeasibleSet {
    FeasibleSet {
        axes: vec![
            Axis::stepped("kp", 4200.0, n_kp),
            Axis::stepped("kv", 0.5, n_kv),
            Axis::stepped("ki", 900.0, n_ki),
        ],
    }
}

/// Test-bench box `Kp in (0, 65000]`, `Kv in (0, 7000]`, `Tn in (1000, 40000]`.
pub fn feasible_exp() -> FeasibleSet {
    FeasibleSet {
        axes: vec![
            Axis::stepped("kp", 65000.0, 26),
            Axis::stepped("kv", 7000.0, 14),
            Axis::new("tn", 1000.0 + 39000.0 / 13.0, 40000.0, 13),
        ],
    }
}

/// Parametrization matching [`feasible_exp`]: `Tn` in microseconds.
pub fn parametrization_exp() -> GainParametrization {
    GainParametrization::KpKvTn { time_unit: 1e-6 }
}

/// Desk-scale tuning move: 0.1 m out and back at up to 1 m/s with
/// 20 m/s^2 ramps and 0.3 s holds.
pub fn trajectory_desk() -> TrajectorySpec {
    TrajectorySpec {
        position_setpoint: 0.1,
        speed_setpoint: 1.0,
        acceleration: 20.0,
        deceleration: 20.0,
        dwell_time: 0.3,
        return_to_zero: true,
    }
}

/// The full simulator oracle of the desk study.
pub fn desk_oracle(sim: SimConfig) -> Result<SimulationOracle> {
    let profile = generate_profile(&trajectory_desk(), sim.controller_period)?;
    Ok(SimulationOracle {
        plant: plant_table1(),
        current: current_gains_table1(),
        profile,
        sim,
        metric: MetricConfig::default(),
        weights: weights_sim(),
        parametrization: GainParametrization::KpKvKi,
    })
}
