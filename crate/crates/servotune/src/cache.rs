//! On-disk cache of grid metric tables, keyed by a hash of everything that
//! determines the metrics. Cost weights are not part of the key, so one
//! table serves every weight preset.

use std::path::{Path, PathBuf};

use serde::Serialize;
use servotune_core::metrics::{MetricConfig, MetricVector};
use servotune_core::oracle::{GainParametrization, SimulationOracle};
use servotune_core::plant::PlantParams;
use servotune_core::refgen::TrajectorySpec;
use servotune_core::simloop::{CurrentControllerGains, SimConfig};
use servotune_core::tuner::{metric_table, FeasibleSet};

use crate::config::hash_json;
use crate::error::Result;
use crate::output::{metric_cells, metric_columns, read_csv, write_csv};
use crate::parallel::ParallelOracle;

#[derive(Serialize)]
struct Key<'a> {
    plant: &'a PlantParams,
    current: &'a CurrentControllerGains,
    trajectory: &'a TrajectorySpec,
    sim: &'a SimConfig,
    metric: &'a MetricConfig,
    set: &'a FeasibleSet,
    parametrization: &'a GainParametrization,
}

pub fn table_key(oracle: &SimulationOracle, trajectory: &TrajectorySpec, set: &FeasibleSet) -> String {
    hash_json(&Key {
        plant: &oracle.plant,
        current: &oracle.current,
        trajectory,
        sim: &oracle.sim,
        metric: &oracle.metric,
        set,
        parametrization: &oracle.parametrization,
    })
}

pub fn table_path(cache_dir: &Path, key: &str) -> PathBuf {
    cache_dir.join(format!("grid-{key}.csv"))
}

fn load(path: &Path, n: usize) -> Option<Vec<MetricVector>> {
    let (header, rows) = read_csv(path).ok()?;
    let mut expect = vec!["index".to_string()];
    expect.extend(metric_columns());
    expect.push("diverged".into());
    if header != expect || rows.len() != n {
        return None;
    }
    let mut out = Vec::with_capacity(n);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != 15 || r[0].parse::<usize>().ok()? != i {
            return None;
        }
        let mut a = [0.0; 13];
        for (v, s) in a.iter_mut().zip(&r[1..14]) {
            *v = s.parse().ok()?;
        }
        out.push(MetricVector::from_array(a, r[14].parse().ok()?));
    }
    Some(out)
}

fn store(path: &Path, table: &[MetricVector]) -> Result<()> {
    let mut header = vec!["index".to_string()];
    header.extend(metric_columns());
    header.push("diverged".into());
    let rows: Vec<Vec<String>> = table
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut r = vec![i.to_string()];
            r.extend(metric_cells(m));
            r.push(m.diverged.to_string());
            r
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Grid metric table, from the cache when present.
pub struct CachedTable {
    pub table: Vec<MetricVector>,
    pub key: String,
    pub hit: bool,
}

pub fn grid_table(
    oracle: &SimulationOracle,
    trajectory: &TrajectorySpec,
    set: &FeasibleSet,
    cache_dir: &Path,
) -> Result<CachedTable> {
    let key = table_key(oracle, trajectory, set);
    let path = table_path(cache_dir, &key);
    if let Some(table) = load(&path, set.len()) {
        return Ok(CachedTable { table, key, hit: true });
    }
    let table = metric_table(&mut ParallelOracle::new(oracle.clone()), set)?;
    crate::output::ensure_dir(cache_dir)?;
    store(&path, &table)?;
    Ok(CachedTable { table, key, hit: false })
}
