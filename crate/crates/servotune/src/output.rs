//! CSV and JSON writers. Every CSV has a header row and a fixed column
//! order; floats use Rust's shortest round-trip formatting.

use std::fs;
use std::path::{Path, PathBuf};

use servotune_core::metrics::{MetricVector, PositionMetrics, SpeedMetrics};
use servotune_core::simloop::SimTrace;

use crate::error::{CliError, Result};

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(write_err(dir))
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes `header` and `rows` to `path`.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(write_err(path))
}

pub fn read_csv(path: &Path) -> std::result::Result<(Vec<String>, Vec<Vec<String>>), csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("record serializes");
    text.push('\n');
    fs::write(path, text).map_err(write_err(path))
}

pub const TRACE_COLUMNS: [&str; 13] = [
    "t",
    "r_pos",
    "y_pos",
    "r_speed",
    "y_speed",
    "e_pos",
    "e_speed",
    "current",
    "current_ref",
    "voltage",
    "load_pos",
    "load_speed",
    "omega_m",
];

pub fn write_trace(path: &Path, tr: &SimTrace) -> Result<()> {
    let header: Vec<String> = TRACE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = (0..tr.len())
        .map(|k| {
            [
                tr.time[k],
                tr.r_pos[k],
                tr.y_pos[k],
                tr.r_speed[k],
                tr.y_speed[k],
                tr.e_pos[k],
                tr.e_speed[k],
                tr.current[k],
                tr.current_ref[k],
                tr.voltage[k],
                tr.load_pos[k],
                tr.load_speed[k],
                tr.omega_m[k],
            ]
            .iter()
            .map(|v| num(*v))
            .collect()
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// `pos_<name>` then `speed_<name>` columns, matching [`MetricVector::to_array`].
pub fn metric_columns() -> Vec<String> {
    PositionMetrics::NAMES
        .iter()
        .map(|n| format!("pos_{n}"))
        .chain(SpeedMetrics::NAMES.iter().map(|n| format!("speed_{n}")))
        .collect()
}

pub fn metric_cells(m: &MetricVector) -> Vec<String> {
    m.to_array().iter().map(|v| num(*v)).collect()
}

/// `dir/name`, plus the relative name for records.
pub fn artifact(dir: &Path, name: &str) -> (PathBuf, String) {
    (dir.join(name), name.to_string())
}
