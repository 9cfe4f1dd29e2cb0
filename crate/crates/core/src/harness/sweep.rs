//! Cartesian parameter sweeps over dotted config paths.
//!
//! A grid is a JSON object mapping a dotted path to a list of values:
//!
//! ```json
//! { "learner.alpha": [0.0, 0.25],
//!   "process.drift.gamma,learner.gamma": [1e-4, 1e-3] }
//! ```
//!
//! A key naming several comma-separated paths assigns each value to all of
//! them; a value may also be an array with one entry per path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::config::{short_hash, ConfigError, Experiment, ExperimentConfig, SCHEMA_VERSION};
use super::run::{simulate, RunRecord};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub paths: Vec<String>,
    /// One assignment per grid value, with one entry per path.
    pub values: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axes: Vec<Axis>,
    canonical: String,
}

impl SweepGrid {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::new("grid", e.to_string()))?;
        let Value::Object(map) = &value else {
            return Err(ConfigError::new("grid", "must be a JSON object of path -> values"));
        };
        if map.is_empty() {
            return Err(ConfigError::new("grid", "grid is empty"));
        }
        let mut axes = Vec::new();
        for (key, vals) in map {
            let paths: Vec<String> = key.split(',').map(|p| p.trim().to_string()).collect();
            if paths.iter().any(|p| p.is_empty()) {
                return Err(ConfigError::new(format!("grid.{key}"), "empty path"));
            }
            let Value::Array(list) = vals else {
                return Err(ConfigError::new(format!("grid.{key}"), "values must be an array"));
            };
            if list.is_empty() {
                return Err(ConfigError::new(format!("grid.{key}"), "no values"));
            }
            let values = list
                .iter()
                .map(|v| match v {
                    Value::Array(parts) if paths.len() > 1 => {
                        if parts.len() == paths.len() {
                            Ok(parts.clone())
                        } else {
                            Err(ConfigError::new(
                                format!("grid.{key}"),
                                format!("tuple {v} needs {} entries", paths.len()),
                            ))
                        }
                    }
                    other => Ok(vec![other.clone(); paths.len()]),
                })
                .collect::<Result<Vec<_>, _>>()?;
            axes.push(Axis { paths, values });
        }
        Ok(SweepGrid {
            axes,
            canonical: value.to_string(),
        })
    }

    pub fn cells(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Every path in axis order.
    pub fn columns(&self) -> Vec<String> {
        self.axes.iter().flat_map(|a| a.paths.iter().cloned()).collect()
    }

    /// Assignments of every cell, first axis varying slowest.
    pub fn assignments(&self) -> Vec<Vec<(String, Value)>> {
        let mut out: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(out.len() * axis.values.len());
            for prefix in &out {
                for vals in &axis.values {
                    let mut cell = prefix.clone();
                    cell.extend(axis.paths.iter().cloned().zip(vals.iter().cloned()));
                    next.push(cell);
                }
            }
            out = next;
        }
        out
    }
}

fn assign(target: &mut Value, path: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = target;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .get_mut(*p)
            .filter(|v| v.is_object())
            .ok_or_else(|| ConfigError::new(format!("grid.{path}"), "not a recognised config path"))?;
    }
    let Value::Object(map) = cur else {
        return Err(ConfigError::new(format!("grid.{path}"), "not a recognised config path"));
    };
    map.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub cell: usize,
    pub config_hash: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub table: PathBuf,
    pub manifest: PathBuf,
    pub records: Vec<Option<RunRecord>>,
    pub failures: Vec<SweepFailure>,
}

pub const SWEEP_FIXED_COLUMNS: [&str; 6] = [
    "config_hash",
    "status",
    "exponent",
    "theoretical",
    "final_cum_excess",
    "avg_excess",
];

/// Validates every cell before running any, then runs them in grid order.
pub fn sweep(base: &ExperimentConfig, grid: &SweepGrid, out_root: &Path) -> Result<SweepOutcome, HarnessError> {
    let base_value = serde_json::to_value(base).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let assignments = grid.assignments();
    let mut experiments: Vec<Experiment> = Vec::with_capacity(assignments.len());
    for cell in &assignments {
        let mut v = base_value.clone();
        for (path, value) in cell {
            assign(&mut v, path, value.clone())?;
        }
        let cfg = ExperimentConfig::from_value(v)?;
        experiments.push(cfg.build()?);
    }

    let sweep_hash = short_hash(format!("{}|{}", base.hash(), grid.canonical).as_bytes());
    fs::create_dir_all(out_root)?;
    let mut records = Vec::with_capacity(experiments.len());
    let mut failures = Vec::new();
    for (i, exp) in experiments.iter().enumerate() {
        match simulate(exp, out_root) {
            Ok(r) => records.push(Some(r)),
            Err(e) => {
                failures.push(SweepFailure {
                    cell: i,
                    config_hash: exp.hash.clone(),
                    error: e.to_string(),
                });
                records.push(None);
            }
        }
    }

    let table = out_root.join(format!("sweep-{sweep_hash}.csv"));
    let mut body = format!("# driftlab sweep schema={SCHEMA_VERSION} config={sweep_hash}\n");
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = grid.columns();
        header.extend(SWEEP_FIXED_COLUMNS.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for ((cell, exp), rec) in assignments.iter().zip(&experiments).zip(&records) {
            let mut row: Vec<String> = cell
                .iter()
                .map(|(_, v)| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            row.push(exp.hash.clone());
            match rec {
                Some(r) => {
                    row.push("ok".into());
                    row.push(r.fit.as_ref().map_or(String::new(), |f| f.exponent.to_string()));
                    row.push(exp.theoretical.map_or(String::new(), |t| t.to_string()));
                    row.push(r.final_cum_excess.to_string());
                    row.push(r.avg_excess.to_string());
                }
                None => {
                    row.push("failed".into());
                    row.extend(std::iter::repeat_n(String::new(), 4));
                }
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Runtime(e.to_string()))?;
        body.push_str(&String::from_utf8_lossy(&bytes));
    }
    fs::write(&table, body)?;

    let manifest = out_root.join(format!("sweep-{sweep_hash}-failures.json"));
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "schema": SCHEMA_VERSION,
        "sweep_hash": sweep_hash,
        "failures": failures,
    }))
    .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    fs::write(&manifest, text + "\n")?;

    Ok(SweepOutcome {
        table,
        manifest,
        records,
        failures,
    })
}
