//! Single-config runs and the files they leave behind.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Experiment, SCHEMA_VERSION};
use super::HarnessError;
use crate::evaluation::{benchmark, fit_cumulative, run_seed, RateFit, RegretCurve, SeedRun};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SEED_CURVE_HEADER: [&str; 7] = ["t", "risk", "inf_risk", "excess", "cum_excess", "k", "m"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub schema: u32,
    pub config_hash: String,
    pub checkpoints: Vec<usize>,
    pub fit: Option<RateFit>,
    /// Why the fit was skipped, when it was.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub version: String,
    pub config_hash: String,
    pub learner: String,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub curve_files: Vec<String>,
    pub aggregate_file: String,
    pub fit: Option<RateFit>,
    pub fit_skipped: Option<String>,
    pub final_cum_excess: f64,
    /// Mean per-step excess after the learner's warm-up.
    pub avg_excess: f64,
    pub wall_clock_secs: f64,
}

fn comment(kind: &str, hash: &str) -> String {
    format!("# driftlab {kind} schema={SCHEMA_VERSION} config={hash}\n")
}

pub fn run_dir(out_root: &Path, hash: &str) -> PathBuf {
    out_root.join(hash)
}

/// Runs every seed, streaming `curve-<seed>.csv` as it goes, then writes the
/// aggregate curve, the fit and a summary.
pub fn simulate(exp: &Experiment, out_root: &Path) -> Result<RunRecord, HarnessError> {
    let started = Instant::now();
    let cfg = &exp.config;
    let dir = run_dir(out_root, &exp.hash);
    fs::create_dir_all(&dir)?;

    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_one(exp, &dir, seed))
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let learner = exp.learner.as_ref();
    let bench = benchmark(&exp.model, learner.class(), cfg.horizon)?;
    let windows = (1..=cfg.horizon).map(|t| learner.window(t)).collect();
    let curve = RegretCurve::new(runs, bench, windows)?;

    let aggregate = dir.join("curve.csv");
    let mut w = BufWriter::new(File::create(&aggregate)?);
    w.write_all(comment("curve", &exp.hash).as_bytes())?;
    curve.write_csv(&mut w)?;
    w.flush()?;

    let cum = curve.cumulative_excess();
    let (fit, skipped) = match fit_cumulative(&cum, &exp.fit_points, exp.theoretical) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let fit_record = FitRecord {
        schema: SCHEMA_VERSION,
        config_hash: exp.hash.clone(),
        checkpoints: exp.fit_points.clone(),
        fit: fit.clone(),
        skipped: skipped.clone(),
    };
    write_json(&dir.join("fit.json"), &fit_record)?;

    let horizon = cfg.horizon;
    let warm = learner.warmup().min(horizon - 1);
    let final_cum = cum[horizon - 1];
    let avg_excess = if warm == 0 {
        final_cum / horizon as f64
    } else {
        (final_cum - cum[warm - 1]) / (horizon - warm) as f64
    };
    let record = RunRecord {
        schema: SCHEMA_VERSION,
        version: VERSION.to_string(),
        config_hash: exp.hash.clone(),
        learner: learner.name().to_string(),
        horizon,
        seeds: cfg.seeds.clone(),
        curve_files: cfg.seeds.iter().map(|s| format!("curve-{s}.csv")).collect(),
        aggregate_file: "curve.csv".into(),
        fit,
        fit_skipped: skipped,
        final_cum_excess: final_cum,
        avg_excess,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    fs::write(dir.join("summary.txt"), summary(exp, &record))?;
    write_json(&dir.join("record.json"), &record)?;
    Ok(record)
}

fn run_one(exp: &Experiment, dir: &Path, seed: u64) -> Result<SeedRun, HarnessError> {
    let path = dir.join(format!("curve-{seed}.csv"));
    let mut w = BufWriter::new(File::create(&path)?);
    w.write_all(comment(&format!("seed-curve seed={seed}"), &exp.hash).as_bytes())?;
    writeln!(w, "{}", SEED_CURVE_HEADER.join(","))?;
    let mut cum = 0.0;
    let run = run_seed(&exp.model, exp.learner.as_ref(), exp.config.horizon, seed, |s| {
        let excess = (s.risk - s.inf_risk).max(0.0);
        cum += excess;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t, s.risk, s.inf_risk, excess, cum, s.window.k, s.window.m
        )?;
        // partial curves survive interruption
        if s.t.is_power_of_two() {
            w.flush()?;
        }
        Ok(())
    })?;
    w.flush()?;
    Ok(run)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn summary(exp: &Experiment, rec: &RunRecord) -> String {
    let mut s = String::new();
    s.push_str(&comment("summary", &exp.hash));
    s.push_str(&format!("driftlab {}\n", rec.version));
    s.push_str(&format!("learner          {}\n", rec.learner));
    s.push_str(&format!("horizon          {}\n", rec.horizon));
    s.push_str(&format!("seeds            {}\n", rec.seeds.len()));
    s.push_str(&format!("final cum excess {:.6}\n", rec.final_cum_excess));
    s.push_str(&format!("avg excess       {:.6}\n", rec.avg_excess));
    match (&rec.fit, &rec.fit_skipped) {
        (Some(f), _) => {
            s.push_str(&format!(
                "fitted exponent  {:.4} over T in [{}, {}] ({} points, residual {:.4})\n",
                f.exponent, f.t_min, f.t_max, f.points, f.residual_norm
            ));
            if let Some(th) = f.theoretical {
                s.push_str(&format!("theoretical      {th:.4}\n"));
            }
        }
        (None, Some(reason)) => s.push_str(&format!("fit skipped      {reason}\n")),
        (None, None) => {}
    }
    s.push_str(&format!("wall clock       {:.2}s\n", rec.wall_clock_secs));
    s
}

/// Reads the `cum_excess` column of a curve CSV (aggregate or per-seed).
pub fn read_cumulative(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let file = BufReader::new(File::open(path)?);
    let body: String = file
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.starts_with('#')))
        .collect::<Result<Vec<_>, _>>()?
        .join("\n");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let headers = reader.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "cum_excess")
        .ok_or_else(|| HarnessError::Runtime(format!("{} has no cum_excess column", path.display())))?;
    let t_col = headers.iter().position(|h| h == "t");
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if let Some(tc) = t_col {
            let t: usize = row[tc]
                .parse()
                .map_err(|e| HarnessError::Runtime(format!("row {}: bad t: {e}", i + 1)))?;
            if t != i + 1 {
                return Err(HarnessError::Runtime(format!(
                    "row {} has t={t}; rows must be consecutive",
                    i + 1
                )));
            }
        }
        out.push(
            row[col]
                .parse()
                .map_err(|e| HarnessError::Runtime(format!("row {}: bad cum_excess: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// Re-fits the growth exponent of an existing curve file.
pub fn refit(path: &Path, checkpoints: &[usize], theoretical: Option<f64>) -> Result<RateFit, HarnessError> {
    let cum = read_cumulative(path)?;
    Ok(fit_cumulative(&cum, checkpoints, theoretical)?)
}
