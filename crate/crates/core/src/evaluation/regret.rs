use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::hypotheses::FunctionClass;
use crate::learners::{Learner, Window};
use crate::processes::{sample_path, ProcessModel};
use crate::{Error, Result};

/// Slack allowed on `risk >= inf_risk` before a step counts as invalid.
pub const EXCESS_TOLERANCE: f64 = 1e-12;

/// Two-sided 95% normal quantile used for confidence bands.
pub const CI_Z: f64 = 1.96;

/// `alpha + (1 - alpha)(3 + 3r)/(3 + 4r)`.
pub fn theoretical_exponent(alpha: f64, r: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("must lie in [0,1), got {alpha}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param("r", format!("must be positive and finite, got {r}")));
    }
    Ok(alpha + (1.0 - alpha) * (3.0 + 3.0 * r) / (3.0 + 4.0 * r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub risk: f64,
    pub inf_risk: f64,
    pub window: Window,
}

/// Per-step exact risks for one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub risks: Vec<f64>,
}

/// Checks that `class` has exact risks under every marginal of `model` up
/// to `horizon` and returns the benchmark `inf_risk(class, P_t)`.
pub fn benchmark(model: &ProcessModel, class: &FunctionClass, horizon: usize) -> Result<Vec<f64>> {
    if horizon < 1 {
        return Err(Error::param("horizon", "must be at least 1"));
    }
    if horizon > model.len() {
        return Err(Error::HorizonTooLong {
            horizon,
            available: model.len(),
        });
    }
    model.marginals()[..horizon].iter().map(|p| class.inf_risk(p)).collect()
}

/// Runs `learner` along one sample path, recording `risk(f_t, P_t)` exactly.
/// `on_step` sees every step as soon as it is computed.
pub fn run_seed<L: Learner + ?Sized>(
    model: &ProcessModel,
    learner: &L,
    horizon: usize,
    seed: u64,
    mut on_step: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<SeedRun> {
    let bench = benchmark(model, learner.class(), horizon)?;
    let path = sample_path(model, horizon, seed)?.observations;
    let mut risks = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let h = learner.predict(&path[..t - 1], t)?;
        let risk = learner.class().risk(&h, model.marginal(t))?;
        let step = StepRecord {
            t,
            risk,
            inf_risk: bench[t - 1],
            window: learner.window(t),
        };
        on_step(&step)?;
        risks.push(risk);
    }
    Ok(SeedRun { seed, risks })
}

/// One [`run_seed`] per seed, in parallel; the result is ordered like `seeds`.
pub fn run_experiment<L: Learner + ?Sized>(
    model: &ProcessModel,
    learner: &L,
    horizon: usize,
    seeds: &[u64],
) -> Result<RegretCurve> {
    if seeds.is_empty() {
        return Err(Error::param("seeds", "need at least one seed"));
    }
    let bench = benchmark(model, learner.class(), horizon)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| run_seed(model, learner, horizon, seed, |_| Ok(())))
        .collect::<Result<Vec<_>>>()?;
    let windows = (1..=horizon).map(|t| learner.window(t)).collect();
    RegretCurve::new(runs, bench, windows)
}

/// Exact conditional risks of one learner over seeds, with the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretCurve {
    runs: Vec<SeedRun>,
    benchmark: Vec<f64>,
    windows: Vec<Window>,
}

impl RegretCurve {
    pub fn new(runs: Vec<SeedRun>, benchmark: Vec<f64>, windows: Vec<Window>) -> Result<Self> {
        let horizon = benchmark.len();
        if runs.is_empty() || horizon == 0 {
            return Err(Error::EmptySample);
        }
        if windows.len() != horizon {
            return Err(Error::HistoryLength {
                expected: horizon,
                got: windows.len(),
            });
        }
        for run in &runs {
            if run.risks.len() != horizon {
                return Err(Error::HistoryLength {
                    expected: horizon,
                    got: run.risks.len(),
                });
            }
            for (t, (r, b)) in run.risks.iter().zip(&benchmark).enumerate() {
                if !(0.0..=1.0).contains(r) || r - b < -EXCESS_TOLERANCE {
                    return Err(Error::param(
                        "risks",
                        format!("seed {} step {}: risk {r} against benchmark {b}", run.seed, t + 1),
                    ));
                }
            }
        }
        Ok(RegretCurve {
            runs,
            benchmark,
            windows,
        })
    }

    pub fn horizon(&self) -> usize {
        self.benchmark.len()
    }

    pub fn replicates(&self) -> usize {
        self.runs.len()
    }

    pub fn runs(&self) -> &[SeedRun] {
        &self.runs
    }

    pub fn benchmark(&self) -> &[f64] {
        &self.benchmark
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    /// Per-step excess of one run, with rounding noise below zero clamped.
    pub fn excess(&self, run: usize) -> Vec<f64> {
        self.runs[run]
            .risks
            .iter()
            .zip(&self.benchmark)
            .map(|(r, b)| (r - b).max(0.0))
            .collect()
    }

    pub fn cumulative_excess_of(&self, run: usize) -> Vec<f64> {
        prefix(&self.excess(run))
    }

    pub fn mean_risk(&self) -> Vec<f64> {
        let n = self.replicates() as f64;
        let mut out = vec![0.0; self.horizon()];
        for run in &self.runs {
            for (o, r) in out.iter_mut().zip(&run.risks) {
                *o += r;
            }
        }
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// Mean over seeds of the cumulative excess.
    pub fn cumulative_excess(&self) -> Vec<f64> {
        let n = self.replicates() as f64;
        let mut out = vec![0.0; self.horizon()];
        for i in 0..self.replicates() {
            for (o, c) in out.iter_mut().zip(self.cumulative_excess_of(i)) {
                *o += c;
            }
        }
        out.iter_mut().for_each(|o| *o /= n);
        // summation order can break monotonicity by an ulp
        for t in 1..out.len() {
            out[t] = out[t].max(out[t - 1]);
        }
        out
    }

    /// Standard error across seeds of the cumulative excess at every `t`.
    pub fn standard_error(&self) -> Vec<f64> {
        let n = self.replicates();
        if n < 2 {
            return vec![0.0; self.horizon()];
        }
        let per_run: Vec<Vec<f64>> = (0..n).map(|i| self.cumulative_excess_of(i)).collect();
        (0..self.horizon())
            .map(|t| {
                let mean = per_run.iter().map(|c| c[t]).sum::<f64>() / n as f64;
                let var = per_run.iter().map(|c| (c[t] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            })
            .collect()
    }

    pub fn rows(&self) -> Vec<CurveRow> {
        let mean = self.mean_risk();
        let cum = self.cumulative_excess();
        let se = self.standard_error();
        (0..self.horizon())
            .map(|i| CurveRow {
                t: i + 1,
                mean_risk: mean[i],
                inf_risk: self.benchmark[i],
                cum_excess: cum[i],
                ci_lo: (cum[i] - CI_Z * se[i]).max(0.0),
                ci_hi: cum[i] + CI_Z * se[i],
            })
            .collect()
    }

    /// CSV with columns `t,mean_risk,inf_risk,cum_excess,ci_lo,ci_hi`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CurveRow::HEADER)?;
        for row in self.rows() {
            w.write_record(row.fields())?;
        }
        w.flush()?;
        Ok(())
    }
}

fn prefix(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub t: usize,
    pub mean_risk: f64,
    pub inf_risk: f64,
    pub cum_excess: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl CurveRow {
    pub const HEADER: [&'static str; 6] = ["t", "mean_risk", "inf_risk", "cum_excess", "ci_lo", "ci_hi"];

    pub fn fields(&self) -> [String; 6] {
        [
            self.t.to_string(),
            self.mean_risk.to_string(),
            self.inf_risk.to_string(),
            self.cum_excess.to_string(),
            self.ci_lo.to_string(),
            self.ci_hi.to_string(),
        ]
    }
}
