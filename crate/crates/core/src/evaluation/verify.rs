//! Exact and Monte Carlo oracles for the blocking and uniform-deviation
//! inequalities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rates::fit_power_law;
use crate::distributions::{Marginal, Observation};
use crate::hypotheses::{threshold_candidates, FunctionClass, Hypothesis};
use crate::processes::{draw_independent, ProcessModel};
use crate::{Error, Result};

pub const MAX_BLOCK_STATES: usize = 4;
pub const MAX_BLOCKS: usize = 4;
pub const MAX_BLOCK_SPACING: usize = 8;

/// Fewer trials than this cannot resolve a mean deviation.
pub const MIN_DEVIATION_TRIALS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingReport {
    pub t: usize,
    pub n: usize,
    pub k: usize,
    /// TV between the joint law of the `n` spaced coordinates and the
    /// product of their marginals.
    pub tv_gap: f64,
    /// `(n - 1) beta_k`.
    pub bound: f64,
    pub slack: f64,
}

/// Compares the hidden states at `t, t+k, .., t+(n-1)k` with independent
/// copies, by enumerating all `S^n` joint outcomes.
pub fn verify_blocking(model: &ProcessModel, t: usize, n: usize, k: usize) -> Result<BlockingReport> {
    if t < 1 {
        return Err(Error::param("t", "must be at least 1"));
    }
    if !(1..=MAX_BLOCKS).contains(&n) {
        return Err(Error::CapExceeded(format!("n={n}, allowed 1..={MAX_BLOCKS}")));
    }
    if !(1..=MAX_BLOCK_SPACING).contains(&k) {
        return Err(Error::CapExceeded(format!("k={k}, allowed 1..={MAX_BLOCK_SPACING}")));
    }
    let Some(chain) = model.chain() else {
        return Ok(BlockingReport {
            t,
            n,
            k,
            tv_gap: 0.0,
            bound: 0.0,
            slack: 0.0,
        });
    };
    let s = chain.states();
    if s > MAX_BLOCK_STATES {
        return Err(Error::CapExceeded(format!(
            "{s} states, allowed at most {MAX_BLOCK_STATES}"
        )));
    }
    let step = chain.power(k);
    let laws: Vec<_> = (0..n).map(|j| chain.state_law(t + j * k)).collect();

    let mut tuple = vec![0usize; n];
    let mut gap = 0.0;
    loop {
        let mut joint = laws[0][tuple[0]];
        let mut product = laws[0][tuple[0]];
        for j in 1..n {
            joint *= step[(tuple[j - 1], tuple[j])];
            product *= laws[j][tuple[j]];
        }
        gap += (joint - product).abs();
        // odometer increment
        let mut pos = n;
        loop {
            if pos == 0 {
                let tv_gap = 0.5 * gap;
                let bound = (n - 1) as f64 * chain.beta(k);
                return Ok(BlockingReport {
                    t,
                    n,
                    k,
                    tv_gap,
                    bound,
                    slack: bound - tv_gap,
                });
            }
            pos -= 1;
            tuple[pos] += 1;
            if tuple[pos] < s {
                break;
            }
            tuple[pos] = 0;
        }
    }
}

/// Exact `sup_f |(1/m) sum_i (f(Z_i) - E_{P_i} f)|` for a fixed list of
/// marginals `P_1..P_m`.
#[derive(Debug, Clone)]
pub struct DeviationOracle {
    m: usize,
    kind: OracleKind,
}

#[derive(Debug, Clone)]
enum OracleKind {
    /// Risk part is `sum eta_i + sum w_i |theta - theta*_i|`, `w_i = 1 - 2 eta_i`.
    ThresholdConcept {
        kinks: Vec<f64>,
        /// prefix sums of `w` and `w theta*` over the sorted kinks
        w_prefix: Vec<f64>,
        wt_prefix: Vec<f64>,
        eta_sum: f64,
    },
    /// Risk part is piecewise constant between support points.
    ThresholdFinite {
        candidates: Vec<f64>,
        mean_risk: Vec<f64>,
    },
    Table {
        class: FunctionClass,
        mean_risk: Vec<f64>,
    },
}

impl DeviationOracle {
    pub fn new(class: &FunctionClass, marginals: &[Marginal]) -> Result<Self> {
        let m = marginals.len();
        if m == 0 {
            return Err(Error::EmptySample);
        }
        let kind = match (class, &marginals[0]) {
            (FunctionClass::Threshold, Marginal::ThresholdConcept(_)) => {
                let mut pairs = Vec::with_capacity(m);
                let mut eta_sum = 0.0;
                for p in marginals {
                    let Marginal::ThresholdConcept(c) = p else {
                        return Err(mixed());
                    };
                    pairs.push((c.theta(), 1.0 - 2.0 * c.eta()));
                    eta_sum += c.eta();
                }
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut w_prefix = vec![0.0; m + 1];
                let mut wt_prefix = vec![0.0; m + 1];
                for (i, (theta, w)) in pairs.iter().enumerate() {
                    w_prefix[i + 1] = w_prefix[i] + w;
                    wt_prefix[i + 1] = wt_prefix[i] + w * theta;
                }
                OracleKind::ThresholdConcept {
                    kinks: pairs.into_iter().map(|p| p.0).collect(),
                    w_prefix,
                    wt_prefix,
                    eta_sum,
                }
            }
            (FunctionClass::Threshold, Marginal::FiniteSupport(_)) => {
                let mut xs = Vec::new();
                for p in marginals {
                    let Marginal::FiniteSupport(law) = p else {
                        return Err(mixed());
                    };
                    xs.extend(law.support().iter().map(|z| z.x()));
                }
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                let candidates = threshold_candidates(&xs);
                let mean_risk = candidates
                    .iter()
                    .map(|&c| mean_risk_of(class, &Hypothesis::Threshold(c), marginals))
                    .collect::<Result<_>>()?;
                OracleKind::ThresholdFinite { candidates, mean_risk }
            }
            (FunctionClass::FiniteExplicit(table), Marginal::FiniteSupport(_)) => {
                let mean_risk = (0..table.len())
                    .map(|i| mean_risk_of(class, &Hypothesis::Member(i), marginals))
                    .collect::<Result<_>>()?;
                OracleKind::Table {
                    class: class.clone(),
                    mean_risk,
                }
            }
            (_, p) => {
                return Err(Error::Unsupported(format!(
                    "no exact uniform deviation for this class under {} marginals",
                    p.family_name()
                )))
            }
        };
        Ok(DeviationOracle { m, kind })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Supremum over the class for one sample `Z_1..Z_m`, `Z_i ~ P_i`.
    pub fn sup(&self, sample: &[Observation]) -> Result<f64> {
        if sample.len() != self.m {
            return Err(Error::HistoryLength {
                expected: self.m,
                got: sample.len(),
            });
        }
        let m = self.m as f64;
        match &self.kind {
            OracleKind::ThresholdConcept {
                kinks,
                w_prefix,
                wt_prefix,
                eta_sum,
            } => {
                let mut pts: Vec<(f64, bool)> = sample.iter().map(|z| (z.x(), z.label())).collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let zeros_total = pts.iter().filter(|p| !p.1).count() as f64;
                let w_total = w_prefix[self.m];
                let wt_total = wt_prefix[self.m];

                // D is linear between breakpoints and left-continuous, so the
                // sup is attained at a breakpoint value or a right limit
                let mut breaks: Vec<f64> = Vec::with_capacity(2 * self.m + 2);
                breaks.push(0.0);
                breaks.extend(pts.iter().map(|p| p.0));
                breaks.extend_from_slice(kinks);
                breaks.push(1.0);
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();

                let (mut lt, mut le, mut kink) = (0usize, 0usize, 0usize);
                let (mut ones_lt, mut zeros_lt, mut ones_le, mut zeros_le) = (0.0, 0.0, 0.0, 0.0);
                let mut best: f64 = 0.0;
                for &b in &breaks {
                    while lt < pts.len() && pts[lt].0 < b {
                        if pts[lt].1 {
                            ones_lt += 1.0;
                        } else {
                            zeros_lt += 1.0;
                        }
                        lt += 1;
                    }
                    while le < pts.len() && pts[le].0 <= b {
                        if pts[le].1 {
                            ones_le += 1.0;
                        } else {
                            zeros_le += 1.0;
                        }
                        le += 1;
                    }
                    while kink < kinks.len() && kinks[kink] < b {
                        kink += 1;
                    }
                    let risk = eta_sum + b * w_prefix[kink] - wt_prefix[kink] + (wt_total - wt_prefix[kink])
                        - b * (w_total - w_prefix[kink]);
                    let at = ones_lt + (zeros_total - zeros_lt);
                    best = best.max(((at - risk) / m).abs());
                    if b < 1.0 {
                        let right = ones_le + (zeros_total - zeros_le);
                        best = best.max(((right - risk) / m).abs());
                    }
                }
                Ok(best)
            }
            OracleKind::ThresholdFinite { candidates, mean_risk } => {
                let mut pts: Vec<(f64, bool)> = sample.iter().map(|z| (z.x(), z.label())).collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let zeros_total = pts.iter().filter(|p| !p.1).count() as f64;
                let (mut i, mut ones_lt, mut zeros_lt) = (0usize, 0.0, 0.0);
                let mut best: f64 = 0.0;
                for (&c, r) in candidates.iter().zip(mean_risk) {
                    while i < pts.len() && pts[i].0 < c {
                        if pts[i].1 {
                            ones_lt += 1.0;
                        } else {
                            zeros_lt += 1.0;
                        }
                        i += 1;
                    }
                    let loss = (ones_lt + zeros_total - zeros_lt) / m;
                    best = best.max((loss - r).abs());
                }
                Ok(best)
            }
            OracleKind::Table { class, mean_risk } => {
                let mut best: f64 = 0.0;
                for (i, r) in mean_risk.iter().enumerate() {
                    let loss = class.empirical_loss(&Hypothesis::Member(i), sample)? / m;
                    best = best.max((loss - r).abs());
                }
                Ok(best)
            }
        }
    }
}

fn mixed() -> Error {
    Error::Unsupported("marginals must all come from one family".into())
}

fn mean_risk_of(class: &FunctionClass, h: &Hypothesis, marginals: &[Marginal]) -> Result<f64> {
    let total = marginals.iter().map(|p| class.risk(h, p)).sum::<Result<f64>>()?;
    Ok(total / marginals.len() as f64)
}

/// Exact supremum deviation of one sample drawn from `marginals`.
pub fn sup_deviation(class: &FunctionClass, marginals: &[Marginal], sample: &[Observation]) -> Result<f64> {
    DeviationOracle::new(class, marginals)?.sup(sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationPoint {
    pub m: usize,
    pub mean: f64,
    pub std_err: f64,
    /// `mean / sqrt(d/m)`.
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformDeviationReport {
    pub d: u32,
    pub trials: usize,
    pub points: Vec<DeviationPoint>,
    /// Slope of `ln mean` against `ln m`; absent for a single-point grid.
    pub exponent: Option<f64>,
    pub intercept: Option<f64>,
    /// Largest `mean / sqrt(d/m)` over the grid: the fitted constant.
    pub envelope: f64,
    /// Largest over smallest scaled estimate.
    pub spread: f64,
}

/// For each `m` in the grid, averages the exact sup deviation of `m`
/// independent draws `Z_i ~ marginals[i]` over `trials` samples.
pub fn verify_uniform_deviation(
    class: &FunctionClass,
    marginals: &[Marginal],
    m_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<UniformDeviationReport> {
    if trials < MIN_DEVIATION_TRIALS {
        return Err(Error::param(
            "trials",
            format!("{trials} trials is too few, need at least {MIN_DEVIATION_TRIALS}"),
        ));
    }
    if m_grid.is_empty() || m_grid[0] < 1 || m_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(
            "m_grid",
            "need a non-empty increasing grid of positive sizes",
        ));
    }
    let m_max = *m_grid.last().expect("non-empty");
    if m_max > marginals.len() {
        return Err(Error::HorizonTooLong {
            horizon: m_max,
            available: marginals.len(),
        });
    }
    let d = class.pseudo_dimension();
    let points = m_grid
        .par_iter()
        .map(|&m| {
            let oracle = DeviationOracle::new(class, &marginals[..m])?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut sample = Vec::with_capacity(m);
            let mut values = Vec::with_capacity(trials);
            for _ in 0..trials {
                sample.clear();
                sample.extend(marginals[..m].iter().map(|p| draw_independent(p, &mut rng)));
                values.push(oracle.sup(&sample)?);
            }
            let n = trials as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(DeviationPoint {
                m,
                mean,
                std_err: (var / n).sqrt(),
                scaled: mean / (f64::from(d) / m as f64).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (exponent, intercept) = if points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|p| p.m as f64).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.mean).collect();
        let (slope, icpt, _) = fit_power_law(&xs, &ys)?;
        (Some(slope), Some(icpt))
    } else {
        (None, None)
    };
    let envelope = points.iter().map(|p| p.scaled).fold(0.0, f64::max);
    let floor = points.iter().map(|p| p.scaled).fold(f64::INFINITY, f64::min);
    Ok(UniformDeviationReport {
        d,
        trials,
        points,
        exponent,
        intercept,
        envelope,
        spread: if floor > 0.0 { envelope / floor } else { f64::INFINITY },
    })
}
