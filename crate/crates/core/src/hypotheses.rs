//! Function classes with exact empirical risk minimisation and exact risk.
//!
//! Two classes are supported. [`FunctionClass::Threshold`] is the 0-1 loss of
//! the classifiers `x -> 1[x >= theta]`, `theta` in `[0,1]` (pseudo-dimension
//! 1). [`FunctionClass::FiniteExplicit`] is an explicit list of loss tables
//! over a finite support.

use serde::{Deserialize, Serialize};

use crate::distributions::{FiniteLaw, Marginal, Observation};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// Predict 1 iff `x >= theta`.
    Threshold(f64),
    /// Index into a finite class.
    Member(usize),
}

/// Loss tables over a finite support; `functions[i][j]` is `f_i(support[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct FiniteTable {
    support: Vec<Observation>,
    functions: Vec<Vec<f64>>,
    d: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    support: Vec<Observation>,
    functions: Vec<Vec<f64>>,
    d: u32,
}

impl TryFrom<RawTable> for FiniteTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        FiniteTable::new(raw.support, raw.functions, raw.d)
    }
}

impl FiniteTable {
    pub fn new(support: Vec<Observation>, functions: Vec<Vec<f64>>, d: u32) -> Result<Self> {
        if support.is_empty() || functions.is_empty() {
            return Err(Error::param(
                "functions",
                "class needs a support and at least one function",
            ));
        }
        for (i, a) in support.iter().enumerate() {
            if support[..i].contains(a) {
                return Err(Error::param(
                    "support",
                    format!("duplicate point ({}, {})", a.x(), a.y()),
                ));
            }
        }
        for f in &functions {
            if f.len() != support.len() {
                return Err(Error::param(
                    "functions",
                    format!("table has {} values for {} support points", f.len(), support.len()),
                ));
            }
            if let Some(v) = f.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::param("functions", format!("value {v} outside [0,1]")));
            }
        }
        let max_d = (functions.len() as f64).log2().ceil().max(1.0) as u32;
        if d < 1 || d > max_d {
            return Err(Error::param(
                "d",
                format!(
                    "pseudo-dimension must lie in [1, {max_d}] for {} functions, got {d}",
                    functions.len()
                ),
            ));
        }
        Ok(FiniteTable { support, functions, d })
    }

    pub fn support(&self) -> &[Observation] {
        &self.support
    }

    pub fn functions(&self) -> &[Vec<f64>] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    fn column(&self, z: &Observation) -> Option<usize> {
        self.support.iter().position(|s| s == z)
    }

    fn expectation(&self, member: usize, law: &FiniteLaw) -> Result<f64> {
        let f = &self.functions[member];
        let mut total = 0.0;
        for (z, p) in law.support().iter().zip(law.probs()) {
            if *p == 0.0 {
                continue;
            }
            let j = self.column(z).ok_or(Error::OutsideSupport { x: z.x(), y: z.y() })?;
            total += p * f[j];
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionClass {
    Threshold,
    FiniteExplicit(FiniteTable),
}

impl FunctionClass {
    pub fn pseudo_dimension(&self) -> u32 {
        match self {
            FunctionClass::Threshold => 1,
            FunctionClass::FiniteExplicit(t) => t.d,
        }
    }

    /// The smallest-parameter member, used wherever a predictor is arbitrary.
    pub fn default_member(&self) -> Hypothesis {
        match self {
            FunctionClass::Threshold => Hypothesis::Threshold(0.0),
            FunctionClass::FiniteExplicit(_) => Hypothesis::Member(0),
        }
    }

    fn check(&self, h: &Hypothesis) -> Result<()> {
        match (self, h) {
            (FunctionClass::Threshold, Hypothesis::Threshold(theta)) if (0.0..=1.0).contains(theta) => Ok(()),
            (FunctionClass::FiniteExplicit(t), Hypothesis::Member(i)) if *i < t.len() => Ok(()),
            _ => Err(Error::Unsupported(format!(
                "hypothesis {h:?} is not a member of this class"
            ))),
        }
    }

    pub fn loss(&self, h: &Hypothesis, z: &Observation) -> Result<f64> {
        self.check(h)?;
        match (self, h) {
            (FunctionClass::Threshold, Hypothesis::Threshold(theta)) => Ok(threshold_loss(*theta, z)),
            (FunctionClass::FiniteExplicit(t), Hypothesis::Member(i)) => {
                let j = t.column(z).ok_or(Error::OutsideSupport { x: z.x(), y: z.y() })?;
                Ok(t.functions[*i][j])
            }
            _ => unreachable!("checked above"),
        }
    }

    /// Sum of losses over `points`.
    pub fn empirical_loss(&self, h: &Hypothesis, points: &[Observation]) -> Result<f64> {
        points.iter().map(|z| self.loss(h, z)).sum()
    }

    /// Exact empirical risk minimiser, ties broken toward the smallest
    /// threshold or index.
    pub fn erm(&self, points: &[Observation]) -> Result<Hypothesis> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        match self {
            FunctionClass::Threshold => {
                let mut weighted: Vec<(f64, bool, f64)> = points.iter().map(|z| (z.x(), z.label(), 1.0)).collect();
                Ok(Hypothesis::Threshold(weighted_threshold_sweep(&mut weighted).0))
            }
            FunctionClass::FiniteExplicit(t) => {
                let columns = points
                    .iter()
                    .map(|z| t.column(z).ok_or(Error::OutsideSupport { x: z.x(), y: z.y() }))
                    .collect::<Result<Vec<_>>>()?;
                let mut best = (0, f64::INFINITY);
                for (i, f) in t.functions.iter().enumerate() {
                    let total: f64 = columns.iter().map(|&j| f[j]).sum();
                    if total < best.1 {
                        best = (i, total);
                    }
                }
                Ok(Hypothesis::Member(best.0))
            }
        }
    }

    /// Exact expected loss `E_{Z~p} f_h(Z)`.
    pub fn risk(&self, h: &Hypothesis, p: &Marginal) -> Result<f64> {
        self.check(h)?;
        match (self, h, p) {
            (FunctionClass::Threshold, Hypothesis::Threshold(theta), Marginal::ThresholdConcept(c)) => {
                Ok(c.eta() + (1.0 - 2.0 * c.eta()) * (theta - c.theta()).abs())
            }
            (FunctionClass::Threshold, Hypothesis::Threshold(theta), Marginal::FiniteSupport(law)) => Ok(law
                .support()
                .iter()
                .zip(law.probs())
                .map(|(z, w)| w * threshold_loss(*theta, z))
                .sum()),
            (FunctionClass::FiniteExplicit(t), Hypothesis::Member(i), Marginal::FiniteSupport(law)) => {
                t.expectation(*i, law)
            }
            _ => Err(Error::Unsupported(format!(
                "no exact risk for this class under a {} marginal",
                p.family_name()
            ))),
        }
    }

    /// Exact `inf_f E_{Z~p} f(Z)`.
    pub fn inf_risk(&self, p: &Marginal) -> Result<f64> {
        match (self, p) {
            (FunctionClass::Threshold, Marginal::ThresholdConcept(c)) => Ok(c.eta()),
            (FunctionClass::Threshold, Marginal::FiniteSupport(law)) => {
                let mut weighted: Vec<(f64, bool, f64)> = law
                    .support()
                    .iter()
                    .zip(law.probs())
                    .map(|(z, w)| (z.x(), z.label(), *w))
                    .collect();
                Ok(weighted_threshold_sweep(&mut weighted).1)
            }
            (FunctionClass::FiniteExplicit(t), Marginal::FiniteSupport(law)) => {
                let mut best = f64::INFINITY;
                for i in 0..t.len() {
                    best = best.min(t.expectation(i, law)?);
                }
                Ok(best)
            }
            _ => Err(Error::Unsupported(format!(
                "no exact risk for this class under a {} marginal",
                p.family_name()
            ))),
        }
    }

    /// A finite set of hypotheses on which `|risk(., p) - risk(., q)|`
    /// attains its supremum over the class.
    pub fn discrepancy_candidates(&self, p: &Marginal, q: &Marginal) -> Result<Vec<Hypothesis>> {
        match (self, p, q) {
            (FunctionClass::Threshold, Marginal::ThresholdConcept(a), Marginal::ThresholdConcept(b)) => {
                Ok([0.0, a.theta(), b.theta(), 1.0].map(Hypothesis::Threshold).to_vec())
            }
            (FunctionClass::Threshold, Marginal::FiniteSupport(a), Marginal::FiniteSupport(b)) => {
                let mut xs: Vec<f64> = a.support().iter().chain(b.support()).map(|z| z.x()).collect();
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                Ok(threshold_candidates(&xs)
                    .into_iter()
                    .map(Hypothesis::Threshold)
                    .collect())
            }
            (FunctionClass::FiniteExplicit(t), Marginal::FiniteSupport(_), Marginal::FiniteSupport(_)) => {
                Ok((0..t.len()).map(Hypothesis::Member).collect())
            }
            _ => Err(Error::Unsupported(format!(
                "no exact discrepancy for this class between {} and {}",
                p.family_name(),
                q.family_name()
            ))),
        }
    }
}

#[inline]
pub(crate) fn threshold_loss(theta: f64, z: &Observation) -> f64 {
    if (z.x() >= theta) == z.label() {
        0.0
    } else {
        1.0
    }
}

/// Candidate thresholds for sorted, distinct `xs`: `0`, every `x`, midpoints
/// of consecutive values, and `1`, ascending and deduplicated. Every labelling
/// achievable by some `theta` in `[0,1]` is achieved by one of them.
pub fn threshold_candidates(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * xs.len() + 2);
    let push = |v: f64, out: &mut Vec<f64>| {
        if out.last().is_none_or(|last| v > *last) {
            out.push(v);
        }
    };
    push(0.0, &mut out);
    for (i, &x) in xs.iter().enumerate() {
        if i > 0 {
            push(0.5 * (xs[i - 1] + x), &mut out);
        }
        push(x, &mut out);
    }
    push(1.0, &mut out);
    out
}

/// Minimises `sum w 1[1[x >= theta] != y]` over the candidate thresholds.
/// Returns `(theta, loss)` with the smallest minimising `theta`.
fn weighted_threshold_sweep(points: &mut [(f64, bool, f64)]) -> (f64, f64) {
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_zero: f64 = points.iter().filter(|p| !p.1).map(|p| p.2).sum();

    let mut idx = 0;
    let mut ones_below = 0.0;
    let mut zeros_below = 0.0;
    let mut best = (0.0, f64::INFINITY);
    let mut last = f64::NEG_INFINITY;

    let mut consider = |theta: f64, idx: &mut usize, ones_below: &mut f64, zeros_below: &mut f64| {
        if theta <= last {
            return;
        }
        last = theta;
        while *idx < points.len() && points[*idx].0 < theta {
            if points[*idx].1 {
                *ones_below += points[*idx].2;
            } else {
                *zeros_below += points[*idx].2;
            }
            *idx += 1;
        }
        let loss = *ones_below + (total_zero - *zeros_below);
        if loss < best.1 {
            best = (theta, loss);
        }
    };

    consider(0.0, &mut idx, &mut ones_below, &mut zeros_below);
    let mut prev: Option<f64> = None;
    for point in points.iter() {
        let x = point.0;
        if prev == Some(x) {
            continue;
        }
        if let Some(p) = prev {
            consider(0.5 * (p + x), &mut idx, &mut ones_below, &mut zeros_below);
        }
        consider(x, &mut idx, &mut ones_below, &mut zeros_below);
        prev = Some(x);
    }
    consider(1.0, &mut idx, &mut ones_below, &mut zeros_below);
    best
}
