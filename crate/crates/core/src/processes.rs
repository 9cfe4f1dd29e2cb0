//! Sample-path generators with controlled dependence.
//!
//! A product process draws `Z_t ~ P_t` independently. A Markov-modulated
//! process runs a stationary hidden chain on `{0..S-1}`, emits `x` uniformly
//! from the bin `[s/S, (s+1)/S)` of the current state and labels it with the
//! drifting concept. The hidden chain must be doubly stochastic so that the
//! emitted `x` stays exactly uniform, which keeps every time-`t` marginal equal
//! to `P_t`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{check_probability_vector, Marginal, Observation, PROB_TOLERANCE};
use crate::{Error, Result};

pub const MAX_STATES: usize = 16;
pub const DEFAULT_K_MAX: usize = 64;

/// Irreducible, aperiodic finite chain with its exact stationary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenChain {
    transition: DMatrix<f64>,
    stationary: DVector<f64>,
}

impl HiddenChain {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let s = rows.len();
        if s == 0 || s > MAX_STATES {
            return Err(Error::InvalidTransition(format!(
                "state count {s} outside 1..={MAX_STATES}"
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != s {
                return Err(Error::InvalidTransition(format!(
                    "row {i} has {} entries, expected {s}",
                    row.len()
                )));
            }
            check_probability_vector(row).map_err(|e| Error::InvalidTransition(format!("row {i}: {e}")))?;
        }
        let transition = DMatrix::from_fn(s, s, |i, j| rows[i][j]);

        // Wielandt: a primitive matrix has P^((S-1)^2+1) > 0 entrywise.
        let power = matrix_power(&transition, (s - 1) * (s - 1) + 1);
        if power.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidTransition(
                "chain is not irreducible and aperiodic".into(),
            ));
        }

        let stationary = solve_stationary(&transition)?;
        Ok(HiddenChain { transition, stationary })
    }

    /// Stay with probability `1-p`, otherwise jump uniformly to another state.
    pub fn flip(states: usize, p: f64) -> Result<Self> {
        if states < 2 {
            return Err(Error::param("states", "flip chains need at least 2 states"));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::param("p", format!("must lie in (0,1], got {p}")));
        }
        let off = p / (states - 1) as f64;
        let rows = (0..states)
            .map(|i| (0..states).map(|j| if i == j { 1.0 - p } else { off }).collect())
            .collect();
        HiddenChain::new(rows)
    }

    /// Stay with probability `1-p`, otherwise advance to `s+1 mod S`.
    pub fn cyclic(states: usize, p: f64) -> Result<Self> {
        if states < 2 {
            return Err(Error::param("states", "cyclic chains need at least 2 states"));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param("p", format!("must lie in (0,1), got {p}")));
        }
        let rows = (0..states)
            .map(|i| {
                let mut row = vec![0.0; states];
                row[i] += 1.0 - p;
                row[(i + 1) % states] += p;
                row
            })
            .collect();
        HiddenChain::new(rows)
    }

    pub fn states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.transition
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn power(&self, k: usize) -> DMatrix<f64> {
        matrix_power(&self.transition, k)
    }

    /// Law of the hidden state at 1-based time `t`, started from stationarity.
    pub fn state_law(&self, t: usize) -> DVector<f64> {
        let row = self.stationary.transpose() * self.power(t.saturating_sub(1));
        row.transpose()
    }

    fn is_doubly_stochastic(&self) -> bool {
        let u = 1.0 / self.states() as f64;
        self.stationary.iter().all(|p| (p - u).abs() <= PROB_TOLERANCE)
    }

    /// `sum_s pi(s) ||P^k(s,.) - pi||_TV`.
    pub fn beta(&self, k: usize) -> f64 {
        beta_from_power(&self.power(k), &self.stationary)
    }
}

fn beta_from_power(power: &DMatrix<f64>, pi: &DVector<f64>) -> f64 {
    let s = pi.len();
    let mut total = 0.0;
    for i in 0..s {
        let tv: f64 = (0..s).map(|j| (power[(i, j)] - pi[j]).abs()).sum::<f64>() * 0.5;
        total += pi[i] * tv;
    }
    total.clamp(0.0, 1.0)
}

fn matrix_power(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut result = DMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

fn solve_stationary(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let s = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(s, s);
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(s);
    b[s - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidTransition("singular stationary system".into()))?;
    let pi = pi.map(|v| v.max(0.0));
    let total = pi.sum();
    Ok(pi / total)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProcessKind {
    Product,
    MarkovModulated(HiddenChain),
}

/// A process together with its exact marginal path `P_1..P_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    kind: ProcessKind,
    marginals: Vec<Marginal>,
}

impl ProcessModel {
    pub fn product(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::param("marginals", "need at least one marginal"));
        }
        Ok(ProcessModel {
            kind: ProcessKind::Product,
            marginals,
        })
    }

    pub fn markov_modulated(chain: HiddenChain, marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::param("marginals", "need at least one marginal"));
        }
        if let Some(m) = marginals.iter().find(|m| !matches!(m, Marginal::ThresholdConcept(_))) {
            return Err(Error::Unsupported(format!(
                "Markov-modulated emission needs threshold-concept marginals, got {}",
                m.family_name()
            )));
        }
        if !chain.is_doubly_stochastic() {
            return Err(Error::InvalidTransition(
                "stationary law is not uniform, so uniform-bin emission would distort the x-marginal".into(),
            ));
        }
        Ok(ProcessModel {
            kind: ProcessKind::MarkovModulated(chain),
            marginals,
        })
    }

    pub fn kind(&self) -> &ProcessKind {
        &self.kind
    }

    pub fn chain(&self) -> Option<&HiddenChain> {
        match &self.kind {
            ProcessKind::MarkovModulated(c) => Some(c),
            ProcessKind::Product => None,
        }
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    /// `P_t` for 1-based `t`.
    pub fn marginal(&self, t: usize) -> &Marginal {
        &self.marginals[t - 1]
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }
}

/// JSON layout of a process model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessRecord {
    pub kind: String,
    #[serde(default)]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub emission: Option<String>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub thetas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<Marginal>>,
}

const UNIFORM_BINS: &str = "uniform_bins";

impl From<&ProcessModel> for ProcessRecord {
    fn from(model: &ProcessModel) -> Self {
        let concepts: Option<Vec<(f64, f64)>> = model
            .marginals
            .iter()
            .map(|m| match m {
                Marginal::ThresholdConcept(c) => Some((c.theta(), c.eta())),
                Marginal::FiniteSupport(_) => None,
            })
            .collect();
        let shared_eta = concepts
            .as_ref()
            .filter(|c| c.windows(2).all(|w| w[0].1 == w[1].1))
            .map(|c| c[0].1);
        let (eta, thetas, marginals) = match shared_eta {
            Some(eta) => (Some(eta), Some(concepts.unwrap().iter().map(|c| c.0).collect()), None),
            None => (None, None, Some(model.marginals.clone())),
        };
        let (kind, transition, emission) = match &model.kind {
            ProcessKind::Product => ("product", None, None),
            ProcessKind::MarkovModulated(c) => ("markov_modulated", Some(c.rows()), Some(UNIFORM_BINS.to_string())),
        };
        ProcessRecord {
            kind: kind.into(),
            transition,
            emission,
            eta,
            thetas,
            marginals,
        }
    }
}

impl TryFrom<ProcessRecord> for ProcessModel {
    type Error = Error;

    fn try_from(rec: ProcessRecord) -> Result<Self> {
        let marginals = match (rec.marginals, rec.eta, rec.thetas) {
            (Some(m), _, _) => m,
            (None, Some(eta), Some(thetas)) => thetas
                .into_iter()
                .map(|theta| Marginal::threshold(theta, eta))
                .collect::<Result<_>>()?,
            _ => {
                return Err(Error::param(
                    "thetas",
                    "process record needs `eta` and `thetas` or `marginals`",
                ))
            }
        };
        match rec.kind.as_str() {
            "product" => ProcessModel::product(marginals),
            "markov_modulated" => {
                if rec.emission.as_deref().unwrap_or(UNIFORM_BINS) != UNIFORM_BINS {
                    return Err(Error::param("emission", "only `uniform_bins` is supported"));
                }
                let rows = rec
                    .transition
                    .ok_or_else(|| Error::param("transition", "required for markov_modulated"))?;
                ProcessModel::markov_modulated(HiddenChain::new(rows)?, marginals)
            }
            other => Err(Error::param("kind", format!("unknown process kind `{other}`"))),
        }
    }
}

/// One realisation `Z_1..Z_T`, with hidden states for Markov-modulated runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub observations: Vec<Observation>,
    pub states: Option<Vec<usize>>,
}

impl SamplePath {
    /// CSV with columns `t,x,y,state` (state left empty for product processes).
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "state"])?;
        for (i, z) in self.observations.iter().enumerate() {
            let state = self.states.as_ref().map(|s| s[i].to_string()).unwrap_or_default();
            w.write_record([(i + 1).to_string(), z.x().to_string(), z.y().to_string(), state])?;
        }
        w.flush()
    }
}

fn label(x: f64, theta: f64, eta: f64, rng: &mut ChaCha8Rng) -> u8 {
    let clean = x >= theta;
    let flip = rng.gen::<f64>() < eta;
    u8::from(clean ^ flip)
}

/// One draw from `m`, consuming the same random numbers as a product path.
pub(crate) fn draw_independent(m: &Marginal, rng: &mut ChaCha8Rng) -> Observation {
    match m {
        Marginal::ThresholdConcept(c) => {
            let x: f64 = rng.gen();
            Observation::new_unchecked(x, label(x, c.theta(), c.eta(), rng))
        }
        Marginal::FiniteSupport(law) => {
            let i = categorical(law.probs().iter().copied(), rng.gen());
            law.support()[i]
        }
    }
}

fn categorical(probs: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
        if p > 0.0 {
            last = i;
        }
    }
    last
}

/// Draws `Z_1..Z_horizon`; identical `(model, horizon, seed)` give identical paths.
pub fn sample_path(model: &ProcessModel, horizon: usize, seed: u64) -> Result<SamplePath> {
    if horizon < 1 {
        return Err(Error::param("horizon", "must be at least 1"));
    }
    if horizon > model.marginals.len() {
        return Err(Error::HorizonTooLong {
            horizon,
            available: model.marginals.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::with_capacity(horizon);
    match &model.kind {
        ProcessKind::Product => {
            for m in &model.marginals[..horizon] {
                observations.push(draw_independent(m, &mut rng));
            }
            Ok(SamplePath {
                observations,
                states: None,
            })
        }
        ProcessKind::MarkovModulated(chain) => {
            let s = chain.states();
            let width = 1.0 / s as f64;
            let mut states = Vec::with_capacity(horizon);
            let mut state = categorical(chain.stationary.iter().copied(), rng.gen());
            for (t, m) in model.marginals[..horizon].iter().enumerate() {
                if t > 0 {
                    state = categorical(chain.transition.row(state).iter().copied(), rng.gen());
                }
                let Marginal::ThresholdConcept(c) = m else {
                    unreachable!("validated at construction")
                };
                let mut x = (state as f64 + rng.gen::<f64>()) * width;
                if x >= (state + 1) as f64 * width {
                    x = state as f64 * width;
                }
                let x = x.min(1.0);
                states.push(state);
                observations.push(Observation::new_unchecked(x, label(x, c.theta(), c.eta(), &mut rng)));
            }
            Ok(SamplePath {
                observations,
                states: Some(states),
            })
        }
    }
}

/// Exact β-mixing coefficient of the hidden chain (0 for product processes).
///
/// The observation at time `t` is a fixed randomisation of the hidden state,
/// so this upper-bounds the β coefficient of the observation process.
pub fn beta_coefficient(model: &ProcessModel, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::param("k", "must be at least 1"));
    }
    Ok(match &model.kind {
        ProcessKind::Product => 0.0,
        ProcessKind::MarkovModulated(chain) => chain.beta(k),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingProfile {
    pub r: f64,
    /// `beta[k-1]` is `beta_k`.
    pub beta: Vec<f64>,
    /// Smallest `C` with `beta_k <= C k^-r` over the computed range.
    pub bound_constant: f64,
}

impl MixingProfile {
    pub fn compute(model: &ProcessModel, r: f64, k_max: usize) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::param("r", format!("must be positive, got {r}")));
        }
        if k_max < 1 {
            return Err(Error::param("k_max", "must be at least 1"));
        }
        let beta = match &model.kind {
            ProcessKind::Product => vec![0.0; k_max],
            ProcessKind::MarkovModulated(chain) => {
                let mut power = chain.transition.clone();
                let mut out = Vec::with_capacity(k_max);
                for _ in 0..k_max {
                    out.push(beta_from_power(&power, &chain.stationary));
                    power = &power * &chain.transition;
                }
                out
            }
        };
        Ok(MixingProfile::from_betas(r, beta))
    }

    pub fn from_betas(r: f64, beta: Vec<f64>) -> Self {
        let bound_constant = beta
            .iter()
            .enumerate()
            .map(|(i, b)| b * ((i + 1) as f64).powf(r))
            .fold(0.0, f64::max);
        MixingProfile {
            r,
            beta,
            bound_constant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub r: f64,
    pub bound_constant: f64,
    pub worst_k: usize,
    pub k_max: usize,
    pub violation: bool,
    pub reason: Option<String>,
}

/// Certifies `beta_k <= C k^-r` over the computed range.
///
/// Flags a violation when `C` exceeds `cap`, or when `beta_k k^r` is still
/// increasing at `k_max` (the range gives no evidence of a finite `C`).
pub fn verify_mixing_rate(profile: &MixingProfile, cap: f64) -> MixingReport {
    let k_max = profile.beta.len();
    let scaled: Vec<f64> = profile
        .beta
        .iter()
        .enumerate()
        .map(|(i, b)| b * ((i + 1) as f64).powf(profile.r))
        .collect();
    let mut worst_k = 1;
    for (i, v) in scaled.iter().enumerate() {
        if *v > scaled[worst_k - 1] {
            worst_k = i + 1;
        }
    }
    let c = profile.bound_constant;
    let reason = if c > cap {
        Some(format!("bound constant {c} exceeds cap {cap}"))
    } else if k_max > 1 && worst_k == k_max && scaled[k_max - 1] > scaled[k_max - 2] {
        Some(format!("beta_k k^r still increasing at k_max={k_max}"))
    } else {
        None
    };
    MixingReport {
        r: profile.r,
        bound_constant: c,
        worst_k,
        k_max,
        violation: reason.is_some(),
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn static_concepts(theta: f64, eta: f64, n: usize) -> Vec<Marginal> {
        vec![Marginal::threshold(theta, eta).unwrap(); n]
    }

    #[test]
    fn chain_validation() {
        assert!(HiddenChain::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        // periodic
        assert!(HiddenChain::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        // reducible
        assert!(HiddenChain::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
        let c = HiddenChain::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        assert!((c.stationary()[0] - 0.75).abs() < 1e-12);
        // not doubly stochastic, so it cannot modulate uniform emission
        assert!(ProcessModel::markov_modulated(c, static_concepts(0.5, 0.1, 3)).is_err());
    }

    #[test]
    fn single_draw() {
        let m = ProcessModel::product(static_concepts(0.5, 0.1, 1)).unwrap();
        let path = sample_path(&m, 1, 5).unwrap();
        assert_eq!(path.observations.len(), 1);
        assert!(sample_path(&m, 2, 5).is_err());
    }

    #[test]
    fn noiseless_product_labels() {
        let m = ProcessModel::product(static_concepts(0.5, 0.0, 2000)).unwrap();
        let path = sample_path(&m, 2000, 9).unwrap();
        assert!(path.observations.iter().all(|z| z.label() == (z.x() >= 0.5)));
    }

    #[test]
    fn finite_support_product() {
        let support = vec![Observation::new(0.1, 0).unwrap(), Observation::new(0.9, 1).unwrap()];
        let law = Marginal::finite(support.clone(), vec![0.25, 0.75]).unwrap();
        let m = ProcessModel::product(vec![law; 40_000]).unwrap();
        let path = sample_path(&m, 40_000, 1).unwrap();
        let hits = path.observations.iter().filter(|z| **z == support[1]).count() as f64;
        let se = (0.75 * 0.25 / 40_000.0f64).sqrt();
        assert!((hits / 40_000.0 - 0.75).abs() < 3.0 * se);
    }

    #[test]
    fn paths_are_reproducible() {
        let chain = HiddenChain::flip(3, 0.3).unwrap();
        let m = ProcessModel::markov_modulated(chain, static_concepts(0.4, 0.1, 500)).unwrap();
        let a = sample_path(&m, 500, 77).unwrap();
        let b = sample_path(&m, 500, 77).unwrap();
        assert_eq!(a, b);
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.write_csv(&mut ba).unwrap();
        b.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert!(String::from_utf8(ba).unwrap().starts_with("t,x,y,state\n1,"));
        assert_ne!(a, sample_path(&m, 500, 78).unwrap());
    }

    /// Exact variance of the number of visits to `s` in `n` stationary steps.
    fn visit_count_variance(chain: &HiddenChain, s: usize, n: usize) -> f64 {
        let pi = chain.stationary()[s];
        let mut var = n as f64 * pi * (1.0 - pi);
        let mut power = chain.transition().clone();
        for lag in 1..n {
            let cov = pi * power[(s, s)] - pi * pi;
            if cov.abs() < 1e-18 {
                break;
            }
            var += 2.0 * (n - lag) as f64 * cov;
            power = &power * chain.transition();
        }
        var
    }

    #[test]
    fn markov_emission_matches_marginal() {
        for chain in [
            HiddenChain::flip(3, 0.2).unwrap(),
            HiddenChain::cyclic(3, 0.35).unwrap(),
        ] {
            let n = 100_000;
            let m = ProcessModel::markov_modulated(chain.clone(), static_concepts(0.5, 0.1, n)).unwrap();
            let path = sample_path(&m, n, 2024).unwrap();
            for s in 0..3 {
                let count = path
                    .observations
                    .iter()
                    .filter(|z| (z.x() * 3.0).floor() as usize == s)
                    .count() as f64;
                let se = visit_count_variance(&chain, s, n).sqrt();
                assert!((count - n as f64 / 3.0).abs() < 4.0 * se, "state {s}: {count}");
            }
            // the bin of x is the hidden state
            let states = path.states.as_ref().unwrap();
            assert!(path
                .observations
                .iter()
                .zip(states)
                .all(|(z, s)| (z.x() * 3.0).floor() as usize == *s));
        }
    }

    #[test]
    fn markov_labels_follow_concept() {
        let n = 100_000;
        let chain = HiddenChain::flip(4, 0.3).unwrap();
        let m = ProcessModel::markov_modulated(chain, static_concepts(0.3, 0.2, n)).unwrap();
        let path = sample_path(&m, n, 3).unwrap();
        let wrong = path.observations.iter().filter(|z| z.label() != (z.x() >= 0.3)).count() as f64;
        let se = (0.2 * 0.8 / n as f64).sqrt();
        assert!((wrong / n as f64 - 0.2).abs() < 3.0 * se);
    }

    #[test]
    fn product_beta_is_zero() {
        let m = ProcessModel::product(static_concepts(0.5, 0.1, 4)).unwrap();
        for k in [1, 2, 10, 64] {
            assert_eq!(beta_coefficient(&m, k).unwrap(), 0.0);
        }
        assert!(beta_coefficient(&m, 0).is_err());
    }

    /// Brute-force supremum over all pairs of partitions of the state space
    /// for `(Z_l, Z_{l+1})`; on a finite space this is attained by the finest
    /// partitions, but the enumeration does not assume it.
    fn two_state_partition_sup(chain: &HiddenChain) -> f64 {
        let pi = chain.stationary();
        let p = chain.transition();
        let joint = |a: usize, b: usize| pi[a] * p[(a, b)];
        // partitions of {0,1}: {{0,1}} and {{0},{1}}
        let partitions: [Vec<Vec<usize>>; 2] = [vec![vec![0, 1]], vec![vec![0], vec![1]]];
        let mut best: f64 = 0.0;
        for past in &partitions {
            for future in &partitions {
                let mut total = 0.0;
                for a in past {
                    for b in future {
                        let pab: f64 = a
                            .iter()
                            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
                            .map(|(i, j)| joint(i, j))
                            .sum();
                        let pa: f64 = a.iter().map(|&i| pi[i]).sum();
                        let pb: f64 = b.iter().map(|&j| pi[j]).sum();
                        total += (pab - pa * pb).abs();
                    }
                }
                best = best.max(0.5 * total);
            }
        }
        best
    }

    #[test]
    fn two_state_beta_one() {
        let chain = HiddenChain::flip(2, 0.3).unwrap();
        let m = ProcessModel::markov_modulated(chain.clone(), static_concepts(0.5, 0.1, 2)).unwrap();
        let b1 = beta_coefficient(&m, 1).unwrap();
        assert!((b1 - 0.2).abs() < 1e-12);
        assert!((two_state_partition_sup(&chain) - b1).abs() < 1e-12);
    }

    /// Joint law of (past block, future block) by enumerating all state
    /// sequences; TV to the product of the block laws equals beta_k by the
    /// Markov property.
    fn beta_by_enumeration(chain: &HiddenChain, k: usize) -> f64 {
        let s = chain.states();
        let pi = chain.stationary();
        let pk = chain.power(k);
        let p = chain.transition();
        let mut tv = 0.0;
        // past = (a0, a1), future = (b0, b1) with b0 at lag k after a1
        for a0 in 0..s {
            for a1 in 0..s {
                let past = pi[a0] * p[(a0, a1)];
                for b0 in 0..s {
                    for b1 in 0..s {
                        let future = pi[b0] * p[(b0, b1)];
                        let joint = past * pk[(a1, b0)] * p[(b0, b1)];
                        tv += (joint - past * future).abs();
                    }
                }
            }
        }
        0.5 * tv
    }

    #[test]
    fn beta_matches_block_enumeration() {
        for chain in [
            HiddenChain::flip(3, 0.45).unwrap(),
            HiddenChain::cyclic(4, 0.3).unwrap(),
            HiddenChain::new(vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.4, 0.1, 0.5]]).unwrap(),
        ] {
            for k in 1..=6 {
                assert!((chain.beta(k) - beta_by_enumeration(&chain, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beta_decays_with_second_eigenvalue() {
        // For two-state chains and flip chains P - Pi has a single non-zero
        // eigenvalue, so beta_k = beta_1 lambda^(k-1) exactly.
        for (chain, lambda) in [
            (
                HiddenChain::new(vec![vec![0.8, 0.2], vec![0.35, 0.65]]).unwrap(),
                0.45f64,
            ),
            (HiddenChain::flip(4, 0.3).unwrap(), 1.0 - 0.3 * 4.0 / 3.0),
        ] {
            let eig = chain.transition().clone().complex_eigenvalues();
            let mut mags: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
            mags.sort_by(|a, b| b.total_cmp(a));
            assert!((mags[1] - lambda.abs()).abs() < 1e-9);
            let b1 = chain.beta(1);
            for k in 1..=64 {
                let bound = b1 * mags[1].powi(k as i32 - 1);
                assert!(chain.beta(k) <= bound + 1e-12, "k={k}");
            }
        }
    }

    #[test]
    fn mixing_rate_reports() {
        let prod = ProcessModel::product(static_concepts(0.5, 0.1, 1)).unwrap();
        let profile = MixingProfile::compute(&prod, 3.0, 64).unwrap();
        let report = verify_mixing_rate(&profile, 1e6);
        assert_eq!(report.bound_constant, 0.0);
        assert!(!report.violation);

        let chain = HiddenChain::flip(4, 0.3).unwrap();
        let m = ProcessModel::markov_modulated(chain.clone(), static_concepts(0.5, 0.1, 1)).unwrap();
        let profile = MixingProfile::compute(&m, 2.0, 64).unwrap();
        let expected = (1..=64).map(|k| chain.beta(k) * (k * k) as f64).fold(0.0, f64::max);
        assert!((profile.bound_constant - expected).abs() < 1e-12);
        let report = verify_mixing_rate(&profile, 1e6);
        assert!(!report.violation && report.worst_k < 64);

        let flat = MixingProfile::from_betas(1.0, vec![1.0; 64]);
        let report = verify_mixing_rate(&flat, 1e6);
        assert!(report.violation);
        assert_eq!(report.worst_k, 64);
    }

    #[test]
    fn process_record_round_trip() {
        let chain = HiddenChain::cyclic(3, 0.2).unwrap();
        let concepts = vec![
            Marginal::threshold(0.4, 0.1).unwrap(),
            Marginal::threshold(0.45, 0.1).unwrap(),
        ];
        let m = ProcessModel::markov_modulated(chain, concepts).unwrap();
        let json = serde_json::to_value(ProcessRecord::from(&m)).unwrap();
        for key in ["kind", "transition", "emission", "eta", "thetas"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        let rec: ProcessRecord = serde_json::from_value(json).unwrap();
        let back = ProcessModel::try_from(rec).unwrap();
        assert_eq!(back.marginals(), m.marginals());
        assert_eq!(back.chain().unwrap().rows(), m.chain().unwrap().rows());
    }

    proptest! {
        #[test]
        fn beta_is_monotone(rows in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 3), 3)) {
            let rows: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|r| { let s: f64 = r.iter().sum(); r.into_iter().map(|v| v / s).collect() })
                .collect();
            let chain = HiddenChain::new(rows).unwrap();
            let mut prev = chain.beta(1);
            prop_assert!((0.0..=1.0).contains(&prev));
            for k in 2..=32 {
                let b = chain.beta(k);
                prop_assert!(b <= prev + 1e-12);
                prev = b;
            }
        }
    }
}
