//! Observations, marginal families, drift schedules and the two distances
//! used to measure drift: total variation and class discrepancy.
//!
//! Everything here is closed-form. A [`ThresholdConcept`] is the law of
//! `(x, y)` with `x ~ Uniform[0,1]` and `y = 1[x >= theta]` flipped with
//! probability `eta`; a [`FiniteLaw`] is an explicit probability vector over
//! a finite set of observations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hypotheses::FunctionClass;
use crate::{Error, Result};

/// Tolerance for probability vectors summing to one.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// A single data point `(x, y)` with `x` in `[0,1]` and `y` in `{0,1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObservation")]
pub struct Observation {
    x: f64,
    y: u8,
}

#[derive(Deserialize)]
struct RawObservation {
    x: f64,
    y: u8,
}

impl TryFrom<RawObservation> for Observation {
    type Error = Error;

    fn try_from(raw: RawObservation) -> Result<Self> {
        Observation::new(raw.x, raw.y)
    }
}

impl Observation {
    pub fn new(x: f64, y: u8) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) || y > 1 {
            return Err(Error::InvalidObservation { x, y });
        }
        // normalise -0.0 so support lookups compare cleanly
        Ok(Observation { x: x + 0.0, y })
    }

    pub(crate) fn new_unchecked(x: f64, y: u8) -> Self {
        debug_assert!((0.0..=1.0).contains(&x) && y <= 1);
        Observation { x, y }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> u8 {
        self.y
    }

    pub fn label(&self) -> bool {
        self.y == 1
    }
}

/// Threshold concept with uniform x-law and symmetric label noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConcept")]
pub struct ThresholdConcept {
    theta: f64,
    eta: f64,
}

#[derive(Deserialize)]
struct RawConcept {
    theta: f64,
    eta: f64,
}

impl TryFrom<RawConcept> for ThresholdConcept {
    type Error = Error;

    fn try_from(raw: RawConcept) -> Result<Self> {
        ThresholdConcept::new(raw.theta, raw.eta)
    }
}

impl ThresholdConcept {
    pub fn new(theta: f64, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::param("theta", format!("must lie in [0,1], got {theta}")));
        }
        check_eta(eta)?;
        Ok(ThresholdConcept { theta, eta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..0.5).contains(&eta) {
        return Err(Error::param("eta", format!("must lie in [0, 1/2), got {eta}")));
    }
    Ok(())
}

/// Explicit probability vector over distinct observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFiniteLaw")]
pub struct FiniteLaw {
    support: Vec<Observation>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawFiniteLaw {
    support: Vec<Observation>,
    probs: Vec<f64>,
}

impl TryFrom<RawFiniteLaw> for FiniteLaw {
    type Error = Error;

    fn try_from(raw: RawFiniteLaw) -> Result<Self> {
        FiniteLaw::new(raw.support, raw.probs)
    }
}

impl FiniteLaw {
    pub fn new(support: Vec<Observation>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidProbabilities("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::InvalidProbabilities(format!(
                "{} support points but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        check_probability_vector(&probs)?;
        for (i, a) in support.iter().enumerate() {
            if support[..i].contains(a) {
                return Err(Error::InvalidProbabilities(format!(
                    "duplicate support point ({}, {})",
                    a.x, a.y
                )));
            }
        }
        Ok(FiniteLaw { support, probs })
    }

    pub fn support(&self) -> &[Observation] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability mass on `z` (zero when `z` is off-support).
    pub fn mass(&self, z: &Observation) -> f64 {
        self.support.iter().position(|s| s == z).map_or(0.0, |i| self.probs[i])
    }
}

pub(crate) fn check_probability_vector(probs: &[f64]) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidProbabilities(format!("negative or non-finite entry {p}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidProbabilities(format!("entries sum to {total}")));
    }
    Ok(())
}

/// The marginal law `P_t` of a single observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    ThresholdConcept(ThresholdConcept),
    FiniteSupport(FiniteLaw),
}

impl Marginal {
    pub fn threshold(theta: f64, eta: f64) -> Result<Self> {
        ThresholdConcept::new(theta, eta).map(Marginal::ThresholdConcept)
    }

    pub fn finite(support: Vec<Observation>, probs: Vec<f64>) -> Result<Self> {
        FiniteLaw::new(support, probs).map(Marginal::FiniteSupport)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Marginal::ThresholdConcept(_) => "threshold_concept",
            Marginal::FiniteSupport(_) => "finite_support",
        }
    }
}

/// Total variation distance `sup_A P(A) - Q(A)`, exact.
pub fn tv_distance(p: &Marginal, q: &Marginal) -> Result<f64> {
    match (p, q) {
        (Marginal::ThresholdConcept(a), Marginal::ThresholdConcept(b)) => {
            // Labels agree on a set of x-measure 1-L and disagree on a set of measure L.
            let l = (a.theta - b.theta).abs();
            let agree = (a.eta - b.eta).abs();
            let disagree = (1.0 - a.eta - b.eta).abs();
            Ok((1.0 - l) * agree + l * disagree)
        }
        (Marginal::FiniteSupport(a), Marginal::FiniteSupport(b)) => {
            let mut l1: f64 = a
                .support
                .iter()
                .zip(&a.probs)
                .map(|(z, pa)| (pa - b.mass(z)).abs())
                .sum();
            l1 += b
                .support
                .iter()
                .zip(&b.probs)
                .filter(|(z, _)| !a.support.contains(z))
                .map(|(_, pb)| pb)
                .sum::<f64>();
            Ok((0.5 * l1).clamp(0.0, 1.0))
        }
        _ => Err(Error::FamilyMismatch {
            left: p.family_name(),
            right: q.family_name(),
        }),
    }
}

/// Class discrepancy `rho(P, Q) = sup_f |E_P f - E_Q f|`, exact.
///
/// Both risks are piecewise linear (or piecewise constant) in the hypothesis
/// parameter, so the supremum is taken over the finite set of breakpoints the
/// class reports for this pair.
pub fn discrepancy(p: &Marginal, q: &Marginal, class: &FunctionClass) -> Result<f64> {
    if p.family_name() != q.family_name() {
        return Err(Error::FamilyMismatch {
            left: p.family_name(),
            right: q.family_name(),
        });
    }
    let mut sup: f64 = 0.0;
    for h in class.discrepancy_candidates(p, q)? {
        let gap = (class.risk(&h, p)? - class.risk(&h, q)?).abs();
        sup = sup.max(gap);
    }
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    TriangleWave,
    PowerStep,
    Constant,
}

/// Parameters of a drift schedule as they appear in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub kind: DriftKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Magnitude scale `c0` in `min(1, c0 * t^(alpha-1))`.
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Triangle waves reverse once the signed drift would leave `[-amplitude, amplitude]`.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_scale() -> f64 {
    1.0
}

fn default_amplitude() -> f64 {
    0.25
}

impl DriftSpec {
    pub fn new(kind: DriftKind, alpha: f64) -> Self {
        DriftSpec {
            kind,
            alpha,
            gamma: None,
            scale: default_scale(),
            amplitude: default_amplitude(),
            seed: 0,
        }
    }

    pub fn constant(gamma: f64) -> Self {
        DriftSpec {
            gamma: Some(gamma),
            ..DriftSpec::new(DriftKind::Constant, 0.0)
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::param("alpha", format!("must lie in [0,1), got {}", self.alpha)));
        }
        match self.kind {
            DriftKind::Constant => match self.gamma {
                Some(g) if g > 0.0 && g < 1.0 => {}
                Some(g) => return Err(Error::param("gamma", format!("must lie in (0,1), got {g}"))),
                None => return Err(Error::param("gamma", "required for constant drift")),
            },
            DriftKind::PowerStep | DriftKind::TriangleWave => {
                if !(self.scale.is_finite() && self.scale >= 0.0) {
                    return Err(Error::param(
                        "scale",
                        format!("must be finite and >= 0, got {}", self.scale),
                    ));
                }
            }
        }
        if self.kind == DriftKind::TriangleWave && !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param(
                "amplitude",
                format!("must be positive, got {}", self.amplitude),
            ));
        }
        Ok(())
    }
}

/// The drift magnitudes `Delta_1..Delta_T` and the direction each step takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSchedule {
    kind: DriftKind,
    alpha: f64,
    gamma: Option<f64>,
    deltas: Vec<f64>,
    directions: Vec<i8>,
    growth_constant: f64,
}

/// Build a schedule with default scale and amplitude.
pub fn make_drift_schedule(
    kind: DriftKind,
    alpha: f64,
    gamma: Option<f64>,
    horizon: usize,
    seed: u64,
) -> Result<DriftSchedule> {
    let spec = DriftSpec {
        gamma,
        seed,
        ..DriftSpec::new(kind, alpha)
    };
    DriftSchedule::generate(&spec, horizon)
}

impl DriftSchedule {
    /// Deterministic in `(spec, horizon)`; the seed only picks the initial
    /// direction of a triangle wave.
    pub fn generate(spec: &DriftSpec, horizon: usize) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        spec.validate()?;

        let mut deltas = Vec::with_capacity(horizon);
        deltas.push(0.0);
        for t in 2..=horizon {
            let d = match spec.kind {
                DriftKind::Constant => spec.gamma.expect("validated"),
                DriftKind::PowerStep | DriftKind::TriangleWave => {
                    (spec.scale * (t as f64).powf(spec.alpha - 1.0)).min(1.0)
                }
            };
            deltas.push(d);
        }

        let mut directions = vec![0i8; horizon];
        match spec.kind {
            DriftKind::TriangleWave => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                let mut dir: i8 = if rng.gen_bool(0.5) { 1 } else { -1 };
                let mut position = 0.0;
                for t in 2..=horizon {
                    let d = deltas[t - 1];
                    if (position + f64::from(dir) * d).abs() > spec.amplitude {
                        dir = -dir;
                    }
                    position += f64::from(dir) * d;
                    directions[t - 1] = dir;
                }
            }
            DriftKind::PowerStep | DriftKind::Constant => {
                directions.iter_mut().skip(1).for_each(|d| *d = 1);
            }
        }

        let growth_constant = smallest_growth_constant(&deltas, spec.alpha);
        Ok(DriftSchedule {
            kind: spec.kind,
            alpha: spec.alpha,
            gamma: spec.gamma,
            deltas,
            directions,
            growth_constant,
        })
    }

    /// A schedule from explicit magnitudes; `deltas[0]` must be zero.
    pub fn from_deltas(alpha: f64, deltas: Vec<f64>) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::param("alpha", format!("must lie in [0,1), got {alpha}")));
        }
        if deltas.is_empty() {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        if deltas[0] != 0.0 {
            return Err(Error::param("deltas", "Delta_1 must be 0"));
        }
        if let Some(d) = deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::param("deltas", format!("entry {d} outside [0,1]")));
        }
        let mut directions = vec![1i8; deltas.len()];
        directions[0] = 0;
        let growth_constant = smallest_growth_constant(&deltas, alpha);
        Ok(DriftSchedule {
            kind: DriftKind::PowerStep,
            alpha,
            gamma: None,
            deltas,
            directions,
            growth_constant,
        })
    }

    pub fn kind(&self) -> DriftKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.deltas.len()
    }

    /// `deltas()[t-1]` is `Delta_t`.
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// `Delta_t` for 1-based `t`.
    pub fn delta(&self, t: usize) -> f64 {
        self.deltas[t - 1]
    }

    pub fn directions(&self) -> &[i8] {
        &self.directions
    }

    /// Smallest `C` with `sum_{t<=T} Delta_t <= C T^alpha` over the horizon.
    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    /// `prefix[T]` is `sum_{t<=T} Delta_t`, with `prefix[0] = 0`.
    pub fn prefix_sums(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.deltas.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for d in &self.deltas {
            acc += d;
            out.push(acc);
        }
        out
    }

    /// Checks `sum_{t<=T} Delta_t <= c T^alpha` for every prefix.
    pub fn satisfies_growth_bound(&self, c: f64) -> bool {
        let slack = 1.0 + 4.0 * f64::EPSILON;
        self.prefix_sums()
            .iter()
            .enumerate()
            .skip(1)
            .all(|(t, s)| *s <= c * (t as f64).powf(self.alpha) * slack)
    }
}

/// Analytic growth constant for `power_step`: `c0 / alpha` for `alpha > 0`.
pub fn power_step_growth_bound(alpha: f64, scale: f64) -> Option<f64> {
    (alpha > 0.0).then(|| scale / alpha)
}

fn smallest_growth_constant(deltas: &[f64], alpha: f64) -> f64 {
    let mut acc = 0.0;
    let mut c: f64 = 0.0;
    for (i, d) in deltas.iter().enumerate() {
        acc += d;
        c = c.max(acc / ((i + 1) as f64).powf(alpha));
    }
    c
}

/// Concept positions `theta*_t` realising a drift schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptPath {
    eta: f64,
    thetas: Vec<f64>,
    reflected: Vec<bool>,
}

impl ConceptPath {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// Whether step `t` (index `t-1`) bounced off 0 or 1.
    pub fn reflected(&self) -> &[bool] {
        &self.reflected
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn marginals(&self) -> Vec<Marginal> {
        self.thetas
            .iter()
            .map(|&theta| Marginal::ThresholdConcept(ThresholdConcept { theta, eta: self.eta }))
            .collect()
    }
}

/// Moves the concept by `Delta_t / (1 - 2 eta)` per step, so that
/// `rho(P_t, P_{t-1}) = Delta_t` for the threshold class. Paths reflect off
/// 0 and 1 and keep travelling in the reflected direction.
pub fn concept_path(schedule: &DriftSchedule, eta: f64, theta0: f64) -> Result<ConceptPath> {
    check_eta(eta)?;
    if !(0.0..=1.0).contains(&theta0) {
        return Err(Error::param("theta0", format!("must lie in [0,1], got {theta0}")));
    }
    let gain = 1.0 - 2.0 * eta;
    let horizon = schedule.horizon();
    let mut thetas = Vec::with_capacity(horizon);
    let mut reflected = vec![false; horizon];
    let mut theta = theta0;
    let mut orientation = 1.0;
    thetas.push(theta);
    for t in 2..=horizon {
        let step = schedule.delta(t) / gain;
        if step > 1.0 {
            return Err(Error::StepTooLarge { t, step, eta });
        }
        let mut next = theta + orientation * f64::from(schedule.directions[t - 1]) * step;
        if next > 1.0 {
            next = 2.0 - next;
            orientation = -orientation;
            reflected[t - 1] = true;
        } else if next < 0.0 {
            next = -next;
            orientation = -orientation;
            reflected[t - 1] = true;
        }
        theta = next.clamp(0.0, 1.0);
        thetas.push(theta);
    }
    Ok(ConceptPath { eta, thetas, reflected })
}

/// JSON layout for a schedule together with its concept path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub kind: DriftKind,
    pub alpha: f64,
    pub deltas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub eta: f64,
}

impl DriftRecord {
    pub fn new(schedule: &DriftSchedule, path: &ConceptPath) -> Self {
        DriftRecord {
            kind: schedule.kind,
            alpha: schedule.alpha,
            deltas: schedule.deltas.clone(),
            thetas: path.thetas.clone(),
            eta: path.eta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::FunctionClass;

    fn obs(x: f64, y: u8) -> Observation {
        Observation::new(x, y).unwrap()
    }

    #[test]
    fn observation_domain() {
        assert!(Observation::new(1.2, 0).is_err());
        assert!(Observation::new(0.5, 2).is_err());
        assert!(Observation::new(-0.0, 1).is_ok());
    }

    #[test]
    fn marginal_validation() {
        assert!(Marginal::threshold(0.5, 0.5).is_err());
        assert!(Marginal::threshold(1.5, 0.1).is_err());
        assert!(Marginal::finite(vec![obs(0.1, 0), obs(0.2, 1)], vec![0.5, 0.6]).is_err());
        assert!(Marginal::finite(vec![obs(0.1, 0), obs(0.1, 0)], vec![0.5, 0.5]).is_err());
        assert!(Marginal::finite(vec![obs(0.1, 0)], vec![1.0 + 1e-13]).is_ok());
    }

    #[test]
    fn power_step_alpha_zero() {
        let s = make_drift_schedule(DriftKind::PowerStep, 0.0, None, 4, 0).unwrap();
        assert_eq!(s.deltas(), &[0.0, 0.5, 1.0 / 3.0, 0.25]);
    }

    #[test]
    fn constant_schedule() {
        let s = make_drift_schedule(DriftKind::Constant, 0.0, Some(0.01), 3, 0).unwrap();
        assert_eq!(s.deltas(), &[0.0, 0.01, 0.01]);
        assert!(make_drift_schedule(DriftKind::Constant, 0.0, None, 3, 0).is_err());
    }

    #[test]
    fn schedule_errors() {
        assert!(make_drift_schedule(DriftKind::PowerStep, 1.0, None, 4, 0).is_err());
        assert!(make_drift_schedule(DriftKind::PowerStep, 0.5, None, 0, 0).is_err());
    }

    #[test]
    fn power_step_half_has_constant_two() {
        let s = make_drift_schedule(DriftKind::PowerStep, 0.5, None, 10_000, 0).unwrap();
        assert_eq!(power_step_growth_bound(0.5, 1.0), Some(2.0));
        assert!(s.satisfies_growth_bound(2.0));
        // independent prefix check
        let mut acc = 0.0;
        for t in 1..=10_000usize {
            acc += if t == 1 { 0.0 } else { (t as f64).powf(-0.5) };
            assert!(acc <= 2.0 * (t as f64).sqrt());
        }
        assert!(s.growth_constant() <= 2.0);
        assert!(s.satisfies_growth_bound(s.growth_constant()));
    }

    #[test]
    fn triangle_wave_keeps_magnitudes() {
        let spec = DriftSpec::new(DriftKind::TriangleWave, 0.25).with_seed(3);
        let tri = DriftSchedule::generate(&spec, 500).unwrap();
        let pow = make_drift_schedule(DriftKind::PowerStep, 0.25, None, 500, 3).unwrap();
        assert_eq!(tri.deltas(), pow.deltas());
        assert!(tri.directions()[1..].contains(&-1));
        assert_eq!(tri, DriftSchedule::generate(&spec, 500).unwrap());
    }

    #[test]
    fn zero_drift_holds_concept() {
        let s = DriftSchedule::from_deltas(0.0, vec![0.0; 20]).unwrap();
        let path = concept_path(&s, 0.1, 0.3).unwrap();
        assert!(path.thetas().iter().all(|&t| t == 0.3));
    }

    #[test]
    fn concept_steps() {
        let s = DriftSchedule::from_deltas(0.0, vec![0.0, 0.1]).unwrap();
        let noiseless = concept_path(&s, 0.0, 0.5).unwrap();
        assert!((noiseless.thetas()[1] - 0.6).abs() < 1e-15);
        let noisy = concept_path(&s, 0.25, 0.5).unwrap();
        assert!((noisy.thetas()[1] - 0.7).abs() < 1e-15);
        let m = noisy.marginals();
        let rho = discrepancy(&m[1], &m[0], &FunctionClass::Threshold).unwrap();
        assert!((rho - 0.1).abs() < 1e-12);
    }

    #[test]
    fn concept_reflects() {
        let s = DriftSchedule::from_deltas(0.0, vec![0.0, 0.3, 0.3]).unwrap();
        let path = concept_path(&s, 0.0, 0.9).unwrap();
        assert!((path.thetas()[1] - 0.8).abs() < 1e-12);
        assert!(path.reflected()[1]);
        assert!((path.thetas()[2] - 0.5).abs() < 1e-12);
        assert!(!path.reflected()[2]);
    }

    #[test]
    fn oversized_step_rejected() {
        let s = DriftSchedule::from_deltas(0.0, vec![0.0, 0.6]).unwrap();
        assert!(matches!(concept_path(&s, 0.25, 0.5), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn tv_examples() {
        let p = Marginal::threshold(0.2, 0.1).unwrap();
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        let a = Marginal::finite(vec![obs(0.0, 0), obs(1.0, 1)], vec![0.3, 0.7]).unwrap();
        let b = Marginal::finite(vec![obs(0.0, 0), obs(1.0, 1)], vec![0.5, 0.5]).unwrap();
        assert!((tv_distance(&a, &b).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(tv_distance(&a, &p), Err(Error::FamilyMismatch { .. })));
    }

    /// Midpoint-rule integration of the half-L1 distance between the two
    /// joint densities; exact on every cell not containing a threshold.
    fn tv_by_integration(a: (f64, f64), b: (f64, f64), cells: usize) -> f64 {
        let density = |theta: f64, eta: f64, x: f64, y: u8| {
            let clean = u8::from(x >= theta);
            if clean == y {
                1.0 - eta
            } else {
                eta
            }
        };
        let h = 1.0 / cells as f64;
        let mut total = 0.0;
        for i in 0..cells {
            let x = (i as f64 + 0.5) * h;
            for y in 0..=1u8 {
                total += (density(a.0, a.1, x, y) - density(b.0, b.1, x, y)).abs() * h;
            }
        }
        0.5 * total
    }

    #[test]
    fn threshold_tv_closed_form_matches_integration() {
        let p = Marginal::threshold(0.2, 0.1).unwrap();
        let q = Marginal::threshold(0.5, 0.1).unwrap();
        let tv = tv_distance(&p, &q).unwrap();
        assert!((tv - 0.24).abs() < 1e-12);
        let numeric = tv_by_integration((0.2, 0.1), (0.5, 0.1), 1_000_000);
        assert!((tv - numeric).abs() < 1e-5, "{tv} vs {numeric}");
        // unequal noise levels use the general formula
        let r = Marginal::threshold(0.35, 0.3).unwrap();
        let numeric = tv_by_integration((0.2, 0.1), (0.35, 0.3), 1_000_000);
        assert!((tv_distance(&p, &r).unwrap() - numeric).abs() < 1e-5);
    }

    #[test]
    fn discrepancy_matches_tv_for_equal_noise() {
        let class = FunctionClass::Threshold;
        let p = Marginal::threshold(0.15, 0.2).unwrap();
        let q = Marginal::threshold(0.62, 0.2).unwrap();
        let rho = discrepancy(&p, &q, &class).unwrap();
        // grid brute force over theta
        let mut grid_sup: f64 = 0.0;
        for i in 0..=1000 {
            let h = crate::hypotheses::Hypothesis::Threshold(i as f64 / 1000.0);
            grid_sup = grid_sup.max((class.risk(&h, &p).unwrap() - class.risk(&h, &q).unwrap()).abs());
        }
        assert!((rho - tv_distance(&p, &q).unwrap()).abs() < 1e-9);
        assert!((rho - grid_sup).abs() < 1e-9);
        assert_eq!(discrepancy(&p, &p, &class).unwrap(), 0.0);
    }

    #[test]
    fn drift_record_json_keys() {
        let s = make_drift_schedule(DriftKind::PowerStep, 0.5, None, 5, 0).unwrap();
        let p = concept_path(&s, 0.1, 0.5).unwrap();
        let v = serde_json::to_value(DriftRecord::new(&s, &p)).unwrap();
        for key in ["kind", "alpha", "deltas", "thetas", "eta"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: DriftRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back.thetas, p.thetas());
    }

    #[test]
    fn marginal_json_validates() {
        let ok = r#"{"family":"threshold_concept","theta":0.4,"eta":0.1}"#;
        assert!(serde_json::from_str::<Marginal>(ok).is_ok());
        let bad = r#"{"family":"threshold_concept","theta":0.4,"eta":0.6}"#;
        assert!(serde_json::from_str::<Marginal>(bad).is_err());
    }
}
