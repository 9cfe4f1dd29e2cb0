//! Grid-driven verification runs with JSON reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{ChainSpec, ConfigError, SCHEMA_VERSION};
use super::HarnessError;
use crate::distributions::{
    concept_path, discrepancy, tv_distance, DriftKind, DriftSchedule, DriftSpec, Marginal, Observation,
};
use crate::evaluation::{geometric_checkpoints, verify_blocking, verify_uniform_deviation};
use crate::hypotheses::{FunctionClass, Hypothesis};
use crate::processes::{verify_mixing_rate, HiddenChain, MixingProfile, ProcessModel, DEFAULT_K_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyKind {
    Blocking,
    UniformDeviation,
    Discrepancy,
    MixingRate,
}

impl VerifyKind {
    pub fn name(self) -> &'static str {
        match self {
            VerifyKind::Blocking => "blocking",
            VerifyKind::UniformDeviation => "uniform_deviation",
            VerifyKind::Discrepancy => "discrepancy",
            VerifyKind::MixingRate => "mixing_rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema: u32,
    pub kind: VerifyKind,
    pub passed: bool,
    pub checks: usize,
    /// The failing configurations, each with its measured values.
    pub failures: Vec<Value>,
    pub details: Value,
    pub options: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockingOptions {
    pub states: Vec<usize>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub t: Vec<usize>,
    pub p: Vec<f64>,
    pub tolerance: f64,
}

impl Default for BlockingOptions {
    fn default() -> Self {
        BlockingOptions {
            states: vec![2, 3, 4],
            n: vec![2, 3, 4],
            k: (1..=8).collect(),
            t: (1..=5).collect(),
            p: vec![0.1, 0.3, 0.45],
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalCase {
    Identical,
    Drifting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviationOptions {
    pub m_min: usize,
    pub m_max: usize,
    pub trials: usize,
    pub seed: u64,
    pub eta: f64,
    pub theta: f64,
    /// Schedule driving the concept in the drifting case.
    pub drift: DriftSpec,
    pub cases: Vec<MarginalCase>,
    pub exponent_band: f64,
    /// Largest allowed ratio of the biggest to the smallest `E sup / sqrt(d/m)`.
    pub spread_max: f64,
}

impl Default for DeviationOptions {
    fn default() -> Self {
        DeviationOptions {
            m_min: 1 << 4,
            m_max: 1 << 14,
            trials: 2000,
            seed: 0,
            eta: 0.1,
            theta: 0.5,
            drift: DriftSpec::new(DriftKind::PowerStep, 0.5),
            cases: vec![MarginalCase::Identical, MarginalCase::Drifting],
            exponent_band: 0.08,
            spread_max: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscrepancyOptions {
    pub pairs: usize,
    pub closed_form_pairs: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for DiscrepancyOptions {
    fn default() -> Self {
        DiscrepancyOptions {
            pairs: 10_000,
            closed_form_pairs: 1000,
            seed: 0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixingOptions {
    pub chains: Vec<ChainSpec>,
    pub r: f64,
    pub k_max: usize,
    pub cap: f64,
}

impl Default for MixingOptions {
    fn default() -> Self {
        MixingOptions {
            chains: vec![
                ChainSpec::Flip { states: 2, p: 0.3 },
                ChainSpec::Flip { states: 4, p: 0.3 },
                ChainSpec::Cyclic { states: 3, p: 0.35 },
            ],
            r: 2.0,
            k_max: DEFAULT_K_MAX,
            cap: 1e6,
        }
    }
}

fn parse_options<T: for<'de> Deserialize<'de> + Default>(options: Option<&str>) -> Result<T, ConfigError> {
    match options {
        None => Ok(T::default()),
        Some(text) => {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| {
                let path = e.path().to_string();
                ConfigError::new(
                    if path == "." {
                        "options".into()
                    } else {
                        format!("options.{path}")
                    },
                    e.into_inner().to_string(),
                )
            })
        }
    }
}

/// Runs one verification kind. `options` is a JSON object overriding the
/// defaults; `trials` overrides the uniform-deviation trial count.
pub fn run_verify(
    kind: VerifyKind,
    options: Option<&str>,
    trials: Option<usize>,
) -> Result<VerifyReport, HarnessError> {
    match kind {
        VerifyKind::Blocking => blocking(parse_options(options)?),
        VerifyKind::UniformDeviation => {
            let mut o: DeviationOptions = parse_options(options)?;
            if let Some(t) = trials {
                o.trials = t;
            }
            uniform_deviation(o)
        }
        VerifyKind::Discrepancy => discrepancy_check(parse_options(options)?),
        VerifyKind::MixingRate => mixing(parse_options(options)?),
    }
}

fn report(
    kind: VerifyKind,
    checks: usize,
    failures: Vec<Value>,
    details: Value,
    options: &impl Serialize,
) -> VerifyReport {
    VerifyReport {
        schema: SCHEMA_VERSION,
        kind,
        passed: failures.is_empty(),
        checks,
        failures,
        details,
        options: serde_json::to_value(options).unwrap_or(Value::Null),
    }
}

fn blocking(o: BlockingOptions) -> Result<VerifyReport, HarnessError> {
    let mut checks = 0;
    let mut failures = Vec::new();
    let mut min_slack = f64::INFINITY;
    let mut max_gap: f64 = 0.0;
    for &s in &o.states {
        for &p in &o.p {
            let chain = HiddenChain::flip(s, p).map_err(|e| ConfigError::new("options.p", e.to_string()))?;
            let longest = o.t.iter().max().copied().unwrap_or(1)
                + (o.n.iter().max().copied().unwrap_or(1) - 1) * o.k.iter().max().copied().unwrap_or(1);
            let model = ProcessModel::markov_modulated(chain, vec![Marginal::threshold(0.5, 0.1)?; longest])?;
            for &n in &o.n {
                for &k in &o.k {
                    for &t in &o.t {
                        let r =
                            verify_blocking(&model, t, n, k).map_err(|e| ConfigError::new("options", e.to_string()))?;
                        checks += 1;
                        min_slack = min_slack.min(r.slack);
                        max_gap = max_gap.max(r.tv_gap);
                        if r.slack < -o.tolerance {
                            failures.push(json!({"states": s, "p": p, "report": r}));
                        }
                    }
                }
            }
        }
    }
    let details = json!({"min_slack": min_slack, "max_tv_gap": max_gap});
    Ok(report(VerifyKind::Blocking, checks, failures, details, &o))
}

fn uniform_deviation(o: DeviationOptions) -> Result<VerifyReport, HarnessError> {
    let grid =
        geometric_checkpoints(o.m_min, o.m_max, 1).map_err(|e| ConfigError::new("options.m_min", e.to_string()))?;
    if o.cases.is_empty() {
        return Err(ConfigError::new("options.cases", "need at least one case").into());
    }
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for case in &o.cases {
        let marginals = match case {
            MarginalCase::Identical => vec![
                Marginal::threshold(o.theta, o.eta)
                    .map_err(|e| ConfigError::new("options.theta", e.to_string()))?;
                o.m_max
            ],
            MarginalCase::Drifting => {
                let schedule = DriftSchedule::generate(&o.drift, o.m_max)
                    .map_err(|e| ConfigError::new("options.drift", e.to_string()))?;
                concept_path(&schedule, o.eta, o.theta)
                    .map_err(|e| ConfigError::new("options.drift", e.to_string()))?
                    .marginals()
            }
        };
        let r =
            verify_uniform_deviation(&FunctionClass::Threshold, &marginals, &grid, o.trials, o.seed).map_err(|e| {
                match e {
                    crate::Error::InvalidParameter { name, reason } => {
                        HarnessError::Config(ConfigError::new(format!("options.{name}"), reason))
                    }
                    other => other.into(),
                }
            })?;
        let exponent_ok = r.exponent.is_some_and(|e| (e + 0.5).abs() <= o.exponent_band);
        let spread_ok = r.spread <= o.spread_max;
        if !exponent_ok || !spread_ok {
            failures.push(json!({
                "case": case,
                "exponent": r.exponent,
                "exponent_ok": exponent_ok,
                "spread": r.spread,
                "spread_ok": spread_ok,
            }));
        }
        details.push(json!({"case": case, "report": r}));
    }
    let checks = 2 * o.cases.len();
    Ok(report(
        VerifyKind::UniformDeviation,
        checks,
        failures,
        Value::Array(details),
        &o,
    ))
}

/// A random marginal from either family, on a coarse x-grid so finite
/// supports overlap.
pub fn random_marginal(rng: &mut ChaCha8Rng, family: bool) -> Marginal {
    if family {
        Marginal::threshold(rng.gen(), rng.gen_range(0.0..0.5)).expect("in range")
    } else {
        let size = rng.gen_range(1..=6);
        let mut support: Vec<Observation> = Vec::with_capacity(size);
        while support.len() < size {
            let z = Observation::new(f64::from(rng.gen_range(0..=8u8)) / 8.0, rng.gen_range(0..=1)).expect("valid");
            if !support.contains(&z) {
                support.push(z);
            }
        }
        let raw: Vec<f64> = (0..size).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        Marginal::finite(support, raw.iter().map(|w| w / total).collect()).expect("normalised")
    }
}

fn discrepancy_check(o: DiscrepancyOptions) -> Result<VerifyReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let class = FunctionClass::Threshold;
    let mut failures = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for i in 0..o.pairs {
        let family = i % 2 == 0;
        let p = random_marginal(&mut rng, family);
        let q = random_marginal(&mut rng, family);
        let rho = discrepancy(&p, &q, &class)?;
        let tv = tv_distance(&p, &q)?;
        if tv > 0.0 {
            max_ratio = max_ratio.max(rho / tv);
        }
        if rho < -o.tolerance || rho > tv + o.tolerance || tv > 1.0 + o.tolerance {
            failures.push(json!({"pair": i, "p": p, "q": q, "rho": rho, "tv": tv}));
        }
    }
    let mut worst_closed: f64 = 0.0;
    for i in 0..o.closed_form_pairs {
        let eta = rng.gen_range(0.0..0.5);
        let p = Marginal::threshold(rng.gen(), eta)?;
        let q = Marginal::threshold(rng.gen(), eta)?;
        let (Marginal::ThresholdConcept(a), Marginal::ThresholdConcept(b)) = (&p, &q) else {
            unreachable!("built as threshold concepts")
        };
        let closed = (1.0 - 2.0 * eta) * (a.theta() - b.theta()).abs();
        let grid = (0..=1000)
            .map(|j| {
                let h = Hypothesis::Threshold(f64::from(j) / 1000.0);
                Ok((class.risk(&h, &p)? - class.risk(&h, &q)?).abs())
            })
            .collect::<crate::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let exact = discrepancy(&p, &q, &class)?;
        let err = (closed - grid).abs().max((closed - exact).abs());
        worst_closed = worst_closed.max(err);
        if err > o.tolerance {
            failures.push(json!({"closed_form_pair": i, "closed": closed, "grid": grid, "exact": exact}));
        }
    }
    let details = json!({"max_rho_over_tv": max_ratio, "worst_closed_form_error": worst_closed});
    Ok(report(
        VerifyKind::Discrepancy,
        o.pairs + o.closed_form_pairs,
        failures,
        details,
        &o,
    ))
}

fn mixing(o: MixingOptions) -> Result<VerifyReport, HarnessError> {
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for (i, spec) in o.chains.iter().enumerate() {
        let chain = spec
            .build()
            .map_err(|e| ConfigError::new(format!("options.chains[{i}]"), e.to_string()))?;
        let model = ProcessModel::markov_modulated(chain, vec![Marginal::threshold(0.5, 0.1)?])
            .map_err(|e| ConfigError::new(format!("options.chains[{i}]"), e.to_string()))?;
        let profile =
            MixingProfile::compute(&model, o.r, o.k_max).map_err(|e| ConfigError::new("options", e.to_string()))?;
        let r = verify_mixing_rate(&profile, o.cap);
        if r.violation {
            failures.push(json!({"chain": spec, "report": r}));
        }
        details.push(json!({"chain": spec, "report": r}));
    }
    Ok(report(
        VerifyKind::MixingRate,
        o.chains.len(),
        failures,
        Value::Array(details),
        &o,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocking_default_grid_passes() {
        let r = run_verify(VerifyKind::Blocking, None, None).unwrap();
        assert!(r.passed);
        assert_eq!(r.checks, 3 * 3 * 8 * 5 * 3);
    }

    #[test]
    fn one_trial_is_a_config_error() {
        let e = run_verify(VerifyKind::UniformDeviation, None, Some(1)).unwrap_err();
        match e {
            HarnessError::Config(c) => assert_eq!(c.key, "options.trials"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn discrepancy_small_run() {
        let r = run_verify(
            VerifyKind::Discrepancy,
            Some(r#"{"pairs": 500, "closed_form_pairs": 50}"#),
            None,
        )
        .unwrap();
        assert!(r.passed, "{:?}", r.failures);
    }

    #[test]
    fn mixing_defaults_pass_and_unknown_options_fail() {
        assert!(run_verify(VerifyKind::MixingRate, None, None).unwrap().passed);
        assert!(matches!(
            run_verify(VerifyKind::MixingRate, Some(r#"{"colour": 1}"#), None),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn fast_uniform_deviation() {
        let opts = r#"{"m_min": 16, "m_max": 1024, "trials": 300}"#;
        let r = run_verify(VerifyKind::UniformDeviation, Some(opts), None).unwrap();
        assert_eq!(r.checks, 4);
        assert!(r.passed, "{:?}", r.failures);
    }
}
