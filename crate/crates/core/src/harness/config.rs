//! Experiment configuration: parsing, validation and the stable config hash.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::distributions::{concept_path, DriftKind, DriftSchedule, DriftSpec, FiniteLaw, Marginal};
use crate::evaluation::{geometric_checkpoints, tail_half, theoretical_exponent};
use crate::hypotheses::FunctionClass;
use crate::learners::{
    AdaptiveWindowLearner, BaselineKind, BaselineLearner, ConstantWindowLearner, Learner, SubsampledErmLearner,
};
use crate::processes::{HiddenChain, ProcessModel, MAX_STATES};
use crate::Error;

/// Version of every file layout written by the harness.
pub const SCHEMA_VERSION: u32 = 1;

pub const MAX_HORIZON: usize = 1 << 24;

/// Hex digits of SHA-256 kept in config identifiers.
pub const HASH_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted path of the offending key.
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config at `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKindSpec {
    Product,
    MarkovModulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpec {
    Flip { states: usize, p: f64 },
    Cyclic { states: usize, p: f64 },
    Explicit { transition: Vec<Vec<f64>> },
}

impl ChainSpec {
    pub fn build(&self) -> crate::Result<HiddenChain> {
        match self {
            ChainSpec::Flip { states, p } => HiddenChain::flip(*states, *p),
            ChainSpec::Cyclic { states, p } => HiddenChain::cyclic(*states, *p),
            ChainSpec::Explicit { transition } => HiddenChain::new(transition.clone()),
        }
    }
}

fn default_theta0() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub kind: ProcessKindSpec,
    #[serde(default)]
    pub chain: Option<ChainSpec>,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "default_theta0")]
    pub theta0: f64,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
    /// A fixed finite law used at every step instead of a drifting concept.
    #[serde(default)]
    pub law: Option<FiniteLaw>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    SubsampledErm { alpha: f64, r: f64 },
    AdaptiveWindow,
    ConstantWindow { gamma: f64 },
    FullHistoryErm,
    LastPoint,
}

impl LearnerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::SubsampledErm { .. } => "subsampled_erm",
            LearnerSpec::AdaptiveWindow => "adaptive_window",
            LearnerSpec::ConstantWindow { .. } => "constant_window",
            LearnerSpec::FullHistoryErm => "full_history_erm",
            LearnerSpec::LastPoint => "last_point",
        }
    }
}

fn default_per_octave() -> usize {
    4
}

fn default_tail_only() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckpointSpec {
    List(Vec<usize>),
    Grid {
        #[serde(default)]
        min: Option<usize>,
        #[serde(default)]
        max: Option<usize>,
        #[serde(default = "default_per_octave")]
        per_octave: usize,
        /// Fit only the upper half of the grid's log range.
        #[serde(default = "default_tail_only")]
        tail_only: bool,
    },
}

impl Default for CheckpointSpec {
    fn default() -> Self {
        CheckpointSpec::Grid {
            min: None,
            max: None,
            per_octave: default_per_octave(),
            tail_only: default_tail_only(),
        }
    }
}

pub const DEFAULT_CHECKPOINT_MIN: usize = 256;

impl CheckpointSpec {
    /// Checkpoints used for the rate fit.
    pub fn resolve(&self, horizon: usize) -> Result<Vec<usize>, ConfigError> {
        match self {
            CheckpointSpec::List(ts) => {
                if ts.is_empty() || ts[0] < 1 || ts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ConfigError::new(
                        "checkpoints",
                        "need an increasing list of positive steps",
                    ));
                }
                if *ts.last().expect("non-empty") > horizon {
                    return Err(ConfigError::new(
                        "checkpoints",
                        format!("checkpoint beyond horizon {horizon}"),
                    ));
                }
                Ok(ts.clone())
            }
            CheckpointSpec::Grid {
                min,
                max,
                per_octave,
                tail_only,
            } => {
                let hi = max.unwrap_or(horizon);
                let lo = min.unwrap_or(DEFAULT_CHECKPOINT_MIN.min(hi));
                if hi > horizon {
                    return Err(ConfigError::new(
                        "checkpoints.max",
                        format!("{hi} exceeds horizon {horizon}"),
                    ));
                }
                if lo < 1 || lo > hi {
                    return Err(ConfigError::new(
                        "checkpoints.min",
                        format!("need 1 <= min <= max, got {lo}..{hi}"),
                    ));
                }
                if *per_octave < 1 {
                    return Err(ConfigError::new("checkpoints.per_octave", "must be at least 1"));
                }
                let grid = geometric_checkpoints(lo, hi, *per_octave)
                    .map_err(|e| ConfigError::new("checkpoints", e.to_string()))?;
                Ok(if *tail_only { tail_half(&grid) } else { grid })
            }
        }
    }
}

fn default_class() -> FunctionClass {
    FunctionClass::Threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub process: ProcessSpec,
    #[serde(default = "default_class")]
    pub class: FunctionClass,
    pub learner: LearnerSpec,
    pub horizon: usize,
    #[serde(default)]
    pub checkpoints: CheckpointSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A validated configuration with every model object constructed.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    pub schedule: Option<DriftSchedule>,
    pub model: ProcessModel,
    pub learner: Box<dyn Learner>,
    pub fit_points: Vec<usize>,
    pub theoretical: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "config".to_string() } else { path };
            ConfigError::new(key, e.into_inner().to_string())
        })
    }

    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        Self::from_json(&value.to_string())
    }

    /// Canonical JSON with defaults filled in and `output_dir` removed.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
        }
        // serde_json maps are ordered by key, so this string is canonical
        v.to_string()
    }

    pub fn hash(&self) -> String {
        short_hash(self.canonical_json().as_bytes())
    }

    /// Checks every cross-module precondition and builds the experiment.
    pub fn build(&self) -> Result<Experiment, ConfigError> {
        if self.horizon < 1 || self.horizon > MAX_HORIZON {
            return Err(ConfigError::new(
                "horizon",
                format!("must lie in 1..={MAX_HORIZON}, got {}", self.horizon),
            ));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::new("seeds", "need at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::new("seeds", "seeds must be distinct"));
        }
        self.check_learner()?;
        let (model, schedule) = self.build_process()?;
        self.check_class(&model)?;
        let fit_points = self.checkpoints.resolve(self.horizon)?;
        let learner = self.build_learner(schedule.as_ref())?;
        let theoretical = match self.learner {
            LearnerSpec::SubsampledErm { alpha, r } => theoretical_exponent(alpha, r).ok(),
            _ => None,
        };
        Ok(Experiment {
            config: self.clone(),
            hash: self.hash(),
            schedule,
            model,
            learner,
            fit_points,
            theoretical,
        })
    }

    fn check_learner(&self) -> Result<(), ConfigError> {
        match self.learner {
            LearnerSpec::SubsampledErm { alpha, r } => {
                if !(0.0..1.0).contains(&alpha) {
                    return Err(ConfigError::new(
                        "learner.alpha",
                        format!("must lie in [0,1), got {alpha}"),
                    ));
                }
                if !(r > 0.0 && r.is_finite()) {
                    return Err(ConfigError::new(
                        "learner.r",
                        format!("must be positive and finite, got {r}"),
                    ));
                }
            }
            LearnerSpec::ConstantWindow { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                return Err(ConfigError::new(
                    "learner.gamma",
                    format!("must lie in (0,1], got {gamma}"),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    fn build_process(&self) -> Result<(ProcessModel, Option<DriftSchedule>), ConfigError> {
        let p = &self.process;
        let (marginals, schedule) = match (&p.law, &p.drift) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "process.law",
                    "a fixed law cannot be combined with `drift`",
                ))
            }
            (Some(law), None) => {
                if p.kind != ProcessKindSpec::Product {
                    return Err(ConfigError::new(
                        "process.law",
                        "fixed laws are only emitted by product processes",
                    ));
                }
                (vec![Marginal::FiniteSupport(law.clone()); self.horizon], None)
            }
            (None, drift) => {
                if !(0.0..0.5).contains(&p.eta) {
                    return Err(ConfigError::new(
                        "process.eta",
                        format!("must lie in [0,0.5), got {}", p.eta),
                    ));
                }
                if !(0.0..=1.0).contains(&p.theta0) {
                    return Err(ConfigError::new(
                        "process.theta0",
                        format!("must lie in [0,1], got {}", p.theta0),
                    ));
                }
                let spec = drift
                    .clone()
                    .unwrap_or_else(|| DriftSpec::new(DriftKind::PowerStep, 0.0).with_scale(0.0));
                spec.validate().map_err(|e| keyed("process.drift", e))?;
                let schedule = DriftSchedule::generate(&spec, self.horizon).map_err(|e| keyed("process.drift", e))?;
                let path = concept_path(&schedule, p.eta, p.theta0).map_err(|e| keyed("process.drift", e))?;
                (path.marginals(), Some(schedule))
            }
        };
        let model = match p.kind {
            ProcessKindSpec::Product => {
                if p.chain.is_some() {
                    return Err(ConfigError::new("process.chain", "product processes take no chain"));
                }
                ProcessModel::product(marginals).map_err(|e| keyed("process", e))?
            }
            ProcessKindSpec::MarkovModulated => {
                let spec = p
                    .chain
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("process.chain", "required for markov_modulated"))?;
                if let ChainSpec::Flip { states, .. } | ChainSpec::Cyclic { states, .. } = spec {
                    if !(2..=MAX_STATES).contains(states) {
                        return Err(ConfigError::new(
                            "process.chain.states",
                            format!("must lie in 2..={MAX_STATES}, got {states}"),
                        ));
                    }
                }
                let chain = spec.build().map_err(|e| keyed("process.chain", e))?;
                ProcessModel::markov_modulated(chain, marginals).map_err(|e| keyed("process.chain", e))?
            }
        };
        Ok((model, schedule))
    }

    fn check_class(&self, model: &ProcessModel) -> Result<(), ConfigError> {
        let class = &self.class;
        class
            .inf_risk(model.marginal(1))
            .and_then(|_| class.risk(&class.default_member(), model.marginal(1)))
            .map_err(|e| keyed("class", e))?;
        Ok(())
    }

    fn build_learner(&self, schedule: Option<&DriftSchedule>) -> Result<Box<dyn Learner>, ConfigError> {
        let class = self.class.clone();
        Ok(match &self.learner {
            LearnerSpec::SubsampledErm { alpha, r } => {
                Box::new(SubsampledErmLearner::new(class, *alpha, *r).map_err(|e| keyed("learner", e))?)
            }
            LearnerSpec::AdaptiveWindow => {
                let still;
                let schedule = match schedule {
                    Some(s) => s,
                    None => {
                        // a fixed law does not drift
                        still = DriftSchedule::from_deltas(0.0, vec![0.0; self.horizon])
                            .map_err(|e| keyed("learner", e))?;
                        &still
                    }
                };
                Box::new(AdaptiveWindowLearner::new(class, schedule))
            }
            LearnerSpec::ConstantWindow { gamma } => {
                Box::new(ConstantWindowLearner::new(class, *gamma).map_err(|e| keyed("learner.gamma", e))?)
            }
            LearnerSpec::FullHistoryErm => Box::new(BaselineLearner::new(BaselineKind::FullHistoryErm, class)),
            LearnerSpec::LastPoint => Box::new(BaselineLearner::new(BaselineKind::LastPoint, class)),
        })
    }
}

/// Prefixes the parameter name of a core error with the config section.
fn keyed(section: &str, e: Error) -> ConfigError {
    match e {
        Error::InvalidParameter { name, reason } => ConfigError::new(format!("{section}.{name}"), reason),
        other => ConfigError::new(section, other.to_string()),
    }
}

pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut h = hex::encode(digest);
    h.truncate(HASH_LEN);
    h
}
