//! Prediction strategies mapping a history `Z_1..Z_{t-1}` to a predictor for
//! time `t`.
//!
//! All three drift-aware learners are ERM over a subsample of the trailing
//! history. [`SubsampledErmLearner`] keeps every `k_t`-th point of the last
//! `m_t` (schedules depend only on the drift-growth exponent `alpha` and the
//! mixing exponent `r`), [`AdaptiveWindowLearner`] picks the window length
//! from the known drift magnitudes, and [`ConstantWindowLearner`] uses a
//! fixed window sized from a drift bound `gamma`.

use serde::{Deserialize, Serialize};

use crate::distributions::{DriftSchedule, Observation};
use crate::hypotheses::{FunctionClass, Hypothesis};
use crate::{Error, Result};

/// Powers within this distance of an integer are snapped before `ceil`.
pub const SNAP_TOLERANCE: f64 = 1.0 / (1u64 << 40) as f64;

/// `ceil(v)`, except that values within [`SNAP_TOLERANCE`] of an integer
/// become that integer.
pub fn snapped_ceil(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() <= SNAP_TOLERANCE {
        r as usize
    } else {
        v.ceil() as usize
    }
}

fn check_alpha_r(alpha: f64, r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("must lie in [0,1), got {alpha}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param("r", format!("must be positive and finite, got {r}")));
    }
    Ok(())
}

/// Spacing `k_t` and window `m_t` of the subsampled learner:
/// `k_t = ceil(t^((1-a) 3/(3+4r))) ∧ (t-1)`,
/// `m_t = ceil(t^((1-a)(3+2r)/(3+4r))) ∧ (t-1)`.
pub fn schedule_km(t: usize, alpha: f64, r: f64) -> Result<(usize, usize)> {
    if t < 2 {
        return Err(Error::param("t", format!("schedules start at t=2, got {t}")));
    }
    check_alpha_r(alpha, r)?;
    let tf = t as f64;
    let denom = 3.0 + 4.0 * r;
    let k = snapped_ceil(tf.powf((1.0 - alpha) * 3.0 / denom)).min(t - 1);
    let m = snapped_ceil(tf.powf((1.0 - alpha) * (3.0 + 2.0 * r) / denom)).min(t - 1);
    Ok((k.max(1), m.max(1)))
}

/// Spacing and length of the window used at one step. `k = m = 0` means the
/// fixed initial predictor was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Window {
    pub k: usize,
    pub m: usize,
}

impl Window {
    pub const INITIAL: Window = Window { k: 0, m: 0 };
}

pub trait Learner: Send + Sync {
    fn name(&self) -> &'static str;

    fn class(&self) -> &FunctionClass;

    /// Predictor for time `t` given `history = Z_1..Z_{t-1}`.
    fn predict(&self, history: &[Observation], t: usize) -> Result<Hypothesis>;

    fn window(&self, t: usize) -> Window;

    /// Steps that use the fixed initial predictor by construction.
    fn warmup(&self) -> usize {
        1
    }
}

fn check_history(history: &[Observation], t: usize) -> Result<()> {
    if t < 1 || history.len() != t - 1 {
        return Err(Error::HistoryLength {
            expected: t.saturating_sub(1),
            got: history.len(),
        });
    }
    Ok(())
}

/// 1-based indices `t - s k` for `s = 1..floor(m/k)`.
pub fn subsample_indices(t: usize, k: usize, m: usize) -> Vec<usize> {
    (1..=m / k).map(|s| t - s * k).collect()
}

/// ERM over `{Z_{t - s k} : s = 1..floor(m/k)}`; requires `1 <= k <= m <= t-1`.
pub fn subsampled_erm(
    class: &FunctionClass,
    history: &[Observation],
    t: usize,
    k: usize,
    m: usize,
) -> Result<Hypothesis> {
    check_history(history, t)?;
    if k < 1 || k > m || m > t.saturating_sub(1) {
        return Err(Error::param(
            "schedule",
            format!("need 1 <= k <= m <= t-1, got k={k}, m={m}, t={t}"),
        ));
    }
    let sample: Vec<Observation> = subsample_indices(t, k, m).into_iter().map(|i| history[i - 1]).collect();
    class.erm(&sample)
}

#[derive(Debug, Clone)]
pub struct SubsampledErmLearner {
    class: FunctionClass,
    alpha: f64,
    r: f64,
    initial: Hypothesis,
}

impl SubsampledErmLearner {
    pub fn new(class: FunctionClass, alpha: f64, r: f64) -> Result<Self> {
        check_alpha_r(alpha, r)?;
        let initial = class.default_member();
        Ok(SubsampledErmLearner {
            class,
            alpha,
            r,
            initial,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn step(&self, history: &[Observation], t: usize) -> Result<Hypothesis> {
        check_history(history, t)?;
        if t == 1 {
            return Ok(self.initial);
        }
        let (k, m) = schedule_km(t, self.alpha, self.r)?;
        subsampled_erm(&self.class, history, t, k, m)
    }
}

impl Learner for SubsampledErmLearner {
    fn name(&self) -> &'static str {
        "subsampled_erm"
    }

    fn class(&self) -> &FunctionClass {
        &self.class
    }

    fn predict(&self, history: &[Observation], t: usize) -> Result<Hypothesis> {
        self.step(history, t)
    }

    fn window(&self, t: usize) -> Window {
        match schedule_km(t, self.alpha, self.r) {
            Ok((k, m)) => Window { k, m },
            Err(_) => Window::INITIAL,
        }
    }
}

/// `argmin_{m in 1..t-1} sum_{q=t-m}^{t-1} Delta_{q+1} + sqrt(d/m)`, smallest
/// `m` on ties. Full scan using prefix sums of the schedule.
pub fn adaptive_window(t: usize, schedule: &DriftSchedule, d: u32) -> Result<usize> {
    if t < 2 {
        return Err(Error::param("t", format!("adaptive windows start at t=2, got {t}")));
    }
    if t > schedule.horizon() {
        return Err(Error::HorizonTooLong {
            horizon: t,
            available: schedule.horizon(),
        });
    }
    let prefix = schedule.prefix_sums();
    let roots: Vec<f64> = (0..t)
        .map(|m| if m == 0 { 0.0 } else { (f64::from(d) / m as f64).sqrt() })
        .collect();
    Ok(scan_window(&prefix, &roots, t))
}

#[inline]
fn scan_window(prefix: &[f64], roots: &[f64], t: usize) -> usize {
    // sum_{q=t-m}^{t-1} Delta_{q+1} = prefix[t] - prefix[t-m]
    let mut best = (1, f64::INFINITY);
    for m in 1..t {
        let objective = (prefix[t] - prefix[t - m]) + roots[m];
        if objective < best.1 {
            best = (m, objective);
        }
    }
    best.0
}

#[derive(Debug, Clone)]
pub struct AdaptiveWindowLearner {
    class: FunctionClass,
    /// `windows[t]` is the chosen window at time `t` (entries 0 and 1 unused).
    windows: Vec<usize>,
    initial: Hypothesis,
}

impl AdaptiveWindowLearner {
    /// Precomputes the window for every `t` up to the schedule horizon.
    pub fn new(class: FunctionClass, schedule: &DriftSchedule) -> Self {
        let horizon = schedule.horizon();
        let prefix = schedule.prefix_sums();
        let d = f64::from(class.pseudo_dimension());
        let roots: Vec<f64> = (0..horizon.max(1))
            .map(|m| if m == 0 { 0.0 } else { (d / m as f64).sqrt() })
            .collect();
        let mut windows = vec![0; horizon + 1];
        for (t, w) in windows.iter_mut().enumerate().skip(2) {
            *w = scan_window(&prefix, &roots, t);
        }
        let initial = class.default_member();
        AdaptiveWindowLearner {
            class,
            windows,
            initial,
        }
    }

    pub fn horizon(&self) -> usize {
        self.windows.len() - 1
    }

    pub fn chosen_window(&self, t: usize) -> Option<usize> {
        (t >= 2 && t < self.windows.len()).then(|| self.windows[t])
    }

    pub fn step(&self, history: &[Observation], t: usize) -> Result<Hypothesis> {
        check_history(history, t)?;
        if t == 1 {
            return Ok(self.initial);
        }
        let m = self.chosen_window(t).ok_or(Error::HorizonTooLong {
            horizon: t,
            available: self.horizon(),
        })?;
        self.class.erm(&history[t - 1 - m..])
    }
}

impl Learner for AdaptiveWindowLearner {
    fn name(&self) -> &'static str {
        "adaptive_window"
    }

    fn class(&self) -> &FunctionClass {
        &self.class
    }

    fn predict(&self, history: &[Observation], t: usize) -> Result<Hypothesis> {
        self.step(history, t)
    }

    fn window(&self, t: usize) -> Window {
        self.chosen_window(t).map_or(Window::INITIAL, |m| Window { k: 1, m })
    }
}

/// `ceil(d^(1/3) gamma^(-2/3))` with the same integer snapping as the schedules.
pub fn constant_window_length(d: u32, gamma: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        // gamma = 1 is admitted as the degenerate one-point window
        if gamma != 1.0 {
            return Err(Error::param("gamma", format!("must lie in (0,1), got {gamma}")));
        }
    }
    Ok(snapped_ceil(f64::from(d).cbrt() * gamma.powf(-2.0 / 3.0)).max(1))
}

#[derive(Debug, Clone)]
pub struct ConstantWindowLearner {
    class: FunctionClass,
    gamma: f64,
    window: usize,
    initial: Hypothesis,
}

impl ConstantWindowLearner {
    pub fn new(class: FunctionClass, gamma: f64) -> Result<Self> {
        let window = constant_window_length(class.pseudo_dimension(), gamma)?;
        let initial = class.default_member();
        Ok(ConstantWindowLearner {
            class,
            gamma,
            window,
            initial,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn window_length(&self) -> usize {
        self.window
    }

    pub fn step(&self, history: &[Observation], t: usize) -> Result<Hypothesis> {
        check_history(history, t)?;
        if t <= self.window {
            return Ok(self.initial);
        }
        self.class.erm(&history[t - 1 - self.window..])
    }
}

impl Learner for ConstantWindowLearner {
    fn name(&self) -> &'static str {
        "constant_window"
    }

    fn class(&self) -> &FunctionClass {
        &self.class
    }

    fn predict(&self, history: &[Observation], t: usize) -> Result<Hypothesis> {
        self.step(history, t)
    }

    fn window(&self, t: usize) -> Window {
        if t > self.window {
            Window { k: 1, m: self.window }
        } else {
            Window::INITIAL
        }
    }

    fn warmup(&self) -> usize {
        self.window
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    FullHistoryErm,
    LastPoint,
}

/// Baseline predictor for `t >= 2`.
pub fn baseline_step(
    kind: BaselineKind,
    class: &FunctionClass,
    history: &[Observation],
    t: usize,
) -> Result<Hypothesis> {
    check_history(history, t)?;
    if history.is_empty() {
        return Err(Error::EmptySample);
    }
    match kind {
        BaselineKind::FullHistoryErm => class.erm(history),
        BaselineKind::LastPoint => class.erm(&history[t - 2..]),
    }
}

#[derive(Debug, Clone)]
pub struct BaselineLearner {
    kind: BaselineKind,
    class: FunctionClass,
}

impl BaselineLearner {
    pub fn new(kind: BaselineKind, class: FunctionClass) -> Self {
        BaselineLearner { kind, class }
    }
}

impl Learner for BaselineLearner {
    fn name(&self) -> &'static str {
        match self.kind {
            BaselineKind::FullHistoryErm => "full_history_erm",
            BaselineKind::LastPoint => "last_point",
        }
    }

    fn class(&self) -> &FunctionClass {
        &self.class
    }

    fn predict(&self, history: &[Observation], t: usize) -> Result<Hypothesis> {
        if t == 1 {
            check_history(history, t)?;
            return Ok(self.class.default_member());
        }
        baseline_step(self.kind, &self.class, history, t)
    }

    fn window(&self, t: usize) -> Window {
        match (t, self.kind) {
            (0 | 1, _) => Window::INITIAL,
            (_, BaselineKind::FullHistoryErm) => Window { k: 1, m: t - 1 },
            (_, BaselineKind::LastPoint) => Window { k: 1, m: 1 },
        }
    }
}
