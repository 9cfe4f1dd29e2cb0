//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Run with `cargo test --test acceptance`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use driftlab::distributions::{DriftSchedule, Observation};
use driftlab::evaluation::fit_power_law;
use driftlab::harness::{run_verify, simulate, sweep, ExperimentConfig, RunRecord, SweepGrid, VerifyKind};
use driftlab::hypotheses::{FiniteTable, FunctionClass, Hypothesis};
use driftlab::learners::{
    constant_window_length, schedule_km, subsampled_erm, AdaptiveWindowLearner, ConstantWindowLearner,
};

// Tolerances and budgets, pinned.
const BLOCKING_SLACK: f64 = 1e-12;
const BLOCKING_BUDGET: Duration = Duration::from_secs(10);
const DEVIATION_TRIALS: usize = 2000;
const DEVIATION_BAND: f64 = 0.08;
const DEVIATION_SPREAD_MAX: f64 = 1.5;
const DEVIATION_BUDGET: Duration = Duration::from_secs(300);
const MIXING_EXPONENT_SLACK: f64 = 0.10;
const MIXING_EXPONENT_CAP: f64 = 0.97;
const MIXING_BUDGET: Duration = Duration::from_secs(900);
const ADAPTIVE_NOISE_BAND: f64 = 0.02;
const ADAPTIVE_EXPONENT_CAP: f64 = 0.95;
const GAMMA_SLOPE: f64 = 0.33;
const GAMMA_SLOPE_BAND: f64 = 0.12;
const GAMMA_BUDGET: Duration = Duration::from_secs(1200);
const ERM_SAMPLES: usize = 10_000;
const ERM_MAX_N: usize = 12;
const EQUIVALENCE_HISTORIES: usize = 1000;
const SCHEDULE_T_MAX: usize = 1_000_000;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str) -> ExperimentConfig {
    let text = fs::read_to_string(configs_dir().join(name)).expect("config file");
    ExperimentConfig::from_json(&text).expect("valid config")
}

fn run_config(cfg: &ExperimentConfig, out: &Path) -> RunRecord {
    let exp = cfg.build().expect("config builds");
    simulate(&exp, out).expect("simulation")
}

fn c1_blocking() -> Outcome {
    let start = Instant::now();
    let r = run_verify(VerifyKind::Blocking, None, None).expect("blocking verify");
    let elapsed = start.elapsed();
    let slack = r.details["min_slack"].as_f64().unwrap_or(f64::NEG_INFINITY);
    let passed = r.passed && r.checks == 3 * 3 * 8 * 5 * 3 && slack >= -BLOCKING_SLACK && elapsed < BLOCKING_BUDGET;
    Outcome::new(
        passed,
        format!(
            "{} configurations, min slack {slack:.3e}, {:.2}s",
            r.checks,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_uniform_deviation() -> Outcome {
    let start = Instant::now();
    let options = format!(
        r#"{{"m_min": 16, "m_max": 16384, "exponent_band": {DEVIATION_BAND}, "spread_max": {DEVIATION_SPREAD_MAX},
            "cases": ["identical", "drifting"]}}"#
    );
    let r = run_verify(VerifyKind::UniformDeviation, Some(&options), Some(DEVIATION_TRIALS)).expect("deviation verify");
    let elapsed = start.elapsed();
    let parts: Vec<String> = r
        .details
        .as_array()
        .expect("per-case details")
        .iter()
        .map(|c| {
            format!(
                "{}: exponent {:.3}, spread {:.3}, envelope {:.3}",
                c["case"].as_str().unwrap_or("?"),
                c["report"]["exponent"].as_f64().unwrap_or(f64::NAN),
                c["report"]["spread"].as_f64().unwrap_or(f64::NAN),
                c["report"]["envelope"].as_f64().unwrap_or(f64::NAN),
            )
        })
        .collect();
    Outcome::new(
        r.passed && elapsed < DEVIATION_BUDGET,
        format!("{}; {:.1}s", parts.join("; "), elapsed.as_secs_f64()),
    )
}

fn c3_mixing(first: &RunRecord, elapsed: Duration) -> Outcome {
    let Some(fit) = &first.fit else {
        return Outcome::new(false, format!("fit skipped: {:?}", first.fit_skipped));
    };
    let theoretical = fit.theoretical.expect("subsampled learner has a theoretical exponent");
    let passed = fit.t_min == 1024
        && fit.t_max == 32768
        && fit.exponent <= theoretical + MIXING_EXPONENT_SLACK
        && fit.exponent <= MIXING_EXPONENT_CAP
        && elapsed < MIXING_BUDGET;
    Outcome::new(
        passed,
        format!(
            "exponent {:.4} (theoretical {theoretical:.4}) over T in [{}, {}], {} seeds, {:.1}s",
            fit.exponent,
            fit.t_min,
            fit.t_max,
            first.seeds.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn c4_adaptive(out: &Path) -> Outcome {
    let adaptive = run_config(&load_config("product_adaptive.json"), out);
    let subsampled = run_config(&load_config("product_subsampled.json"), out);
    let (Some(a), Some(s)) = (&adaptive.fit, &subsampled.fit) else {
        return Outcome::new(false, "a fit was skipped");
    };
    let passed = a.exponent <= s.exponent + ADAPTIVE_NOISE_BAND && a.exponent < ADAPTIVE_EXPONENT_CAP;
    Outcome::new(
        passed,
        format!(
            "adaptive {:.4} vs subsampled {:.4} on the product process",
            a.exponent, s.exponent
        ),
    )
}

fn c5_gamma_scaling(out: &Path) -> Outcome {
    let start = Instant::now();
    let base = load_config("constant_window.json");
    let grid = SweepGrid::from_json(&fs::read_to_string(configs_dir().join("gamma_grid.json")).expect("grid"))
        .expect("valid grid");
    let outcome = sweep(&base, &grid, out).expect("sweep");
    if !outcome.failures.is_empty() {
        return Outcome::new(false, format!("{} sweep cells failed", outcome.failures.len()));
    }
    let mut gammas = Vec::new();
    let mut excess = Vec::new();
    for cell in grid.assignments().iter().zip(&outcome.records) {
        let (assignment, rec) = cell;
        let gamma = assignment
            .iter()
            .find(|(p, _)| p == "learner.gamma")
            .and_then(|(_, v)| v.as_f64())
            .expect("gamma column");
        let horizon = rec.as_ref().expect("record").horizon;
        let expected_horizon = ((10.0 / gamma).round() as usize).max(1 << 14);
        if horizon != expected_horizon {
            return Outcome::new(
                false,
                format!("gamma {gamma}: horizon {horizon}, expected {expected_horizon}"),
            );
        }
        gammas.push(gamma);
        excess.push(rec.as_ref().expect("record").avg_excess);
    }
    let (slope, _, _) = fit_power_law(&gammas, &excess).expect("fit");
    let elapsed = start.elapsed();
    let passed = gammas.len() == 5 && (slope - GAMMA_SLOPE).abs() <= GAMMA_SLOPE_BAND && elapsed < GAMMA_BUDGET;
    let pairs: Vec<String> = gammas
        .iter()
        .zip(&excess)
        .map(|(g, e)| format!("{g:.1e}:{e:.4}"))
        .collect();
    Outcome::new(
        passed,
        format!("slope {slope:.4} [{}], {:.1}s", pairs.join(" "), elapsed.as_secs_f64()),
    )
}

fn c6_erm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let class = FunctionClass::Threshold;
    let mut mismatches = 0;
    for _ in 0..ERM_SAMPLES {
        let n = rng.gen_range(1..=ERM_MAX_N);
        // points on the lattice j/(2n), so the 1/(4n) grid holds every breakpoint
        let sample: Vec<Observation> = (0..n)
            .map(|_| {
                let j = rng.gen_range(0..=2 * n);
                Observation::new(j as f64 / (2 * n) as f64, rng.gen_range(0..=1)).unwrap()
            })
            .collect();
        let h = class.erm(&sample).unwrap();
        let got = class.empirical_loss(&h, &sample).unwrap();
        let brute = (0..=4 * n)
            .map(|i| {
                class
                    .empirical_loss(&Hypothesis::Threshold(i as f64 / (4 * n) as f64), &sample)
                    .unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        if got != brute {
            mismatches += 1;
        }
    }

    let mut finite_mismatches = 0;
    for _ in 0..ERM_SAMPLES {
        let size = rng.gen_range(1..=6);
        let support: Vec<Observation> = (0..size)
            .map(|i| Observation::new(i as f64 / 8.0, rng.gen_range(0..=1)).unwrap())
            .collect();
        let members = rng.gen_range(1..=8);
        let functions: Vec<Vec<f64>> = (0..members)
            .map(|_| (0..size).map(|_| f64::from(rng.gen_range(0..=4u8)) / 4.0).collect())
            .collect();
        let table = FiniteTable::new(support.clone(), functions.clone(), 1).unwrap();
        let class = FunctionClass::FiniteExplicit(table);
        let n = rng.gen_range(1..=ERM_MAX_N);
        let sample: Vec<Observation> = (0..n).map(|_| support[rng.gen_range(0..size)]).collect();
        let totals: Vec<f64> = functions
            .iter()
            .map(|f| {
                sample
                    .iter()
                    .map(|z| f[support.iter().position(|s| s == z).unwrap()])
                    .sum()
            })
            .collect();
        let best = totals.iter().cloned().fold(f64::INFINITY, f64::min);
        let first_best = totals.iter().position(|&v| v == best).unwrap();
        if class.erm(&sample).unwrap() != Hypothesis::Member(first_best) {
            finite_mismatches += 1;
        }
    }
    Outcome::new(
        mismatches == 0 && finite_mismatches == 0,
        format!(
            "{ERM_SAMPLES} threshold samples ({mismatches} mismatches), {ERM_SAMPLES} finite samples ({finite_mismatches} mismatches)"
        ),
    )
}

fn c7_discrepancy() -> Outcome {
    let r = run_verify(
        VerifyKind::Discrepancy,
        Some(r#"{"pairs": 10000, "closed_form_pairs": 1000, "tolerance": 1e-9}"#),
        None,
    )
    .expect("discrepancy verify");
    Outcome::new(
        r.passed && r.checks == 11_000,
        format!(
            "{} checks, max rho/TV {:.12}, worst closed-form error {:.2e}",
            r.checks,
            r.details["max_rho_over_tv"].as_f64().unwrap_or(f64::NAN),
            r.details["worst_closed_form_error"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

fn c8_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let class = FunctionClass::Threshold;
    let mut adaptive_bad = 0;
    let mut constant_bad = 0;
    let mut constant_checked = 0;
    for _ in 0..EQUIVALENCE_HISTORIES {
        let t = rng.gen_range(2..=400);
        let history: Vec<Observation> = (0..t - 1)
            .map(|_| Observation::new(rng.gen(), rng.gen_range(0..=1)).unwrap())
            .collect();

        let scale: f64 = 10f64.powf(rng.gen_range(-4.0..-0.5));
        let mut deltas = vec![0.0];
        deltas.extend((1..t).map(|_| scale * rng.gen::<f64>()));
        let schedule = DriftSchedule::from_deltas(0.0, deltas).unwrap();
        let adaptive = AdaptiveWindowLearner::new(class.clone(), &schedule);
        let m = adaptive.chosen_window(t).unwrap();
        if adaptive.step(&history, t).unwrap() != subsampled_erm(&class, &history, t, 1, m).unwrap() {
            adaptive_bad += 1;
        }

        let gamma = 10f64.powf(rng.gen_range(-4.0..-1.0));
        let constant = ConstantWindowLearner::new(class.clone(), gamma).unwrap();
        let m_bar = constant_window_length(1, gamma).unwrap();
        if t > m_bar {
            constant_checked += 1;
            let reference = subsampled_erm(&class, &history, t, 1, m_bar.min(t - 1)).unwrap();
            if constant.step(&history, t).unwrap() != reference {
                constant_bad += 1;
            }
        } else if constant.step(&history, t).unwrap() != class.default_member() {
            constant_bad += 1;
        }
    }
    Outcome::new(
        adaptive_bad == 0 && constant_bad == 0 && constant_checked > 0,
        format!(
            "{EQUIVALENCE_HISTORIES} histories: adaptive mismatches {adaptive_bad}, constant mismatches {constant_bad} ({constant_checked} past warm-up)"
        ),
    )
}

fn c9_schedule() -> Outcome {
    let mut violations = Vec::new();
    for &alpha in &[0.0, 0.25, 0.5] {
        for &r in &[0.5, 1.0, 2.0] {
            let mut ms = vec![0usize; SCHEDULE_T_MAX + 1];
            let mut prev = 0;
            for (t, slot) in ms.iter_mut().enumerate().skip(2) {
                let (k, m) = schedule_km(t, alpha, r).unwrap();
                if !(1 <= k && k <= m && m < t) {
                    violations.push(format!("alpha={alpha} r={r} t={t}: k={k} m={m}"));
                }
                if m < prev {
                    violations.push(format!("alpha={alpha} r={r} t={t}: m decreased"));
                }
                prev = m;
                *slot = m;
            }
            for q in 2..=SCHEDULE_T_MAX / 2 {
                if ms[2 * q] > 4 * ms[q] {
                    violations.push(format!(
                        "alpha={alpha} r={r} q={q}: m_2q={} > 4 m_q={}",
                        ms[2 * q],
                        4 * ms[q]
                    ));
                }
            }
        }
    }
    Outcome::new(
        violations.is_empty(),
        match violations.first() {
            None => format!("9 (alpha, r) pairs, t in 2..={SCHEDULE_T_MAX}"),
            Some(v) => format!("{} violations, first: {v}", violations.len()),
        },
    )
}

fn c10_determinism(a: &Path, b: &Path, hash: &str) -> Outcome {
    let dir_a = a.join(hash);
    let dir_b = b.join(hash);
    let mut names: Vec<String> = fs::read_dir(&dir_a)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| fs::read(dir_a.join(n)).ok() != fs::read(dir_b.join(n)).ok())
        .collect();
    Outcome::new(
        names.len() > 1 && differing.is_empty(),
        format!("{} CSV files compared, {} differ", names.len(), differing.len()),
    )
}

fn report(id: usize, name: &str, outcome: &Outcome) {
    let tag = if outcome.passed { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {tag} {name}: {}", outcome.detail);
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut results = Vec::new();

    let o = c1_blocking();
    report(1, "blocking inequality", &o);
    results.push(o.passed);

    let o = c2_uniform_deviation();
    report(2, "uniform deviation scaling", &o);
    results.push(o.passed);

    let mixing = load_config("mixing_subsampled.json");
    let run_a = tmp.path().join("mixing-a");
    let start = Instant::now();
    let first = run_config(&mixing, &run_a);
    let elapsed = start.elapsed();
    let o = c3_mixing(&first, elapsed);
    report(3, "sublinear regret under mixing", &o);
    results.push(o.passed);

    let o = c4_adaptive(&tmp.path().join("adaptive"));
    report(4, "adaptive window on product process", &o);
    results.push(o.passed);

    let o = c5_gamma_scaling(&tmp.path().join("gamma"));
    report(5, "constant-drift gamma scaling", &o);
    results.push(o.passed);

    let o = c6_erm_oracle();
    report(6, "ERM oracle equivalence", &o);
    results.push(o.passed);

    let o = c7_discrepancy();
    report(7, "discrepancy below total variation", &o);
    results.push(o.passed);

    let o = c8_equivalence();
    report(8, "learner equivalences", &o);
    results.push(o.passed);

    let o = c9_schedule();
    report(9, "schedule properties", &o);
    results.push(o.passed);

    let run_b = tmp.path().join("mixing-b");
    let second = run_config(&mixing, &run_b);
    let o = c10_determinism(&run_a, &run_b, &second.config_hash);
    report(10, "determinism", &o);
    results.push(o.passed);

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
