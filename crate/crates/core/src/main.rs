use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use driftlab::evaluation::{geometric_checkpoints, tail_half};
use driftlab::harness::config::{CheckpointSpec, ConfigError, ExperimentConfig};
use driftlab::harness::{
    refit, run_verify, simulate, sweep, FitRecord, HarnessError, SweepGrid, VerifyKind, EXIT_CHECK_FAILED, EXIT_OK,
    EXIT_RUNTIME,
};

#[derive(Parser)]
#[command(
    name = "driftlab",
    version,
    about = "Stream prediction under drifting, beta-mixing processes"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed list `1,2,3` or half-open range `0..32`.
    #[arg(long)]
    seeds: Option<String>,
    /// Checkpoints as `min:max:per_octave` or a list `256,512,...`.
    #[arg(long)]
    checkpoints: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Simulate(RunArgs),
    /// Run the cartesian product of a parameter grid over a base config.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// JSON object mapping dotted config paths to value lists.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Run a verification oracle over its grid.
    Verify {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// JSON options overriding the default grid.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Directory for the JSON report (also printed to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-fit growth exponents from existing curve CSVs.
    Rates {
        /// Curve CSVs or run directories (their `curve.csv` is used).
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        checkpoints: Option<String>,
        #[arg(long)]
        theoretical: Option<f64>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
enum KindArg {
    Blocking,
    UniformDeviation,
    Discrepancy,
    MixingRate,
}

impl From<KindArg> for VerifyKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Blocking => VerifyKind::Blocking,
            KindArg::UniformDeviation => VerifyKind::UniformDeviation,
            KindArg::Discrepancy => VerifyKind::Discrepancy,
            KindArg::MixingRate => VerifyKind::MixingRate,
        }
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = |m: String| ConfigError::new("seeds", m);
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| bad(format!("{s}: {e}")))?;
        let b: u64 = b.trim().parse().map_err(|e| bad(format!("{s}: {e}")))?;
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|v| v.trim().parse().map_err(|e| bad(format!("{v}: {e}"))))
        .collect()
}

fn parse_checkpoints(s: &str) -> Result<CheckpointSpec, ConfigError> {
    let bad = |m: String| ConfigError::new("checkpoints", m);
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let n: Vec<usize> = parts
            .iter()
            .map(|p| p.trim().parse().map_err(|e| bad(format!("{p}: {e}"))))
            .collect::<Result<_, _>>()?;
        return Ok(CheckpointSpec::Grid {
            min: Some(n[0]),
            max: Some(n[1]),
            per_octave: n[2],
            tail_only: false,
        });
    }
    let list = s
        .split(',')
        .map(|v| v.trim().parse().map_err(|e| bad(format!("{v}: {e}"))))
        .collect::<Result<_, _>>()?;
    Ok(CheckpointSpec::List(list))
}

fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| ConfigError::new("config", format!("{}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(c) = &args.checkpoints {
        cfg.checkpoints = parse_checkpoints(c)?;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn fit_points_for(path: &Path, cum_len: usize, flag: Option<&str>) -> Result<Vec<usize>, HarnessError> {
    if let Some(c) = flag {
        return Ok(parse_checkpoints(c)?.resolve(cum_len)?);
    }
    // reuse the grid recorded next to the curve, if any
    if let Some(dir) = path.parent() {
        if let Ok(text) = fs::read_to_string(dir.join("fit.json")) {
            if let Ok(rec) = serde_json::from_str::<FitRecord>(&text) {
                return Ok(rec.checkpoints);
            }
        }
    }
    let lo = 256.min(cum_len);
    Ok(tail_half(&geometric_checkpoints(lo, cum_len, 4)?))
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(v).map_err(|e| HarnessError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<u8, HarnessError> {
    match cli.command {
        Command::Simulate(args) => {
            let (cfg, out) = load_config(&args)?;
            let exp = cfg.build()?;
            let rec = simulate(&exp, &out)?;
            emit(&to_json(&rec)?);
            Ok(EXIT_OK)
        }
        Command::Sweep { run, grid } => {
            let (cfg, out) = load_config(&run)?;
            let text =
                fs::read_to_string(&grid).map_err(|e| ConfigError::new("grid", format!("{}: {e}", grid.display())))?;
            let grid = SweepGrid::from_json(&text)?;
            let outcome = sweep(&cfg, &grid, &out)?;
            emit(&outcome.table.display().to_string());
            if outcome.failures.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!(
                    "{} of {} cells failed; see {}",
                    outcome.failures.len(),
                    outcome.records.len(),
                    outcome.manifest.display()
                );
                Ok(EXIT_RUNTIME)
            }
        }
        Command::Verify {
            kind,
            config,
            trials,
            out,
        } => {
            let options = match &config {
                Some(p) => Some(
                    fs::read_to_string(p).map_err(|e| ConfigError::new("config", format!("{}: {e}", p.display())))?,
                ),
                None => None,
            };
            let kind = VerifyKind::from(kind);
            let report = run_verify(kind, options.as_deref(), trials)?;
            let text = to_json(&report)?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join(format!("verify-{}.json", kind.name())), format!("{text}\n"))?;
            }
            emit(&text);
            Ok(if report.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Rates {
            paths,
            checkpoints,
            theoretical,
        } => {
            let mut fits = Vec::new();
            for p in paths {
                let file = if p.is_dir() { p.join("curve.csv") } else { p };
                let cum = driftlab::harness::run::read_cumulative(&file)?;
                let points = fit_points_for(&file, cum.len(), checkpoints.as_deref())?;
                let fit = refit(&file, &points, theoretical)?;
                fits.push(serde_json::json!({"file": file.display().to_string(), "fit": fit}));
            }
            emit(&to_json(&fits)?);
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
