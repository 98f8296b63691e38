//! `kindep` command line: run experiments, verify, calibrate, classify.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kindep::adv_lp::calibrate_schedule;
use kindep::harness::{self, ExperimentConfig, ExperimentId, CACHE_DIR_ENV};
use kindep::Error;

const PASS: u8 = 0;
const FAILED: u8 = 1;
const CONFIG_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "kindep", version, about = "Adversarial k-independent hashing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment across its size ladder.
    Run(RunArgs),
    /// Run the exact checks, oracles and negative controls.
    Verify(VerifyArgs),
    /// Calibrate the 4-independent window levels and write caches.
    Calibrate(CalibrateArgs),
    /// Classify the growth of one metric of a CSV written by `run`.
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// lp-2indep, lp-3indep, lp-4indep, lp-poly-k, minwise-adv, minwise-poly-k, ms-lp, ms-minwise or verify.
    experiment: String,
    /// Comma-separated sizes (t for lp-*, n otherwise).
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<u64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    load: Option<f64>,
    /// Independence of the polynomial family, or the minwise construction's k.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long, default_value = "results")]
    output: PathBuf,
    #[arg(long, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 16_000)]
    calibration_samples: u64,
    /// Sample plainly instead of importance sampling.
    #[arg(long)]
    no_importance: bool,
    #[arg(long)]
    with_offset: bool,
    #[arg(long)]
    allow_even: bool,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Comma-separated table sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [1u64 << 12, 1 << 14, 1 << 16])]
    t: Vec<u64>,
    #[arg(long, default_value_t = 16_000)]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = CACHE_DIR_ENV)]
    cache_dir: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    csv: PathBuf,
    #[arg(long)]
    metric: String,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter(_) | Error::NotPowerOfTwo(_) | Error::ZeroIndependence | Error::UnderPowered(_) | Error::CalibrationMismatch(_)
    )
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if is_config_error(e) { CONFIG_ERROR } else { FAILED })
}

fn print_report(out: &harness::RunOutput) {
    let r = &out.report;
    for s in &r.series {
        println!("{}", s.metric);
        for p in &s.points {
            println!("  size {:>8}  trials {:>7}  mean {:>10.4}  sd {:>10.4}  99% CI [{:.4}, {:.4}]", p.size, p.trials, p.mean, p.stddev, p.ci.0, p.ci.1);
        }
        if let Some(t) = s.log_slope {
            println!("  per-doubling increment {:.4} [{:.4}, {:.4}]", t.slope, t.ci.0, t.ci.1);
        }
        if let Some(c) = &s.classification {
            println!("  growth {} (confidence {:.2})", c.verdict.name(), c.confidence);
        }
    }
    for e in &r.expectations {
        println!("{} {}", if e.passed { "PASS" } else { "FAIL" }, e.description);
    }
    println!("config {}  csv {}  {:.1}s", r.metadata.config_hash, r.metadata.csv_sha256, r.metadata.wall_seconds);
}

fn run(args: RunArgs) -> ExitCode {
    let experiment = match args.experiment.parse::<ExperimentId>() {
        Ok(e) => e,
        Err(e) => return fail(&e),
    };
    let mut config = ExperimentConfig::new(experiment);
    if let Some(l) = args.ladder {
        config.ladder = l;
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if args.load.is_some() {
        config.load = args.load;
    }
    config.seed = args.seed;
    config.k = args.k;
    config.output = Some(args.output);
    config.cache_dir = args.cache_dir;
    config.calibration_samples = args.calibration_samples;
    config.importance = !args.no_importance && !args.allow_even;
    config.with_offset = args.with_offset;
    config.allow_even = args.allow_even;
    config.bootstrap = args.bootstrap;
    match harness::run(&config) {
        Ok(out) => {
            print_report(&out);
            ExitCode::from(if out.report.passed() { PASS } else { FAILED })
        }
        Err(e) => fail(&e),
    }
}

fn verify(args: VerifyArgs) -> ExitCode {
    let mut config = ExperimentConfig::new(ExperimentId::Verify).with_seed(args.seed);
    config.cache_dir = args.cache_dir;
    config.output = args.output;
    match harness::run(&config) {
        Ok(out) => {
            print_report(&out);
            ExitCode::from(if out.report.passed() { PASS } else { FAILED })
        }
        Err(e) => fail(&e),
    }
}

fn calibrate(args: CalibrateArgs) -> ExitCode {
    let mut converged = true;
    for t in args.t {
        if !t.is_power_of_two() || t < 1 << 12 {
            return fail(&Error::InvalidParameter(format!("calibration needs t a power of two >= 2^12, got {t}")));
        }
        match calibrate_schedule(t, args.samples, args.seed, Some(&args.cache_dir)) {
            Ok(cache) => {
                println!("t = {t}  hash {}", cache.schedule_hash);
                for l in &cache.levels {
                    println!(
                        "  level {:>2}  p_minus {:.5}  residual {:+.4e}  99% CI [{:+.4e}, {:+.4e}]{}",
                        l.level,
                        l.p_minus,
                        l.g_estimate,
                        l.g_ci.0,
                        l.g_ci.1,
                        if l.converged() { "" } else { "  NOT CONVERGED" }
                    );
                }
                converged &= cache.all_converged();
            }
            Err(e) => return fail(&e),
        }
    }
    ExitCode::from(if converged { PASS } else { FAILED })
}

/// Per-size values of `metric`, keyed by the t column (or n when t is empty).
fn read_series(path: &PathBuf, metric: &str) -> Result<BTreeMap<u64, Vec<f64>>, Error> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(harness::CSV_HEADER) {
        return Err(Error::InvalidParameter(format!("{} does not start with the expected header", path.display())));
    }
    let mut series: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::InvalidParameter(format!("line {}: expected 8 fields", i + 2)));
        }
        if f[6] != metric {
            continue;
        }
        let parse_err = |what: &str| Error::InvalidParameter(format!("line {}: bad {what}", i + 2));
        let size = if f[1].is_empty() { f[2] } else { f[1] }.parse::<u64>().map_err(|_| parse_err("size"))?;
        let value = f[7].parse::<f64>().map_err(|_| parse_err("value"))?;
        series.entry(size).or_default().push(value);
    }
    if series.is_empty() {
        return Err(Error::InvalidParameter(format!("no rows for metric {metric:?}")));
    }
    Ok(series)
}

fn classify(args: ClassifyArgs) -> ExitCode {
    let series = match read_series(&args.csv, &args.metric) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let sizes: Vec<f64> = series.keys().map(|&s| s as f64).collect();
    let values: Vec<Vec<f64>> = series.into_values().collect();
    match harness::classify_series(&sizes, &values, args.bootstrap, args.seed) {
        Ok(c) => {
            println!("{} (confidence {:.2})", c.verdict.name(), c.confidence);
            for f in &c.fits {
                println!("  {:<12} aic {:>10.3}  slope {:.4e}", f.label.name(), f.aic, f.slope);
            }
            ExitCode::from(PASS)
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Verify(a) => verify(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Classify(a) => classify(a),
    }
}
