//! Experiment runner: trial data, summaries, growth classes and output files.

pub mod config;
pub mod estimate;
pub mod experiments;
pub mod growth;
pub mod report;
pub mod verify;

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, ExperimentId, CACHE_DIR_ENV};
pub use estimate::{PointEstimate, PointSamples};
pub use growth::{growth_classify, Classification, GrowthLabel, GrowthVerdict};
pub use report::{CostReport, Expectation, Metadata, PointData, SeriesSummary, CSV_HEADER};
pub use verify::{verify_suite, Check, VerifyReport};

use crate::error::Result;
use crate::rng::stream_rng;

/// A finished run: the report and the exact CSV bytes.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: CostReport,
    pub csv: Vec<u8>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn expect(description: impl Into<String>, passed: bool) -> Expectation {
    Expectation { description: description.into(), passed }
}

fn verdict_of(s: &SeriesSummary) -> Option<GrowthVerdict> {
    s.classification.as_ref().map(|c| c.verdict)
}

/// The experiment's own pass criteria, from the summaries.
fn expectations(config: &ExperimentConfig, series: &[SeriesSummary], extras: &serde_json::Value) -> Vec<Expectation> {
    let get = |m: &str| series.iter().find(|s| s.metric == m);
    let mut out = Vec::new();
    match config.experiment {
        ExperimentId::Lp2Indep => {
            if let Some(s) = get("query_cost") {
                if let Some(v) = verdict_of(s) {
                    out.push(expect(format!("query cost classified sqrt (got {})", v.name()), v.label() == Some(GrowthLabel::Sqrt)));
                }
                let ok = s.growth_ratios.iter().zip(s.points.windows(2)).all(|(r, w)| {
                    // normalize to one quadrupling of t
                    let per4 = r.powf(2.0 / (w[1].size as f64 / w[0].size as f64).log2());
                    (1.6..=2.4).contains(&per4)
                });
                out.push(expect("query cost ratio per quadrupling in [1.6, 2.4]", ok));
            }
        }
        ExperimentId::Lp3Indep => {
            if let Some(s) = get("cost_per_key") {
                out.push(expect("cost per key increases per doubling", s.growth_ratios.iter().all(|&r| r > 1.0)));
                if let Some(v) = verdict_of(s) {
                    out.push(expect(
                        format!("cost per key classified logarithmic (got {})", v.name()),
                        v.label() == Some(GrowthLabel::Logarithmic),
                    ));
                }
            }
        }
        ExperimentId::Lp4Indep => {
            if let Some(s) = get("query_cost") {
                out.push(expect("query cost strictly increases", s.growth_ratios.iter().all(|&r| r > 1.0)));
                if let Some(v) = verdict_of(s) {
                    let ok = v.is_or_between(GrowthLabel::Logarithmic, GrowthLabel::Sqrt) && v.label() != Some(GrowthLabel::Constant);
                    out.push(expect(format!("query cost logarithmic or inconclusive against sqrt (got {})", v.name()), ok));
                }
            }
            let converged = extras["calibrations"]
                .as_array()
                .is_some_and(|cs| cs.iter().flat_map(|c| c["levels"].as_array().into_iter().flatten()).all(|l| {
                    let ci = &l["g_ci"];
                    ci[0].as_f64().unwrap_or(1.0) <= 0.0 && 0.0 <= ci[1].as_f64().unwrap_or(-1.0)
                }));
            out.push(expect("calibration residual intervals contain 0", converged));
        }
        ExperimentId::LpPolyK => {
            let k = config.k.unwrap_or(5);
            if k >= 5 {
                if let Some(s) = get("query_cost") {
                    out.push(expect(
                        "query cost ratio per doubling in [0.8, 1.2]",
                        s.per_doubling_ratios.iter().all(|r| (0.8..=1.2).contains(r)),
                    ));
                }
            }
        }
        ExperimentId::MinwiseAdv => {
            let pmin = extras["pmin"].as_f64().unwrap_or(f64::NAN);
            for size in extras["sizes"].as_array().into_iter().flatten() {
                let n = size["n"].as_u64().unwrap_or(0);
                let ci = &size["exact_min_ci_99"];
                let (lo, hi) = (ci[0].as_f64().unwrap_or(f64::NAN), ci[1].as_f64().unwrap_or(f64::NAN));
                out.push(expect(format!("n = {n}: in-interval min frequency CI contains pmin"), lo <= pmin && pmin <= hi));
                let above = size["query_min_lower_99"].as_f64().unwrap_or(0.0) > size["fair"].as_f64().unwrap_or(1.0);
                out.push(expect(format!("n = {n}: Pr[query min] above 1/(n+1) at 99%"), above));
            }
        }
        ExperimentId::MinwisePolyK => {
            for size in extras["sizes"].as_array().into_iter().flatten() {
                let rows = size["by_k"].as_array().cloned().unwrap_or_default();
                if rows.len() < 2 {
                    continue;
                }
                let ks: Vec<f64> = rows.iter().map(|r| r["k"].as_f64().unwrap_or(0.0)).collect();
                let bias: Vec<f64> = rows.iter().map(|r| (r["ratio"].as_f64().unwrap_or(1.0) - 1.0).abs()).collect();
                let slope = crate::stats::least_squares(&ks, &bias).slope;
                out.push(expect(format!("n = {}: |ratio - 1| decreases with k (slope {slope:.4})", size["n"]), slope < 0.0));
            }
        }
        ExperimentId::MsLp => {
            if let Some(s) = get("cost_per_key") {
                let trend = s.log_slope.is_some_and(|t| t.ci.0 > 0.0);
                out.push(expect("cost per key log-slope positive at 99%", trend));
                if let (Some(top), Some(base)) = (s.points.last(), get("baseline_cost_per_key").and_then(|b| b.points.last())) {
                    out.push(expect(
                        format!("top of ladder at least 3x random ({:.3} vs {:.3})", top.mean, base.mean),
                        top.mean >= 3.0 * base.mean,
                    ));
                }
            }
        }
        ExperimentId::MsMinwise => {
            if let Some(s) = get("ratio") {
                out.push(expect("ratio to fair grows with n at 99%", s.log_slope.is_some_and(|t| t.ci.0 > 0.0)));
            }
            if let Some(c) = get("control_ratio") {
                out.push(expect("random control contains 1 at every n", c.points.iter().all(|p| p.ci.0 <= 1.0 && 1.0 <= p.ci.1)));
            }
        }
        ExperimentId::Verify => {}
    }
    out
}

fn metadata(config: &ExperimentConfig, calibration_hashes: Vec<(u64, String)>, csv: &[u8], start: Instant) -> Metadata {
    Metadata {
        seed: config.seed,
        config_hash: config.hash(),
        calibration_hashes,
        csv_sha256: sha256_hex(csv),
        wall_seconds: start.elapsed().as_secs_f64(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    }
}

fn run_verify(config: &ExperimentConfig, start: Instant) -> RunOutput {
    let v = verify_suite(config);
    let mut point = PointData::new(0, None, None);
    for c in &v.checks {
        point.push(&c.name, vec![f64::from(u8::from(c.passed))], false);
    }
    let csv = report::csv_bytes(config.experiment, config.seed, &[point]);
    let expectations = v
        .checks
        .iter()
        .map(|c| expect(format!("{}{}: {}", c.name, if c.negative_control { " (negative control)" } else { "" }, c.detail), c.passed))
        .collect();
    let report = CostReport {
        experiment: config.experiment,
        config: config.clone(),
        series: Vec::new(),
        expectations,
        extras: json!({ "checks": v.checks }),
        metadata: metadata(config, Vec::new(), &csv, start),
    };
    RunOutput { report, csv }
}

/// Runs `config` and, when it names an output directory, writes
/// `<experiment>.csv` and `<experiment>_summary.json` there.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let start = Instant::now();
    let out = if config.experiment == ExperimentId::Verify {
        run_verify(config, start)
    } else {
        let data = experiments::collect(config)?;
        let csv = report::csv_bytes(config.experiment, config.seed, &data.points);
        let mut rng = stream_rng(config.seed, 0xb007);
        let series = data
            .metrics
            .iter()
            .map(|m| report::summarize(&data.points, m, config.bootstrap, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let expectations = expectations(config, &series, &data.extras);
        let report = CostReport {
            experiment: config.experiment,
            config: config.clone(),
            series,
            expectations,
            extras: data.extras,
            metadata: metadata(config, data.calibration_hashes, &csv, start),
        };
        RunOutput { report, csv }
    };
    if let Some(dir) = &config.output {
        report::write_outputs(dir, &out.report, &out.csv)?;
    }
    Ok(out)
}

/// Classifies a series given as per-size trial values.
pub fn classify_series(sizes: &[f64], values: &[Vec<f64>], replicates: usize, seed: u64) -> Result<Classification> {
    let points: Vec<PointSamples> = values.iter().cloned().map(PointSamples::plain).collect();
    growth_classify(sizes, &points, replicates, &mut stream_rng(seed, 0xc1a5))
}
