//! Per-trial records, summaries and the CSV/JSON writers.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentId};
use super::estimate::{PointEstimate, PointSamples};
use super::growth::{growth_classify, Classification};
use crate::error::Result;
use crate::stats::{least_squares, std_dev};

pub const CSV_HEADER: &str = "experiment,t,n,load,trial,seed,metric,value";

/// Confidence level of every reported interval.
pub const LEVEL: f64 = 0.99;

/// One metric recorded for every trial of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrials {
    pub name: String,
    pub values: Vec<f64>,
    /// Values are under the point's sampling law and need its weights.
    pub weighted: bool,
}

/// All trials at one ladder size.
#[derive(Debug, Clone, PartialEq)]
pub struct PointData {
    pub size: u64,
    pub t: Option<u64>,
    pub n: Option<u64>,
    pub load: Option<f64>,
    /// Likelihood ratios, when trials were drawn from a tilted law.
    pub weights: Option<Vec<f64>>,
    pub metrics: Vec<MetricTrials>,
}

impl PointData {
    pub fn new(size: u64, t: Option<u64>, n: Option<u64>) -> Self {
        let load = match (t, n) {
            (Some(t), Some(n)) => Some(n as f64 / t as f64),
            _ => None,
        };
        Self { size, t, n, load, weights: None, metrics: Vec::new() }
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>, weighted: bool) {
        self.metrics.push(MetricTrials { name: name.to_string(), values, weighted });
    }

    pub fn metric(&self, name: &str) -> Option<&MetricTrials> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn samples(&self, name: &str) -> Option<PointSamples> {
        let m = self.metric(name)?;
        Some(match (&self.weights, m.weighted) {
            (Some(w), true) => PointSamples::weighted(m.values.clone(), w.clone()),
            _ => PointSamples::plain(m.values.clone()),
        })
    }

    fn trial_count(&self) -> usize {
        self.metrics.iter().map(|m| m.values.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub size: u64,
    pub t: Option<u64>,
    pub n: Option<u64>,
    pub load: Option<f64>,
    pub trials: usize,
    pub mean: f64,
    /// Standard deviation of the recorded values (of `weight * value` when weighted).
    pub stddev: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

/// Slope with a bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub slope: f64,
    pub ci: (f64, f64),
}

impl Trend {
    pub fn excludes_zero(&self) -> bool {
        self.ci.0 > 0.0 || self.ci.1 < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub metric: String,
    pub points: Vec<PointSummary>,
    /// `mean[i + 1] / mean[i]` over consecutive ladder sizes.
    pub growth_ratios: Vec<f64>,
    /// The same ratios normalized to one doubling of size.
    pub per_doubling_ratios: Vec<f64>,
    /// Mean against `log2(size)`: additive increment per doubling.
    pub log_slope: Option<Trend>,
    /// `ln(mean)` against `ln(size)`: growth exponent.
    pub power_slope: Option<Trend>,
    pub classification: Option<Classification>,
}

impl SeriesSummary {
    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }
}

/// Outcome of the experiment's own pass criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub description: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub config_hash: String,
    /// Schedule hash per calibrated table size.
    pub calibration_hashes: Vec<(u64, String)>,
    pub csv_sha256: String,
    pub wall_seconds: f64,
    /// Unix time of the run; excluded from every hash.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub experiment: ExperimentId,
    pub config: ExperimentConfig,
    pub series: Vec<SeriesSummary>,
    pub expectations: Vec<Expectation>,
    /// Experiment-specific results (exact predictions, calibration tables, checks).
    pub extras: serde_json::Value,
    pub metadata: Metadata,
}

impl CostReport {
    pub fn series(&self, metric: &str) -> Option<&SeriesSummary> {
        self.series.iter().find(|s| s.metric == metric)
    }

    pub fn passed(&self) -> bool {
        self.expectations.iter().all(|e| e.passed)
    }
}

fn bootstrap_trend<R: Rng + ?Sized>(
    x: &[f64],
    points: &[PointSamples],
    reps: usize,
    rng: &mut R,
    transform: fn(f64) -> Option<f64>,
) -> Option<Trend> {
    let fit = |means: &[f64]| -> Option<f64> {
        let y: Option<Vec<f64>> = means.iter().map(|&m| transform(m)).collect();
        Some(least_squares(x, &y?).slope)
    };
    let means: Vec<f64> = points.iter().map(|p| p.estimate().mean).collect();
    let slope = fit(&means)?;
    let mut boot: Vec<f64> = (0..reps)
        .filter_map(|_| fit(&points.iter().map(|p| p.resample(rng).estimate().mean).collect::<Vec<_>>()))
        .collect();
    if boot.len() < reps / 2 {
        return None;
    }
    boot.sort_by(f64::total_cmp);
    let at = |q: f64| boot[((q * (boot.len() - 1) as f64).round() as usize).min(boot.len() - 1)];
    let alpha = (1.0 - LEVEL) / 2.0;
    Some(Trend { slope, ci: (at(alpha), at(1.0 - alpha)) })
}

/// Summarizes one metric across the ladder.
pub fn summarize<R: Rng + ?Sized>(points: &[PointData], metric: &str, bootstrap: usize, rng: &mut R) -> Result<SeriesSummary> {
    let present: Vec<&PointData> = points.iter().filter(|p| p.metric(metric).is_some()).collect();
    let samples: Vec<PointSamples> = present.iter().map(|p| p.samples(metric).expect("present")).collect();
    let sizes: Vec<f64> = present.iter().map(|p| p.size as f64).collect();
    let summaries: Vec<PointSummary> = present
        .iter()
        .zip(&samples)
        .map(|(p, s)| {
            let PointEstimate { mean, se, n } = s.estimate();
            let raw: Vec<f64> = match &s.weights {
                Some(w) => s.values.iter().zip(w).map(|(v, w)| v * w).collect(),
                None => s.values.clone(),
            };
            PointSummary {
                size: p.size,
                t: p.t,
                n: p.n,
                load: p.load,
                trials: n,
                mean,
                stddev: std_dev(&raw),
                se,
                ci: PointEstimate { mean, se, n }.ci(LEVEL),
            }
        })
        .collect();
    let growth_ratios: Vec<f64> = summaries.windows(2).map(|w| w[1].mean / w[0].mean).collect();
    let per_doubling_ratios = summaries
        .windows(2)
        .zip(&growth_ratios)
        .map(|(w, r)| r.powf(1.0 / (w[1].size as f64 / w[0].size as f64).log2()))
        .collect();
    let (log_slope, power_slope, classification) = if summaries.len() >= 2 {
        let lx: Vec<f64> = sizes.iter().map(|s| s.log2()).collect();
        let ln: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
        let log_slope = bootstrap_trend(&lx, &samples, bootstrap, rng, Some);
        let power_slope = bootstrap_trend(&ln, &samples, bootstrap, rng, |m| (m > 0.0).then(|| m.ln()));
        let classification = if summaries.len() >= 3 { Some(growth_classify(&sizes, &samples, bootstrap, rng)?) } else { None };
        (log_slope, power_slope, classification)
    } else {
        (None, None, None)
    };
    Ok(SeriesSummary {
        metric: metric.to_string(),
        points: summaries,
        growth_ratios,
        per_doubling_ratios,
        log_slope,
        power_slope,
        classification,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes one row per (size, trial, metric); weighted points add a `weight` row.
pub fn write_csv<W: Write>(out: &mut W, experiment: ExperimentId, seed: u64, points: &[PointData]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for p in points {
        let prefix = format!("{experiment},{},{},{}", opt(p.t), opt(p.n), opt(p.load));
        for trial in 0..p.trial_count() {
            for m in &p.metrics {
                if let Some(v) = m.values.get(trial) {
                    writeln!(out, "{prefix},{trial},{seed},{},{v}", m.name)?;
                }
            }
            if let Some(w) = p.weights.as_ref().and_then(|w| w.get(trial)) {
                writeln!(out, "{prefix},{trial},{seed},weight,{w}")?;
            }
        }
    }
    Ok(())
}

pub fn csv_bytes(experiment: ExperimentId, seed: u64, points: &[PointData]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, experiment, seed, points).expect("writing to memory");
    buf
}

/// Paths of the CSV and summary JSON for `experiment` in `dir`.
pub fn output_paths(dir: &Path, experiment: ExperimentId) -> (PathBuf, PathBuf) {
    (dir.join(format!("{experiment}.csv")), dir.join(format!("{experiment}_summary.json")))
}

pub fn write_outputs(dir: &Path, report: &CostReport, csv: &[u8]) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let (csv_path, json_path) = output_paths(dir, report.experiment);
    fs::write(&csv_path, csv)?;
    fs::write(&json_path, serde_json::to_string_pretty(report)?)?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn point(size: u64, values: Vec<f64>) -> PointData {
        let mut p = PointData::new(size, Some(size), Some(size / 2));
        p.push("cost", values, false);
        p
    }

    #[test]
    fn csv_layout() {
        let mut p = point(8, vec![1.0, 2.5]);
        p.weights = Some(vec![0.5, 1.5]);
        p.metrics[0].weighted = true;
        let mut q = PointData::new(16, None, Some(16));
        q.push("ratio", vec![0.25], false);
        let text = String::from_utf8(csv_bytes(ExperimentId::MsLp, 7, &[p, q])).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "ms-lp,8,4,0.5,0,7,cost,1");
        assert_eq!(lines[2], "ms-lp,8,4,0.5,0,7,weight,0.5");
        assert_eq!(lines[4], "ms-lp,8,4,0.5,1,7,weight,1.5");
        assert_eq!(lines[5], "ms-lp,,16,,0,7,ratio,0.25");
        assert!(lines.iter().all(|l| l.split(',').count() == 8));
    }

    #[test]
    fn summary_of_a_linear_series() {
        let mut rng = stream_rng(3, 0);
        let points: Vec<PointData> = (0..5)
            .map(|e| {
                let size = 1u64 << (10 + e);
                point(size, (0..100).map(|i| size as f64 + (i % 7) as f64).collect())
            })
            .collect();
        let s = summarize(&points, "cost", 100, &mut rng).unwrap();
        assert_eq!(s.points.len(), 5);
        for r in &s.per_doubling_ratios {
            assert!((r - 2.0).abs() < 0.01);
        }
        let power = s.power_slope.unwrap();
        assert!((power.slope - 1.0).abs() < 0.01 && power.excludes_zero());
        assert_eq!(s.classification.unwrap().verdict.label(), Some(crate::harness::growth::GrowthLabel::Linear));
    }
}
