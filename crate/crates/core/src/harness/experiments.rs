//! One function per experiment: trial data per ladder point plus extras.

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::config::{ExperimentConfig, ExperimentId};
use super::report::PointData;
use crate::adv_lp::{calibrate_schedule, ForceStrategy, sample_4indep_tree, solve_2indep_mix, three_indep_n, CollectTilt, ThreeIndepTree};
use crate::adv_minwise::{pmin_exact, predicted_bias, required_trials, sample_minwise, conditional_min_probability, MinwiseConfig};
use crate::error::{Error, Result};
use crate::families::{PolyFamily, MERSENNE_61};
use crate::ms_attack::{ms_lp_experiment, ms_minwise_experiment, BadInputSpec, MsLpOptions};
use crate::probing::ProbeTable;
use crate::rational::to_f64;
use crate::rng::{stream_rng, trial_stream, TrialRng};
use crate::stats::wilson_interval;

/// Collect tilt of lp-3indep importance sampling: boost and untilted share.
pub const TILT_BOOST: f64 = 0.5;
pub const TILT_DEFENSIVE: f64 = 0.3;

/// Output of one experiment before summarizing.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub points: Vec<PointData>,
    /// Metrics to summarize, in order.
    pub metrics: Vec<String>,
    pub extras: serde_json::Value,
    pub calibration_hashes: Vec<(u64, String)>,
}

fn trials<T, F>(config: &ExperimentConfig, tag: u64, point: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut TrialRng) -> Result<T> + Sync,
{
    (0..config.trials as u64)
        .into_par_iter()
        .map(|i| f(&mut stream_rng(config.seed, trial_stream(tag, point, i))))
        .collect()
}

fn per_key(table: &ProbeTable, n: u64) -> f64 {
    table.total_insert_probes() as f64 / n as f64
}

/// With importance sampling the even and collect strategies are drawn half
/// and half and reweighted to the balanced mix.
pub fn lp_2indep(config: &ExperimentConfig) -> Result<ExperimentData> {
    let mut points = Vec::new();
    let mut exact = Vec::new();
    for &t in &config.ladder {
        let mix = solve_2indep_mix(t / 2)?;
        let p = mix.p_s2_f64();
        let rows = trials(config, 0x2001, t, |rng| {
            let (force, weight) = if !config.importance {
                (None, 1.0)
            } else if rng.random::<bool>() {
                (Some(ForceStrategy::Collect), 2.0 * p)
            } else {
                (Some(ForceStrategy::Even), 2.0 * (1.0 - p))
            };
            let (counts, q, _, _) = mix.sample_slot_counts(force, rng);
            let table = ProbeTable::from_slot_counts(&counts)?;
            Ok((table.search_cost(q) as f64, per_key(&table, mix.n), weight))
        })?;
        let mut p = PointData::new(t, Some(t), Some(mix.n));
        p.push("query_cost", rows.iter().map(|r| r.0).collect(), config.importance);
        p.push("cost_per_key", rows.iter().map(|r| r.1).collect(), config.importance);
        if config.importance {
            p.weights = Some(rows.iter().map(|r| r.2).collect());
        }
        points.push(p);
        exact.push(json!({
            "t": t,
            "collect_probability": mix.p_s2_f64(),
            "pair_collision_probability": to_f64(&mix.pair_collision_probability()),
        }));
    }
    Ok(ExperimentData {
        points,
        metrics: vec!["query_cost".into(), "cost_per_key".into()],
        extras: json!({ "mix": exact }),
        calibration_hashes: Vec::new(),
    })
}

pub fn lp_3indep(config: &ExperimentConfig) -> Result<ExperimentData> {
    let mut points = Vec::new();
    for &t in &config.ladder {
        let n = three_indep_n(t);
        let mut tree = ThreeIndepTree::new(t)?;
        if config.importance {
            tree = tree.with_tilt(CollectTilt::mixture(n, TILT_BOOST, TILT_DEFENSIVE));
        }
        let rows = trials(config, 0x3001, t, |rng| {
            let draw = tree.draw(rng);
            let table = ProbeTable::from_slot_counts(&draw.counts)?;
            Ok((per_key(&table, n), table.mean_search_cost(), draw.weight()))
        })?;
        let mut p = PointData::new(t, Some(t), Some(n));
        let weighted = config.importance;
        p.push("cost_per_key", rows.iter().map(|r| r.0).collect(), weighted);
        p.push("query_cost", rows.iter().map(|r| r.1).collect(), weighted);
        if weighted {
            p.weights = Some(rows.iter().map(|r| r.2).collect());
        }
        points.push(p);
    }
    Ok(ExperimentData {
        points,
        metrics: vec!["cost_per_key".into(), "query_cost".into()],
        extras: json!({ "tilt": config.importance.then_some((TILT_BOOST, TILT_DEFENSIVE)) }),
        calibration_hashes: Vec::new(),
    })
}

pub fn lp_4indep(config: &ExperimentConfig) -> Result<ExperimentData> {
    let mut points = Vec::new();
    let mut calibrations = Vec::new();
    let mut hashes = Vec::new();
    for &t in &config.ladder {
        let cache = calibrate_schedule(t, config.calibration_samples, config.seed, config.cache_dir.as_deref())?;
        let schedule = cache.schedule()?;
        let n = schedule.n;
        let rows = trials(config, 0x4001, t, |rng| {
            let s = sample_4indep_tree(&schedule, rng)?;
            let table = ProbeTable::from_slot_counts(&s.counts)?;
            Ok((table.search_cost(s.query_slot) as f64, per_key(&table, n)))
        })?;
        let mut p = PointData::new(t, Some(t), Some(n));
        p.push("query_cost", rows.iter().map(|r| r.0).collect(), false);
        p.push("cost_per_key", rows.iter().map(|r| r.1).collect(), false);
        points.push(p);
        hashes.push((t, cache.schedule_hash.clone()));
        calibrations.push(serde_json::to_value(&cache)?);
    }
    Ok(ExperimentData {
        points,
        metrics: vec!["query_cost".into(), "cost_per_key".into()],
        extras: json!({ "calibrations": calibrations }),
        calibration_hashes: hashes,
    })
}

pub fn lp_poly_k(config: &ExperimentConfig) -> Result<ExperimentData> {
    let k = config.k.unwrap_or(5) as usize;
    let load = config.load.unwrap_or(1.0 / 3.0);
    let mut points = Vec::new();
    for &t in &config.ladder {
        let n = (load * t as f64).floor() as u64;
        if n == 0 || n >= t {
            return Err(Error::InvalidParameter(format!("load {load} gives {n} keys in {t} slots")));
        }
        let rows = trials(config, 0x5001 ^ (k as u64) << 16, t, |rng| {
            let h = PolyFamily::sample(k, t, rng)?;
            let mut table = ProbeTable::new(t)?;
            for x in 0..n {
                table.insert(x, h.eval(x))?;
            }
            Ok((table.search_cost(h.eval(n)) as f64, per_key(&table, n)))
        })?;
        let mut p = PointData::new(t, Some(t), Some(n));
        p.push("query_cost", rows.iter().map(|r| r.0).collect(), false);
        p.push("cost_per_key", rows.iter().map(|r| r.1).collect(), false);
        points.push(p);
    }
    Ok(ExperimentData {
        points,
        metrics: vec!["query_cost".into(), "cost_per_key".into()],
        extras: json!({ "k": k, "load": load }),
        calibration_hashes: Vec::new(),
    })
}

pub fn minwise_adv(config: &ExperimentConfig) -> Result<ExperimentData> {
    let k = config.k.unwrap_or(2);
    let pmin = to_f64(&pmin_exact(k)?);
    let mut points = Vec::new();
    let mut per_size = Vec::new();
    for &n in &config.ladder {
        let mc = MinwiseConfig::standard(n, k)?;
        let needed = required_trials(&mc, 0.01, 0.9);
        if (config.trials as u64) < needed {
            return Err(Error::UnderPowered(format!(
                "minwise-adv at n = {n}: {} trials, {needed} needed to detect the predicted bias",
                config.trials
            )));
        }
        let rows = trials(config, 0x6001 ^ k << 16, n, |rng| {
            let s = sample_minwise(&mc, rng);
            let b = |v: bool| f64::from(u8::from(v));
            Ok([
                b(s.query_is_min()),
                conditional_min_probability(&s.layout, k),
                b(s.layout.query_interval_exact()),
                b(s.query_is_min_in_interval(&mc)),
            ])
        })?;
        let mut p = PointData::new(n, None, Some(n));
        for (i, name) in ["query_min", "query_min_given_layout", "exact_interval", "in_interval_min"].iter().enumerate() {
            p.push(name, rows.iter().map(|r| r[i]).collect(), false);
        }
        let hits = rows.iter().filter(|r| r[0] > 0.0).count() as u64;
        let exact = rows.iter().filter(|r| r[2] > 0.0).count() as u64;
        let exact_min = rows.iter().filter(|r| r[2] > 0.0 && r[3] > 0.0).count() as u64;
        let fair = 1.0 / (n + 1) as f64;
        let bias = to_f64(&predicted_bias(&mc));
        per_size.push(json!({
            "n": n,
            "fair": fair,
            "predicted": fair + bias,
            "predicted_bias": bias,
            "required_trials": needed,
            "query_min_frequency": hits as f64 / config.trials as f64,
            // one-sided 99% lower bound
            "query_min_lower_99": wilson_interval(hits, config.trials as u64, 0.98).0,
            "exact_trials": exact,
            "exact_min_frequency": exact_min as f64 / exact.max(1) as f64,
            "exact_min_ci_99": wilson_interval(exact_min, exact, 0.99),
        }));
        points.push(p);
    }
    Ok(ExperimentData {
        points,
        metrics: vec!["query_min".into(), "query_min_given_layout".into()],
        extras: json!({ "k": k, "pmin": pmin, "sizes": per_size }),
        calibration_hashes: Vec::new(),
    })
}

/// Value of the polynomial hash with `k` coefficients over 2^61 - 1; `k = 1`
/// uses the shift `x + a`, since a degree-0 polynomial is constant.
fn poly_hash<R: Rng + ?Sized>(k: u64, rng: &mut R) -> Result<PolyFamily> {
    if k == 1 {
        PolyFamily::from_coeffs(vec![rng.random_range(0..MERSENNE_61), 1], 1 << 60)
    } else {
        PolyFamily::sample(k as usize, 1 << 60, rng)
    }
}

pub fn minwise_poly_k(config: &ExperimentConfig) -> Result<ExperimentData> {
    let ks: Vec<u64> = config.k.map_or_else(|| (1..=8).collect(), |k| vec![k]);
    let mut points = Vec::new();
    let mut metrics = Vec::new();
    let mut per_size = Vec::new();
    for &n in &config.ladder {
        let mut p = PointData::new(n, None, Some(n));
        let mut rows = Vec::new();
        for &k in &ks {
            let hits = trials(config, 0x7001 ^ k << 16, n, |rng| {
                let h = poly_hash(k, rng)?;
                let q = h.eval_mod_p(n);
                Ok(f64::from(u8::from((0..n).all(|x| q < h.eval_mod_p(x)))))
            })?;
            let count = hits.iter().filter(|&&v| v > 0.0).count() as u64;
            let (lo, hi) = wilson_interval(count, config.trials as u64, 0.99);
            let scale = (n + 1) as f64;
            rows.push(json!({
                "k": k,
                "ratio": count as f64 / config.trials as f64 * scale,
                "ratio_ci_99": (lo * scale, hi * scale),
            }));
            let name = format!("query_min_k{k}");
            if !metrics.contains(&name) {
                metrics.push(name.clone());
            }
            p.push(&name, hits, false);
        }
        per_size.push(json!({ "n": n, "by_k": rows }));
        points.push(p);
    }
    Ok(ExperimentData { points, metrics, extras: json!({ "sizes": per_size }), calibration_hashes: Vec::new() })
}

pub fn ms_lp(config: &ExperimentConfig) -> Result<ExperimentData> {
    let load = config.load.unwrap_or(0.5);
    let mut points = Vec::new();
    for &n in &config.ladder {
        let t = (n as f64 / load) as u64;
        let options = MsLpOptions {
            with_offset: config.with_offset,
            allow_even: config.allow_even,
            importance: config.importance,
            ..MsLpOptions::new(64, t.trailing_zeros(), config.trials, config.seed)
        };
        let report = ms_lp_experiment(&BadInputSpec::interval(n), options)?;
        let mut p = PointData::new(n, Some(t), Some(n));
        p.push("cost_per_key", report.costs, config.importance);
        p.push("baseline_cost_per_key", report.baseline, false);
        if config.importance {
            p.weights = Some(report.weights);
        }
        points.push(p);
    }
    Ok(ExperimentData {
        points,
        metrics: vec!["cost_per_key".into(), "baseline_cost_per_key".into()],
        extras: json!({ "load": load, "ell": 64, "with_offset": config.with_offset, "allow_even": config.allow_even }),
        calibration_hashes: Vec::new(),
    })
}

pub fn ms_minwise(config: &ExperimentConfig) -> Result<ExperimentData> {
    let mut points = Vec::new();
    for &n in &config.ladder {
        let report = ms_minwise_experiment(n, 64, config.trials, config.trials, config.importance, config.seed)?;
        let mut p = PointData::new(n, None, Some(n));
        p.push("ratio", report.ratios, config.importance);
        p.push("control_ratio", report.control_ratios, false);
        if config.importance {
            p.weights = Some(report.weights);
        }
        points.push(p);
    }
    Ok(ExperimentData {
        points,
        metrics: vec!["ratio".into(), "control_ratio".into()],
        extras: json!({ "ell": 64 }),
        calibration_hashes: Vec::new(),
    })
}

pub fn collect(config: &ExperimentConfig) -> Result<ExperimentData> {
    match config.experiment {
        ExperimentId::Lp2Indep => lp_2indep(config),
        ExperimentId::Lp3Indep => lp_3indep(config),
        ExperimentId::Lp4Indep => lp_4indep(config),
        ExperimentId::LpPolyK => lp_poly_k(config),
        ExperimentId::MinwiseAdv => minwise_adv(config),
        ExperimentId::MinwisePolyK => minwise_poly_k(config),
        ExperimentId::MsLp => ms_lp(config),
        ExperimentId::MsMinwise => ms_minwise(config),
        ExperimentId::Verify => Err(Error::InvalidParameter("verify runs through verify_suite".into())),
    }
}
