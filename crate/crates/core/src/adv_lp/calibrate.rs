//! Per-level calibration of the T- mix of the 4-independent tree.
//!
//! On a window level the query node uses T1 and every other node uses
//! `P * T1 + (1 - P) * T2`. Weighting each node by its number of ordered
//! 4-tuples `w = (2m)(2m-1)(2m-2)(2m-3)`, the level balance
//!
//! ```text
//! g(P) = E[ sum_v w_v (p4_v(P) - 1/16) ] = A + P B
//! ```
//!
//! is linear in `P`. `A` and `B` are estimated from one batch of draws down to
//! the level, and `g(P^)` is then re-estimated on an independent batch so that
//! the residual check is not trivially zero.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tables::mix_tables;
use super::tree::{run_to_level, FourIndepSchedule};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, trial_stream};

const Z99: f64 = 2.575_829_303_548_901;

/// Size of the fitting batch relative to the holdout batch.
pub const FIT_FACTOR: u64 = 4;

/// Result of calibrating one window level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCalibration {
    pub t: u64,
    pub level: u32,
    /// Calibrated T1 probability of T-.
    pub p_minus: f64,
    /// Draws in the holdout batch; the fitting batch has `FIT_FACTOR` times as many.
    pub samples: u64,
    /// Intercept and slope of `g`, from the fitting batch.
    pub intercept: f64,
    pub slope: f64,
    /// `g(0)` and `g(1)` with 99% half-widths, from the fitting batch.
    pub g_zero: (f64, f64),
    pub g_one: (f64, f64),
    /// Holdout estimate of `g(P^)` and its 99% interval.
    pub g_estimate: f64,
    pub g_ci: (f64, f64),
    /// Mean number of ordered 4-tuples on the level, for scale.
    pub mean_tuples: f64,
}

impl LevelCalibration {
    /// The holdout interval contains zero.
    pub fn converged(&self) -> bool {
        self.g_ci.0 <= 0.0 && 0.0 <= self.g_ci.1
    }

    /// `g(P^)` relative to the mean 4-tuple count.
    pub fn relative_residual(&self) -> f64 {
        if self.mean_tuples > 0.0 {
            self.g_estimate / self.mean_tuples
        } else {
            0.0
        }
    }
}

/// Per-draw contributions `(a, b, tuples)` with `g(P) = E[a + P b]`.
fn level_terms<R: Rng + ?Sized>(schedule: &FourIndepSchedule, level: u32, rng: &mut R) -> Result<(f64, f64, f64)> {
    let q = rng.random_range(0..schedule.t);
    let state = run_to_level(schedule, q, level, rng)?;
    if state.stopped {
        // every node splits at random: p4 = 1/16 exactly
        let tuples = state.loads.iter().map(|&c| ordered_quads(c)).sum();
        return Ok((0.0, 0.0, tuples));
    }
    let tables = mix_tables();
    let (mut a, mut b, mut tuples) = (0.0, 0.0, 0.0);
    for (i, &load) in state.loads.iter().enumerate() {
        let w = ordered_quads(load);
        tuples += w;
        if load < 4 {
            continue;
        }
        let mx = tables.get(load as u64);
        if i == state.query_node {
            a += w * (mx.p4_t1 - 1.0 / 16.0);
        } else {
            a += w * (mx.p4_t2 - 1.0 / 16.0);
            b += w * (mx.p4_t1 - mx.p4_t2);
        }
    }
    Ok((a, b, tuples))
}

fn ordered_quads(load: u32) -> f64 {
    let c = load as f64;
    if load < 4 {
        0.0
    } else {
        c * (c - 1.0) * (c - 2.0) * (c - 3.0)
    }
}

fn batch(schedule: &FourIndepSchedule, level: u32, samples: u64, seed: u64, tag: u64) -> Result<Vec<(f64, f64, f64)>> {
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, trial_stream(tag ^ schedule.t << 32, level as u64, i));
            level_terms(schedule, level, &mut rng)
        })
        .collect()
}

fn mean_and_half_width(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, Z99 * (var / n).sqrt())
}

/// Calibrates the next uncalibrated window level of `schedule`.
pub fn calibrate_tminus(schedule: &FourIndepSchedule, level: u32, samples: u64, seed: u64) -> Result<LevelCalibration> {
    if !schedule.window_levels().contains(&level) {
        return Err(Error::InvalidParameter(format!("level {level} is outside the window {:?}", schedule.window_levels())));
    }
    if level != schedule.calibrated_through() {
        return Err(Error::CalibrationMissing { t: schedule.t, level: schedule.calibrated_through() });
    }
    if samples < 2 {
        return Err(Error::InvalidParameter("calibration needs at least two samples".into()));
    }
    let fit = batch(schedule, level, FIT_FACTOR * samples, seed, 0xca1b_0001)?;
    let (intercept, _) = mean_and_half_width(fit.iter().map(|x| x.0));
    let (slope, _) = mean_and_half_width(fit.iter().map(|x| x.1));
    let g_zero = mean_and_half_width(fit.iter().map(|x| x.0));
    let g_one = mean_and_half_width(fit.iter().map(|x| x.0 + x.1));
    let p_minus = if slope > 0.0 { (-intercept / slope).clamp(0.0, 1.0) } else { 0.0 };

    let holdout = batch(schedule, level, samples, seed, 0xca1b_0002)?;
    let (g_estimate, hw_holdout) = mean_and_half_width(holdout.iter().map(|x| x.0 + p_minus * x.1));
    // g at the fitted P differs from g at the root by the fit batch's own
    // sampling error, so both batches' variances enter the interval.
    let (_, hw_fit) = mean_and_half_width(fit.iter().map(|x| x.0 + p_minus * x.1));
    let hw = hw_holdout.hypot(hw_fit);
    let (mean_tuples, _) = mean_and_half_width(holdout.iter().map(|x| x.2));
    Ok(LevelCalibration {
        t: schedule.t,
        level,
        p_minus,
        samples,
        intercept,
        slope,
        g_zero,
        g_one,
        g_estimate,
        g_ci: (g_estimate - hw, g_estimate + hw),
        mean_tuples,
    })
}

/// Monte Carlo estimate of `g(p)` by actually splitting the level with T-(p):
/// `sum_v (X_v^(4) - w_v / 16)` with the query node on T1. Returns the mean and
/// 99% half-width.
pub fn sampled_balance(schedule: &FourIndepSchedule, level: u32, p: f64, samples: u64, seed: u64) -> Result<(f64, f64)> {
    let mut trial = FourIndepSchedule::new(schedule.t, schedule.p_minus[..(level - schedule.top_end) as usize].to_vec())?;
    trial.p_minus.push(p);
    let values = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, trial_stream(0xca1b_0003 ^ trial.t << 32, level as u64, i));
            let q = rng.random_range(0..trial.t);
            let st = run_to_level(&trial, q, level + 1, &mut rng)?;
            Ok(st
                .loads
                .chunks(2)
                .map(|c| ordered_quads(c[0]) - ordered_quads(c[0] + c[1]) / 16.0)
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_half_width(values.into_iter()))
}

/// Calibration results for every window level of one table size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCache {
    pub t: u64,
    pub seed: u64,
    pub samples: u64,
    pub levels: Vec<LevelCalibration>,
    /// Digest of the resulting schedule; checked on load.
    pub schedule_hash: String,
}

impl CalibrationCache {
    pub fn schedule(&self) -> Result<FourIndepSchedule> {
        FourIndepSchedule::new(self.t, self.levels.iter().map(|l| l.p_minus).collect())
    }

    pub fn path_for(dir: &Path, t: u64) -> PathBuf {
        dir.join(format!("calibration_t{t}.json"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cache: Self = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::CalibrationMismatch(format!("{}: {e}", path.display())))?;
        let schedule = cache.schedule()?;
        if schedule.hash() != cache.schedule_hash {
            return Err(Error::CalibrationMismatch(format!(
                "{}: stored hash {} does not match schedule hash {}",
                path.display(),
                cache.schedule_hash,
                schedule.hash()
            )));
        }
        if !schedule.is_complete() {
            return Err(Error::CalibrationMismatch(format!("{}: schedule is incomplete", path.display())));
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn all_converged(&self) -> bool {
        self.levels.iter().all(LevelCalibration::converged)
    }
}

/// Calibrates every window level of table size `t` top down. With a cache
/// directory, a valid cache for the same `t`, seed and sample count is reused
/// and a fresh result is written back.
pub fn calibrate_schedule(t: u64, samples: u64, seed: u64, cache_dir: Option<&Path>) -> Result<CalibrationCache> {
    let path = cache_dir.map(|d| CalibrationCache::path_for(d, t));
    if let Some(p) = path.as_deref().filter(|p| p.exists()) {
        let cached = CalibrationCache::load(p)?;
        if cached.t == t && cached.seed == seed && cached.samples == samples {
            return Ok(cached);
        }
    }
    let mut schedule = FourIndepSchedule::uncalibrated(t)?;
    let mut levels = Vec::with_capacity(schedule.window_len());
    for level in schedule.window_levels() {
        let cal = calibrate_tminus(&schedule, level, samples, seed)?;
        schedule.p_minus.push(cal.p_minus);
        levels.push(cal);
    }
    let cache = CalibrationCache { t, seed, samples, levels, schedule_hash: schedule.hash() };
    if let Some(p) = path {
        cache.save(&p)?;
    }
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_order_is_enforced() {
        let s = FourIndepSchedule::uncalibrated(1 << 12).unwrap();
        assert!(calibrate_tminus(&s, 9, 10, 1).is_err());
        assert!(calibrate_tminus(&s, 7, 10, 1).is_err());
    }

    #[test]
    fn signs_and_holdout_at_t4096() {
        let cache = calibrate_schedule(1 << 12, 4000, 11, None).unwrap();
        assert_eq!(cache.levels.len(), 3);
        for l in &cache.levels {
            assert!(l.g_one.0 - l.g_one.1 > 0.0, "g(1) > 0 at level {}", l.level);
            assert!(l.g_zero.0 + l.g_zero.1 < 0.0, "g(0) < 0 at level {}", l.level);
            assert!((0.0..=1.0).contains(&l.p_minus));
            assert!(l.converged(), "{l:?}");
        }
    }

    #[test]
    fn balance_is_linear_in_p() {
        let s = FourIndepSchedule::uncalibrated(1 << 12).unwrap();
        let level = s.top_end;
        let n = 20_000;
        let (g0, h0) = sampled_balance(&s, level, 0.0, n, 5).unwrap();
        let (g1, h1) = sampled_balance(&s, level, 1.0, n, 6).unwrap();
        let (gm, hm) = sampled_balance(&s, level, 0.5, n, 7).unwrap();
        let diff = gm - (g0 + g1) / 2.0;
        let tol = hm + (h0 + h1) / 2.0;
        assert!(diff.abs() <= tol, "midpoint off by {diff}, tolerance {tol}");
        assert!(g0 < 0.0 && g1 > 0.0);
    }

    #[test]
    fn calibrated_level_is_balanced_when_sampled() {
        let cache = calibrate_schedule(1 << 12, 4000, 12, None).unwrap();
        let s = cache.schedule().unwrap();
        let level = s.top_end;
        let (g, hw) = sampled_balance(&s, level, s.p_minus[0], 40_000, 13).unwrap();
        assert!(g.abs() <= hw, "sampled g(P^) = {g} +- {hw}");
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let a = calibrate_schedule(1 << 12, 200, 3, Some(dir.path())).unwrap();
        let path = CalibrationCache::path_for(dir.path(), 1 << 12);
        assert_eq!(CalibrationCache::load(&path).unwrap(), a);
        let b = calibrate_schedule(1 << 12, 200, 3, Some(dir.path())).unwrap();
        assert_eq!(a, b);
        let text = std::fs::read_to_string(&path).unwrap();
        let p = a.levels[0].p_minus;
        let corrupted = text.replacen(&format!("\"p_minus\": {p}"), &format!("\"p_minus\": {}", (p + 0.01).min(1.0)), 1);
        assert_ne!(text, corrupted);
        std::fs::write(&path, corrupted).unwrap();
        assert!(matches!(CalibrationCache::load(&path), Err(Error::CalibrationMismatch(_))));
    }
}
