//! Fast self-check of every exact identity, oracle and independence test,
//! with negative controls that must fail.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::adv_lp::{calibrate_schedule, p4_exact, solve_2indep_mix, solve_3indep_mix, t1, t2, t_star, CalibrationCache, SplitStrategy};
use crate::adv_minwise::{exhaustive_minwise_oracle, kwise_check_minwise, predicted_bias, MinwiseConfig};
use crate::error::{Error, Result};
use crate::indep_verify::{bonferroni, empirical_pk, exact_moments, node_left_bits, predict_p4_from_f4, random_f4, sample_mix_left, SIGNIFICANCE};
use crate::ms_attack::{avg_cost_check, hit_prob_enumerate, near_zero_factor_check};
use crate::rational::{rat, to_f64};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The inner test is expected to fail; the check passes when it does.
    pub negative_control: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn add(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), negative_control: false, passed, detail: detail.into() });
    }

    fn control(&mut self, name: &str, inner_passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), negative_control: true, passed: !inner_passed, detail: detail.into() });
    }

    /// Runs `f`, recording an error as a failed check.
    fn run(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<()>) {
        if let Err(e) = f(self) {
            self.add(name, false, format!("error: {e}"));
        }
    }
}

fn first_mismatch<T: std::fmt::Debug>(items: impl IntoIterator<Item = (T, bool)>) -> Option<T> {
    items.into_iter().find(|(_, ok)| !ok).map(|(t, _)| t)
}

fn exact_balances(s: &mut Suite) {
    s.run("balance-3indep", |s| {
        let mut bad = None;
        for two_m in 2..=64u64 {
            solve_3indep_mix(two_m)?;
            let r = exact_moments(&t1(two_m)?, two_m)?;
            if r.f2 != r.f2_reference() || !r.is_three_independent() {
                bad = Some(two_m);
                break;
            }
        }
        s.add("balance-3indep", bad.is_none(), format!("F2 = m/2 and p2, p3 exact for 2m in 2..=64; first failure {bad:?}"));
        Ok(())
    });
    s.run("balance-tstar", |s| {
        let mut infeasible = Vec::new();
        let mut bad = None;
        for two_m in 4..=64u64 {
            match t_star(two_m) {
                Ok(mix) => {
                    if exact_moments(&mix, two_m)?.p4 != rat(1, 16) {
                        bad = Some(two_m);
                    }
                }
                Err(Error::InfeasibleBalance { .. }) => infeasible.push(two_m),
                Err(e) => return Err(e),
            }
        }
        s.add("balance-tstar", bad.is_none(), format!("p4 = 1/16 where feasible; infeasible at {infeasible:?}"));
        Ok(())
    });
    s.run("balance-2indep", |s| {
        let checks: Vec<(u64, bool)> = [64u64, 1024, 4096]
            .into_iter()
            .map(|n| Ok((n, solve_2indep_mix(n)?.pair_collision_probability() == rat(1, (n as f64).sqrt() as i64))))
            .collect::<Result<_>>()?;
        let bad = first_mismatch(checks);
        s.add("balance-2indep", bad.is_none(), format!("pair collision probability 1/sqrt(n); first failure {bad:?}"));
        Ok(())
    });
}

fn moment_oracles(s: &mut Suite) {
    s.run("random-f4", |s| {
        let checks: Vec<(u64, bool)> =
            (1..=32u64).map(|two_m| Ok((two_m, exact_moments(&SplitStrategy::Random, two_m)?.f4 == random_f4(two_m)))).collect::<Result<_>>()?;
        let bad = first_mismatch(checks);
        s.add("random-f4", bad.is_none(), format!("binomial fourth moment m(3m-1)/4 for 2m <= 32; first failure {bad:?}"));
        Ok(())
    });
    s.run("f4-predicts-p4", |s| {
        let checks: Vec<(u64, bool)> = (4..=32u64)
            .map(|two_m| {
                let mix = t2(two_m)?;
                let random = exact_moments(&SplitStrategy::Random, two_m)?;
                let pred = predict_p4_from_f4(two_m, &exact_moments(&mix, two_m)?.f4, &random.f4)?;
                Ok((two_m, pred == p4_exact(&mix, two_m)?))
            })
            .collect::<Result<_>>()?;
        let bad = first_mismatch(checks);
        s.add("f4-predicts-p4", bad.is_none(), format!("p4(T2) from F4 equals exact p4 for 2m in 4..=32; first failure {bad:?}"));
        Ok(())
    });
}

fn pk_tests(s: &mut Suite, seed: u64) {
    s.run("pk-3indep-mix", |s| {
        let two_m = 16u64;
        let p = to_f64(&solve_3indep_mix(two_m)?);
        let good = [(SplitStrategy::Collect, p), (SplitStrategy::Even, 1.0 - p)];
        let broken = [(SplitStrategy::Collect, 2.0 * p), (SplitStrategy::Even, 1.0 - 2.0 * p)];
        let alpha = bonferroni(SIGNIFICANCE, 2);
        let mut rng = stream_rng(seed, 0x9e01);
        let mut run = |mix: &[(SplitStrategy, f64)], k: usize| {
            empirical_pk(|r| node_left_bits(sample_mix_left(mix, two_m, r), two_m, k, r), k, 400_000, None, alpha, &mut rng)
        };
        let ok: Vec<_> = [2, 3].iter().map(|&k| run(&good, k)).collect();
        s.add(
            "pk-3indep-mix",
            ok.iter().all(|r| r.passed),
            format!("balanced mix at 2m = 16, k = 2, 3: p = {:?}", ok.iter().map(|r| r.p_value).collect::<Vec<_>>()),
        );
        let neg = run(&broken, 2);
        s.control("pk-doubled-mix", neg.passed, format!("collect probability doubled: p = {:.3e}", neg.p_value));
        Ok(())
    });
}

fn minwise_checks(s: &mut Suite, seed: u64) {
    s.run("minwise-kwise", |s| {
        // (n, k, [(tuple size, with query)])
        type Case = (u64, u64, &'static [(usize, bool)]);
        let cases: [Case; 2] = [
            (8, 2, &[(1, false), (2, false), (1, true), (2, true)]),
            (12, 4, &[(2, false), (4, false), (2, true), (4, true)]),
        ];
        let alpha = bonferroni(SIGNIFICANCE, 8);
        let mut rng = stream_rng(seed, 0x9e02);
        let mut details = Vec::new();
        let mut all = true;
        for (n, k, sizes) in cases {
            let c = MinwiseConfig::standard(n, k)?;
            for &(size, with_q) in sizes {
                let r = kwise_check_minwise(&c, size, with_q, 200_000, alpha, &mut rng)?;
                all &= r.passed;
                details.push(format!("k={k} size={size} query={with_q} p={:.3}", r.p_value));
            }
        }
        s.add("minwise-kwise", all, details.join("; "));
        let c = MinwiseConfig::standard(8, 2)?;
        let neg = kwise_check_minwise(&c, 3, true, 200_000, SIGNIFICANCE, &mut rng)?;
        s.control("minwise-kwise-k-plus-one", neg.passed, format!("query plus k keys: p = {:.3e}", neg.p_value));
        Ok(())
    });
    s.run("minwise-oracle", |s| {
        let o = exhaustive_minwise_oracle(2, 4, 4)?;
        let c = MinwiseConfig { n: 4, k: 2, precision: 4 };
        let ok = o.first_half_law == vec![rat(1, 2), rat(0, 1), rat(1, 2)]
            && o.pmin == rat(5, 12)
            && o.interval0_even == rat(1, 2)
            && o.overall_min == rat(1, 5) + predicted_bias(&c);
        s.add("minwise-oracle", ok, format!("k = 2, n = 4: pmin {}, overall {}", o.pmin, o.overall_min));
        Ok(())
    });
}

fn multiply_shift_checks(s: &mut Suite, seed: u64) {
    s.run("hit-even", |s| {
        let mut bad = None;
        'outer: for ell in 8..=12u32 {
            let half = 1i64 << (ell - 1);
            for x in (1..256u64).step_by(2) {
                for j in 1..=half / 4 {
                    let eps = rat(j, half);
                    if hit_prob_enumerate(x, ell, &eps)? != &eps * rat(2, 1) {
                        bad = Some((ell, x, j));
                        break 'outer;
                    }
                }
            }
        }
        s.add("hit-even", bad.is_none(), format!("exactly 2 eps for odd x < 2^8, ell 8..=12; first failure {bad:?}"));
        Ok(())
    });
    s.run("hit-eps", |s| {
        let mut bad = None;
        'outer: for ell in 8..=12u32 {
            let full = 1i64 << ell;
            for x in (1..256u64).step_by(2) {
                // multiples of 2^-ell and midpoints between them, up to 1/2
                for j in 1..=full {
                    let eps = rat(j, 2 * full);
                    if hit_prob_enumerate(x, ell, &eps)? > &eps * rat(4, 1) {
                        bad = Some((ell, x, j));
                        break 'outer;
                    }
                }
            }
        }
        s.add("hit-eps", bad.is_none(), format!("at most 4 eps; first failure {bad:?}"));
        Ok(())
    });
    s.run("near-zero-factor", |s| {
        let mut checked = 0;
        let mut bad = None;
        for ell in 1..=12u32 {
            for j in 1..=ell {
                let m = 1u64 << j;
                let r = near_zero_factor_check(ell, m, m.min(256))?;
                checked += r.checked;
                if let Some(v) = r.violations.first() {
                    bad = Some((ell, m, *v));
                }
            }
        }
        s.add("near-zero-factor", bad.is_none(), format!("{checked} near-zero pairs, n <= min(m, 2^8); first violation {bad:?}"));
        Ok(())
    });
    s.run("avg-cost", |s| {
        let r = avg_cost_check(1 << 10, 64, 11, 400, seed)?;
        let ok = !r.points.is_empty() && r.c_fit > 0.0 && r.c_min > 0.0;
        s.add("avg-cost", ok, format!("{} multipliers with mu < n: fit {:.3}, min {:.3}", r.points.len(), r.c_fit, r.c_min));
        Ok(())
    });
}

fn scratch_dir(seed: u64) -> PathBuf {
    std::env::temp_dir().join(format!("kindep-verify-{}-{seed}", std::process::id()))
}

/// Caches already present in `dir`, by file name.
fn existing_caches(dir: &Path) -> Vec<PathBuf> {
    let Ok(entries) = fs::read_dir(dir) else { return Vec::new() };
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("calibration_t") && n.ends_with(".json")))
        .collect();
    out.sort();
    out
}

fn calibration_checks(s: &mut Suite, config: &ExperimentConfig) {
    s.run("calibration-cache", |s| {
        let dir = scratch_dir(config.seed);
        let t = 1u64 << 12;
        let result = (|| {
            let cache = calibrate_schedule(t, 200, config.seed, Some(&dir))?;
            let path = CalibrationCache::path_for(&dir, t);
            let reloaded = CalibrationCache::load(&path)?;
            s.add("calibration-cache", reloaded == cache, format!("round trip of {}", path.display()));
            let mut corrupted = cache.clone();
            let p = &mut corrupted.levels[0].p_minus;
            *p = if *p < 0.5 { *p + 1e-9 } else { *p - 1e-9 };
            corrupted.save(&path)?;
            let err = CalibrationCache::load(&path);
            let detail = match &err {
                Err(e) => format!("rejected: {e}"),
                Ok(_) => "corrupted cache accepted".into(),
            };
            s.control("calibration-corrupted", !matches!(err, Err(Error::CalibrationMismatch(_))), detail);
            Ok(())
        })();
        // best effort; a leftover scratch directory is harmless
        let _ = fs::remove_dir_all(&dir);
        result
    });
    if let Some(dir) = &config.cache_dir {
        for path in existing_caches(dir) {
            let name = format!("cache-{}", path.file_name().and_then(|n| n.to_str()).unwrap_or("?"));
            match CalibrationCache::load(&path) {
                Ok(c) => s.add(&name, true, format!("t = {}, hash {}", c.t, c.schedule_hash)),
                Err(e) => s.add(&name, false, e.to_string()),
            }
        }
    }
}

/// Runs every check. Individual failures are collected, not returned as errors.
pub fn verify_suite(config: &ExperimentConfig) -> VerifyReport {
    let mut s = Suite { checks: Vec::new() };
    exact_balances(&mut s);
    moment_oracles(&mut s);
    pk_tests(&mut s, config.seed);
    minwise_checks(&mut s, config.seed);
    multiply_shift_checks(&mut s, config.seed);
    calibration_checks(&mut s, config);
    VerifyReport { checks: s.checks }
}
