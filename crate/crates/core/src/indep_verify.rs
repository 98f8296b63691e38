//! Exact and statistical checks of k-independence.

use num_bigint::BigInt;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adv_lp::SplitDistribution;
use crate::adv_lp::SplitStrategy;
use crate::error::{Error, Result};
use crate::rational::{falling, rat, to_f64, Rational};
use crate::stats::{chi_square_gof, chi_square_sf};

/// Default per-test significance.
pub const SIGNIFICANCE: f64 = 0.001;

/// Largest node load handled by exact enumeration.
pub const EXACT_BUDGET: u64 = 64;

/// Per-test significance after a Bonferroni correction over `tests` tests.
pub fn bonferroni(alpha: f64, tests: usize) -> f64 {
    alpha / tests.max(1) as f64
}

/// Fourth central moment of `Binomial(2m, 1/2)`: `m (3m - 1) / 4`, written in
/// terms of `2m` as `2m (3 * 2m - 2) / 16`.
pub fn random_f4(two_m: u64) -> Rational {
    rat((two_m * (3 * two_m).saturating_sub(2)) as i64, 16)
}

/// `(24 m^2 - 10 m) / 16`: the fourth moment with the pair term counted over
/// ordered pairs. Kept only to compare against; it disagrees with
/// [`random_f4`] for every `2m >= 2`.
pub fn f4_double_counted(two_m: u64) -> Rational {
    let m = rat(two_m as i64, 2);
    (rat(24, 1) * &m * &m - rat(10, 1) * m) / rat(16, 1)
}

/// Exact moment summary of a split law at one node load.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub two_m: u64,
    pub f2: Rational,
    pub f4: Rational,
    pub p2: Rational,
    pub p3: Rational,
    pub p4: Rational,
}

impl MomentReport {
    pub fn f2_reference(&self) -> Rational {
        rat(self.two_m as i64, 4)
    }

    pub fn f4_reference(&self) -> Rational {
        random_f4(self.two_m)
    }

    /// Deviations of F2, F4, p2, p3, p4 from the truly random values.
    pub fn deviations(&self) -> [Rational; 5] {
        [
            &self.f2 - self.f2_reference(),
            &self.f4 - self.f4_reference(),
            &self.p2 - rat(1, 4),
            &self.p3 - rat(1, 8),
            &self.p4 - rat(1, 16),
        ]
    }

    /// F2, p2 and p3 match the truly random split. A `p_k` with `k > 2m` is
    /// vacuous and not compared.
    pub fn is_three_independent(&self) -> bool {
        let d = self.deviations();
        d[0].is_zero() && (self.two_m < 2 || d[2].is_zero()) && (self.two_m < 3 || d[3].is_zero())
    }

    pub fn summary(&self) -> MomentSummary {
        MomentSummary {
            two_m: self.two_m,
            f2: to_f64(&self.f2),
            f4: to_f64(&self.f4),
            p2: to_f64(&self.p2),
            p3: to_f64(&self.p3),
            p4: to_f64(&self.p4),
        }
    }
}

/// Floating-point view of a [`MomentReport`] for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub two_m: u64,
    pub f2: f64,
    pub f4: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
}

/// Exact F2, F4, p2, p3, p4 of `dist` at a node with `two_m` keys.
pub fn exact_moments<D: SplitDistribution + ?Sized>(dist: &D, two_m: u64) -> Result<MomentReport> {
    if two_m > EXACT_BUDGET {
        return Err(Error::BudgetExceeded { two_m, limit: EXACT_BUDGET });
    }
    let law = dist.load_law(two_m)?;
    Ok(MomentReport {
        two_m,
        f2: law.central_moment(2),
        f4: law.central_moment(4),
        p2: law.p_k(2),
        p3: law.p_k(3),
        p4: law.p_k(4),
    })
}

/// The part of F4 not carried by p4: `F4 - (2m)^(4) p4`. For a split law it
/// depends only on `2m`, p2 and p3.
pub fn f4_remainder(report: &MomentReport) -> Rational {
    &report.f4 - Rational::from_integer(falling(report.two_m, 4)) * &report.p4
}

/// Predicts p4 of a 3-independent law from its F4, using the remainder of a
/// truly random split at the same load (same p2 and p3).
pub fn predict_p4_from_f4(two_m: u64, f4: &Rational, random_f4_value: &Rational) -> Result<Rational> {
    let quads = falling(two_m, 4);
    if quads == BigInt::zero() {
        return Err(Error::InvalidParameter(format!("p4 needs 2m >= 4, got {two_m}")));
    }
    let quads = Rational::from_integer(quads);
    let remainder = random_f4_value - &quads * rat(1, 16);
    Ok((f4 - remainder) / quads)
}

/// Outcome of one independence test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndepTestResult {
    pub k: usize,
    pub samples: u64,
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub significance: f64,
    pub passed: bool,
    /// Frequency of the all-left pattern, when the test is over left/right bits.
    pub all_left: Option<f64>,
    pub warnings: Vec<String>,
}

fn finish(k: usize, samples: u64, (statistic, df, p_value): (f64, f64, f64), significance: f64) -> IndepTestResult {
    IndepTestResult {
        k,
        samples,
        statistic,
        df,
        p_value,
        significance,
        passed: p_value >= significance,
        all_left: None,
        warnings: Vec::new(),
    }
}

/// Chi-square test that the joint cells of `k` keys are uniform over
/// `cells^k` patterns. `sample` returns the cell of each key.
pub fn joint_cell_test<R, F>(mut sample: F, k: usize, cells: u64, trials: u64, significance: f64, rng: &mut R) -> IndepTestResult
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Vec<u64>,
{
    let patterns = cells.pow(k as u32) as usize;
    let mut observed = vec![0u64; patterns];
    for _ in 0..trials {
        let cell = sample(rng);
        debug_assert_eq!(cell.len(), k);
        let idx = cell.iter().fold(0u64, |acc, &c| acc * cells + c.min(cells - 1));
        observed[idx as usize] += 1;
    }
    let mut res = finish(k, trials, chi_square_gof(&observed, &vec![1.0 / patterns as f64; patterns]), significance);
    if (trials as f64) < 5.0 * patterns as f64 {
        res.warnings.push(format!("expected count below 5 per pattern ({trials} trials, {patterns} patterns)"));
    }
    res
}

/// `k` keys, each going left or right: chi-square over the `2^k` patterns plus
/// the all-left frequency (the estimate of p_k). `target_deviation` is the
/// smallest deviation of p_k the caller needs to see; fewer than
/// `100 * 2^k / deviation^2` trials is flagged as under-powered.
pub fn empirical_pk<R, F>(
    mut sample_left: F,
    k: usize,
    trials: u64,
    target_deviation: Option<f64>,
    significance: f64,
    rng: &mut R,
) -> IndepTestResult
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Vec<bool>,
{
    let mut all_left = 0u64;
    let mut res = joint_cell_test(
        |r| {
            let bits = sample_left(r);
            if bits.iter().all(|&b| b) {
                all_left += 1;
            }
            bits.iter().map(|&b| u64::from(!b)).collect()
        },
        k,
        2,
        trials,
        significance,
        rng,
    );
    res.all_left = Some(all_left as f64 / trials as f64);
    if let Some(dev) = target_deviation {
        let needed = 100.0 * (1u64 << k) as f64 / (dev * dev);
        if (trials as f64) < needed {
            res.warnings.push(format!("under-powered: {trials} trials, {needed:.0} needed for deviation {dev}"));
        }
    }
    res
}

/// For a node with `two_m` keys of which `left_count` go left, as a uniform
/// subset, reports which of the first `k` keys went left.
pub fn node_left_bits<R: Rng + ?Sized>(left_count: u64, two_m: u64, k: usize, rng: &mut R) -> Vec<bool> {
    // keys 0..k are fixed; sequentially decide membership without replacement
    let mut remaining_left = left_count;
    let mut remaining = two_m;
    (0..k)
        .map(|_| {
            let go_left = rng.random_range(0..remaining) < remaining_left;
            remaining -= 1;
            if go_left {
                remaining_left -= 1;
            }
            go_left
        })
        .collect()
}

/// Sample of a strategy mix given as `(strategy, probability)` in floating point.
pub fn sample_mix_left<R: Rng + ?Sized>(mix: &[(SplitStrategy, f64)], two_m: u64, rng: &mut R) -> u64 {
    let mut u: f64 = rng.random();
    for (s, p) in mix {
        if u < *p {
            return s.sample_left(two_m, rng);
        }
        u -= p;
    }
    mix.last().expect("non-empty mix").0.sample_left(two_m, rng)
}

/// Chi-square of one key's slot histogram against uniform over `t` slots,
/// binned to at most `max_bins` equal bins.
pub fn full_slot_uniformity<R, F>(mut sample_slot: F, t: u64, trials: u64, max_bins: u64, significance: f64, rng: &mut R) -> IndepTestResult
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> u64,
{
    let bins = t.min(max_bins).max(2);
    let mut observed = vec![0u64; bins as usize];
    for _ in 0..trials {
        let s = sample_slot(rng) % t;
        observed[(s as u128 * bins as u128 / t as u128) as usize] += 1;
    }
    // bins are equal when bins divides t; otherwise weight by bin width
    let probs: Vec<f64> = (0..bins)
        .map(|b| {
            let lo = (b as u128 * t as u128).div_ceil(bins as u128);
            let hi = ((b + 1) as u128 * t as u128).div_ceil(bins as u128);
            (hi - lo) as f64 / t as f64
        })
        .collect();
    finish(1, trials, chi_square_gof(&observed, &probs), significance)
}

/// Two-sided test of an observed frequency against an exact probability,
/// as a one-degree-of-freedom chi-square.
pub fn frequency_test(hits: u64, trials: u64, expected: f64, significance: f64) -> IndepTestResult {
    let n = trials as f64;
    let z2 = (hits as f64 - n * expected).powi(2) / (n * expected * (1.0 - expected));
    let mut res = finish(1, trials, (z2, 1.0, chi_square_sf(z2, 1.0)), significance);
    res.all_left = Some(hits as f64 / n);
    res
}
