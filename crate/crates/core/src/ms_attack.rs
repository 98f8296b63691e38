//! Structured bad inputs for multiply-shift hashing, the near-zero multiple
//! `mu` of a multiplier, exact hit-probability enumeration, and the
//! linear-probing and min-probability experiments.
//!
//! Circular-norm comparisons are integer comparisons on `ell`-bit residues.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{MultShiftFn, RandomOracle};
use crate::probing::ProbeTable;
use crate::rational::{rat, Rational};
use crate::rng::{stream_rng, trial_stream};
use crate::stats::MeanCi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    Interval,
    Arithmetic,
    EpsFraction,
}

/// Keys `alpha * i + beta` for `i < n`, optionally an `eps`-fraction of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BadInputSpec {
    pub n: u64,
    pub alpha: u64,
    pub beta: u64,
    pub eps: f64,
    pub mode: InputMode,
}

impl BadInputSpec {
    pub fn interval(n: u64) -> Self {
        Self { n, alpha: 1, beta: 0, eps: 1.0, mode: InputMode::Interval }
    }

    pub fn arithmetic(n: u64, alpha: u64, beta: u64) -> Self {
        Self { n, alpha, beta, eps: 1.0, mode: InputMode::Arithmetic }
    }

    pub fn eps_fraction(n: u64, eps: f64) -> Self {
        Self { n, alpha: 1, beta: 0, eps, mode: InputMode::EpsFraction }
    }

    /// Number of keys generated.
    pub fn key_count(&self) -> u64 {
        match self.mode {
            InputMode::EpsFraction => (self.eps * self.n as f64).round() as u64,
            _ => self.n,
        }
    }

    /// An `eps`-fraction input only stays bad for `eps >= 2^(ell_out - ell)`.
    pub fn check_for(&self, ell: u32, ell_out: u32) -> Result<()> {
        if self.mode == InputMode::EpsFraction && self.eps < (ell_out as f64 - ell as f64).exp2() {
            return Err(Error::InvalidParameter(format!("eps = {} below 2^(ell_out - ell)", self.eps)));
        }
        Ok(())
    }
}

/// Generates the keys modulo `2^ell`. Only the `eps`-fraction mode uses `rng`.
pub fn gen_bad_input<R: Rng + ?Sized>(spec: &BadInputSpec, ell: u32, rng: &mut R) -> Result<Vec<u64>> {
    if !(spec.eps > 0.0 && spec.eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {} must lie in (0, 1]", spec.eps)));
    }
    if spec.n == 0 || ell == 0 || ell > 64 {
        return Err(Error::InvalidParameter("need n >= 1 and 1 <= ell <= 64".into()));
    }
    let mask = if ell == 64 { u64::MAX } else { (1u64 << ell) - 1 };
    let key = |i: u64| spec.alpha.wrapping_mul(i).wrapping_add(spec.beta) & mask;
    match spec.mode {
        InputMode::Interval | InputMode::Arithmetic => Ok((0..spec.n).map(key).collect()),
        InputMode::EpsFraction => {
            let keep = spec.key_count();
            if keep == 0 {
                return Err(Error::InvalidParameter("eps * n rounds to zero keys".into()));
            }
            let mut idx: Vec<u64> = sample_indices(rng, spec.n as usize, keep as usize).into_iter().map(|i| i as u64).collect();
            idx.sort_unstable();
            Ok(idx.into_iter().map(key).collect())
        }
    }
}

/// `||a x / 2^ell|| <= 1 / (2m)`, exactly.
#[inline]
pub fn near_zero(a: u64, x: u64, ell: u32, m: u64) -> bool {
    let r = (a as u128 * x as u128) & ((1u128 << ell) - 1);
    let dist = r.min((1u128 << ell) - r);
    dist * 2 * m as u128 <= 1u128 << ell
}

/// `||a x / 2^ell|| <= 1 / (2 p m)`, exactly.
#[inline]
fn near_zero_scaled(a: u64, x: u64, ell: u32, m: u64, p: u64) -> bool {
    let r = (a as u128 * x as u128) & ((1u128 << ell) - 1);
    let dist = r.min((1u128 << ell) - r);
    dist * 2 * (p as u128) * m as u128 <= 1u128 << ell
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MuResult {
    pub a: u64,
    /// Smallest positive `x < limit` near zero; `limit` when none is.
    pub mu: u64,
    pub found: bool,
}

/// Linear scan for the smallest positive `x < limit` with `a x` within
/// `1/(2m)` of zero on the circle.
pub fn find_mu(a: u64, ell: u32, m: u64, limit: u64) -> Result<MuResult> {
    if a.is_multiple_of(2) || !m.is_power_of_two() || ell == 0 || ell > 64 {
        return Err(Error::InvalidParameter(format!("need odd a, power-of-two m, 1 <= ell <= 64 (a = {a}, m = {m})")));
    }
    if ell < 64 && limit > 1u64 << ell {
        return Err(Error::InvalidParameter(format!("limit {limit} exceeds 2^{ell}")));
    }
    match (1..limit).find(|&x| near_zero(a, x, ell, m)) {
        Some(mu) => Ok(MuResult { a, mu, found: true }),
        None => Ok(MuResult { a, mu: limit, found: false }),
    }
}

/// Exact fraction of odd `a < 2^ell` with `||a x / 2^ell|| <= eps`.
pub fn hit_prob_enumerate(x: u64, ell: u32, eps: &Rational) -> Result<Rational> {
    if x.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("x = {x} must be odd")));
    }
    if ell == 0 || ell > 20 {
        return Err(Error::InvalidParameter(format!("ell = {ell} outside 1..=20")));
    }
    if eps.numer().sign() == num_bigint::Sign::Minus {
        return Err(Error::InvalidParameter("eps must be non-negative".into()));
    }
    let full = 1u64 << ell;
    // dist / 2^ell <= eps  <=>  dist <= floor(eps 2^ell)
    let scaled = (eps * Rational::from_integer(full.into())).floor().to_integer();
    let limit: u64 = scaled.try_into().unwrap_or(u64::MAX);
    let hits = (1..full).step_by(2).filter(|&a| {
        let r = a.wrapping_mul(x) & (full - 1);
        r.min(full - r) <= limit
    });
    Ok(rat(hits.count() as i64, (full / 2) as i64))
}

fn smallest_prime_factors(limit: u64) -> Vec<u64> {
    let mut spf: Vec<u64> = (0..=limit).collect();
    let mut p = 2;
    while p * p <= limit {
        if spf[p as usize] == p {
            for q in (p * p..=limit).step_by(p as usize) {
                if spf[q as usize] == q {
                    spf[q as usize] = p;
                }
            }
        }
        p += 1;
    }
    spf
}

fn prime_factors(mut x: u64, spf: &[u64]) -> Vec<u64> {
    let mut out = Vec::new();
    while x > 1 {
        let p = spf[x as usize];
        if out.last() != Some(&p) {
            out.push(p);
        }
        x /= p;
    }
    out
}

/// Outcome of checking, for every odd `a` and every near-zero `x < n`, that
/// `x` differs from `mu_a` exactly when some prime `p | x` has `x/p` within
/// `1/(2pm)` of zero. The equivalence needs `n <= m`; beyond that a near-zero
/// `x` need not be a multiple of `mu_a`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearZeroFactorReport {
    pub ell: u32,
    pub m: u64,
    pub n: u64,
    pub checked: u64,
    /// `(a, x)` pairs where the equivalence fails.
    pub violations: Vec<(u64, u64)>,
}

pub fn near_zero_factor_check(ell: u32, m: u64, n: u64) -> Result<NearZeroFactorReport> {
    if ell == 0 || ell > 16 || !m.is_power_of_two() || n > m || m > 1 << ell {
        return Err(Error::InvalidParameter(format!(
            "near-zero factor check needs ell <= 16 and n <= m <= 2^ell, m a power of two (ell = {ell}, m = {m}, n = {n})"
        )));
    }
    let spf = smallest_prime_factors(n.max(2));
    let mut report = NearZeroFactorReport { ell, m, n, checked: 0, violations: Vec::new() };
    for a in (1..1u64 << ell).step_by(2) {
        let mut mu = None;
        for x in 1..n {
            if !near_zero(a, x, ell, m) {
                continue;
            }
            let is_mu = mu.is_none();
            if is_mu {
                mu = Some(x);
            }
            let has_factor = prime_factors(x, &spf).into_iter().any(|p| near_zero_scaled(a, x / p, ell, m, p));
            report.checked += 1;
            if has_factor == is_mu {
                report.violations.push((a, x));
            }
        }
    }
    Ok(report)
}

/// One linear-probing run: average insertion cost of `keys` hashed by `h`.
pub fn average_insert_cost(keys: &[u64], h: &MultShiftFn) -> Result<f64> {
    let mut table = ProbeTable::new(1u64 << h.ell_out())?;
    for &k in keys {
        table.insert(k, h.eval(k))?;
    }
    Ok(table.total_insert_probes() as f64 / keys.len() as f64)
}

/// Same keys under a truly random function into `t` slots.
pub fn random_insert_cost(keys: &[u64], t: u64, seed: u64) -> Result<f64> {
    let mut oracle = RandomOracle::new(seed, t)?;
    let mut table = ProbeTable::new(t)?;
    for &k in keys {
        table.insert(k, oracle.eval(k))?;
    }
    Ok(table.total_insert_probes() as f64 / keys.len() as f64)
}

/// Average insertion cost against `n / mu_a` for sampled multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgCostReport {
    pub n: u64,
    pub ell: u32,
    pub ell_out: u32,
    /// `(mu, cost)` for multipliers whose `mu < n`.
    pub points: Vec<(u64, f64)>,
    /// Least-squares slope of cost on `n / mu` through the origin.
    pub c_fit: f64,
    /// Smallest `cost * mu / n` observed.
    pub c_min: f64,
}

pub fn avg_cost_check(n: u64, ell: u32, ell_out: u32, samples: usize, seed: u64) -> Result<AvgCostReport> {
    let keys = gen_bad_input(&BadInputSpec::interval(n), ell, &mut stream_rng(seed, 0))?;
    let m = 1u64 << ell_out;
    let points: Vec<(u64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, trial_stream(0xa7c0, n, i));
            let h = MultShiftFn::sample_odd(ell, ell_out, false, &mut rng)?;
            let mu = find_mu(h.a(), ell, m, n)?;
            Ok(if mu.found { Some((mu.mu, average_insert_cost(&keys, &h)?)) } else { None })
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let ratio = |mu: u64| n as f64 / mu as f64;
    let sxx: f64 = points.iter().map(|&(mu, _)| ratio(mu).powi(2)).sum();
    let sxy: f64 = points.iter().map(|&(mu, c)| ratio(mu) * c).sum();
    let c_min = points.iter().map(|&(mu, c)| c / ratio(mu)).fold(f64::INFINITY, f64::min);
    Ok(AvgCostReport { n, ell, ell_out, c_fit: if sxx > 0.0 { sxy / sxx } else { 0.0 }, c_min, points })
}

/// Inverse of odd `x` modulo 2^64.
fn odd_inverse(x: u64) -> u64 {
    let mut inv = x;
    for _ in 0..6 {
        inv = inv.wrapping_mul(2u64.wrapping_sub(x.wrapping_mul(inv)));
    }
    inv
}

/// Odd residues `u < 2^len` with `min(u, 2^len - u) <= 2^len / (2m)`, per side.
fn odd_hits_per_side(len: u32, m: u64) -> u128 {
    let d = (1u128 << len) / (2 * m as u128);
    d.div_ceil(2)
}

/// Exact `Pr[||a x / 2^ell|| <= 1/(2m)]` over uniform odd `a`.
pub fn near_zero_probability(x: u64, ell: u32, m: u64) -> f64 {
    let s = x.trailing_zeros();
    if x == 0 || s >= ell {
        return 1.0;
    }
    let len = ell - s;
    (2 * odd_hits_per_side(len, m)) as f64 / (1u128 << (len - 1)) as f64
}

/// Mixture proposal over odd multipliers. With probability `1 - lambda` it
/// draws a uniform odd `a`. Otherwise it draws `x < limit` with weight `1/x`
/// and then `a` uniformly among odd multipliers with `a x` within `1/(2m)` of
/// zero. [`Self::sample`] returns the likelihood ratio against uniform odd `a`,
/// which is at most `1 / (1 - lambda)`.
#[derive(Debug, Clone)]
pub struct MultiplierProposal {
    ell: u32,
    m: u64,
    lambda: f64,
    /// `(x, cumulative probability, pick probability / hit probability)`.
    support: Vec<(u64, f64, f64)>,
}

impl MultiplierProposal {
    pub fn new(ell: u32, m: u64, limit: u64, lambda: f64) -> Result<Self> {
        if !(2..=64).contains(&ell) || !m.is_power_of_two() || m < 2 || !(0.0..1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("bad proposal: ell = {ell}, m = {m}, lambda = {lambda}")));
        }
        let raw: Vec<(u64, f64)> =
            (1..limit).filter(|&x| x.trailing_zeros() < ell && near_zero_probability(x, ell, m) > 0.0).map(|x| (x, 1.0 / x as f64)).collect();
        let total: f64 = raw.iter().map(|r| r.1).sum();
        let mut acc = 0.0;
        let support = raw
            .into_iter()
            .map(|(x, w)| {
                acc += w / total;
                (x, acc, w / total / near_zero_probability(x, ell, m))
            })
            .collect();
        Ok(Self { ell, m, lambda, support })
    }

    /// Plain uniform odd multipliers, every weight 1.
    pub fn uniform(ell: u32) -> Self {
        Self { ell, m: 2, lambda: 0.0, support: Vec::new() }
    }

    fn mask(&self) -> u64 {
        if self.ell == 64 {
            u64::MAX
        } else {
            (1u64 << self.ell) - 1
        }
    }

    /// Uniform odd `a` with `a x` near zero.
    fn sample_hit<R: Rng + ?Sized>(&self, x: u64, rng: &mut R) -> u64 {
        let s = x.trailing_zeros();
        let len = self.ell - s;
        let per_side = odd_hits_per_side(len, self.m);
        let j = rng.random_range(0..2 * per_side);
        let modulus = 1u128 << len;
        let u = if j < per_side { 2 * j + 1 } else { modulus - (2 * (j - per_side) + 1) };
        let low = (u * odd_inverse(x >> s) as u128) & (modulus - 1);
        let high = if s == 0 { 0 } else { rng.random::<u64>() << len };
        (low as u64 | high) & self.mask()
    }

    /// `q(a) / p(a)` inverted: the importance weight of `a`.
    pub fn weight(&self, a: u64) -> f64 {
        if self.lambda == 0.0 {
            return 1.0;
        }
        let hits: f64 = self.support.iter().filter(|&&(x, _, _)| near_zero(a, x, self.ell, self.m)).map(|&(_, _, r)| r).sum();
        1.0 / ((1.0 - self.lambda) + self.lambda * hits)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, f64) {
        let a = if self.lambda > 0.0 && !self.support.is_empty() && rng.random::<f64>() < self.lambda {
            let u: f64 = rng.random();
            let i = self.support.partition_point(|&(_, c, _)| c < u).min(self.support.len() - 1);
            self.sample_hit(self.support[i].0, rng)
        } else {
            (rng.random::<u64>() & self.mask()) | 1
        };
        (a, self.weight(a))
    }
}

/// Options of the multiply-shift linear-probing experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsLpOptions {
    pub ell: u32,
    pub ell_out: u32,
    pub trials: usize,
    /// Add a uniform `b`.
    pub with_offset: bool,
    /// Allow even multipliers.
    pub allow_even: bool,
    /// Draw multipliers from [`MultiplierProposal`] and reweight.
    pub importance: bool,
    pub seed: u64,
}

impl MsLpOptions {
    pub fn new(ell: u32, ell_out: u32, trials: usize, seed: u64) -> Self {
        Self { ell, ell_out, trials, with_offset: false, allow_even: false, importance: false, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsLpReport {
    pub spec: BadInputSpec,
    pub options: MsLpOptions,
    pub keys: u64,
    /// Average insertion cost per multiplier.
    pub costs: Vec<f64>,
    /// Importance weight per multiplier, all 1 without importance sampling.
    pub weights: Vec<f64>,
    /// Average insertion cost under a truly random function, per trial.
    pub baseline: Vec<f64>,
    /// Estimate of the expected average insertion cost, from `weight * cost`.
    pub cost: MeanCi,
    pub baseline_cost: MeanCi,
}

/// Inserts the bad keys under sampled multipliers and, paired, under a truly
/// random function.
pub fn ms_lp_experiment(spec: &BadInputSpec, options: MsLpOptions) -> Result<MsLpReport> {
    let MsLpOptions { ell, ell_out, trials, .. } = options;
    if ell_out >= ell {
        return Err(Error::InvalidParameter(format!(
            "ell_out = {ell_out} must be below ell = {ell}: with equal widths the multiplier permutes the keys"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    if options.importance && options.allow_even {
        return Err(Error::InvalidParameter("importance sampling covers odd multipliers only".into()));
    }
    spec.check_for(ell, ell_out)?;
    let t = 1u64 << ell_out;
    if spec.key_count() * 3 > t * 2 {
        return Err(Error::InvalidParameter(format!("{} keys exceed load 2/3 of {t} slots", spec.key_count())));
    }
    let proposal = if options.importance { MultiplierProposal::new(ell, t, spec.n, 0.5)? } else { MultiplierProposal::uniform(ell) };
    let tag = 0x5a11 ^ u64::from(options.with_offset) << 8 ^ u64::from(options.allow_even) << 9 ^ u64::from(options.importance) << 10;
    let mask = if ell == 64 { u64::MAX } else { (1u64 << ell) - 1 };
    let rows: Vec<(f64, f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(options.seed, trial_stream(tag, spec.n, i));
            let keys = gen_bad_input(spec, ell, &mut rng)?;
            let (a, w) = if options.allow_even { (rng.random::<u64>() & mask, 1.0) } else { proposal.sample(&mut rng) };
            let b = if options.with_offset { rng.random::<u64>() & mask } else { 0 };
            let h = MultShiftFn::new(ell, ell_out, a, b)?;
            Ok((average_insert_cost(&keys, &h)?, w, random_insert_cost(&keys, t, rng.random())?))
        })
        .collect::<Result<_>>()?;
    let costs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let weights: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let baseline: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let weighted: Vec<f64> = rows.iter().map(|r| r.0 * r.1).collect();
    Ok(MsLpReport {
        spec: *spec,
        options,
        keys: spec.key_count(),
        cost: MeanCi::from_samples(&weighted, 0.99),
        baseline_cost: MeanCi::from_samples(&baseline, 0.99),
        costs,
        weights,
        baseline,
    })
}

/// Exact probability, over a uniform odd query `q >= n`, that
/// `(a q + b) mod 2^ell` is below every `(a x + b) mod 2^ell`, `x < n`.
pub fn query_min_probability(a: u64, b: u64, n: u64, ell: u32) -> f64 {
    let full = 1u128 << ell;
    let mask = full - 1;
    let h = |x: u64| (a as u128 * x as u128 + b as u128) & mask;
    let min = (0..n).map(h).min().unwrap_or(full);
    // a odd: a q + b ranges over the residues of parity (b + 1) mod 2 as q ranges over odd q
    let parity = (b as u128 + 1) & 1;
    let below = (min + 1 - parity) / 2;
    // odd q < n are keys, not queries
    let key_hits = (1..n).step_by(2).filter(|&q| h(q) < min).count() as u128;
    let odd_queries = full / 2 - (n as u128) / 2;
    (below - key_hits) as f64 / odd_queries as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsMinwiseReport {
    pub n: u64,
    pub ell: u32,
    pub trials: usize,
    /// Per multiplier, the exact query-min probability times `n + 1`.
    pub ratios: Vec<f64>,
    pub weights: Vec<f64>,
    /// Estimate of the expected ratio, from `weight * ratio`.
    pub ratio: MeanCi,
    /// Truly random control per trial: `(n + 1) * Pr[h(q) < min]` given the
    /// sampled key values, which has mean exactly 1.
    pub control_ratios: Vec<f64>,
    pub control: MeanCi,
}

/// Min-probability of an odd query against the keys `[n]` under
/// `h(x) = (a x + b) mod 2^ell` with odd `a` and `b`, relative to the fair
/// `1/(n+1)`, plus a truly random control.
pub fn ms_minwise_experiment(
    n: u64,
    ell: u32,
    trials: usize,
    control_trials: usize,
    importance: bool,
    seed: u64,
) -> Result<MsMinwiseReport> {
    if !n.is_power_of_two() || ell <= n.trailing_zeros() || ell > 64 {
        return Err(Error::InvalidParameter(format!("need n a power of two and log2 n < ell <= 64 (n = {n}, ell = {ell})")));
    }
    let mask = if ell == 64 { u64::MAX } else { (1u64 << ell) - 1 };
    let proposal = if importance { MultiplierProposal::new(ell, n.max(2), n, 0.5)? } else { MultiplierProposal::uniform(ell) };
    let tag = 0x3117 ^ u64::from(importance) << 8;
    let rows: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, trial_stream(tag, n, i));
            let (a, w) = proposal.sample(&mut rng);
            let b = (rng.random::<u64>() & mask) | 1;
            (query_min_probability(a, b, n, ell) * (n + 1) as f64, w)
        })
        .collect();
    let control_ratios: Vec<f64> = (0..control_trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, trial_stream(0x3118, n, i));
            let min = (0..n).map(|_| rng.random::<u64>()).min().unwrap_or(u64::MAX);
            (n + 1) as f64 * (min as f64 / 2f64.powi(64))
        })
        .collect();
    let weighted: Vec<f64> = rows.iter().map(|r| r.0 * r.1).collect();
    Ok(MsMinwiseReport {
        n,
        ell,
        trials,
        ratio: MeanCi::from_samples(&weighted, 0.99),
        ratios: rows.iter().map(|r| r.0).collect(),
        weights: rows.iter().map(|r| r.1).collect(),
        control: MeanCi::from_samples(&control_ratios, 0.99),
        control_ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_two_sample;

    #[test]
    fn bad_inputs() {
        let mut rng = stream_rng(1, 0);
        assert_eq!(gen_bad_input(&BadInputSpec::interval(4), 64, &mut rng).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(gen_bad_input(&BadInputSpec::arithmetic(3, 2, 5), 64, &mut rng).unwrap(), vec![5, 7, 9]);
        assert_eq!(gen_bad_input(&BadInputSpec::arithmetic(3, 6, 0), 4, &mut rng).unwrap(), vec![0, 6, 12 & 15]);
        let spec = BadInputSpec::eps_fraction(8, 0.5);
        let a = gen_bad_input(&spec, 64, &mut stream_rng(9, 9)).unwrap();
        let b = gen_bad_input(&spec, 64, &mut stream_rng(9, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|&k| k < 8));
        assert!(gen_bad_input(&BadInputSpec::eps_fraction(8, 0.0), 64, &mut rng).is_err());
        assert!(BadInputSpec::eps_fraction(1024, 0.001).check_for(20, 11).is_err());
        assert!(BadInputSpec::eps_fraction(1024, 0.01).check_for(20, 11).is_ok());
    }

    #[test]
    fn mu_examples() {
        assert_eq!(find_mu(1, 8, 16, 256).unwrap().mu, 1);
        assert_eq!(find_mu(255, 8, 16, 256).unwrap().mu, 1);
        assert_eq!(find_mu(129, 8, 16, 256).unwrap().mu, 2);
        assert!(!find_mu(129, 8, 16, 2).unwrap().found);
        assert!(find_mu(2, 8, 16, 256).is_err());
    }

    #[test]
    fn mu_matches_float_free_brute_force() {
        // reference via exact rationals
        for a in (1u64..256).step_by(2) {
            let m = 8u64;
            let expect = (1..256u64).find(|&x| {
                let r = (a * x) % 256;
                rat(r.min(256 - r) as i64, 256) <= rat(1, 2 * m as i64)
            });
            let got = find_mu(a, 8, m, 256).unwrap();
            assert_eq!(got.found.then_some(got.mu), expect, "a = {a}");
        }
    }

    #[test]
    fn hit_probability_examples() {
        for x in [1u64, 3, 77, 255] {
            assert_eq!(hit_prob_enumerate(x, 8, &rat(1, 16)).unwrap(), rat(1, 8));
            assert_eq!(hit_prob_enumerate(x, 8, &rat(1, 256)).unwrap(), rat(1, 64));
            assert_eq!(hit_prob_enumerate(x, 8, &rat(1, 2)).unwrap(), rat(1, 1));
        }
        assert!(hit_prob_enumerate(4, 8, &rat(1, 16)).is_err());
    }

    #[test]
    fn near_zero_factor_equivalence_on_small_cases() {
        for ell in 2..=9u32 {
            for j in 1..=ell {
                let m = 1u64 << j;
                let r = near_zero_factor_check(ell, m, m.min(256)).unwrap();
                assert!(r.violations.is_empty(), "ell {ell} m {m}: {:?}", &r.violations[..1]);
            }
        }
        assert!(near_zero_factor_check(10, 16, 64).is_err());
    }

    #[test]
    fn query_probability_matches_enumeration() {
        let (ell, n) = (10u32, 8u64);
        let mut rng = stream_rng(2, 0);
        for _ in 0..20 {
            let a = rng.random_range(0..1u64 << ell) | 1;
            let b = rng.random_range(0..1u64 << ell) | 1;
            let h = |x: u64| (a * x + b) % (1 << ell);
            let min = (0..n).map(h).min().unwrap();
            let queries: Vec<u64> = (n..1 << ell).filter(|q| q % 2 == 1).collect();
            let hits = queries.iter().filter(|&&q| h(q) < min).count();
            let expect = hits as f64 / queries.len() as f64;
            assert!((query_min_probability(a, b, n, ell) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_multiplier_is_very_biased() {
        let (n, ell) = (64u64, 32u32);
        let mut rng = stream_rng(3, 0);
        let ratio: f64 = (0..2000)
            .map(|_| query_min_probability(1, rng.random_range(0..1u64 << ell) | 1, n, ell) * (n + 1) as f64)
            .sum::<f64>()
            / 2000.0;
        assert!(ratio > n as f64 / 4.0, "{ratio}");
    }

    #[test]
    fn ms_lp_rejects_full_width_output() {
        let o = MsLpOptions::new(20, 20, 1, 1);
        let err = ms_lp_experiment(&BadInputSpec::interval(16), o).unwrap_err();
        assert!(err.to_string().contains("permutes"));
    }

    #[test]
    fn ms_lp_beats_random_and_ignores_offset_and_stride() {
        let n = 1u64 << 12;
        let base = MsLpOptions::new(64, 13, 300, 4);
        let plain = ms_lp_experiment(&BadInputSpec::interval(n), base).unwrap();
        let weighted = ms_lp_experiment(&BadInputSpec::interval(n), MsLpOptions { importance: true, ..base }).unwrap();
        assert!(weighted.cost.lo > plain.baseline_cost.hi, "{:?} vs {:?}", weighted.cost, plain.baseline_cost);
        let shifted = ms_lp_experiment(&BadInputSpec::interval(n), MsLpOptions { with_offset: true, seed: 5, ..base }).unwrap();
        assert!(ks_two_sample(&plain.costs, &shifted.costs).1 > 1e-3);
        let strided = ms_lp_experiment(&BadInputSpec::arithmetic(n, 12345, 777), MsLpOptions { seed: 6, ..base }).unwrap();
        assert!(ks_two_sample(&plain.costs, &strided.costs).1 > 1e-3);
    }

    #[test]
    fn proposal_is_unbiased_against_enumeration() {
        let (ell, m, n) = (12u32, 128u64, 64u64);
        let keys: Vec<u64> = (0..n).collect();
        let cost = |a: u64| average_insert_cost(&keys, &MultShiftFn::basic(ell, 7, a).unwrap()).unwrap();
        let exact = (1u64..1 << ell).step_by(2).map(cost).sum::<f64>() / (1 << (ell - 1)) as f64;
        let proposal = MultiplierProposal::new(ell, m, n, 0.5).unwrap();
        let mut rng = stream_rng(10, 0);
        let (mut wsum, mut samples) = (0.0, Vec::new());
        for _ in 0..40_000 {
            let (a, w) = proposal.sample(&mut rng);
            assert!(a % 2 == 1 && a < 1 << ell && w <= 2.0 + 1e-12);
            wsum += w;
            samples.push(w * cost(a));
        }
        let ci = MeanCi::from_samples(&samples, 0.999);
        assert!(ci.contains(exact), "{ci:?} vs {exact}");
        assert!((wsum / 40_000.0 - 1.0).abs() < 0.02);
        // the conditioned draw really lands near zero
        for x in [1u64, 6, 40, 63] {
            for _ in 0..50 {
                assert!(near_zero(proposal.sample_hit(x, &mut rng), x, ell, m));
            }
        }
        let p: f64 = (1u64..1 << ell).step_by(2).filter(|&a| near_zero(a, 12, ell, m)).count() as f64 / 2048.0;
        assert_eq!(near_zero_probability(12, ell, m), p);
    }

    #[test]
    fn cost_scales_with_n_over_mu() {
        let r = avg_cost_check(1 << 10, 64, 11, 400, 7).unwrap();
        assert!(!r.points.is_empty());
        assert!(r.c_fit > 0.0 && r.c_min > 0.0, "{} {}", r.c_fit, r.c_min);
    }

    #[test]
    fn minwise_control_is_fair() {
        let r = ms_minwise_experiment(64, 64, 200, 20_000, true, 8).unwrap();
        assert!(r.control.contains(1.0), "{:?}", r.control);
        assert!(r.ratio.mean > 1.0);
    }
}
