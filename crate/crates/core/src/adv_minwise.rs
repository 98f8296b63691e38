//! A k-independent distribution over `n` regular keys and one query key in
//! which the query is the minimum too often, plus a generic min-probability
//! estimator.
//!
//! The unit interval is cut into `n/k` subintervals. Regular keys pick a
//! subinterval uniformly. A subinterval with exactly `k` keys is *exact*: its
//! keys are split between its two halves conditioned on the parity of the
//! first-half count, which is even when the query lies inside and a biased coin
//! otherwise. Every other placement is uniform. Hash values are fixed-point
//! fractions with `precision` bits.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{binomial, rat, to_f64, uint, Rational};
use crate::stats::wilson_interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinwiseConfig {
    pub n: u64,
    pub k: u64,
    pub precision: u32,
}

impl MinwiseConfig {
    pub fn new(n: u64, k: u64, precision: u32) -> Result<Self> {
        if k == 0 || k % 2 == 1 {
            return Err(Error::InvalidParameter(format!("k = {k} must be even and positive")));
        }
        if !n.is_multiple_of(k) || n < 2 * k {
            return Err(Error::InvalidParameter(format!("need k | n and n >= 2k, got n = {n}, k = {k}")));
        }
        let need = 2 * (64 - (n - 1).leading_zeros());
        if precision > 64 || precision < need.min(64) {
            return Err(Error::InvalidParameter(format!("precision {precision} outside [{need}, 64] for n = {n}")));
        }
        Ok(Self { n, k, precision })
    }

    /// 64-bit values.
    pub fn standard(n: u64, k: u64) -> Result<Self> {
        Self::new(n, k, 64)
    }

    pub fn intervals(&self) -> u64 {
        self.n / self.k
    }

    fn scale(&self) -> u128 {
        1u128 << self.precision
    }

    /// `[lo, hi)` of subinterval `i` in fixed point. An `hi` of 0 stands for 2^64.
    pub fn interval_bounds(&self, i: u64) -> (u64, u64) {
        let s = self.scale();
        let lo = (i as u128 * s * self.k as u128 / self.n as u128) as u64;
        let hi = ((i + 1) as u128 * s * self.k as u128 / self.n as u128) as u64;
        (lo, hi)
    }

    /// Subinterval containing fixed-point value `v`.
    pub fn interval_of(&self, v: u64) -> u64 {
        // largest i with floor(i s k / n) <= v
        (((v as u128 + 1) * self.n as u128 - 1) / (self.k as u128 * self.scale())) as u64
    }

    /// Numerator and denominator of the coin probability that a non-query exact
    /// interval gets even parity: `(1/2 - k/n) / (1 - k/n)`.
    pub fn even_parity_coin(&self) -> (u64, u64) {
        (self.n - 2 * self.k, 2 * (self.n - self.k))
    }
}

/// Per-subinterval structure of one draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalLayout {
    pub counts: Vec<u32>,
    pub exact: Vec<bool>,
    /// Parity of the first-half count, for exact intervals.
    pub parity: Vec<Option<u8>>,
    /// First-half count, for exact intervals.
    pub first_half: Vec<Option<u32>>,
    pub query_interval: u64,
}

impl IntervalLayout {
    /// Keys in the query's subinterval.
    pub fn query_count(&self) -> u32 {
        self.counts[self.query_interval as usize]
    }

    pub fn query_interval_exact(&self) -> bool {
        self.exact[self.query_interval as usize]
    }

    /// No regular key lies in a subinterval below the query's.
    pub fn lower_intervals_empty(&self) -> bool {
        self.counts[..self.query_interval as usize].iter().all(|&c| c == 0)
    }
}

#[derive(Debug, Clone)]
pub struct MinwiseSample {
    pub values: Vec<u64>,
    pub query: u64,
    pub layout: IntervalLayout,
}

impl MinwiseSample {
    /// Query strictly below every regular key.
    pub fn query_is_min(&self) -> bool {
        self.values.iter().all(|&v| self.query < v)
    }

    /// Query strictly below every regular key of its own subinterval.
    pub fn query_is_min_in_interval(&self, config: &MinwiseConfig) -> bool {
        let qi = self.layout.query_interval;
        self.values.iter().filter(|&&v| config.interval_of(v) == qi).all(|&v| self.query < v)
    }
}

#[inline]
fn uniform_in<R: Rng + ?Sized>(lo: u64, hi: u64, rng: &mut R) -> u64 {
    // hi is exclusive; hi may be 0 meaning 2^64
    if hi == 0 {
        rng.random_range(lo..=u64::MAX)
    } else {
        rng.random_range(lo..hi)
    }
}

/// Splits the `k` keys of an exact interval between the halves: the first
/// `k - 1` uniformly, the last fixing the first-half parity. Returns `true`
/// for "first half" per key.
pub fn parity_halves<R: Rng + ?Sized>(k: usize, parity: u8, rng: &mut R) -> Vec<bool> {
    let mut halves: Vec<bool> = (0..k - 1).map(|_| rng.random()).collect();
    let first = halves.iter().filter(|&&h| h).count() as u8;
    halves.push(first % 2 != parity);
    halves
}

/// One draw of the construction.
pub fn sample_minwise<R: Rng + ?Sized>(config: &MinwiseConfig, rng: &mut R) -> MinwiseSample {
    let intervals = config.intervals() as usize;
    let query = if config.precision == 64 { rng.random::<u64>() } else { rng.random_range(0..(1u64 << config.precision)) };
    let query_interval = config.interval_of(query);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); intervals];
    for key in 0..config.n as usize {
        members[rng.random_range(0..intervals)].push(key);
    }
    let mut values = vec![0u64; config.n as usize];
    let mut layout = IntervalLayout {
        counts: members.iter().map(|m| m.len() as u32).collect(),
        exact: vec![false; intervals],
        parity: vec![None; intervals],
        first_half: vec![None; intervals],
        query_interval,
    };
    let (coin_num, coin_den) = config.even_parity_coin();
    for (i, keys) in members.iter().enumerate() {
        let (lo, hi) = config.interval_bounds(i as u64);
        if keys.len() as u64 != config.k {
            for &key in keys {
                values[key] = uniform_in(lo, hi, rng);
            }
            continue;
        }
        let parity = if i as u64 == query_interval || rng.random_range(0..coin_den) < coin_num { 0 } else { 1 };
        let mid = lo + (hi.wrapping_sub(lo)) / 2;
        let halves = parity_halves(keys.len(), parity, rng);
        for (&key, &first) in keys.iter().zip(&halves) {
            values[key] = if first { uniform_in(lo, mid, rng) } else { uniform_in(mid, hi, rng) };
        }
        layout.exact[i] = true;
        layout.parity[i] = Some(parity);
        layout.first_half[i] = Some(halves.iter().filter(|&&h| h).count() as u32);
    }
    MinwiseSample { values, query, layout }
}

/// Draws only the query's subinterval: the number `z` of regular keys in it,
/// the query and those keys' values. Same law as the corresponding part of
/// [`sample_minwise`].
pub fn sample_query_interval<R: Rng + ?Sized>(config: &MinwiseConfig, rng: &mut R) -> (u32, u64, Vec<u64>) {
    let query = if config.precision == 64 { rng.random::<u64>() } else { rng.random_range(0..(1u64 << config.precision)) };
    let (lo, hi) = config.interval_bounds(config.interval_of(query));
    let z = rand_distr::Distribution::sample(
        &rand_distr::Binomial::new(config.n, 1.0 / config.intervals() as f64).expect("valid binomial"),
        rng,
    ) as u32;
    let values = if z as u64 == config.k {
        let mid = lo + (hi.wrapping_sub(lo)) / 2;
        parity_halves(z as usize, 0, rng)
            .into_iter()
            .map(|first| if first { uniform_in(lo, mid, rng) } else { uniform_in(mid, hi, rng) })
            .collect()
    } else {
        (0..z).map(|_| uniform_in(lo, hi, rng)).collect()
    };
    (z, query, values)
}

/// `(1 + 2^-k) / (k + 1)`: probability that the query is the minimum of an
/// exact interval containing it.
pub fn pmin_exact(k: u64) -> Result<Rational> {
    if k == 0 || k % 2 == 1 {
        return Err(Error::InvalidParameter(format!("k = {k} must be even and positive")));
    }
    let two_k = Rational::from_integer(BigInt::one() << k);
    Ok((Rational::one() + Rational::one() / two_k) / uint(k + 1))
}

/// Exact `Pr[q's interval is exact and every lower interval is empty]`, for
/// equal-width subintervals.
pub fn exact_and_lowest_probability(config: &MinwiseConfig) -> Rational {
    let big_n = config.intervals();
    let (n, k) = (config.n, config.k);
    let choose = Rational::from_integer(binomial(n, k));
    let mut acc = Rational::zero();
    for j in 0..big_n {
        // k keys in interval j, the rest in the N - 1 - j intervals above it
        let above = Rational::new(BigInt::from(big_n - 1 - j), BigInt::from(big_n));
        acc += num_traits::pow(above, (n - k) as usize);
    }
    acc * choose * num_traits::pow(rat(1, big_n as i64), k as usize) / uint(big_n)
}

/// Exact excess of `Pr[q is the minimum]` over the fair `1/(n+1)`.
pub fn predicted_bias(config: &MinwiseConfig) -> Rational {
    let excess = pmin_exact(config.k).expect("validated k") - rat(1, config.k as i64 + 1);
    exact_and_lowest_probability(config) * excess
}

/// Trials needed so that a one-sided test at `alpha` detects the predicted
/// bias with probability `power`.
pub fn required_trials(config: &MinwiseConfig, alpha: f64, power: f64) -> u64 {
    let fair = 1.0 / (config.n + 1) as f64;
    let bias = to_f64(&predicted_bias(config));
    let z = crate::stats::z_one_sided(1.0 - alpha) + crate::stats::z_one_sided(power);
    ((z / bias).powi(2) * (fair + bias) * (1.0 - fair - bias)).ceil() as u64
}

/// `Pr[q is the minimum | interval counts, q's interval]`: zero unless every
/// lower interval is empty; then the in-interval probability, fair `1/(z+1)`
/// for non-exact intervals and `pmin` for exact ones.
pub fn conditional_min_probability(layout: &IntervalLayout, k: u64) -> f64 {
    if !layout.lower_intervals_empty() {
        return 0.0;
    }
    let z = layout.query_count() as u64;
    if z == k {
        to_f64(&pmin_exact(k).expect("even k"))
    } else {
        1.0 / (z + 1) as f64
    }
}

/// Estimate of `Pr[h(q) < min h(S)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinProbEstimate {
    pub trials: u64,
    pub hits: u64,
    pub ties: u64,
    pub estimate: f64,
    /// Wilson interval at 99%.
    pub ci: (f64, f64),
}

impl MinProbEstimate {
    pub fn from_counts(hits: u64, ties: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidParameter("need at least one trial".into()));
        }
        if ties * 1000 > trials {
            return Err(Error::TooManyTies { ties, trials });
        }
        Ok(Self { trials, hits, ties, estimate: hits as f64 / trials as f64, ci: wilson_interval(hits, trials, 0.99) })
    }
}

/// Runs `sample` (query value, regular values) `trials` times and counts how
/// often the query is strictly smallest. A query equal to the minimum is a tie.
pub fn estimate_min_prob<R, F>(mut sample: F, trials: u64, rng: &mut R) -> Result<MinProbEstimate>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> (u64, Vec<u64>),
{
    let (mut hits, mut ties) = (0u64, 0u64);
    for _ in 0..trials {
        let (q, values) = sample(rng);
        let min = values.iter().copied().min().unwrap_or(u64::MAX);
        if q < min {
            hits += 1;
        } else if q == min {
            ties += 1;
        }
    }
    MinProbEstimate::from_counts(hits, ties, trials)
}

/// Cell of a value: `2 * interval + half`.
pub fn half_cell(config: &MinwiseConfig, v: u64) -> u64 {
    let i = config.interval_of(v);
    let (lo, hi) = config.interval_bounds(i);
    let mid = lo + (hi.wrapping_sub(lo)) / 2;
    2 * i + u64::from(v >= mid)
}

/// Chi-square test of the joint (interval, half) cells of `tuple_size` keys
/// against the uniform product law. With `include_query` the tuple is the
/// query plus `tuple_size - 1` regular keys.
pub fn kwise_check_minwise<R: Rng + ?Sized>(
    config: &MinwiseConfig,
    tuple_size: usize,
    include_query: bool,
    trials: u64,
    significance: f64,
    rng: &mut R,
) -> Result<crate::indep_verify::IndepTestResult> {
    if tuple_size == 0 || tuple_size > config.n as usize + usize::from(include_query) {
        return Err(Error::InvalidParameter(format!("tuple size {tuple_size} out of range")));
    }
    let cells = 2 * config.intervals();
    Ok(crate::indep_verify::joint_cell_test(
        |r| {
            let s = sample_minwise(config, r);
            let regular = tuple_size - usize::from(include_query);
            let mut out: Vec<u64> = Vec::with_capacity(tuple_size);
            if include_query {
                out.push(half_cell(config, s.query));
            }
            out.extend(s.values[..regular].iter().map(|&v| half_cell(config, v)));
            out
        },
        tuple_size,
        cells,
        trials,
        significance,
        rng,
    ))
}

/// Exact results of enumerating every discrete outcome of the sampler with
/// `bits`-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct MinwiseOracle {
    /// `Pr[first-half count = x | q's interval exact]`, `x = 0..=k`.
    pub first_half_law: Vec<Rational>,
    /// `Pr[q minimal within its interval | q's interval exact]`.
    pub pmin: Rational,
    /// `Pr[q minimal overall]`.
    pub overall_min: Rational,
    /// `Pr[P_I = 0]` for interval 0 when it is exact.
    pub interval0_even: Rational,
}

/// Enumerates the query value, the subinterval of every key, the parity
/// coins, the half choices and the in-half positions. Ties between equal
/// discrete values are broken uniformly, which matches continuous values.
pub fn exhaustive_minwise_oracle(k: u64, n: u64, bits: u32) -> Result<MinwiseOracle> {
    let config = MinwiseConfig { n, k, precision: bits };
    if k == 0 || k % 2 == 1 || !n.is_multiple_of(k) || n < 2 * k || n > 8 || bits > 8 {
        return Err(Error::InvalidParameter("oracle handles n <= 8, bits <= 8".into()));
    }
    let big_n = config.intervals();
    let width = (1u64 << bits) / big_n;
    if width * big_n != 1 << bits || width % 2 == 1 {
        return Err(Error::InvalidParameter("intervals must split the grid evenly".into()));
    }
    let mut acc = OracleAcc::new(k as usize);
    let (coin_num, coin_den) = config.even_parity_coin();
    let total_assign = big_n.pow(n as u32);
    for q in 0..(1u64 << bits) {
        let qi = q / width;
        for code in 0..total_assign {
            // interval of each key, base-N digits of `code`
            let mut c = code;
            let iv: Vec<u64> = (0..n)
                .map(|_| {
                    let d = c % big_n;
                    c /= big_n;
                    d
                })
                .collect();
            let base = Rational::new(BigInt::one(), BigInt::from((1u64 << bits) * total_assign));
            let ctx = LeafCtx { config: &config, width, q, qi, iv: &iv };
            let mut placed = vec![0u64; n as usize];
            enumerate_interval(&ctx, 0, base, &mut placed, &mut Vec::new(), (coin_num, coin_den), &mut acc);
        }
    }
    acc.finish(&config)
}

struct LeafCtx<'a> {
    config: &'a MinwiseConfig,
    width: u64,
    q: u64,
    qi: u64,
    iv: &'a [u64],
}

struct OracleAcc {
    k: usize,
    exact_mass: Rational,
    first_half: Vec<Rational>,
    min_in_exact: Rational,
    overall: Rational,
    i0_exact: Rational,
    i0_even: Rational,
}

impl OracleAcc {
    fn new(k: usize) -> Self {
        Self {
            k,
            exact_mass: Rational::zero(),
            first_half: vec![Rational::zero(); k + 1],
            min_in_exact: Rational::zero(),
            overall: Rational::zero(),
            i0_exact: Rational::zero(),
            i0_even: Rational::zero(),
        }
    }

    fn finish(self, _config: &MinwiseConfig) -> Result<MinwiseOracle> {
        if self.exact_mass.is_zero() || self.i0_exact.is_zero() {
            return Err(Error::InvalidParameter("no exact interval reachable".into()));
        }
        Ok(MinwiseOracle {
            first_half_law: self.first_half.iter().map(|p| p / &self.exact_mass).collect(),
            pmin: &self.min_in_exact / &self.exact_mass,
            overall_min: self.overall,
            interval0_even: &self.i0_even / &self.i0_exact,
        })
    }
}

/// Probability that `q` beats every value in `vals`, ties broken uniformly.
fn beats_all(q: u64, vals: impl Iterator<Item = u64>) -> Rational {
    let mut ties = 0i64;
    for v in vals {
        if v < q {
            return Rational::zero();
        }
        if v == q {
            ties += 1;
        }
    }
    rat(1, ties + 1)
}

/// Recursively places the keys of interval `i`, then moves to `i + 1`.
/// `parities` records `(interval, parity, first-half count)` of exact intervals.
fn enumerate_interval(
    ctx: &LeafCtx<'_>,
    i: u64,
    weight: Rational,
    placed: &mut Vec<u64>,
    parities: &mut Vec<(u64, u8, usize)>,
    coin: (u64, u64),
    acc: &mut OracleAcc,
) {
    let config = ctx.config;
    if i == config.intervals() {
        leaf(ctx, &weight, placed, parities, acc);
        return;
    }
    let keys: Vec<usize> = (0..config.n as usize).filter(|&x| ctx.iv[x] == i).collect();
    let lo = i * ctx.width;
    if keys.len() as u64 != config.k {
        // positions uniform over the interval
        place_uniform(ctx, i, &keys, 0, lo, ctx.width, weight, placed, parities, coin, acc);
        return;
    }
    let parity_options: Vec<(u8, Rational)> = if i == ctx.qi {
        vec![(0, Rational::one())]
    } else {
        vec![
            (0, Rational::new(BigInt::from(coin.0), BigInt::from(coin.1))),
            (1, Rational::new(BigInt::from(coin.1 - coin.0), BigInt::from(coin.1))),
        ]
    };
    let k = keys.len();
    for (parity, pw) in parity_options {
        if pw.is_zero() {
            continue;
        }
        for mask in 0u32..(1 << (k - 1)) {
            let mut halves: Vec<bool> = (0..k - 1).map(|b| mask >> b & 1 == 1).collect();
            let first = halves.iter().filter(|&&h| h).count();
            halves.push((first % 2) as u8 != parity);
            let x = halves.iter().filter(|&&h| h).count();
            let w = &weight * &pw * rat(1, 1 << (k - 1));
            parities.push((i, parity, x));
            place_halves(ctx, i, &keys, &halves, 0, w, placed, parities, coin, acc);
            parities.pop();
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn place_uniform(
    ctx: &LeafCtx<'_>,
    i: u64,
    keys: &[usize],
    idx: usize,
    lo: u64,
    len: u64,
    weight: Rational,
    placed: &mut Vec<u64>,
    parities: &mut Vec<(u64, u8, usize)>,
    coin: (u64, u64),
    acc: &mut OracleAcc,
) {
    if idx == keys.len() {
        enumerate_interval(ctx, i + 1, weight, placed, parities, coin, acc);
        return;
    }
    let w = weight * rat(1, len as i64);
    for v in lo..lo + len {
        placed[keys[idx]] = v;
        place_uniform(ctx, i, keys, idx + 1, lo, len, w.clone(), placed, parities, coin, acc);
    }
}

#[allow(clippy::too_many_arguments)]
fn place_halves(
    ctx: &LeafCtx<'_>,
    i: u64,
    keys: &[usize],
    halves: &[bool],
    idx: usize,
    weight: Rational,
    placed: &mut Vec<u64>,
    parities: &mut Vec<(u64, u8, usize)>,
    coin: (u64, u64),
    acc: &mut OracleAcc,
) {
    if idx == keys.len() {
        enumerate_interval(ctx, i + 1, weight, placed, parities, coin, acc);
        return;
    }
    let half = ctx.width / 2;
    let lo = i * ctx.width + if halves[idx] { 0 } else { half };
    let w = weight * rat(1, half as i64);
    for v in lo..lo + half {
        placed[keys[idx]] = v;
        place_halves(ctx, i, keys, halves, idx + 1, w.clone(), placed, parities, coin, acc);
    }
}

fn leaf(ctx: &LeafCtx<'_>, weight: &Rational, placed: &[u64], parities: &[(u64, u8, usize)], acc: &mut OracleAcc) {
    acc.overall += weight * beats_all(ctx.q, placed.iter().copied());
    if let Some(&(_, _, x)) = parities.iter().find(|(i, _, _)| *i == ctx.qi) {
        acc.exact_mass += weight;
        acc.first_half[x] += weight;
        let inside = placed.iter().enumerate().filter(|(key, _)| ctx.iv[*key] == ctx.qi).map(|(_, &v)| v);
        acc.min_in_exact += weight * beats_all(ctx.q, inside);
    }
    if let Some(&(_, parity, _)) = parities.iter().find(|(i, _, _)| *i == 0) {
        acc.i0_exact += weight;
        if parity == 0 {
            acc.i0_even += weight;
        }
    }
    let _ = acc.k;
}
