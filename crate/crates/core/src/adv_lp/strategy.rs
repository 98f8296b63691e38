//! Node-splitting strategies and their exact mixes.
//!
//! A node holding `2m` keys sends `X` of them to its left child. Every
//! strategy here is fully symmetric: it is invariant under permuting keys and
//! under swapping the children, so it is described completely by the law of
//! `X`. The probability that `k` fixed keys all go left is then
//! `E[X^(k) / (2m)^(k)]` with falling factorials.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::rational::{binomial, falling, in_unit_interval, rat, uint, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SplitStrategy {
    /// S1: split as evenly as possible; for odd `2m` a random child gets the larger half.
    Even,
    /// S2: all keys to one random child.
    Collect,
    /// S3: a random child gets `ceil(m + sqrt(m/2))` keys.
    Skew,
    /// Each key picks a child independently and uniformly.
    Random,
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Self::Even => "S1",
            Self::Collect => "S2",
            Self::Skew => "S3",
            Self::Random => "random",
        };
        f.write_str(tag)
    }
}

/// Load of the favoured child under [`SplitStrategy::Skew`]: the least integer
/// `c >= m + sqrt(m/2)`, i.e. the least `c` with `2c >= 2m` and
/// `(2c - 2m)^2 >= 2m`.
pub fn skew_load(two_m: u64) -> u64 {
    // start from the float estimate and fix it up exactly
    let m = two_m as f64 / 2.0;
    let mut c = ((m + (m / 2.0).sqrt()).ceil() as u64).saturating_sub(2).max(two_m.div_ceil(2));
    let ok = |c: u64| {
        let d = 2 * c - two_m;
        (d as u128) * (d as u128) >= two_m as u128
    };
    while !ok(c) {
        c += 1;
    }
    c.min(two_m)
}

/// `2 * delta'` for the skew strategy, where `delta' = skew_load - m`.
pub fn skew_offset_doubled(two_m: u64) -> u64 {
    2 * skew_load(two_m) - two_m
}

/// Exact law of the left-child load `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadLaw {
    two_m: u64,
    outcomes: Vec<(u64, Rational)>,
}

impl LoadLaw {
    pub fn new(two_m: u64, outcomes: Vec<(u64, Rational)>) -> Result<Self> {
        let total: Rational = outcomes.iter().map(|(_, p)| p.clone()).sum();
        if total != Rational::one() || outcomes.iter().any(|(x, p)| *x > two_m || !in_unit_interval(p)) {
            return Err(Error::InvalidMix);
        }
        Ok(Self { two_m, outcomes })
    }

    /// `X` is `c` or `2m - c` with probability one half each.
    fn symmetric_pair(two_m: u64, c: u64) -> Self {
        let half = rat(1, 2);
        let outcomes = if 2 * c == two_m {
            vec![(c, Rational::one())]
        } else {
            vec![(c, half.clone()), (two_m - c, half)]
        };
        Self { two_m, outcomes }
    }

    pub fn two_m(&self) -> u64 {
        self.two_m
    }

    pub fn outcomes(&self) -> &[(u64, Rational)] {
        &self.outcomes
    }

    /// Half the node load, `m`, as a rational.
    pub fn m(&self) -> Rational {
        rat(self.two_m as i64, 2)
    }

    /// `E[(X - m)^j]`.
    pub fn central_moment(&self, j: u32) -> Rational {
        let m = self.m();
        self.outcomes
            .iter()
            .map(|(x, p)| {
                let dev = uint(*x) - &m;
                p * num_traits::pow(dev, j as usize)
            })
            .sum()
    }

    /// Probability that `k` fixed keys all go to the left child.
    pub fn p_k(&self, k: u32) -> Rational {
        let den = falling(self.two_m, k);
        if den.is_zero() {
            return Rational::zero();
        }
        self.outcomes
            .iter()
            .map(|(x, p)| p * Rational::new(falling(*x, k), den.clone()))
            .sum()
    }

    /// Convex combination of laws over the same node load.
    pub fn mix(two_m: u64, parts: &[(LoadLaw, Rational)]) -> Self {
        let mut acc: Vec<Rational> = vec![Rational::zero(); two_m as usize + 1];
        for (law, w) in parts {
            debug_assert_eq!(law.two_m, two_m);
            for (x, p) in &law.outcomes {
                acc[*x as usize] += w * p;
            }
        }
        let outcomes = acc
            .into_iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
            .map(|(x, p)| (x as u64, p))
            .collect();
        Self { two_m, outcomes }
    }
}

/// Anything with an exact left-load law at a given node size.
pub trait SplitDistribution {
    fn load_law(&self, two_m: u64) -> Result<LoadLaw>;
}

impl SplitStrategy {
    pub fn sample_left<R: Rng + ?Sized>(&self, two_m: u64, rng: &mut R) -> u64 {
        let coin = |rng: &mut R| rng.random::<bool>();
        match self {
            Self::Even => {
                let lo = two_m / 2;
                if two_m % 2 == 1 && coin(rng) {
                    lo + 1
                } else {
                    lo
                }
            }
            Self::Collect => {
                if coin(rng) {
                    two_m
                } else {
                    0
                }
            }
            Self::Skew => {
                let c = skew_load(two_m);
                if coin(rng) {
                    c
                } else {
                    two_m - c
                }
            }
            Self::Random => sample_fair_binomial(two_m, rng),
        }
    }
}

/// `Binomial(n, 1/2)`.
#[inline]
pub fn sample_fair_binomial<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    if n <= 64 {
        if n == 0 {
            return 0;
        }
        let bits = rng.next_u64();
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        (bits & mask).count_ones() as u64
    } else {
        Binomial::new(n, 0.5).expect("valid binomial").sample(rng)
    }
}

impl SplitDistribution for SplitStrategy {
    fn load_law(&self, two_m: u64) -> Result<LoadLaw> {
        Ok(match self {
            Self::Even => LoadLaw::symmetric_pair(two_m, two_m.div_ceil(2)),
            Self::Collect => LoadLaw::symmetric_pair(two_m, two_m),
            Self::Skew => LoadLaw::symmetric_pair(two_m, skew_load(two_m)),
            Self::Random => {
                let den = BigInt::one() << two_m;
                let outcomes = (0..=two_m)
                    .map(|x| (x, Rational::new(binomial(two_m, x), den.clone())))
                    .collect();
                LoadLaw { two_m, outcomes }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MixComponent {
    Strategy(SplitStrategy),
    Mix(StrategyMix),
}

impl From<SplitStrategy> for MixComponent {
    fn from(s: SplitStrategy) -> Self {
        Self::Strategy(s)
    }
}

impl From<StrategyMix> for MixComponent {
    fn from(m: StrategyMix) -> Self {
        Self::Mix(m)
    }
}

impl SplitDistribution for MixComponent {
    fn load_law(&self, two_m: u64) -> Result<LoadLaw> {
        match self {
            Self::Strategy(s) => s.load_law(two_m),
            Self::Mix(m) => m.load_law(two_m),
        }
    }
}

/// Exact probability mix of strategies (or of other mixes).
///
/// Mix probabilities are usually solved for one node size; evaluating the law
/// at another size is allowed but rarely meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMix {
    name: String,
    entries: Vec<(MixComponent, Rational)>,
}

impl StrategyMix {
    pub fn new(name: impl Into<String>, entries: Vec<(MixComponent, Rational)>) -> Result<Self> {
        let total: Rational = entries.iter().map(|(_, p)| p.clone()).sum();
        if total != Rational::one() || entries.iter().any(|(_, p)| !in_unit_interval(p)) {
            return Err(Error::InvalidMix);
        }
        Ok(Self { name: name.into(), entries })
    }

    /// `p * first + (1 - p) * second`.
    pub fn binary(name: impl Into<String>, p: Rational, first: impl Into<MixComponent>, second: impl Into<MixComponent>) -> Result<Self> {
        let q = Rational::one() - &p;
        Self::new(name, vec![(first.into(), p), (second.into(), q)])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[(MixComponent, Rational)] {
        &self.entries
    }

    /// Probability of the first entry, the usual "P" of a binary mix.
    pub fn lead_probability(&self) -> &Rational {
        &self.entries[0].1
    }
}

impl SplitDistribution for StrategyMix {
    fn load_law(&self, two_m: u64) -> Result<LoadLaw> {
        let parts = self
            .entries
            .iter()
            .map(|(c, p)| Ok((c.load_law(two_m)?, p.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(LoadLaw::mix(two_m, &parts))
    }
}

fn half_load(two_m: u64) -> Rational {
    rat(two_m as i64, 4)
}

/// `P` with `P * m^2 + (1 - P) * F2(S1) = m/2`: the collect probability that makes
/// an S1/S2 mix 3-independent.
pub fn solve_3indep_mix(two_m: u64) -> Result<Rational> {
    if two_m < 2 {
        return Err(Error::InfeasibleBalance { two_m, reason: "need at least two keys".into() });
    }
    let f_even = SplitStrategy::Even.load_law(two_m)?.central_moment(2);
    let f_collect = SplitStrategy::Collect.load_law(two_m)?.central_moment(2);
    Ok((half_load(two_m) - &f_even) / (f_collect - f_even))
}

/// `P` with `P * F2(S3) + (1 - P) * F2(S1) = m/2`: the skew probability of T2.
pub fn solve_t2_mix(two_m: u64) -> Result<Rational> {
    if two_m < 2 {
        return Err(Error::InfeasibleBalance { two_m, reason: "need at least two keys".into() });
    }
    let f_even = SplitStrategy::Even.load_law(two_m)?.central_moment(2);
    let f_skew = SplitStrategy::Skew.load_law(two_m)?.central_moment(2);
    if f_skew <= f_even {
        return Err(Error::InfeasibleBalance { two_m, reason: "skew second moment does not exceed even split".into() });
    }
    let p = (half_load(two_m) - &f_even) / (f_skew - f_even);
    assert!(in_unit_interval(&p), "skew balance out of range at 2m = {two_m}");
    Ok(p)
}

/// T1 = P_S2 * S2 + (1 - P_S2) * S1.
pub fn t1(two_m: u64) -> Result<StrategyMix> {
    StrategyMix::binary("T1", solve_3indep_mix(two_m)?, SplitStrategy::Collect, SplitStrategy::Even)
}

/// T2 = P_S3 * S3 + (1 - P_S3) * S1.
pub fn t2(two_m: u64) -> Result<StrategyMix> {
    StrategyMix::binary("T2", solve_t2_mix(two_m)?, SplitStrategy::Skew, SplitStrategy::Even)
}

/// Probability that 4 fixed keys of a `2m`-key node all go left.
pub fn p4_exact<D: SplitDistribution + ?Sized>(dist: &D, two_m: u64) -> Result<Rational> {
    if two_m < 4 {
        return Err(Error::InvalidParameter(format!("p4 needs 2m >= 4, got {two_m}")));
    }
    Ok(dist.load_law(two_m)?.p_k(4))
}

/// `P` with `P * p4(T1) + (1 - P) * p4(T2) = 1/16`.
pub fn solve_tstar_mix(two_m: u64) -> Result<Rational> {
    let p_t1 = p4_exact(&t1(two_m)?, two_m)?;
    let p_t2 = p4_exact(&t2(two_m)?, two_m)?;
    solve_p4_balance(two_m, &p_t1, &p_t2)
}

fn solve_p4_balance(two_m: u64, p_t1: &Rational, p_t2: &Rational) -> Result<Rational> {
    let target = rat(1, 16);
    if p_t1 == p_t2 {
        return Err(Error::InfeasibleBalance { two_m, reason: "p4(T1) = p4(T2)".into() });
    }
    if !(*p_t1 > target && target > *p_t2) {
        return Err(Error::InfeasibleBalance {
            two_m,
            reason: format!("p4(T1) = {p_t1} and p4(T2) = {p_t2} do not bracket 1/16"),
        });
    }
    Ok((target - p_t2) / (p_t1 - p_t2))
}

/// T* = P * T1 + (1 - P) * T2 with p4 = 1/16.
pub fn t_star(two_m: u64) -> Result<StrategyMix> {
    StrategyMix::binary("T*", solve_tstar_mix(two_m)?, t1(two_m)?, t2(two_m)?)
}

/// T- = P * T1 + (1 - P) * T2 for an externally calibrated `P`.
pub fn t_minus(two_m: u64, p: Rational) -> Result<StrategyMix> {
    StrategyMix::binary("T-", p, t1(two_m)?, t2(two_m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn skew_load_matches_definition() {
        for two_m in 1..2000u64 {
            let m = two_m as f64 / 2.0;
            let c = skew_load(two_m);
            let target = m + (m / 2.0).sqrt();
            assert!(c as f64 >= target - 1e-9 && (c as f64) < target + 1.0, "2m={two_m} c={c}");
        }
        assert_eq!(skew_load(32), 19);
        assert_eq!(skew_load(16), 10);
        assert_eq!(skew_load(33), 20);
    }

    /// Brute force over labelled keys: E[(X - m)^2] by enumerating which subset
    /// goes left, for even split and collect.
    fn brute_second_moments(two_m: u64) -> (Rational, Rational) {
        let n = two_m as u32;
        let m2 = rat(two_m as i64, 2);
        let mut even_num = Rational::zero();
        let mut even_cnt = 0i64;
        for mask in 0u32..(1 << n) {
            let x = mask.count_ones() as u64;
            if x == two_m / 2 || x == two_m.div_ceil(2) {
                even_num += num_traits::pow(uint(x) - &m2, 2);
                even_cnt += 1;
            }
        }
        let collect = (num_traits::pow(m2.clone(), 2) + num_traits::pow(m2.clone(), 2)) / int2();
        (even_num / Rational::from_integer(even_cnt.into()), collect)
    }

    fn int2() -> Rational {
        Rational::from_integer(2.into())
    }

    #[test]
    fn three_indep_mix_examples() {
        for (two_m, expect) in [(8u64, rat(1, 8)), (9, rat(1, 10)), (2, rat(1, 2))] {
            let (f1, f2) = brute_second_moments(two_m);
            let oracle = (rat(two_m as i64, 4) - &f1) / (f2 - f1);
            assert_eq!(oracle, expect);
            assert_eq!(solve_3indep_mix(two_m).unwrap(), expect);
        }
        // with two keys the balanced split has Var(X) = 1/2, the Binomial(2, 1/2) variance
        let law = t1(2).unwrap().load_law(2).unwrap();
        assert_eq!(law.central_moment(2), rat(1, 2));
        assert!(solve_3indep_mix(1).is_err());
    }

    #[test]
    fn t2_mix_examples() {
        assert_eq!(skew_offset_doubled(32), 6);
        assert_eq!(solve_t2_mix(32).unwrap(), rat(8, 9));
        assert_eq!(solve_t2_mix(16).unwrap(), rat(1, 1));
        assert_eq!(solve_t2_mix(33).unwrap(), rat(2, 3));
    }

    #[test]
    fn p4_examples() {
        for two_m in [4u64, 9, 16, 40] {
            assert_eq!(p4_exact(&SplitStrategy::Collect, two_m).unwrap(), rat(1, 2));
        }
        assert_eq!(p4_exact(&SplitStrategy::Even, 16).unwrap(), rat(1, 26));
        assert_eq!(solve_3indep_mix(16).unwrap(), rat(1, 16));
        assert_eq!(p4_exact(&t1(16).unwrap(), 16).unwrap(), rat(7, 104));
        assert_eq!(p4_exact(&t2(16).unwrap(), 16).unwrap(), rat(45, 728));
        assert!(p4_exact(&SplitStrategy::Even, 3).is_err());
    }

    /// Exhaustive: enumerate every even split of 16 labelled keys.
    #[test]
    fn even_split_p4_by_enumeration() {
        let mut hits = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1 << 16) {
            if mask.count_ones() == 8 {
                total += 1;
                if mask & 0b1111 == 0b1111 {
                    hits += 1;
                }
            }
        }
        assert_eq!(rat(hits as i64, total as i64), rat(1, 26));
    }

    #[test]
    fn tstar_examples() {
        assert_eq!(solve_tstar_mix(16).unwrap(), rat(1, 8));
        let mix = t_star(16).unwrap();
        assert_eq!(p4_exact(&mix, 16).unwrap(), rat(1, 16));
        let equal = rat(1, 16);
        assert!(matches!(solve_p4_balance(16, &equal, &equal), Err(Error::InfeasibleBalance { .. })));
        assert!(matches!(solve_p4_balance(16, &rat(1, 20), &rat(1, 30)), Err(Error::InfeasibleBalance { .. })));
    }

    #[test]
    fn mixes_reject_bad_probabilities() {
        let bad = StrategyMix::new("bad", vec![(SplitStrategy::Even.into(), rat(1, 2))]);
        assert!(matches!(bad, Err(Error::InvalidMix)));
        let neg = StrategyMix::binary("neg", rat(3, 2), SplitStrategy::Even, SplitStrategy::Collect);
        assert!(matches!(neg, Err(Error::InvalidMix)));
    }

    #[test]
    fn sampled_loads_follow_the_law() {
        let mut rng = stream_rng(5, 5);
        for strat in [SplitStrategy::Even, SplitStrategy::Collect, SplitStrategy::Skew] {
            for two_m in [7u64, 16, 33] {
                let law = strat.load_law(two_m).unwrap();
                for _ in 0..200 {
                    let x = strat.sample_left(two_m, &mut rng);
                    assert!(law.outcomes().iter().any(|(v, _)| *v == x));
                }
            }
        }
        let n = 20000;
        let mean = (0..n).map(|_| SplitStrategy::Random.sample_left(40, &mut rng)).sum::<u64>() as f64 / n as f64;
        assert!((mean - 20.0).abs() < 0.2);
        let mean_big = (0..n).map(|_| sample_fair_binomial(1000, &mut rng)).sum::<u64>() as f64 / n as f64;
        assert!((mean_big - 500.0).abs() < 1.0);
    }
}
