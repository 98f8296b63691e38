//! Pairwise independent distribution with expected query cost of order sqrt(n).
//!
//! The query hash `h(q)` is uniform. The table is cut into `sqrt(n)` intervals
//! of length `d = 2 sqrt(n)` anchored so that `Q = (h(q) - d, h(q)]` is one of
//! them. Keys are spread evenly over the intervals (S1), or, with probability
//! `P_S2`, `Q` and three random intervals are picked and one of those four
//! receives `4 sqrt(n)` keys while the other three stay empty (S2). Positions
//! inside an interval are uniform.

use num_traits::One;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adv_lp::Assignment;
use crate::error::{Error, Result};
use crate::rational::{binomial, to_f64, uint, Rational};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoIndepConfig {
    pub t: u64,
    pub n: u64,
    pub sqrt_n: u64,
    /// Interval length, `2 sqrt(n)`.
    pub d: u64,
    pub p_s2: Rational,
    p_s2_f64: f64,
}

/// Which spreading strategy a sample used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalStrategy {
    Even,
    /// Interval index (0 is the query interval) that received `4 sqrt(n)` keys.
    Collect { loaded: u64 },
}

/// Overrides the strategy draw, for conditioned experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceStrategy {
    Even,
    Collect,
    CollectIntoQuery,
}

#[derive(Debug, Clone)]
pub struct TwoIndepSample {
    pub assignment: Assignment,
    pub strategy: IntervalStrategy,
    /// Number of keys per interval, interval 0 being the query interval.
    pub interval_loads: Vec<u64>,
}

fn collisions(load: u64) -> Rational {
    Rational::from_integer(binomial(load, 2))
}

/// Solves the collision balance for `n` stored keys in a table of `2n` slots.
pub fn solve_2indep_mix(n: u64) -> Result<TwoIndepConfig> {
    if n < 64 {
        return Err(Error::InvalidParameter(format!("n = {n} must be at least 64")));
    }
    let sqrt_n = n.isqrt();
    if sqrt_n * sqrt_n != n || !sqrt_n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("sqrt(n) must be a power of two, n = {n}")));
    }
    let target = collisions(n) / uint(sqrt_n);
    let even = uint(sqrt_n) * collisions(sqrt_n);
    let collect = uint(sqrt_n - 4) * collisions(sqrt_n) + collisions(4 * sqrt_n);
    let p_s2 = (target - &even) / (collect - even);
    Ok(TwoIndepConfig { t: 2 * n, n, sqrt_n, d: 2 * sqrt_n, p_s2_f64: to_f64(&p_s2), p_s2 })
}

impl TwoIndepConfig {
    /// Expected number of same-interval pairs among stored keys under the mix.
    pub fn expected_collisions(&self) -> Rational {
        let even = uint(self.sqrt_n) * collisions(self.sqrt_n);
        let collect = uint(self.sqrt_n - 4) * collisions(self.sqrt_n) + collisions(4 * self.sqrt_n);
        &self.p_s2 * collect + (Rational::one() - &self.p_s2) * even
    }

    /// Probability that two fixed stored keys share an interval.
    pub fn pair_collision_probability(&self) -> Rational {
        self.expected_collisions() / collisions(self.n)
    }

    /// Expected number of stored keys in the query interval.
    pub fn expected_query_interval_load(&self) -> Rational {
        let even = uint(self.sqrt_n);
        // the loaded interval is Q with probability 1/4
        let collect = uint(4 * self.sqrt_n) / uint(4);
        &self.p_s2 * collect + (Rational::one() - &self.p_s2) * even
    }

    /// Probability that the query and a fixed stored key share an interval.
    pub fn query_pair_probability(&self) -> Rational {
        self.expected_query_interval_load() / uint(self.n)
    }

    pub fn p_s2_f64(&self) -> f64 {
        self.p_s2_f64
    }

    /// First slot of interval `j`, where interval 0 is `(h(q) - d, h(q)]`.
    pub fn interval_start(&self, query_slot: u64, j: u64) -> u64 {
        (query_slot + self.t - self.d + 1 + j * self.d) % self.t
    }

    /// Strategy plus the per-interval loads it prescribes.
    fn sample_loads<R: Rng + ?Sized>(&self, force: Option<ForceStrategy>, rng: &mut R) -> (IntervalStrategy, Vec<u64>) {
        let collect = match force {
            Some(ForceStrategy::Even) => false,
            Some(ForceStrategy::Collect | ForceStrategy::CollectIntoQuery) => true,
            None => rng.random::<f64>() < self.p_s2_f64,
        };
        let mut loads = vec![self.sqrt_n; self.sqrt_n as usize];
        if !collect {
            return (IntervalStrategy::Even, loads);
        }
        // Q plus three distinct random others; one of the four gets every key
        let mut four = [0u64; 4];
        for (slot, o) in four.iter_mut().skip(1).zip(index::sample(rng, (self.sqrt_n - 1) as usize, 3).iter()) {
            *slot = o as u64 + 1;
        }
        let loaded = if force == Some(ForceStrategy::CollectIntoQuery) { 0 } else { four[rng.random_range(0..4)] };
        for &j in &four {
            loads[j as usize] = 0;
        }
        loads[loaded as usize] = 4 * self.sqrt_n;
        (IntervalStrategy::Collect { loaded }, loads)
    }

    /// Per-slot hash counts plus the query slot, without materializing keys.
    pub fn sample_slot_counts<R: Rng + ?Sized>(&self, force: Option<ForceStrategy>, rng: &mut R) -> (Vec<u32>, u64, IntervalStrategy, Vec<u64>) {
        let query_slot = rng.random_range(0..self.t);
        let (strategy, loads) = self.sample_loads(force, rng);
        let mut counts = vec![0u32; self.t as usize];
        for (j, &load) in loads.iter().enumerate() {
            let start = self.interval_start(query_slot, j as u64);
            for _ in 0..load {
                let slot = (start + rng.random_range(0..self.d)) % self.t;
                counts[slot as usize] += 1;
            }
        }
        (counts, query_slot, strategy, loads)
    }
}

/// One draw of the construction with explicit key identities `0..n`.
pub fn sample_2indep<R: Rng + ?Sized>(config: &TwoIndepConfig, force: Option<ForceStrategy>, rng: &mut R) -> TwoIndepSample {
    let query_slot = rng.random_range(0..config.t);
    let (strategy, loads) = config.sample_loads(force, rng);
    let mut keys: Vec<u64> = (0..config.n).collect();
    keys.shuffle(rng);
    let mut slots = vec![0u64; config.n as usize];
    let mut cursor = 0usize;
    for (j, &load) in loads.iter().enumerate() {
        let start = config.interval_start(query_slot, j as u64);
        for &key in &keys[cursor..cursor + load as usize] {
            slots[key as usize] = (start + rng.random_range(0..config.d)) % config.t;
        }
        cursor += load as usize;
    }
    TwoIndepSample {
        assignment: Assignment::new(config.t, slots, Some(query_slot)),
        strategy,
        interval_loads: loads,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probing::ProbeTable;
    use crate::rational::rat;
    use crate::rng::stream_rng;

    #[test]
    fn mix_examples() {
        assert_eq!(solve_2indep_mix(64).unwrap().p_s2, rat(7, 96));
        let c = solve_2indep_mix(1024).unwrap();
        assert_eq!(c.p_s2, rat(31, 384));
        assert_eq!(c.d, 64);
        assert_eq!(c.expected_query_interval_load(), uint(32));
        assert!(solve_2indep_mix(256 * 2).is_err());
        assert!(solve_2indep_mix(36).is_err());
    }

    #[test]
    fn pairwise_probabilities_are_exact() {
        for n in [64u64, 256, 1024, 4096] {
            let c = solve_2indep_mix(n).unwrap();
            let target = rat(1, c.sqrt_n as i64);
            assert_eq!(c.pair_collision_probability(), target);
            assert_eq!(c.query_pair_probability(), target);
        }
    }

    #[test]
    fn forced_strategies_shape_the_loads() {
        let c = solve_2indep_mix(256).unwrap();
        let mut rng = stream_rng(3, 1);
        for _ in 0..50 {
            let s = sample_2indep(&c, Some(ForceStrategy::Even), &mut rng);
            assert!(s.interval_loads.iter().all(|&l| l == 16));
            let s = sample_2indep(&c, Some(ForceStrategy::Collect), &mut rng);
            assert_eq!(s.interval_loads.iter().filter(|&&l| l == 64).count(), 1);
            assert_eq!(s.interval_loads.iter().filter(|&&l| l == 0).count(), 3);
            assert_eq!(s.interval_loads.iter().sum::<u64>(), 256);
            assert_eq!(s.assignment.len(), 256);
        }
    }

    #[test]
    fn keys_land_in_their_intervals() {
        let c = solve_2indep_mix(64).unwrap();
        let mut rng = stream_rng(4, 1);
        let s = sample_2indep(&c, None, &mut rng);
        let q = s.assignment.query_slot().unwrap();
        let mut per_interval = vec![0u64; c.sqrt_n as usize];
        for &slot in s.assignment.slots() {
            // offset of slot past the start of interval 0
            let off = (slot + c.t - c.interval_start(q, 0)) % c.t;
            per_interval[(off / c.d) as usize] += 1;
        }
        assert_eq!(per_interval, s.interval_loads);
    }

    /// With Q overloaded, the search from h(q) is long: at least ~sqrt(n).
    #[test]
    fn loaded_query_interval_costs_sqrt_n() {
        let mut rng = stream_rng(8, 8);
        let mut ratios = Vec::new();
        for n in [256u64, 1024, 4096] {
            let c = solve_2indep_mix(n).unwrap();
            let trials = 200;
            let mut total = 0u64;
            for _ in 0..trials {
                let (counts, q, _, _) = c.sample_slot_counts(Some(ForceStrategy::CollectIntoQuery), &mut rng);
                let table = ProbeTable::from_slot_counts(&counts).unwrap();
                total += table.search_cost(q);
            }
            ratios.push(total as f64 / trials as f64 / c.sqrt_n as f64);
        }
        assert!(ratios.iter().all(|&r| r >= 1.0), "{ratios:?}");
    }
}
