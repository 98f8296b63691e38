//! Adversarial k-independent distributions for linear probing.

mod calibrate;
mod strategy;
mod tables;
mod tree;
mod two_indep;

pub use calibrate::{calibrate_schedule, calibrate_tminus, sampled_balance, CalibrationCache, LevelCalibration};
pub use strategy::{
    p4_exact, sample_fair_binomial, skew_load, skew_offset_doubled, solve_3indep_mix, solve_t2_mix, solve_tstar_mix, t1, t2, t_minus,
    t_star, LoadLaw, MixComponent, SplitDistribution, SplitStrategy, StrategyMix,
};
pub use tables::{mix_tables, NodeMixes};
pub use tree::{
    four_indep_n, run_to_level, sample_3indep_tree, sample_4indep_tree, three_indep_n, CollectTilt, FourIndepSample, FourIndepSchedule,
    LevelState, NodeRule, QueryPathEvent, ThreeIndepTree, TreeDraw,
};
pub use two_indep::{sample_2indep, solve_2indep_mix, ForceStrategy, IntervalStrategy, TwoIndepConfig, TwoIndepSample};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::probing::ProbeTable;

/// Key-to-slot mapping produced by one draw of a distribution. Keys are `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    t: u64,
    slots: Vec<u64>,
    query_slot: Option<u64>,
}

impl Assignment {
    pub fn new(t: u64, slots: Vec<u64>, query_slot: Option<u64>) -> Self {
        debug_assert!(slots.iter().all(|&s| s < t));
        Self { t, slots, query_slot }
    }

    /// Gives the keys of slot `s` a uniformly random set of identities.
    pub fn from_slot_counts<R: Rng + ?Sized>(counts: &[u32], query_slot: Option<u64>, rng: &mut R) -> Self {
        let n: usize = counts.iter().map(|&c| c as usize).sum();
        let mut keys: Vec<u64> = (0..n as u64).collect();
        keys.shuffle(rng);
        let mut slots = vec![0u64; n];
        let mut it = keys.into_iter();
        for (s, &c) in counts.iter().enumerate() {
            for key in it.by_ref().take(c as usize) {
                slots[key as usize] = s as u64;
            }
        }
        Self::new(counts.len() as u64, slots, query_slot)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[u64] {
        &self.slots
    }

    pub fn slot(&self, key: u64) -> u64 {
        self.slots[key as usize]
    }

    pub fn query_slot(&self) -> Option<u64> {
        self.query_slot
    }

    pub fn slot_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.t as usize];
        for &s in &self.slots {
            counts[s as usize] += 1;
        }
        counts
    }

    /// Inserts every key, in key order, into a fresh table.
    pub fn build_table(&self) -> Result<ProbeTable> {
        let mut table = ProbeTable::new(self.t)?;
        for (k, &s) in self.slots.iter().enumerate() {
            table.insert(k as u64, s)?;
        }
        Ok(table)
    }
}
