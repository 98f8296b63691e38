//! Floating-point views of the exact mixes, cached per node load for sampling.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use super::strategy::{p4_exact, skew_load, solve_3indep_mix, solve_t2_mix, solve_tstar_mix, t1, t2};
use crate::rational::to_f64;

/// Everything a sampler needs to split a node of `two_m` keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeMixes {
    pub two_m: u64,
    /// Collect probability of T1.
    pub p_collect: f64,
    /// Skew probability of T2.
    pub p_skew: f64,
    pub skew_load: u64,
    /// T1 probability of T*, when the p4 balance is feasible.
    pub p_tstar: Option<f64>,
    pub p4_t1: f64,
    pub p4_t2: f64,
}

impl NodeMixes {
    fn compute(two_m: u64) -> Self {
        let p_collect = solve_3indep_mix(two_m).map(|p| to_f64(&p)).unwrap_or(0.0);
        let p_skew = solve_t2_mix(two_m).map(|p| to_f64(&p)).unwrap_or(0.0);
        let (p4_t1, p4_t2, p_tstar) = if two_m >= 4 {
            let a = p4_exact(&t1(two_m).expect("t1 defined for 2m >= 2"), two_m).expect("2m >= 4");
            let b = p4_exact(&t2(two_m).expect("t2 defined for 2m >= 2"), two_m).expect("2m >= 4");
            (to_f64(&a), to_f64(&b), solve_tstar_mix(two_m).ok().map(|p| to_f64(&p)))
        } else {
            (1.0 / 16.0, 1.0 / 16.0, None)
        };
        Self { two_m, p_collect, p_skew, skew_load: skew_load(two_m), p_tstar, p4_t1, p4_t2 }
    }
}

const DENSE_LIMIT: u64 = 4096;

pub struct MixTables {
    dense: Vec<NodeMixes>,
    sparse: RwLock<HashMap<u64, NodeMixes>>,
}

impl MixTables {
    fn new() -> Self {
        Self {
            dense: (0..=DENSE_LIMIT).map(NodeMixes::compute).collect(),
            sparse: RwLock::new(HashMap::new()),
        }
    }

    #[inline]
    pub fn get(&self, two_m: u64) -> NodeMixes {
        if two_m <= DENSE_LIMIT {
            return self.dense[two_m as usize];
        }
        if let Some(m) = self.sparse.read().expect("mix table lock").get(&two_m) {
            return *m;
        }
        let m = NodeMixes::compute(two_m);
        self.sparse.write().expect("mix table lock").insert(two_m, m);
        m
    }
}

/// Process-wide table, built on first use.
pub fn mix_tables() -> &'static MixTables {
    static TABLES: OnceLock<MixTables> = OnceLock::new();
    TABLES.get_or_init(MixTables::new)
}
