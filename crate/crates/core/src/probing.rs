//! Instrumented linear probing with cyclic wraparound and no deletions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregated insertion and layout statistics of a [`ProbeTable`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostStats {
    pub total_insert_probes: u64,
    pub per_key_displacement: Vec<u64>,
    pub run_lengths: Vec<u64>,
}

impl CostStats {
    /// `sum k_i^2` over runs, the quantity bounding construction cost.
    pub fn squared_run_sum(&self) -> u64 {
        self.run_lengths.iter().map(|&k| k * k).sum()
    }

    pub fn total_displacement(&self) -> u64 {
        self.per_key_displacement.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct ProbeTable {
    slots: Vec<Option<u64>>,
    /// Union-find links towards the next empty cell; an empty cell links to itself.
    next_free: Vec<u32>,
    occupied: usize,
    total_insert_probes: u64,
    displacements: Vec<u64>,
}

impl ProbeTable {
    pub fn new(t: u64) -> Result<Self> {
        if !t.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(t));
        }
        if t < 2 {
            return Err(Error::InvalidParameter("table needs at least two slots".into()));
        }
        if t > 1 << 32 {
            return Err(Error::InvalidParameter(format!("table of {t} slots is too large")));
        }
        Ok(Self {
            slots: vec![None; t as usize],
            next_free: (0..t).map(|i| i as u32).collect(),
            occupied: 0,
            total_insert_probes: 0,
            displacements: Vec::new(),
        })
    }

    pub fn capacity(&self) -> u64 {
        self.slots.len() as u64
    }

    pub fn len(&self) -> usize {
        self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied == 0
    }

    pub fn load(&self) -> f64 {
        self.occupied as f64 / self.slots.len() as f64
    }

    #[inline]
    fn mask(&self) -> usize {
        self.slots.len() - 1
    }

    pub fn get(&self, slot: u64) -> Option<u64> {
        self.slots[slot as usize & self.mask()]
    }

    pub fn is_occupied(&self, slot: u64) -> bool {
        self.get(slot).is_some()
    }

    pub fn total_insert_probes(&self) -> u64 {
        self.total_insert_probes
    }

    pub fn displacements(&self) -> &[u64] {
        &self.displacements
    }

    /// Places `key` at the first empty cell at or after `slot` and returns the
    /// displacement. The table always keeps one cell empty.
    pub fn insert(&mut self, key: u64, slot: u64) -> Result<u64> {
        if self.occupied + 1 >= self.slots.len() {
            return Err(Error::TableFull(self.capacity()));
        }
        let mask = self.mask();
        let start = slot as usize & mask;
        let pos = self.find_free(start);
        self.slots[pos] = Some(key);
        self.next_free[pos] = ((pos + 1) & mask) as u32;
        self.occupied += 1;
        let displacement = (pos.wrapping_sub(start) & mask) as u64;
        self.total_insert_probes += displacement + 1;
        self.displacements.push(displacement);
        Ok(displacement)
    }

    /// First empty cell at or after `pos`, cyclically, with path halving.
    fn find_free(&mut self, mut pos: usize) -> usize {
        while self.next_free[pos] as usize != pos {
            let up = self.next_free[pos] as usize;
            self.next_free[pos] = self.next_free[up];
            pos = up;
        }
        pos
    }

    /// Cells inspected by an unsuccessful search from `slot`, counting the empty
    /// cell that ends it.
    pub fn search_cost(&self, slot: u64) -> u64 {
        let mask = self.mask();
        let mut pos = slot as usize & mask;
        let mut probes = 1;
        while self.slots[pos].is_some() {
            pos = (pos + 1) & mask;
            probes += 1;
        }
        probes
    }

    /// Lengths of the maximal cyclic runs of occupied cells, in slot order
    /// starting after the first empty cell.
    pub fn run_decomposition(&self) -> Vec<u64> {
        let t = self.slots.len();
        let Some(first_empty) = self.slots.iter().position(Option::is_none) else {
            return vec![t as u64];
        };
        let mut runs = Vec::new();
        let mut current = 0u64;
        for i in 1..=t {
            let pos = (first_empty + i) % t;
            if self.slots[pos].is_some() {
                current += 1;
            } else if current > 0 {
                runs.push(current);
                current = 0;
            }
        }
        runs
    }

    /// Sum of `search_cost` over every slot, evaluated cell by cell.
    pub fn total_search_cost(&self) -> u64 {
        (0..self.capacity()).map(|s| self.search_cost(s)).sum()
    }

    /// Mean unsuccessful-search cost for a uniformly random query slot.
    pub fn mean_search_cost(&self) -> f64 {
        total_search_cost_from_runs(self.capacity(), &self.run_decomposition()) as f64 / self.capacity() as f64
    }

    pub fn cost_stats(&self) -> CostStats {
        CostStats {
            total_insert_probes: self.total_insert_probes,
            per_key_displacement: self.displacements.clone(),
            run_lengths: self.run_decomposition(),
        }
    }

    /// Occupied cells in slot order.
    pub fn occupancy(&self) -> Vec<bool> {
        self.slots.iter().map(Option::is_some).collect()
    }

    /// Builds a table from per-slot hash counts, inserting keys `0, 1, ...` in slot order.
    pub fn from_slot_counts(counts: &[u32]) -> Result<Self> {
        let mut table = Self::new(counts.len() as u64)?;
        let mut key = 0u64;
        for (slot, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                table.insert(key, slot as u64)?;
                key += 1;
            }
        }
        Ok(table)
    }
}

/// `sum_slots search_cost` from the run multiset: every empty cell costs one and a
/// run of length `L` contributes `L + (L - 1) + ... + 1` plus one terminating probe
/// per occupied start position.
pub fn total_search_cost_from_runs(t: u64, runs: &[u64]) -> u64 {
    let occupied: u64 = runs.iter().sum();
    let empties = t - occupied;
    empties + runs.iter().map(|&l| l * (l + 1) / 2 + l).sum::<u64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(ProbeTable::new(12), Err(Error::NotPowerOfTwo(12))));
    }

    #[test]
    fn insert_examples() {
        let mut t = ProbeTable::new(8).unwrap();
        assert_eq!(t.insert(10, 3).unwrap(), 0);
        assert_eq!(t.insert(11, 3).unwrap(), 1);
        assert_eq!(t.insert(12, 3).unwrap(), 2);
        assert_eq!(t.total_insert_probes(), 6);

        let mut w = ProbeTable::new(8).unwrap();
        w.insert(1, 7).unwrap();
        assert_eq!(w.insert(2, 7).unwrap(), 1);
        assert_eq!(w.get(0), Some(2));
    }

    #[test]
    fn full_table_is_rejected() {
        let mut t = ProbeTable::new(4).unwrap();
        for k in 0..3 {
            t.insert(k, 0).unwrap();
        }
        assert!(matches!(t.insert(9, 1), Err(Error::TableFull(4))));
        assert_eq!(t.search_cost(0), 4);
    }

    #[test]
    fn search_cost_examples() {
        let mut t = ProbeTable::new(8).unwrap();
        assert_eq!(t.search_cost(3), 1);
        for (k, s) in [(0, 3), (1, 4), (2, 5)] {
            t.insert(k, s).unwrap();
        }
        assert_eq!(t.search_cost(3), 4);
        assert_eq!(t.search_cost(5), 2);
        assert_eq!(t.search_cost(6), 1);
    }

    #[test]
    fn run_decomposition_examples() {
        let empty = ProbeTable::new(8).unwrap();
        assert!(empty.run_decomposition().is_empty());

        let mut t = ProbeTable::new(8).unwrap();
        for s in 3..6 {
            t.insert(s, s).unwrap();
        }
        assert_eq!(t.run_decomposition(), vec![3]);

        let mut w = ProbeTable::new(8).unwrap();
        w.insert(0, 7).unwrap();
        w.insert(1, 0).unwrap();
        assert_eq!(w.run_decomposition(), vec![2]);
    }

    fn random_slots(t: u64, n: usize, seed: u64) -> Vec<u64> {
        let mut rng = stream_rng(seed, 0);
        // cluster half of the keys to get long runs
        (0..n)
            .map(|i| if i % 2 == 0 { rng.random_range(0..t) } else { rng.random_range(0..t / 4) })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn occupancy_is_order_independent(seed in any::<u64>(), logt in 3u32..8, frac in 0.1f64..0.95) {
            let t = 1u64 << logt;
            let n = ((t as f64 * frac) as usize).min(t as usize - 1);
            let slots = random_slots(t, n, seed);
            let mut canonical = ProbeTable::new(t).unwrap();
            for (k, &s) in slots.iter().enumerate() {
                canonical.insert(k as u64, s).unwrap();
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut stream_rng(seed, 1));
            let mut permuted = ProbeTable::new(t).unwrap();
            for &k in &order {
                permuted.insert(k as u64, slots[k]).unwrap();
            }
            prop_assert_eq!(canonical.occupancy(), permuted.occupancy());
            prop_assert_eq!(canonical.total_search_cost(), permuted.total_search_cost());
            let mut a = canonical.run_decomposition();
            let mut b = permuted.run_decomposition();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn search_cost_formula_matches_direct_sum(seed in any::<u64>(), logt in 2u32..9, frac in 0.0f64..0.99) {
            let t = 1u64 << logt;
            let n = ((t as f64 * frac) as usize).min(t as usize - 1);
            let slots = random_slots(t, n, seed);
            let mut table = ProbeTable::new(t).unwrap();
            for (k, &s) in slots.iter().enumerate() {
                table.insert(k as u64, s).unwrap();
            }
            let runs = table.run_decomposition();
            prop_assert_eq!(runs.iter().sum::<u64>(), n as u64);
            prop_assert_eq!(table.total_search_cost(), total_search_cost_from_runs(t, &runs));
        }

        #[test]
        fn displacements_match_cell_walk(seed in any::<u64>(), logt in 2u32..9, frac in 0.0f64..1.0) {
            let t = 1u64 << logt;
            let n = ((t as f64 * frac) as usize).min(t as usize - 1);
            let slots = random_slots(t, n, seed);
            let mut table = ProbeTable::new(t).unwrap();
            let mut cells = vec![false; t as usize];
            for (k, &s) in slots.iter().enumerate() {
                let mut pos = s as usize;
                while cells[pos] {
                    pos = (pos + 1) % t as usize;
                }
                cells[pos] = true;
                prop_assert_eq!(table.insert(k as u64, s).unwrap(), (pos as u64 + t - s) % t);
            }
            prop_assert_eq!(table.occupancy(), cells);
        }

        #[test]
        fn every_key_reachable_from_its_slot(seed in any::<u64>(), logt in 2u32..8) {
            let t = 1u64 << logt;
            let n = (t - 1) as usize;
            let slots = random_slots(t, n, seed);
            let mut table = ProbeTable::new(t).unwrap();
            for (k, &s) in slots.iter().enumerate() {
                table.insert(k as u64, s).unwrap();
            }
            for (k, &s) in slots.iter().enumerate() {
                let mut pos = s;
                loop {
                    let cell = table.get(pos);
                    prop_assert!(cell.is_some());
                    if cell == Some(k as u64) { break; }
                    pos = (pos + 1) % t;
                }
            }
        }
    }

    /// An interval of length d that receives d + delta keys pays at least
    /// ~delta^2 / 4 in insertion probes.
    #[test]
    fn overflowing_interval_cost_is_quadratic() {
        let mut rng = stream_rng(11, 0);
        let t = 1u64 << 12;
        let d = 256u64;
        let mut ratios = Vec::new();
        for delta in [16u64, 32, 64, 128, 256] {
            for _ in 0..20 {
                let mut table = ProbeTable::new(t).unwrap();
                let a = rng.random_range(0..t);
                for k in 0..d + delta {
                    table.insert(k, (a + rng.random_range(0..d)) % t).unwrap();
                }
                ratios.push(table.total_insert_probes() as f64 / (delta * delta) as f64);
            }
        }
        let c = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(c >= 0.25, "fitted constant {c}");
    }
}
