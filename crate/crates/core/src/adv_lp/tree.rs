//! Distribution trees: a perfect binary tree over the table whose nodes split
//! their keys between the two children, level by level.
//!
//! Loads are propagated as plain counts. Leaves are single slots, so the last
//! level is the vector of per-slot hash counts. Key identities are a uniformly
//! random labelling on top of the counts (see [`Assignment::from_slot_counts`]),
//! which is the same as drawing a uniform subset at every node.

use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::strategy::{sample_fair_binomial, SplitStrategy};
use super::tables::{mix_tables, NodeMixes};
use super::Assignment;
use crate::error::{Error, Result};
use crate::probing::ProbeTable;

/// Stored keys for the 3-independent construction.
pub fn three_indep_n(t: u64) -> u64 {
    (2 * t).div_ceil(3)
}

/// Stored keys for the 4-independent construction.
pub fn four_indep_n(t: u64) -> u64 {
    2 * t / 3
}

fn log2_exact(t: u64) -> Result<u32> {
    if !t.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(t));
    }
    if t < 2 {
        return Err(Error::InvalidParameter("tree needs at least two slots".into()));
    }
    Ok(t.trailing_zeros())
}

#[inline]
fn split_with<R: Rng + ?Sized>(s: SplitStrategy, load: u32, rng: &mut R) -> u32 {
    s.sample_left(load as u64, rng) as u32
}

#[inline]
fn t1_choice<R: Rng + ?Sized>(mx: &NodeMixes, rng: &mut R) -> SplitStrategy {
    if rng.random::<f64>() < mx.p_collect {
        SplitStrategy::Collect
    } else {
        SplitStrategy::Even
    }
}

#[inline]
fn t2_choice<R: Rng + ?Sized>(mx: &NodeMixes, rng: &mut R) -> SplitStrategy {
    if rng.random::<f64>() < mx.p_skew {
        SplitStrategy::Skew
    } else {
        SplitStrategy::Even
    }
}

fn strategy_index(s: SplitStrategy) -> usize {
    match s {
        SplitStrategy::Even => 0,
        SplitStrategy::Collect => 1,
        SplitStrategy::Skew => 2,
        SplitStrategy::Random => 3,
    }
}

/// Importance tilt for the collect decision near the root.
///
/// On levels `< levels` a node collects with probability
/// `max(p, min(1/2, boost / 2^level))` instead of its balance probability `p`,
/// and the draw carries the likelihood ratio. Weighted averages stay unbiased
/// while the rare, expensive top-level collections are seen often.
///
/// With `defensive: None` every tilted level is tilted in every draw. With
/// `Some(a)` a draw is untilted with probability `a` and otherwise tilts one
/// uniformly chosen level; the weight is taken against the whole mixture and
/// is at most `1/a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectTilt {
    pub levels: u32,
    pub boost: f64,
    #[serde(default)]
    pub defensive: Option<f64>,
}

impl CollectTilt {
    /// Tilts every level where an untilted draw expects fewer than `boost`
    /// collections.
    pub fn for_keys(n: u64, boost: f64) -> Self {
        let mut levels = 0;
        while levels < 63 && 4f64.powi(levels as i32) < boost * n as f64 {
            levels += 1;
        }
        Self { levels, boost, defensive: None }
    }

    /// One tilted level per draw, mixed with the untilted law.
    pub fn mixture(n: u64, boost: f64, defensive: f64) -> Self {
        Self { defensive: Some(defensive), ..Self::for_keys(n, boost) }
    }

    fn collect_probability(&self, level: u32, p: f64) -> f64 {
        if level >= self.levels {
            return p;
        }
        p.max((self.boost / (1u64 << level) as f64).min(0.5))
    }
}

/// The 3-independent tree: every node mixes S1 and S2 with the exact balance.
#[derive(Debug, Clone)]
pub struct ThreeIndepTree {
    t: u64,
    n: u64,
    log_t: u32,
    tilt: Option<CollectTilt>,
}

/// Slot counts from one tree draw.
#[derive(Debug, Clone)]
pub struct TreeDraw {
    pub counts: Vec<u32>,
    /// Log likelihood ratio of the untilted law against the sampling law.
    pub log_weight: f64,
    /// Collect events per level.
    pub collects: Vec<u32>,
}

impl TreeDraw {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

impl ThreeIndepTree {
    pub fn new(t: u64) -> Result<Self> {
        Self::with_keys(t, three_indep_n(t))
    }

    pub fn with_keys(t: u64, n: u64) -> Result<Self> {
        let log_t = log2_exact(t)?;
        if n >= t {
            return Err(Error::InvalidParameter(format!("{n} keys do not fit a table of {t}")));
        }
        Ok(Self { t, n, log_t, tilt: None })
    }

    pub fn with_tilt(mut self, tilt: CollectTilt) -> Self {
        self.tilt = Some(tilt);
        self
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn tilt(&self) -> Option<CollectTilt> {
        self.tilt
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TreeDraw {
        let tables = mix_tables();
        // level whose tilt is active in this draw, for mixture tilts
        let active = match self.tilt {
            Some(CollectTilt { levels, defensive: Some(a), .. }) if levels > 0 && rng.random::<f64>() >= a => Some(rng.random_range(0..levels)),
            _ => None,
        };
        let mixture = self.tilt.and_then(|tl| tl.defensive);
        let mut cur = vec![self.n as u32];
        let mut next = Vec::with_capacity(self.t as usize);
        let mut log_weight = 0.0;
        // per level, log ratio of the tilted to the untilted law of its decisions
        let mut level_log_ratio = vec![0.0; self.tilt.map_or(0, |tl| tl.levels as usize)];
        let mut collects = vec![0u32; self.log_t as usize];
        for level in 0..self.log_t {
            next.clear();
            for &load in &cur {
                let left = if load < 2 {
                    split_with(SplitStrategy::Even, load, rng)
                } else {
                    let p = tables.get(load as u64).p_collect;
                    let tilted = self.tilt.map_or(p, |tl| tl.collect_probability(level, p));
                    let q = if mixture.is_some() && active != Some(level) { p } else { tilted };
                    let collect = rng.random::<f64>() < q;
                    if tilted != p {
                        let (num, den) = if collect { (p, tilted) } else { (1.0 - p, 1.0 - tilted) };
                        if mixture.is_some() {
                            level_log_ratio[level as usize] -= (num / den).ln();
                        } else {
                            log_weight += (num / den).ln();
                        }
                    }
                    if collect {
                        collects[level as usize] += 1;
                        split_with(SplitStrategy::Collect, load, rng)
                    } else {
                        split_with(SplitStrategy::Even, load, rng)
                    }
                };
                next.push(left);
                next.push(load - left);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        if let Some(a) = mixture {
            let k = level_log_ratio.len() as f64;
            if k > 0.0 {
                let density = a + (1.0 - a) / k * level_log_ratio.iter().map(|l| l.exp()).sum::<f64>();
                log_weight = -density.ln();
            }
        }
        TreeDraw { counts: cur, log_weight, collects }
    }
}

/// One untilted draw of the 3-independent tree with `ceil(2t/3)` keys.
pub fn sample_3indep_tree<R: Rng + ?Sized>(t: u64, rng: &mut R) -> Result<Assignment> {
    let draw = ThreeIndepTree::new(t)?.draw(rng);
    Ok(Assignment::from_slot_counts(&draw.counts, None, rng))
}

/// How the nodes of one level split when no stop is in force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeRule {
    /// T* at every node.
    TStar,
    /// T1 at the query node, T- with this T1 probability elsewhere.
    Window(f64),
    Random,
}

/// Level structure and calibrated T- probabilities of the 4-independent tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourIndepSchedule {
    pub t: u64,
    pub n: u64,
    pub log_t: u32,
    /// First window level, `ceil(2/3 log t)`.
    pub top_end: u32,
    /// Last window level, `floor(5/6 log t)`.
    pub window_end: u32,
    /// T1 probability of T- for window levels `top_end, top_end + 1, ...`.
    pub p_minus: Vec<f64>,
}

impl FourIndepSchedule {
    /// Schedule with no window level calibrated yet.
    pub fn uncalibrated(t: u64) -> Result<Self> {
        let log_t = log2_exact(t)?;
        let top_end = (2 * log_t).div_ceil(3);
        let window_end = 5 * log_t / 6;
        Ok(Self { t, n: four_indep_n(t), log_t, top_end, window_end, p_minus: Vec::new() })
    }

    pub fn new(t: u64, p_minus: Vec<f64>) -> Result<Self> {
        let mut s = Self::uncalibrated(t)?;
        if p_minus.len() > s.window_len() || p_minus.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(format!(
                "{} T- probabilities for a window of {} levels",
                p_minus.len(),
                s.window_len()
            )));
        }
        s.p_minus = p_minus;
        Ok(s)
    }

    pub fn window_levels(&self) -> RangeInclusive<u32> {
        self.top_end..=self.window_end
    }

    pub fn window_len(&self) -> usize {
        (self.window_end + 1).saturating_sub(self.top_end) as usize
    }

    pub fn is_complete(&self) -> bool {
        self.p_minus.len() == self.window_len()
    }

    /// First level whose rule is still missing.
    pub fn calibrated_through(&self) -> u32 {
        self.top_end + self.p_minus.len() as u32
    }

    pub fn rule(&self, level: u32) -> Result<NodeRule> {
        if level < self.top_end {
            Ok(NodeRule::TStar)
        } else if level <= self.window_end {
            self.p_minus
                .get((level - self.top_end) as usize)
                .map(|&p| NodeRule::Window(p))
                .ok_or(Error::CalibrationMissing { t: self.t, level })
        } else {
            Ok(NodeRule::Random)
        }
    }

    /// Hex digest over `t` and the exact bits of every probability.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.t.to_le_bytes());
        for p in &self.p_minus {
            h.update(p.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Strategy used at the query node of one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPathEvent {
    pub level: u32,
    pub load: u32,
    pub strategy: SplitStrategy,
}

#[derive(Debug, Clone)]
pub struct FourIndepSample {
    pub counts: Vec<u32>,
    pub query_slot: u64,
    pub trace: Vec<QueryPathEvent>,
    /// Per level, node counts by strategy in the order S1, S2, S3, random.
    pub level_strategies: Vec<[u64; 4]>,
    /// Level whose query node collected, if any.
    pub stopped_at: Option<u32>,
}

impl FourIndepSample {
    pub fn search_cost(&self) -> Result<u64> {
        Ok(ProbeTable::from_slot_counts(&self.counts)?.search_cost(self.query_slot))
    }

    pub fn to_assignment<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        Assignment::from_slot_counts(&self.counts, Some(self.query_slot), rng)
    }
}

/// Loads on some level of a partially run 4-independent tree.
#[derive(Debug, Clone)]
pub struct LevelState {
    pub level: u32,
    pub loads: Vec<u32>,
    pub query_node: usize,
    pub stopped: bool,
}

/// Full per-level audit collected while splitting.
#[derive(Default)]
struct Audit {
    trace: Vec<QueryPathEvent>,
    level_strategies: Vec<[u64; 4]>,
    stopped_at: Option<u32>,
}

/// Picks the strategy for one node under `rule`.
#[inline]
fn window_strategy<R: Rng + ?Sized>(rule: NodeRule, load: u32, is_query: bool, rng: &mut R) -> SplitStrategy {
    if load < 4 {
        return SplitStrategy::Random;
    }
    match rule {
        NodeRule::Random => SplitStrategy::Random,
        NodeRule::TStar => {
            let mx = mix_tables().get(load as u64);
            match mx.p_tstar {
                None => SplitStrategy::Random,
                Some(p) if rng.random::<f64>() < p => t1_choice(&mx, rng),
                Some(_) => t2_choice(&mx, rng),
            }
        }
        NodeRule::Window(p) => {
            let mx = mix_tables().get(load as u64);
            if is_query || rng.random::<f64>() < p {
                t1_choice(&mx, rng)
            } else {
                t2_choice(&mx, rng)
            }
        }
    }
}

fn split_level<R: Rng + ?Sized>(
    schedule: &FourIndepSchedule,
    state: &mut LevelState,
    query_slot: u64,
    next: &mut Vec<u32>,
    audit: Option<&mut Audit>,
    rng: &mut R,
) -> Result<()> {
    let rule = if state.stopped { NodeRule::Random } else { schedule.rule(state.level)? };
    let mut tally = [0u64; 4];
    let mut query_event = None;
    next.clear();
    for (i, &load) in state.loads.iter().enumerate() {
        let is_query = i == state.query_node;
        let s = window_strategy(rule, load, is_query, rng);
        let left = if s == SplitStrategy::Random {
            sample_fair_binomial(load as u64, rng) as u32
        } else {
            split_with(s, load, rng)
        };
        tally[strategy_index(s)] += 1;
        if is_query {
            query_event = Some(QueryPathEvent { level: state.level, load, strategy: s });
        }
        next.push(left);
        next.push(load - left);
    }
    let event = query_event.expect("query node exists on every level");
    let collected = !state.stopped && event.strategy == SplitStrategy::Collect;
    if let Some(a) = audit {
        a.trace.push(event);
        a.level_strategies.push(tally);
        if collected {
            a.stopped_at = Some(state.level);
        }
    }
    state.stopped |= collected;
    std::mem::swap(&mut state.loads, next);
    let bit = (schedule.log_t - state.level - 1) as u64;
    // the child holding the query is fixed by the next bit of its slot
    state.query_node = 2 * state.query_node + ((query_slot >> bit) & 1) as usize;
    state.level += 1;
    Ok(())
}

impl LevelState {
    fn root(schedule: &FourIndepSchedule) -> Self {
        Self { level: 0, loads: vec![schedule.n as u32], query_node: 0, stopped: false }
    }
}

/// Runs the tree from the root down to level `until`, returning the loads there
/// and the query node. Every level above `until` must have a rule.
pub fn run_to_level<R: Rng + ?Sized>(schedule: &FourIndepSchedule, query_slot: u64, until: u32, rng: &mut R) -> Result<LevelState> {
    let mut state = LevelState::root(schedule);
    let mut next = Vec::new();
    while state.level < until {
        split_level(schedule, &mut state, query_slot, &mut next, None, rng)?;
    }
    Ok(state)
}

/// One draw of the 4-independent tree. The query slot is uniform.
pub fn sample_4indep_tree<R: Rng + ?Sized>(schedule: &FourIndepSchedule, rng: &mut R) -> Result<FourIndepSample> {
    if !schedule.is_complete() {
        return Err(Error::CalibrationMissing { t: schedule.t, level: schedule.calibrated_through() });
    }
    let query_slot = rng.random_range(0..schedule.t);
    let mut state = LevelState::root(schedule);
    let mut next = Vec::with_capacity(schedule.t as usize);
    let mut audit = Audit::default();
    while state.level < schedule.log_t {
        split_level(schedule, &mut state, query_slot, &mut next, Some(&mut audit), rng)?;
    }
    debug_assert_eq!(state.query_node as u64, query_slot);
    Ok(FourIndepSample {
        counts: state.loads,
        query_slot,
        trace: audit.trace,
        level_strategies: audit.level_strategies,
        stopped_at: audit.stopped_at,
    })
}
