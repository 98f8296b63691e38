//! Experiment identifiers and run configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable naming the default calibration cache directory.
pub const CACHE_DIR_ENV: &str = "KINDEP_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    #[serde(rename = "lp-2indep")]
    Lp2Indep,
    #[serde(rename = "lp-3indep")]
    Lp3Indep,
    #[serde(rename = "lp-4indep")]
    Lp4Indep,
    LpPolyK,
    MinwiseAdv,
    MinwisePolyK,
    MsLp,
    MsMinwise,
    Verify,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 9] = [
        Self::Lp2Indep,
        Self::Lp3Indep,
        Self::Lp4Indep,
        Self::LpPolyK,
        Self::MinwiseAdv,
        Self::MinwisePolyK,
        Self::MsLp,
        Self::MsMinwise,
        Self::Verify,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Lp2Indep => "lp-2indep",
            Self::Lp3Indep => "lp-3indep",
            Self::Lp4Indep => "lp-4indep",
            Self::LpPolyK => "lp-poly-k",
            Self::MinwiseAdv => "minwise-adv",
            Self::MinwisePolyK => "minwise-poly-k",
            Self::MsLp => "ms-lp",
            Self::MsMinwise => "ms-minwise",
            Self::Verify => "verify",
        }
    }

    /// Whether the ladder lists table sizes `t` (otherwise key counts `n`).
    pub fn ladder_is_table_size(&self) -> bool {
        matches!(self, Self::Lp2Indep | Self::Lp3Indep | Self::Lp4Indep | Self::LpPolyK)
    }

    pub fn default_ladder(&self) -> Vec<u64> {
        let pow = |range: std::ops::RangeInclusive<u32>, step: usize| range.step_by(step).map(|e| 1u64 << e).collect();
        match self {
            Self::Lp2Indep => pow(11..=17, 2),
            Self::Lp3Indep => pow(10..=17, 1),
            Self::Lp4Indep => pow(12..=16, 2),
            Self::LpPolyK => pow(10..=16, 1),
            Self::MinwiseAdv => vec![128, 256, 512],
            Self::MinwisePolyK => vec![64],
            Self::MsLp => pow(10..=18, 2),
            Self::MsMinwise => pow(6..=16, 2),
            Self::Verify => Vec::new(),
        }
    }

    pub fn default_trials(&self) -> usize {
        match self {
            Self::Lp2Indep | Self::Lp3Indep | Self::LpPolyK => 2000,
            Self::Lp4Indep => 2000,
            Self::MinwiseAdv => 2_600_000,
            Self::MinwisePolyK => 200_000,
            Self::MsLp | Self::MsMinwise => 500,
            Self::Verify => 1,
        }
    }

    pub fn default_load(&self) -> Option<f64> {
        match self {
            Self::LpPolyK => Some(1.0 / 3.0),
            Self::MsLp => Some(0.5),
            _ => None,
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub ladder: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    /// Load factor where the experiment takes one; fixed by the construction otherwise.
    pub load: Option<f64>,
    /// Independence of the polynomial family, or the minwise construction's `k`.
    pub k: Option<u64>,
    /// Output directory for the CSV and summary JSON.
    pub output: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    /// Holdout draws per calibrated level (lp-4indep).
    pub calibration_samples: u64,
    /// Importance sampling where the experiment supports it.
    pub importance: bool,
    /// ms-lp: add a uniform offset `b`.
    pub with_offset: bool,
    /// ms-lp: allow even multipliers (disables importance sampling).
    pub allow_even: bool,
    /// Bootstrap replicates for slopes and classification.
    pub bootstrap: usize,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId) -> Self {
        Self {
            experiment,
            ladder: experiment.default_ladder(),
            trials: experiment.default_trials(),
            seed: 1,
            load: experiment.default_load(),
            k: None,
            output: None,
            cache_dir: std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from),
            calibration_samples: 16_000,
            importance: true,
            with_offset: false,
            allow_even: false,
            bootstrap: 200,
        }
    }

    pub fn with_ladder(mut self, ladder: Vec<u64>) -> Self {
        self.ladder = ladder;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.experiment != ExperimentId::Verify && self.ladder.is_empty() {
            return bad("empty size ladder".into());
        }
        if self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("ladder {:?} is not strictly increasing", self.ladder));
        }
        if let Some(load) = self.load {
            if !(load > 0.0 && load < 1.0) {
                return bad(format!("load {load} must lie in (0, 1)"));
            }
        }
        if self.bootstrap < 10 {
            return bad("need at least 10 bootstrap replicates".into());
        }
        let needs_pow2 = self.experiment.ladder_is_table_size()
            || matches!(self.experiment, ExperimentId::MsLp | ExperimentId::MsMinwise);
        if needs_pow2 {
            if let Some(&s) = self.ladder.iter().find(|s| !s.is_power_of_two()) {
                return Err(Error::NotPowerOfTwo(s));
            }
        }
        match self.experiment {
            ExperimentId::Lp2Indep => {
                if let Some(&t) = self.ladder.iter().find(|&&t| t < 128 || t.trailing_zeros() % 2 == 0) {
                    return bad(format!("lp-2indep needs t = 2 * 4^j >= 128, got {t}"));
                }
            }
            ExperimentId::Lp4Indep => {
                if let Some(&t) = self.ladder.iter().find(|&&t| t < 1 << 12) {
                    return bad(format!("lp-4indep needs t >= 2^12, got {t}"));
                }
                if self.calibration_samples < 100 {
                    return bad("calibration needs at least 100 samples".into());
                }
            }
            ExperimentId::LpPolyK => {
                if self.k == Some(0) {
                    return bad("k must be at least 1".into());
                }
            }
            ExperimentId::MinwiseAdv => {
                let k = self.k.unwrap_or(2);
                if k == 0 || k % 2 == 1 {
                    return bad(format!("minwise-adv needs even k, got {k}"));
                }
                if let Some(&n) = self.ladder.iter().find(|&&n| n % k != 0 || n < 2 * k) {
                    return bad(format!("minwise-adv needs k | n and n >= 2k, got n = {n}"));
                }
            }
            ExperimentId::MinwisePolyK => {
                if self.k.is_some_and(|k| !(1..=8).contains(&k)) {
                    return bad("minwise-poly-k takes k in 1..=8".into());
                }
            }
            ExperimentId::MsLp => {
                let load = self.load.unwrap_or(0.5);
                if load > 2.0 / 3.0 {
                    return bad(format!("ms-lp load {load} exceeds 2/3"));
                }
                for &n in &self.ladder {
                    let t = n as f64 / load;
                    if t.fract() != 0.0 || !(t as u64).is_power_of_two() || t >= 2f64.powi(64) {
                        return bad(format!("ms-lp needs n / load a power of two below 2^64, got {t}"));
                    }
                }
                if self.importance && self.allow_even {
                    return bad("importance sampling covers odd multipliers only".into());
                }
            }
            ExperimentId::MsMinwise => {
                if self.ladder.iter().any(|&n| !(2..1 << 32).contains(&n)) {
                    return bad("ms-minwise needs 2 <= n < 2^32".into());
                }
            }
            ExperimentId::Lp3Indep => {
                if let Some(&t) = self.ladder.iter().find(|&&t| t < 16) {
                    return bad(format!("lp-3indep needs t >= 16, got {t}"));
                }
            }
            ExperimentId::Verify => {}
        }
        Ok(())
    }

    /// Digest of every field that influences results; output locations are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.cache_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
