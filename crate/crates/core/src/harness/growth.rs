//! Growth-class selection for a cost series over a size ladder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::estimate::{PointSamples, PointEstimate};
use crate::error::{Error, Result};
use crate::stats::weighted_least_squares;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthLabel {
    Constant,
    Logarithmic,
    Sqrt,
    Linear,
}

impl GrowthLabel {
    pub const ALL: [GrowthLabel; 4] = [Self::Constant, Self::Logarithmic, Self::Sqrt, Self::Linear];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Logarithmic => "logarithmic",
            Self::Sqrt => "sqrt",
            Self::Linear => "linear",
        }
    }

    fn feature(&self, x: f64) -> f64 {
        match self {
            Self::Constant => 0.0,
            Self::Logarithmic => x.log2(),
            Self::Sqrt => x.sqrt(),
            Self::Linear => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GrowthVerdict {
    Label { label: GrowthLabel },
    Inconclusive { best: GrowthLabel, runner_up: GrowthLabel },
}

impl GrowthVerdict {
    pub fn label(&self) -> Option<GrowthLabel> {
        match self {
            Self::Label { label } => Some(*label),
            Self::Inconclusive { .. } => None,
        }
    }

    /// Either the label itself or an inconclusive verdict between the two.
    pub fn is_or_between(&self, a: GrowthLabel, b: GrowthLabel) -> bool {
        match *self {
            Self::Label { label } => label == a,
            Self::Inconclusive { best, runner_up } => (best == a && runner_up == b) || (best == b && runner_up == a),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Label { label } => label.name().to_string(),
            Self::Inconclusive { best, runner_up } => format!("inconclusive-{}-vs-{}", best.name(), runner_up.name()),
        }
    }
}

/// One fitted model `y = a + b f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub label: GrowthLabel,
    pub intercept: f64,
    pub slope: f64,
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: GrowthVerdict,
    /// Share of bootstrap replicates that picked the best label.
    pub confidence: f64,
    pub fits: Vec<ModelFit>,
    pub replicates: usize,
}

/// Replicates agreeing with the point fit needed for a definite label.
pub const CONFIDENCE: f64 = 0.8;
/// A two-parameter model must beat the constant by more than this many AIC units.
pub const PARSIMONY: f64 = 6.0;

/// Weighted fits of the four models, each growth slope clamped at zero so
/// that a falling series never reads as growth. The constant class also
/// admits a `1/x` finite-size correction, `y = a + b / x`, reported with `b`
/// as its slope.
pub fn fit_models(x: &[f64], y: &[f64], se: &[f64]) -> Vec<ModelFit> {
    // normalize so the weights do not depend on units
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let floor = se.iter().cloned().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { scale * 1e-9 };
    let w: Vec<f64> = se.iter().map(|s| (scale / s.max(floor)).powi(2)).collect();
    let yn: Vec<f64> = y.iter().map(|v| v / scale).collect();
    let sw: f64 = w.iter().sum();
    let mean = yn.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let chi_const: f64 = yn.iter().zip(&w).map(|(a, b)| b * (a - mean).powi(2)).sum();
    GrowthLabel::ALL
        .iter()
        .map(|&label| {
            if label == GrowthLabel::Constant {
                let inv: Vec<f64> = x.iter().map(|&v| 1.0 / v).collect();
                let decay = weighted_least_squares(&inv, &yn, &w);
                return if decay.rss + 4.0 < chi_const + 2.0 {
                    ModelFit { label, intercept: decay.intercept * scale, slope: decay.slope * scale, aic: decay.rss + 4.0 }
                } else {
                    ModelFit { label, intercept: mean * scale, slope: 0.0, aic: chi_const + 2.0 }
                };
            }
            let f: Vec<f64> = x.iter().map(|&v| label.feature(v)).collect();
            let fit = weighted_least_squares(&f, &yn, &w);
            if fit.slope <= 0.0 {
                ModelFit { label, intercept: mean * scale, slope: 0.0, aic: chi_const + 4.0 }
            } else {
                ModelFit { label, intercept: fit.intercept * scale, slope: fit.slope * scale, aic: fit.rss + 4.0 }
            }
        })
        .collect()
}

/// Label with the lowest AIC; the constant wins ties within [`PARSIMONY`].
pub fn pick(fits: &[ModelFit]) -> GrowthLabel {
    let constant = fits.iter().find(|f| f.label == GrowthLabel::Constant).expect("constant model");
    let best = fits.iter().filter(|f| f.label != GrowthLabel::Constant).min_by(|a, b| a.aic.total_cmp(&b.aic)).expect("growth model");
    if best.aic + PARSIMONY < constant.aic {
        best.label
    } else {
        GrowthLabel::Constant
    }
}

/// Picks a growth class for `points` (per-size trial data) against sizes `x`,
/// with bootstrap confidence over trials.
pub fn growth_classify<R: Rng + ?Sized>(x: &[f64], points: &[PointSamples], replicates: usize, rng: &mut R) -> Result<Classification> {
    if x.len() < 3 || x.len() != points.len() {
        return Err(Error::InvalidParameter(format!("need at least 3 ladder points with data, got {}", x.len())));
    }
    let estimates: Vec<PointEstimate> = points.iter().map(PointSamples::estimate).collect();
    let y: Vec<f64> = estimates.iter().map(|e| e.mean).collect();
    let se: Vec<f64> = estimates.iter().map(|e| e.se).collect();
    let fits = fit_models(x, &y, &se);
    let best = pick(&fits);
    let mut votes = [0usize; 4];
    for _ in 0..replicates {
        let boot: Vec<PointEstimate> = points.iter().map(|p| p.resample(rng).estimate()).collect();
        let by: Vec<f64> = boot.iter().map(|e| e.mean).collect();
        let bse: Vec<f64> = boot.iter().map(|e| e.se).collect();
        let label = pick(&fit_models(x, &by, &bse));
        votes[GrowthLabel::ALL.iter().position(|l| *l == label).expect("known label")] += 1;
    }
    let idx = GrowthLabel::ALL.iter().position(|l| *l == best).expect("known label");
    let confidence = if replicates == 0 { 1.0 } else { votes[idx] as f64 / replicates as f64 };
    let verdict = if confidence >= CONFIDENCE {
        GrowthVerdict::Label { label: best }
    } else {
        let runner_up = (0..4).filter(|&i| i != idx).max_by_key(|&i| votes[i]).map(|i| GrowthLabel::ALL[i]).expect("other labels");
        GrowthVerdict::Inconclusive { best, runner_up }
    };
    Ok(Classification { verdict, confidence, fits, replicates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic(f: impl Fn(f64) -> f64, noise: f64, seed: u64) -> (Vec<f64>, Vec<PointSamples>) {
        let mut rng = stream_rng(seed, 0);
        let x: Vec<f64> = (10..=16).map(|e| 2f64.powi(e)).collect();
        let points = x
            .iter()
            .map(|&v| {
                let d = Normal::new(f(v), noise).unwrap();
                PointSamples::plain((0..400).map(|_| d.sample(&mut rng)).collect())
            })
            .collect();
        (x, points)
    }

    #[test]
    fn synthetic_series_oracle() {
        let mut rng = stream_rng(99, 0);
        let cases: [(&dyn Fn(f64) -> f64, GrowthLabel); 4] = [
            (&|_| 5.0, GrowthLabel::Constant),
            (&|x: f64| 1.0 + 0.7 * x.log2(), GrowthLabel::Logarithmic),
            (&|x: f64| 0.05 * x.sqrt(), GrowthLabel::Sqrt),
            (&|x: f64| 2.0 + 0.001 * x, GrowthLabel::Linear),
        ];
        for (seed, (f, want)) in cases.into_iter().enumerate() {
            let (x, pts) = synthetic(f, 1.0, seed as u64);
            let c = growth_classify(&x, &pts, 200, &mut rng).unwrap();
            assert_eq!(c.verdict, GrowthVerdict::Label { label: want }, "{c:?}");
        }
    }

    #[test]
    fn constant_series_rarely_reads_as_growth() {
        let mut rng = stream_rng(5, 0);
        let mut wrong = 0;
        for seed in 0..40 {
            let (x, pts) = synthetic(|_| 3.0, 2.0, 100 + seed);
            let c = growth_classify(&x, &pts, 100, &mut rng).unwrap();
            if c.verdict.label().is_some_and(|l| l != GrowthLabel::Constant) {
                wrong += 1;
            }
        }
        assert!(wrong <= 4, "{wrong} of 40 constant series labelled as growth");
    }

    #[test]
    fn falling_series_is_not_growth() {
        let mut rng = stream_rng(6, 0);
        let (x, pts) = synthetic(|x: f64| 10.0 - x.log2() * 0.3, 0.5, 7);
        let c = growth_classify(&x, &pts, 100, &mut rng).unwrap();
        assert_eq!(c.verdict.label(), Some(GrowthLabel::Constant));
    }

    #[test]
    fn converging_series_is_constant() {
        let mut rng = stream_rng(8, 0);
        let (x, pts) = synthetic(|x: f64| 2.0 - 20.0 / x, 0.05, 9);
        let c = growth_classify(&x, &pts, 100, &mut rng).unwrap();
        assert_eq!(c.verdict.label(), Some(GrowthLabel::Constant), "{c:?}");
    }

    #[test]
    fn needs_three_points() {
        let mut rng = stream_rng(7, 0);
        let pts = vec![PointSamples::plain(vec![1.0, 2.0]); 2];
        assert!(growth_classify(&[1.0, 2.0], &pts, 10, &mut rng).is_err());
    }

    #[test]
    fn verdict_names() {
        let v = GrowthVerdict::Inconclusive { best: GrowthLabel::Logarithmic, runner_up: GrowthLabel::Sqrt };
        assert_eq!(v.name(), "inconclusive-logarithmic-vs-sqrt");
        assert!(v.is_or_between(GrowthLabel::Sqrt, GrowthLabel::Logarithmic));
        assert!(!v.is_or_between(GrowthLabel::Constant, GrowthLabel::Sqrt));
    }
}
