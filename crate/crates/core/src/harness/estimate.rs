//! Per-point estimates from trial data, with optional likelihood-ratio weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::stats::z_for;

/// Trial values at one ladder point. With weights, each value is an
/// observation under a tilted law and `weight` its likelihood ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSamples {
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl PointEstimate {
    pub fn ci(&self, level: f64) -> (f64, f64) {
        let hw = z_for(level) * self.se;
        (self.mean - hw, self.mean + hw)
    }
}

impl PointSamples {
    pub fn plain(values: Vec<f64>) -> Self {
        Self { values, weights: None }
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Self {
        assert_eq!(values.len(), weights.len());
        Self { values, weights: Some(weights) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Plain mean, or for weighted data `mean(w c) - beta (mean(w) - 1)` with
    /// the regression coefficient `beta` of `w c` on `w` (E[w] = 1).
    pub fn estimate(&self) -> PointEstimate {
        let n = self.values.len();
        if n == 0 {
            return PointEstimate { mean: f64::NAN, se: f64::NAN, n };
        }
        let nf = n as f64;
        let Some(w) = &self.weights else {
            let mean = self.values.iter().sum::<f64>() / nf;
            let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
            return PointEstimate { mean, se: (var / nf).sqrt(), n };
        };
        let y: Vec<f64> = self.values.iter().zip(w).map(|(c, w)| c * w).collect();
        let my = y.iter().sum::<f64>() / nf;
        let mw = w.iter().sum::<f64>() / nf;
        let cov = y.iter().zip(w).map(|(a, b)| (a - my) * (b - mw)).sum::<f64>();
        let var_w = w.iter().map(|b| (b - mw).powi(2)).sum::<f64>();
        let beta = if var_w > 0.0 { cov / var_w } else { 0.0 };
        let mean = my - beta * (mw - 1.0);
        let resid = y.iter().zip(w).map(|(a, b)| (a - my - beta * (b - mw)).powi(2)).sum::<f64>() / (nf - 2.0).max(1.0);
        PointEstimate { mean, se: (resid / nf).sqrt(), n }
    }

    /// Resamples trials with replacement, keeping value-weight pairs together.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let n = self.values.len();
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        Self {
            values: idx.iter().map(|&i| self.values[i]).collect(),
            weights: self.weights.as_ref().map(|w| idx.iter().map(|&i| w[i]).collect()),
        }
    }
}
