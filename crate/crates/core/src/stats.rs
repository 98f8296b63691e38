//! Small statistics toolkit: intervals, goodness of fit, two-sample tests,
//! least squares and bootstrap.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided normal quantile for confidence `level`, e.g. 2.576 for 0.99.
pub fn z_for(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0)
}

/// Upper normal quantile at one-sided `level`.
pub fn z_one_sided(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(level)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Mean with a normal confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
}

impl MeanCi {
    pub fn from_samples(xs: &[f64], level: f64) -> Self {
        let m = mean(xs);
        let sd = std_dev(xs);
        let hw = z_for(level) * sd / (xs.len().max(1) as f64).sqrt();
        Self { mean: m, sd, n: xs.len(), lo: m - hw, hi: m + hw }
    }

    pub fn std_error(&self) -> f64 {
        self.sd / (self.n.max(1) as f64).sqrt()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, level: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = z_for(level);
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let hw = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - hw).max(0.0), (centre + hw).min(1.0))
}

/// Upper tail probability of a chi-square statistic.
pub fn chi_square_sf(stat: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(df).expect("positive degrees of freedom");
    (1.0 - d.cdf(stat)).clamp(0.0, 1.0)
}

/// Pearson statistic of `observed` against `expected_probs`, with `k - 1` degrees of freedom.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> (f64, f64, f64) {
    let total: u64 = observed.iter().sum();
    let stat = observed
        .iter()
        .zip(expected_probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum::<f64>();
    let df = (observed.len() - 1) as f64;
    (stat, df, chi_square_sf(stat, df))
}

/// Kolmogorov distribution tail `Q(lambda) = 2 sum (-1)^(j-1) exp(-2 j^2 lambda^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test: statistic `D` and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// Ordinary least squares `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub rss: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> LinearFit {
    weighted_least_squares(x, y, &vec![1.0; x.len()])
}

pub fn weighted_least_squares(x: &[f64], y: &[f64], w: &[f64]) -> LinearFit {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (c - intercept - slope * a).powi(2)).sum();
    LinearFit { intercept, slope, rss }
}

/// Percentile interval of `stat` over `reps` resamples of each group.
///
/// `groups[i]` are the trial values at ladder point `i`; each replicate resamples
/// every group with replacement and evaluates `stat` on the vector of group means.
pub fn bootstrap_group_means<R, F>(groups: &[Vec<f64>], reps: usize, level: f64, rng: &mut R, stat: F) -> (f64, f64)
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let mut values: Vec<f64> = (0..reps)
        .map(|_| {
            let means: Vec<f64> = groups
                .iter()
                .map(|g| {
                    let n = g.len();
                    (0..n).map(|_| g[rng.random_range(0..n)]).sum::<f64>() / n as f64
                })
                .collect();
            stat(&means)
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let at = |q: f64| values[((q * (reps - 1) as f64).round() as usize).min(reps - 1)];
    (at(alpha), at(1.0 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn quantiles() {
        assert!((z_for(0.99) - 2.5758).abs() < 1e-3);
        assert!((z_for(0.95) - 1.96).abs() < 1e-3);
        assert!((z_one_sided(0.99) - 2.3263).abs() < 1e-3);
    }

    #[test]
    fn wilson_contains_truth() {
        let (lo, hi) = wilson_interval(50, 100, 0.99);
        assert!(lo < 0.5 && hi > 0.5);
        let (lo, hi) = wilson_interval(0, 100, 0.99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
    }

    #[test]
    fn chi_square_tail_values() {
        // reference values of the chi-square upper tail
        assert!((chi_square_sf(3.841_458_8, 1.0) - 0.05).abs() < 1e-6);
        assert!((chi_square_sf(18.307_038, 10.0) - 0.05).abs() < 1e-6);
        let (_, df, p) = chi_square_gof(&[25, 25, 25, 25], &[0.25; 4]);
        assert_eq!(df, 3.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_detects_shift_only() {
        let mut rng = stream_rng(1, 1);
        let a: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c: Vec<f64> = b.iter().map(|x: &f64| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).1 > 0.01);
        assert!(ks_two_sample(&a, &c).1 < 1e-6);
        // ties across samples
        let d = vec![1.0, 1.0, 2.0, 2.0];
        assert_eq!(ks_two_sample(&d, &d).0, 0.0);
    }

    #[test]
    fn least_squares_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 0.5 * v).collect();
        let f = least_squares(&x, &y);
        assert!((f.slope - 0.5).abs() < 1e-12 && (f.intercept - 3.0).abs() < 1e-12 && f.rss < 1e-20);
    }

    #[test]
    fn bootstrap_interval_covers_slope() {
        let mut rng = stream_rng(2, 2);
        let groups: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..200).map(|_| i as f64 + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>())
            .collect();
        let x: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let (lo, hi) = bootstrap_group_means(&groups, 400, 0.99, &mut rng, |m| least_squares(&x, m).slope);
        assert!(lo < 1.0 && hi > 1.0 && hi - lo < 0.5, "({lo}, {hi})");
    }
}
