//! Calibration of the statistical tests and sampled-versus-exact agreement.

use kindep::adv_lp::{solve_3indep_mix, SplitStrategy};
use kindep::adv_minwise::{pmin_exact, sample_query_interval, MinwiseConfig};
use kindep::indep_verify::{empirical_pk, joint_cell_test, node_left_bits, sample_mix_left};
use kindep::rational::to_f64;
use kindep::rng::stream_rng;
use kindep::stats::{wilson_interval, MeanCi};
use rand::Rng;

const REPS: u64 = 1000;
const ALPHA: f64 = 0.05;

fn rejection_rate_matches(rejections: u64) {
    let (lo, hi) = wilson_interval(rejections, REPS, 0.999);
    assert!(lo <= ALPHA && ALPHA <= hi, "{rejections} rejections in {REPS} at alpha {ALPHA}");
}

#[test]
fn chi_square_false_positive_rate_on_random_cells() {
    let mut rng = stream_rng(21, 0);
    let rejections = (0..REPS)
        .filter(|_| !joint_cell_test(|r| vec![r.random_range(0..4), r.random_range(0..4)], 2, 4, 2000, ALPHA, &mut rng).passed)
        .count() as u64;
    rejection_rate_matches(rejections);
}

#[test]
fn pk_false_positive_rate_on_random_splits() {
    let mut rng = stream_rng(22, 0);
    let rejections = (0..REPS)
        .filter(|_| {
            let sample = |r: &mut _| node_left_bits(SplitStrategy::Random.sample_left(16, r), 16, 3, r);
            !empirical_pk(sample, 3, 4000, None, ALPHA, &mut rng).passed
        })
        .count() as u64;
    rejection_rate_matches(rejections);
}

#[test]
fn sampled_mix_matches_exact_second_moment() {
    let two_m = 16u64;
    let p = to_f64(&solve_3indep_mix(two_m).unwrap());
    let mix = [(SplitStrategy::Collect, p), (SplitStrategy::Even, 1.0 - p)];
    let mut rng = stream_rng(23, 0);
    let dev: Vec<f64> = (0..400_000).map(|_| (sample_mix_left(&mix, two_m, &mut rng) as f64 - 8.0).powi(2)).collect();
    let ci = MeanCi::from_samples(&dev, 0.999);
    assert!(ci.contains(4.0), "{ci:?}");
}

#[test]
fn sampled_exact_interval_matches_pmin() {
    for k in [2u64, 4] {
        let c = MinwiseConfig::standard(16 * k, k).unwrap();
        let mut rng = stream_rng(24, k);
        let (mut n, mut hits) = (0u64, 0u64);
        while n < 200_000 {
            let (z, q, values) = sample_query_interval(&c, &mut rng);
            if z as u64 == k {
                n += 1;
                hits += u64::from(values.iter().all(|&v| q < v));
            }
        }
        let (lo, hi) = wilson_interval(hits, n, 0.999);
        let exact = to_f64(&pmin_exact(k).unwrap());
        assert!(lo <= exact && exact <= hi, "k = {k}: [{lo}, {hi}] vs {exact}");
    }
}
