//! Empirical checks of the quantitative estimates: fourth moments, increment
//! scaling, exponential moments, Girsanov densities and TV contraction.
//!
//! Every standard error is a bootstrap over paths with [`BOOTSTRAP_RESAMPLES`]
//! resamples and a seed derived from the run seed.

mod contraction;
mod girsanov;
mod moments;

pub use contraction::{
    contraction_experiment, picard_tv_history, tv_curve, ContractionReport, CONTRACTION_FACTOR,
};
pub use girsanov::{
    girsanov_density, girsanov_with_lambda, scheffe_check, GirsanovReport, ScheffeReport,
    CONDITION_LIMIT,
};
pub use moments::{
    exp_moment_check, integrability_sum, max_increment, verify_fourth_moment,
    verify_increment_scaling, Block, ExpMomentReport, IncrementScalingReport, MomentReport,
};

use crate::coefficients::pairwise_mean;
use crate::rng::{domain, StreamRng};

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Standard deviation of `stat` over bootstrap resamples of `values`.
pub fn bootstrap_se<F>(values: &[f64], seed: u64, stat: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut buf = vec![0.0; n];
    let stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|b| {
            let mut rng = StreamRng::new(seed, domain::BOOTSTRAP, b as u64, n as u64);
            for v in buf.iter_mut() {
                *v = values[rng.index(n)];
            }
            stat(&buf)
        })
        .collect();
    let mean = pairwise_mean(&stats);
    let var: Vec<f64> = stats.iter().map(|s| (s - mean) * (s - mean)).collect();
    (pairwise_mean(&var) * BOOTSTRAP_RESAMPLES as f64 / (BOOTSTRAP_RESAMPLES - 1) as f64).sqrt()
}

/// Least-squares fit `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = pairwise_mean(x);
    let my = pairwise_mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
