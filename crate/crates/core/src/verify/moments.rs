use serde::{Deserialize, Serialize};

use crate::coefficients::pairwise_mean;
use crate::error::{Error, Result};
use crate::measure::{moment, EmpiricalMeasure};
use crate::particle::{FlowOfMarginals, PathEnsemble};

use super::{bootstrap_se, linear_fit};

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn require_paths(ensemble: &PathEnsemble) -> Result<()> {
    if ensemble.is_empty() {
        Err(Error::Empty("path ensemble"))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    /// `mean_i max_k |X^i_k|^4`.
    pub sup_moment_estimate: f64,
    /// `mean |X_0|^4` of the supplied initial measure.
    pub initial_moment: f64,
    /// `sup_moment_estimate / (1 + initial_moment)`.
    pub ratio: f64,
    /// Bootstrap SE of `sup_moment_estimate`.
    pub standard_error: f64,
    pub ratio_standard_error: f64,
    pub paths: usize,
}

pub fn verify_fourth_moment(ensemble: &PathEnsemble, init: &EmpiricalMeasure<'_>) -> Result<MomentReport> {
    require_paths(ensemble)?;
    let sups: Vec<f64> = (0..ensemble.paths)
        .map(|i| {
            (0..=ensemble.steps)
                .map(|k| norm2(ensemble.state(i, k)).powi(2))
                .fold(0.0, f64::max)
        })
        .collect();
    let sup_moment = pairwise_mean(&sups);
    let initial = moment(init, 4.0)?;
    let se = bootstrap_se(&sups, ensemble.seed, pairwise_mean);
    Ok(MomentReport {
        sup_moment_estimate: sup_moment,
        initial_moment: initial,
        ratio: sup_moment / (1.0 + initial),
        standard_error: se,
        ratio_standard_error: se / (1.0 + initial),
        paths: ensemble.paths,
    })
}

/// Coordinate block used for increment statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Full,
    Degenerate,
    NonDegenerate,
}

impl Block {
    fn range(self, ensemble: &PathEnsemble) -> std::ops::Range<usize> {
        let n0 = ensemble.dims.degenerate();
        match self {
            Block::Full => 0..ensemble.dims.state(),
            Block::Degenerate => 0..n0,
            Block::NonDegenerate => n0..ensemble.dims.state(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncrementScalingReport {
    pub block: Block,
    pub lags: Vec<f64>,
    /// `max_k mean_i |X_{k+L} - X_k|^4` per lag.
    pub fourth_moments: Vec<f64>,
    pub slope: f64,
    /// `exp(intercept)` of the log-log fit.
    pub constant: f64,
}

/// Log-log fit of the worst-case fourth moment of increments against the lag.
pub fn verify_increment_scaling(
    ensemble: &PathEnsemble,
    lags: &[f64],
    block: Block,
) -> Result<IncrementScalingReport> {
    require_paths(ensemble)?;
    let mut distinct: Vec<usize> = Vec::with_capacity(lags.len());
    for &h in lags {
        let l = (h / ensemble.dt).round();
        if !(h > 0.0) || (l * ensemble.dt - h).abs() > 1e-9 * h.max(ensemble.dt) || l as usize > ensemble.steps {
            return Err(Error::InvalidParameter {
                name: "verify.lags",
                reason: format!("lag {h} is not a positive multiple of dt = {} within the horizon", ensemble.dt),
            });
        }
        distinct.push(l as usize);
    }
    let mut unique = distinct.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "verify.lags",
            reason: format!("need at least 3 distinct lags, got {}", unique.len()),
        });
    }
    let range = block.range(ensemble);
    if range.is_empty() {
        return Err(Error::Dims(format!("block {block:?} is empty")));
    }
    let mut m4 = Vec::with_capacity(unique.len());
    for &l in &unique {
        let mut worst: f64 = 0.0;
        let mut vals = vec![0.0; ensemble.paths];
        for k in 0..=ensemble.steps - l {
            for (i, v) in vals.iter_mut().enumerate() {
                let a = &ensemble.state(i, k)[range.clone()];
                let b = &ensemble.state(i, k + l)[range.clone()];
                let d2: f64 = a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum();
                *v = d2 * d2;
            }
            worst = worst.max(pairwise_mean(&vals));
        }
        if !(worst > 0.0) {
            return Err(Error::Precondition(format!(
                "fourth moment of increments at lag {} is {worst}; the log-log fit needs positive values",
                l as f64 * ensemble.dt
            )));
        }
        m4.push(worst);
    }
    let lags: Vec<f64> = unique.iter().map(|&l| l as f64 * ensemble.dt).collect();
    let lx: Vec<f64> = lags.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = m4.iter().map(|m| m.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    Ok(IncrementScalingReport {
        block,
        lags,
        fourth_moments: m4,
        slope,
        constant: intercept.exp(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub delta: f64,
    /// `mean_i exp(delta max_k |X^i_k|^2)`; infinite on overflow.
    pub mean: f64,
    pub standard_error: f64,
    /// Share of the mean carried by the largest 1% of paths.
    pub top_share: f64,
    /// Top 1% carries more than half the mean, or the mean overflowed.
    pub unstable: bool,
}

pub fn exp_moment_check(ensemble: &PathEnsemble, delta: f64) -> Result<ExpMomentReport> {
    require_paths(ensemble)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "verify.delta",
            reason: format!("must be positive, got {delta}"),
        });
    }
    let exps: Vec<f64> = (0..ensemble.paths)
        .map(|i| {
            delta * (0..=ensemble.steps).map(|k| norm2(ensemble.state(i, k))).fold(0.0, f64::max)
        })
        .collect();
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut scaled: Vec<f64> = exps.iter().map(|e| (e - top).exp()).collect();
    let log_mean = top + pairwise_mean(&scaled).ln();
    let mean = log_mean.exp();
    scaled.sort_by(|a, b| b.total_cmp(a));
    let k = scaled.len().div_ceil(100);
    let total: f64 = scaled.iter().sum();
    let top_share = scaled[..k].iter().sum::<f64>() / total;
    let overflow = !mean.is_finite();
    let standard_error = if overflow {
        f64::INFINITY
    } else {
        let vals: Vec<f64> = exps.iter().map(|e| e.exp()).collect();
        bootstrap_se(&vals, ensemble.seed ^ 0x5eed, pairwise_mean)
    };
    Ok(ExpMomentReport {
        delta,
        mean,
        standard_error,
        top_share,
        unstable: overflow || top_share > 0.5,
    })
}

/// `sum_k (mean_i |X^i_{t_k}|)^2 * dt_flow`.
pub fn integrability_sum(flow: &FlowOfMarginals) -> f64 {
    let h = flow.dt * flow.stride as f64;
    flow.clouds
        .iter()
        .take(flow.len().saturating_sub(1))
        .map(|c| {
            let norms: Vec<f64> = c.iter().map(|x| norm2(x).sqrt()).collect();
            let m = pairwise_mean(&norms);
            m * m * h
        })
        .sum()
}

/// `max_{i,k} |X^i_{k+1} - X^i_k|`.
pub fn max_increment(ensemble: &PathEnsemble) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..ensemble.paths {
        for k in 0..ensemble.steps {
            let a = ensemble.state(i, k);
            let b = ensemble.state(i, k + 1);
            let d: f64 = a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum();
            worst = worst.max(d.sqrt());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Dims;

    fn ensemble_from(paths: &[Vec<f64>], dt: f64) -> PathEnsemble {
        let dims = Dims::new(1, 1).unwrap();
        let steps = paths[0].len() - 1;
        let mut e = PathEnsemble::new(dims, dt, steps, 0, paths.len());
        e.trajectories = paths.concat();
        e
    }

    #[test]
    fn frozen_paths_moment() {
        let e = ensemble_from(&[vec![2.0; 5], vec![2.0; 5]], 0.25);
        let init = EmpiricalMeasure::scalars(vec![2.0]).unwrap();
        let r = verify_fourth_moment(&e, &init).unwrap();
        assert_eq!(r.sup_moment_estimate, 16.0);
        assert_eq!(r.ratio, 16.0 / 17.0);
        let x = exp_moment_check(&e, 0.1).unwrap();
        assert!((x.mean - (0.4f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn constant_drift_slope_four() {
        let dt = 0.125;
        let c = 3.0;
        let e = ensemble_from(&[(0..=8).map(|k| c * k as f64 * dt).collect()], dt);
        let r = verify_increment_scaling(&e, &[0.125, 0.25, 0.5], Block::Full).unwrap();
        assert!((r.slope - 4.0).abs() < 1e-12);
        assert!((r.constant - c.powi(4)).abs() < 1e-9);
    }

    #[test]
    fn lag_validation() {
        let e = ensemble_from(&[(0..=8).map(|k| k as f64).collect()], 0.125);
        assert!(verify_increment_scaling(&e, &[0.125, 0.25], Block::Full).is_err());
        assert!(verify_increment_scaling(&e, &[0.125, 0.25, 0.3], Block::Full).is_err());
        assert!(verify_increment_scaling(&e, &[0.125, 0.25, 2.0], Block::Full).is_err());
        let flat = ensemble_from(&[vec![1.0; 9]], 0.125);
        assert!(verify_increment_scaling(&flat, &[0.125, 0.25, 0.5], Block::Full).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let e = ensemble_from(&[vec![1e3; 3], vec![0.0; 3]], 0.5);
        let r = exp_moment_check(&e, 1.0).unwrap();
        assert!(r.unstable);
        assert!(r.mean.is_infinite());
    }

    #[test]
    fn integrability_of_constant_flow() {
        use crate::particle::ParticleCloud;
        let c = ParticleCloud::point_mass(0.0, &[3.0, 4.0], 2);
        let f = FlowOfMarginals::constant(&c, 0.1, 10);
        assert!((integrability_sum(&f) - 25.0).abs() < 1e-12);
    }
}
