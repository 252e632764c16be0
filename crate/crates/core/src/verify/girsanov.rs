use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{pairwise_mean, CoefficientField, MeanField, MeanFieldWorkspace};
use crate::error::{Error, Result};
use crate::measure::{weighted_tv_distance, EmpiricalMeasure, HistogramGrid};
use crate::particle::{FlowOfMarginals, ParticleCloud, PathEnsemble};

use super::bootstrap_se;

/// Largest accepted condition number of `sigma1`.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GirsanovReport {
    /// `log gamma_T` per path.
    pub log_gamma: Vec<f64>,
    pub mean_gamma: f64,
    pub se_gamma: f64,
    pub mean_gamma_sq: f64,
    pub se_gamma_sq: f64,
    /// `max_{i,k} |lambda^i_k|`.
    pub lambda_sup: f64,
    pub all_positive: bool,
}

impl GirsanovReport {
    pub fn gamma(&self) -> Vec<f64> {
        self.log_gamma.iter().map(|l| l.exp()).collect()
    }
}

/// `sigma^-1 rhs`; the error carries the condition number.
pub(crate) fn solve_sigma(sigma: &[f64], d: usize, rhs: &[f64], out: &mut [f64]) -> std::result::Result<(), f64> {
    if d == 1 {
        let s = sigma[0];
        if s == 0.0 || !s.is_finite() {
            return Err(f64::INFINITY);
        }
        out[0] = rhs[0] / s;
        return Ok(());
    }
    let m = DMatrix::from_row_slice(d, d, sigma);
    let sv = m.clone().singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
    let condition = hi / lo;
    if !(condition.is_finite() && condition <= CONDITION_LIMIT) {
        return Err(condition);
    }
    let x = m
        .lu()
        .solve(&nalgebra::DVector::from_column_slice(rhs))
        .ok_or(f64::INFINITY)?;
    out.copy_from_slice(x.as_slice());
    Ok(())
}

fn summarize(log_gamma: Vec<f64>, lambda_sup: f64, seed: u64) -> GirsanovReport {
    let gamma: Vec<f64> = log_gamma.iter().map(|l| l.exp()).collect();
    let gamma_sq: Vec<f64> = gamma.iter().map(|g| g * g).collect();
    GirsanovReport {
        mean_gamma: pairwise_mean(&gamma),
        se_gamma: bootstrap_se(&gamma, seed, pairwise_mean),
        mean_gamma_sq: pairwise_mean(&gamma_sq),
        se_gamma_sq: bootstrap_se(&gamma_sq, seed, pairwise_mean),
        all_positive: gamma.iter().all(|g| *g > 0.0),
        lambda_sup,
        log_gamma,
    }
}

/// `log gamma = -sum_k lambda_k . dW_k - 1/2 sum_k |lambda_k|^2 dt` with
/// left-point evaluation, for a caller-supplied `lambda(scratch, k, t, x, out)`.
fn accumulate<S, M, L>(paths: &PathEnsemble, make: M, lambda: L) -> Result<GirsanovReport>
where
    M: Fn() -> S + Sync,
    L: Fn(&mut S, usize, f64, &[f64], &mut [f64]) -> Result<()> + Sync,
{
    if paths.is_empty() {
        return Err(Error::Empty("path ensemble"));
    }
    let d = paths.dims.noise();
    let dt = paths.dt;
    let per_path: Result<Vec<(f64, f64)>> = (0..paths.paths)
        .into_par_iter()
        .map_init(
            || (make(), vec![0.0; d]),
            |(scratch, lam), i| {
                let mut log_g = 0.0;
                let mut sup: f64 = 0.0;
                for k in 0..paths.steps {
                    lambda(scratch, k, k as f64 * dt, paths.state(i, k), lam)?;
                    let dw = paths.increment(i, k);
                    let dot: f64 = lam.iter().zip(dw).map(|(a, b)| a * b).sum();
                    let sq: f64 = lam.iter().map(|a| a * a).sum();
                    log_g += -dot - 0.5 * sq * dt;
                    sup = sup.max(sq.sqrt());
                }
                Ok((log_g, sup))
            },
        )
        .collect();
    let per_path = per_path?;
    let lambda_sup = per_path.iter().map(|p| p.1).fold(0.0, f64::max);
    let log_gamma = per_path.into_iter().map(|p| p.0).collect();
    Ok(summarize(log_gamma, lambda_sup, paths.seed))
}

/// Density for an arbitrary adapted `lambda(t, x)`, evaluated along stored
/// paths. `lambda` writes `d` values.
pub fn girsanov_with_lambda<F>(paths: &PathEnsemble, lambda: F) -> Result<GirsanovReport>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    accumulate(paths, || (), |_, _, t, x, out| {
        lambda(t, x, out);
        Ok(())
    })
}

pub(crate) fn check_structure(field: &CoefficientField) -> Result<()> {
    match field.law_independence_violation() {
        None => Ok(()),
        Some(which) => Err(Error::Precondition(format!(
            "{which} must not depend on the measure (set measure_free_{} on a law-independent coefficient)",
            if which == "b0" { "b0" } else { "sigma" }
        ))),
    }
}

pub(crate) fn check_flow(flow: &FlowOfMarginals, steps: usize, dt: f64, which: &str) -> Result<()> {
    if flow.stride != 1 || flow.steps() != steps || (flow.dt - dt).abs() > 1e-12 * dt {
        return Err(Error::GridMismatch(format!(
            "{which}: {} clouds at stride {} and dt {}, expected {} at stride 1 and dt {dt}",
            flow.len(),
            flow.stride,
            flow.dt,
            steps + 1
        )));
    }
    Ok(())
}

/// Density of the law change that turns the `mu1`-driven paths into
/// solutions driven by `mu2`, with
/// `lambda = sigma1^-1 (B1(mu1) - B1(mu2))` evaluated along `paths`.
///
/// `paths` must be simulated against `mu1`.
pub fn girsanov_density(
    paths: &PathEnsemble,
    field: &CoefficientField,
    mu1: &FlowOfMarginals,
    mu2: &FlowOfMarginals,
) -> Result<GirsanovReport> {
    check_structure(field)?;
    check_flow(mu1, paths.steps, paths.dt, "flow 1")?;
    check_flow(mu2, paths.steps, paths.dt, "flow 2")?;
    let dims = field.dims();
    let d = dims.noise();
    accumulate(
        paths,
        || {
            (
                MeanFieldWorkspace::new(),
                MeanField::zeros(dims),
                MeanField::zeros(dims),
                vec![0.0; d],
            )
        },
        |(ws, m1, m2, diff), k, t, x, out| {
            let c1 = &mu1.clouds[k];
            let c2 = &mu2.clouds[k];
            ws.evaluate(field, t, x, c1.iter(), c1.len(), m1);
            ws.evaluate(field, t, x, c2.iter(), c2.len(), m2);
            for r in 0..d {
                diff[r] = m1.b1[r] - m2.b1[r];
            }
            solve_sigma(&m1.sigma1, d, diff, out).map_err(|condition| Error::SingularDiffusion {
                step: k,
                particle: usize::MAX,
                condition,
            })
        },
    )
    .map_err(|e| match e {
        Error::SingularDiffusion { step, condition, .. } => {
            // locate the offending path deterministically
            let particle = (0..paths.paths)
                .find(|&i| {
                    let x = paths.state(i, step);
                    let mut s = vec![0.0; dims.sigma_len()];
                    field.sigma1(step as f64 * paths.dt, x, x, &mut s);
                    let mut o = vec![0.0; d];
                    solve_sigma(&s, d, &vec![0.0; d], &mut o).is_err()
                })
                .unwrap_or(0);
            Error::SingularDiffusion {
                step,
                particle,
                condition,
            }
        }
        other => other,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheffeReport {
    /// Binned TV between the `gamma`-reweighted cloud and the target cloud.
    pub tv_reweighted_vs_target: f64,
    /// Binned TV between the `gamma`-reweighted cloud and itself unweighted.
    pub tv_reweighted_vs_unweighted: f64,
    /// `2 sqrt(mean gamma^2 - 1)`, clamped at zero.
    pub bound: f64,
    pub bound_se: f64,
    /// `tv_reweighted_vs_target <= bound + 3 bound_se`.
    pub holds: bool,
    /// `tv_reweighted_vs_unweighted <= bound`.
    pub holds_exact_chain: bool,
}

fn scheffe_bound(gamma_sq: &[f64]) -> f64 {
    2.0 * (pairwise_mean(gamma_sq) - 1.0).max(0.0).sqrt()
}

/// Compares the reweighted law of `weighted` (one atom per path, weights
/// `gamma`) against `target`, and against `weighted` itself unweighted.
pub fn scheffe_check(
    weighted: &ParticleCloud,
    report: &GirsanovReport,
    target: &ParticleCloud,
    bins: Option<usize>,
    seed: u64,
) -> Result<ScheffeReport> {
    if weighted.len() != report.log_gamma.len() {
        return Err(Error::DimensionMismatch {
            expected: report.log_gamma.len(),
            got: weighted.len(),
            context: "reweighted cloud",
        });
    }
    let gamma = report.gamma();
    let gamma_sq: Vec<f64> = gamma.iter().map(|g| g * g).collect();
    let a = EmpiricalMeasure::from_cloud(weighted)?;
    let b = EmpiricalMeasure::from_cloud(target)?;
    let grid = HistogramGrid::covering(&[&a, &b], bins)?;
    let tv_target = weighted_tv_distance(&a, Some(&gamma), &b, None, &grid)?;
    let tv_self = weighted_tv_distance(&a, Some(&gamma), &a, None, &grid)?;
    let bound = scheffe_bound(&gamma_sq);
    let bound_se = bootstrap_se(&gamma_sq, seed, scheffe_bound);
    Ok(ScheffeReport {
        tv_reweighted_vs_target: tv_target,
        tv_reweighted_vs_unweighted: tv_self,
        bound,
        bound_se,
        holds: tv_target <= bound + 3.0 * bound_se,
        holds_exact_chain: tv_self <= bound,
    })
}
