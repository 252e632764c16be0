use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::Result;
use crate::measure::{tv_distance, EmpiricalMeasure, HistogramGrid};
use crate::particle::{simulate_linearized, FlowOfMarginals, InitialLaw, ParticleCloud, PicardOutput, SimConfig};

use super::girsanov::{check_flow, check_structure, girsanov_density, solve_sigma};

/// Contraction holds once `2 sqrt(2 C T) < 1`, that is `T < 1 / (8 C)`.
pub const CONTRACTION_FACTOR: f64 = 8.0;

/// Atoms per measure used for the empirical sup of `|sigma1^-1 b1|`.
const SUP_ATOMS: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    /// `sup_{s <= t} TV` between the two output flows.
    pub v_curve: Vec<f64>,
    /// `sup_{s <= t} TV` between the two input flows.
    pub input_tv: Vec<f64>,
    /// Empirical sup of `|sigma1^-1 b1|` over simulated states.
    pub b1_sup: f64,
    /// Empirical sup of the Girsanov drift `|lambda|`.
    pub lambda_sup: f64,
    /// `3 b1_sup^2`.
    pub c_estimate: f64,
    /// `1 / (8 c_estimate)`.
    pub threshold_t: f64,
    /// `2 sqrt(exp(C t w(t)^2) - 1)`, `w` the input TV curve.
    pub bound_curve: Vec<f64>,
    /// `2 sqrt(exp(C t v(t)^2) - 1)`, the fixed-point form.
    pub self_bound_curve: Vec<f64>,
    pub satisfied: Vec<bool>,
    pub all_satisfied: bool,
}

fn tv_at(a: &ParticleCloud, b: &ParticleCloud, bins: Option<usize>) -> Result<f64> {
    let ma = EmpiricalMeasure::from_cloud(a)?;
    let mb = EmpiricalMeasure::from_cloud(b)?;
    let grid = HistogramGrid::covering(&[&ma, &mb], bins)?;
    tv_distance(&ma, &mb, &grid)
}

/// Running sup over the grid of the binned TV between two flows.
pub fn tv_curve(a: &FlowOfMarginals, b: &FlowOfMarginals, bins: Option<usize>) -> Result<Vec<f64>> {
    let mut sup: f64 = 0.0;
    a.clouds
        .iter()
        .zip(&b.clouds)
        .map(|(ca, cb)| {
            sup = sup.max(tv_at(ca, cb, bins)?);
            Ok(sup)
        })
        .collect()
}

/// Binned TV between the terminal clouds of consecutive Picard iterates.
pub fn picard_tv_history(out: &PicardOutput, bins: Option<usize>) -> Result<Vec<f64>> {
    out.terminal_clouds
        .windows(2)
        .map(|w| tv_at(&w[0], &w[1], bins))
        .collect()
}

fn bound(c: f64, t: f64, w: f64) -> f64 {
    2.0 * ((c * t * w * w).exp_m1()).max(0.0).sqrt()
}

fn b1_sup(field: &CoefficientField, states: &FlowOfMarginals, mu1: &FlowOfMarginals, mu2: &FlowOfMarginals) -> f64 {
    let dims = field.dims();
    let d = dims.noise();
    let mut sigma = vec![0.0; dims.sigma_len()];
    let mut b = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut sup: f64 = 0.0;
    for (k, cloud) in states.clouds.iter().enumerate() {
        let t = cloud.t;
        let atoms: Vec<&[f64]> = mu1.clouds[k]
            .iter()
            .take(SUP_ATOMS)
            .chain(mu2.clouds[k].iter().take(SUP_ATOMS))
            .collect();
        for x in cloud.iter() {
            field.sigma1(t, x, x, &mut sigma);
            for y in &atoms {
                field.b1(t, x, y, &mut b);
                if solve_sigma(&sigma, d, &b, &mut u).is_ok() {
                    sup = sup.max(u.iter().map(|v| v * v).sum::<f64>().sqrt());
                }
            }
        }
    }
    sup
}

/// Solves the linearized equation against `mu1` and against `mu2` with common
/// random numbers and compares the TV between the outputs with the Girsanov
/// bound built from the TV between the inputs.
pub fn contraction_experiment(
    field: &CoefficientField,
    init: &InitialLaw,
    mu1: &FlowOfMarginals,
    mu2: &FlowOfMarginals,
    cfg: &SimConfig,
    bins: Option<usize>,
) -> Result<ContractionReport> {
    check_structure(field)?;
    let mut cfg = cfg.clone();
    cfg.flow_stride = 1;
    cfg.validate()?;
    check_flow(mu1, cfg.steps, cfg.dt(), "flow 1")?;
    check_flow(mu2, cfg.steps, cfg.dt(), "flow 2")?;
    let paths = cfg.particles.min(if cfg.store_paths { cfg.stored_paths } else { cfg.particles });
    let run_cfg = cfg.clone().with_paths(paths);
    let (out1, paths1) = simulate_linearized(field, init, mu1, &run_cfg)?;
    let (out2, _) = simulate_linearized(field, init, mu2, &run_cfg)?;
    let girsanov = girsanov_density(&paths1, field, mu1, mu2)?;

    let v_curve = tv_curve(&out1, &out2, bins)?;
    let input_tv = tv_curve(mu1, mu2, bins)?;
    let sup = b1_sup(field, &out1, mu1, mu2);
    let c = 3.0 * sup * sup;
    let times = out1.times();
    let bound_curve: Vec<f64> = times.iter().zip(&input_tv).map(|(&t, &w)| bound(c, t, w)).collect();
    let self_bound_curve: Vec<f64> = times.iter().zip(&v_curve).map(|(&t, &v)| bound(c, t, v)).collect();
    let satisfied: Vec<bool> = v_curve.iter().zip(&bound_curve).map(|(v, b)| v <= b).collect();
    Ok(ContractionReport {
        all_satisfied: satisfied.iter().all(|s| *s),
        times,
        v_curve,
        input_tv,
        b1_sup: sup,
        lambda_sup: girsanov.lambda_sup,
        c_estimate: c,
        threshold_t: 1.0 / (CONTRACTION_FACTOR * c),
        bound_curve,
        self_bound_curve,
        satisfied,
    })
}
