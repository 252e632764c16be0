use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::measure::{w1_distance, EmpiricalMeasure, DEFAULT_PROJECTIONS};

use super::cloud::{FlowOfMarginals, ParticleCloud};
use super::engine::{initial_cloud, simulate_linearized, SimConfig};
use super::init::InitialLaw;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub projections: usize,
    pub projection_seed: u64,
}

impl PicardOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            projections: DEFAULT_PROJECTIONS,
            projection_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PicardOutput {
    /// Final iterate, or the iterate closest to its predecessor if the
    /// tolerance was never met.
    pub flow: FlowOfMarginals,
    /// `history[k] = sup_t W1(mu^(k)_t, mu^(k+1)_t)`.
    pub history: Vec<f64>,
    /// Terminal cloud of every iterate, starting with `mu^(0)`.
    pub terminal_clouds: Vec<ParticleCloud>,
    pub converged: bool,
    /// Index `k + 1` of the returned iterate.
    pub selected: usize,
}

/// Sup over grid times of the (sliced) `W1` between two flows on one grid.
pub fn flow_distance(a: &FlowOfMarginals, b: &FlowOfMarginals, projections: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("flows have {} and {} clouds", a.len(), b.len())));
    }
    let mut sup: f64 = 0.0;
    for (ca, cb) in a.clouds.iter().zip(&b.clouds) {
        let d = w1_distance(
            &EmpiricalMeasure::from_cloud(ca)?,
            &EmpiricalMeasure::from_cloud(cb)?,
            projections,
            seed,
        )?;
        sup = sup.max(d);
    }
    Ok(sup)
}

/// Iterates `mu^(k+1) = law of the linearized SDE frozen at mu^(k)` from the
/// initial cloud held constant in time. Every iterate reuses the same seed,
/// so the map acts on common random numbers.
pub fn picard_fixed_point(
    field: &CoefficientField,
    init: &InitialLaw,
    cfg: &SimConfig,
    opts: &PicardOptions,
) -> Result<PicardOutput> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "picard.tol",
            reason: format!("must be positive, got {}", opts.tol),
        });
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidParameter {
            name: "picard.max_iter",
            reason: "must be at least 1".into(),
        });
    }
    let mut cfg = cfg.clone();
    cfg.flow_stride = 1;
    cfg.validate()?;

    let start = initial_cloud(init, field.dims().state(), &cfg)?;
    let mut prev = FlowOfMarginals::constant(&start, cfg.dt(), cfg.steps);

    let mut history = Vec::new();
    let mut terminal_clouds = vec![prev.last().clone()];
    let mut best: Option<(f64, usize, FlowOfMarginals)> = None;
    for k in 0..opts.max_iter {
        let (next, _) = simulate_linearized(field, init, &prev, &cfg.clone().with_paths(0))?;
        let d = flow_distance(&prev, &next, opts.projections, opts.projection_seed)?;
        history.push(d);
        terminal_clouds.push(next.last().clone());
        if d < opts.tol {
            return Ok(PicardOutput {
                flow: next,
                history,
                terminal_clouds,
                converged: true,
                selected: k + 1,
            });
        }
        if best.as_ref().is_none_or(|(b, _, _)| d < *b) {
            best = Some((d, k + 1, next.clone()));
        }
        prev = next;
    }
    let (_, selected, flow) = best.expect("at least one iterate");
    Ok(PicardOutput {
        flow,
        history,
        terminal_clouds,
        converged: false,
        selected,
    })
}
