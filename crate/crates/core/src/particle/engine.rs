use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientField, MeanField, MeanFieldWorkspace};
use crate::error::{Error, Result};
use crate::rng::{domain, StreamRng};

use super::cloud::{FlowOfMarginals, ParticleCloud, PathEnsemble};
use super::init::InitialLaw;

/// How the measure argument is evaluated for each particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Interaction {
    /// Average over every particle of the interaction cloud.
    #[default]
    Exact,
    /// Average over `m` atoms drawn with replacement, per particle and step.
    Subsample { m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub particles: usize,
    pub horizon: f64,
    pub steps: usize,
    pub seed: u64,
    pub store_paths: bool,
    /// The first `stored_paths` particles are recorded in full.
    pub stored_paths: usize,
    /// Flow clouds are kept every `flow_stride` steps. Must divide `steps`.
    pub flow_stride: usize,
    pub interaction: Interaction,
}

impl SimConfig {
    pub fn new(particles: usize, horizon: f64, steps: usize, seed: u64) -> Self {
        Self {
            particles,
            horizon,
            steps,
            seed,
            store_paths: false,
            stored_paths: 0,
            flow_stride: 1,
            interaction: Interaction::Exact,
        }
    }

    pub fn with_paths(mut self, count: usize) -> Self {
        self.store_paths = count > 0;
        self.stored_paths = count;
        self
    }

    pub fn with_flow_stride(mut self, stride: usize) -> Self {
        self.flow_stride = stride;
        self
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.particles == 0 {
            return bad("sim.particles", "must be positive".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("sim.horizon", format!("must be positive, got {}", self.horizon));
        }
        if self.steps == 0 {
            return bad("sim.steps", "must be positive".into());
        }
        if self.store_paths && self.stored_paths > self.particles {
            return bad(
                "sim.stored_paths",
                format!("{} exceeds particle count {}", self.stored_paths, self.particles),
            );
        }
        if self.flow_stride == 0 || self.steps % self.flow_stride != 0 {
            return bad(
                "sim.flow_stride",
                format!("{} does not divide steps = {}", self.flow_stride, self.steps),
            );
        }
        if let Interaction::Subsample { m } = self.interaction {
            if m == 0 || m > self.particles {
                return bad("sim.interaction", format!("subsample size {m} outside 1..={}", self.particles));
            }
        }
        Ok(())
    }

    fn recorded_paths(&self) -> usize {
        if self.store_paths {
            self.stored_paths
        } else {
            0
        }
    }
}

struct StepCtx<'a> {
    field: &'a CoefficientField,
    t: f64,
    dt: f64,
    step: usize,
    interaction: &'a [f64],
    subsample: Option<(usize, u64, u64)>,
}

/// One Euler step of every particle; `noise` holds `N_p` rows of `d`.
fn advance(ctx: &StepCtx<'_>, cur: &[f64], next: &mut [f64], noise: &[f64]) -> Result<()> {
    let dims = ctx.field.dims();
    let n = dims.state();
    let n0 = dims.degenerate();
    let d = dims.noise();
    let atoms = ctx.interaction.len() / n;
    next.par_chunks_mut(n).enumerate().for_each_init(
        || (MeanFieldWorkspace::new(), MeanField::zeros(dims), Vec::<usize>::new()),
        |(ws, mf, idx), (i, row)| {
            let x = &cur[i * n..(i + 1) * n];
            match ctx.subsample {
                None => ws.evaluate(ctx.field, ctx.t, x, ctx.interaction.chunks_exact(n), atoms, mf),
                Some((m, seed, dom)) => {
                    let mut rng = StreamRng::new(seed, dom, i as u64, ctx.step as u64);
                    idx.clear();
                    idx.extend((0..m).map(|_| rng.index(atoms)));
                    let ys = idx.iter().map(|&j| &ctx.interaction[j * n..(j + 1) * n]);
                    ws.evaluate(ctx.field, ctx.t, x, ys, m, mf);
                }
            }
            for j in 0..n0 {
                row[j] = x[j] + mf.b0[j] * ctx.dt;
            }
            let dw = &noise[i * d..(i + 1) * d];
            for r in 0..d {
                let mut v = x[n0 + r] + mf.b1[r] * ctx.dt;
                for c in 0..d {
                    v += mf.sigma1[r * d + c] * dw[c];
                }
                row[n0 + r] = v;
            }
        },
    );
    if let Some(p) = next.iter().position(|v| !v.is_finite()) {
        return Err(Error::BlowUp {
            step: ctx.step + 1,
            particle: p / n,
        });
    }
    Ok(())
}

/// One Euler step of `cloud` with the measure argument read from
/// `interaction`. `noise` holds one `N(0, dt I_d)` row per particle.
pub fn step_euler(
    cloud: &ParticleCloud,
    interaction: &ParticleCloud,
    field: &CoefficientField,
    dt: f64,
    noise: &[f64],
) -> Result<ParticleCloud> {
    let dims = field.dims();
    for (got, context) in [(cloud.dim(), "cloud"), (interaction.dim(), "interaction cloud")] {
        if got != dims.state() {
            return Err(Error::DimensionMismatch {
                expected: dims.state(),
                got,
                context,
            });
        }
    }
    if interaction.is_empty() {
        return Err(Error::Empty("interaction cloud"));
    }
    if noise.len() != cloud.len() * dims.noise() {
        return Err(Error::DimensionMismatch {
            expected: cloud.len() * dims.noise(),
            got: noise.len(),
            context: "noise rows",
        });
    }
    let ctx = StepCtx {
        field,
        t: cloud.t,
        dt,
        step: 0,
        interaction: interaction.states(),
        subsample: None,
    };
    let mut next = vec![0.0; cloud.states().len()];
    advance(&ctx, cloud.states(), &mut next, noise)?;
    Ok(ParticleCloud::from_parts(cloud.t + dt, cloud.dim(), next))
}

fn initial_states(init: &InitialLaw, n: usize, cfg: &SimConfig, init_domain: u64) -> Result<Vec<f64>> {
    if init.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: init.dim(),
            context: "initial law",
        });
    }
    init.validate()?;
    let mut states = vec![0.0; cfg.particles * n];
    states
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| init.sample(cfg.seed, init_domain, i, row));
    Ok(states)
}

/// The time-0 cloud that [`simulate_mckean`] starts from.
pub fn initial_cloud(init: &InitialLaw, n: usize, cfg: &SimConfig) -> Result<ParticleCloud> {
    Ok(ParticleCloud::from_parts(0.0, n, initial_states(init, n, cfg, domain::INIT_X)?))
}

/// One particle system with its own initial and noise stream families.
struct System {
    states: Vec<f64>,
    next: Vec<f64>,
    noise: Vec<f64>,
    clouds: Vec<ParticleCloud>,
    ensemble: PathEnsemble,
    noise_domain: u64,
}

impl System {
    fn new(field: &CoefficientField, init: &InitialLaw, cfg: &SimConfig, init_domain: u64, noise_domain: u64) -> Result<Self> {
        let dims = field.dims();
        let states = initial_states(init, dims.state(), cfg, init_domain)?;
        let mut sys = Self {
            next: vec![0.0; states.len()],
            noise: vec![0.0; cfg.particles * dims.noise()],
            states,
            clouds: Vec::with_capacity(cfg.steps / cfg.flow_stride + 1),
            ensemble: PathEnsemble::new(dims, cfg.dt(), cfg.steps, cfg.seed, cfg.recorded_paths()),
            noise_domain,
        };
        sys.record(cfg, 0);
        Ok(sys)
    }

    fn record(&mut self, cfg: &SimConfig, k: usize) {
        let n = self.ensemble.dims.state();
        if k % cfg.flow_stride == 0 {
            self.clouds.push(ParticleCloud::from_parts(k as f64 * cfg.dt(), n, self.states.clone()));
        }
        for i in 0..self.ensemble.paths {
            let src = &self.states[i * n..(i + 1) * n];
            self.ensemble.state_mut(i, k).copy_from_slice(src);
        }
    }

    fn draw_noise(&mut self, cfg: &SimConfig, k: usize) {
        let d = self.ensemble.dims.noise();
        if d == 0 {
            return;
        }
        let scale = cfg.dt().sqrt();
        let (seed, dom) = (cfg.seed, self.noise_domain);
        self.noise.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            StreamRng::new(seed, dom, i as u64, k as u64).fill_normal(row, scale);
        });
        for i in 0..self.ensemble.paths {
            let src = &self.noise[i * d..(i + 1) * d];
            self.ensemble.increment_mut(i, k).copy_from_slice(src);
        }
    }

    fn advance(&mut self, field: &CoefficientField, cfg: &SimConfig, k: usize, interaction: Option<&[f64]>) -> Result<()> {
        let interaction = interaction.unwrap_or(&self.states);
        let subsample = match cfg.interaction {
            Interaction::Exact => None,
            Interaction::Subsample { m } => Some((m, cfg.seed, domain::SUBSAMPLE | (self.noise_domain << 8))),
        };
        let ctx = StepCtx {
            field,
            t: k as f64 * cfg.dt(),
            dt: cfg.dt(),
            step: k,
            interaction,
            subsample,
        };
        advance(&ctx, &self.states, &mut self.next, &self.noise)
    }

    fn commit(&mut self, cfg: &SimConfig, k: usize) {
        std::mem::swap(&mut self.states, &mut self.next);
        self.record(cfg, k + 1);
    }

    fn finish(self, cfg: &SimConfig) -> (FlowOfMarginals, PathEnsemble) {
        let flow = FlowOfMarginals {
            dt: cfg.dt(),
            stride: cfg.flow_stride,
            clouds: self.clouds,
        };
        (flow, self.ensemble)
    }
}

/// Self-interacting system: the measure argument at step `k` is the cloud
/// itself at the start of the step.
pub fn simulate_mckean(
    field: &CoefficientField,
    init: &InitialLaw,
    cfg: &SimConfig,
) -> Result<(FlowOfMarginals, PathEnsemble)> {
    cfg.validate()?;
    let mut sys = System::new(field, init, cfg, domain::INIT_X, domain::NOISE_X)?;
    for k in 0..cfg.steps {
        sys.draw_noise(cfg, k);
        sys.advance(field, cfg, k, None)?;
        sys.commit(cfg, k);
    }
    Ok(sys.finish(cfg))
}

fn check_frozen(frozen: &FlowOfMarginals, field: &CoefficientField, cfg: &SimConfig) -> Result<()> {
    let dt = cfg.dt();
    if frozen.stride != 1 || frozen.steps() != cfg.steps || (frozen.dt - dt).abs() > 1e-12 * dt {
        return Err(Error::GridMismatch(format!(
            "frozen flow has {} clouds at stride {} and dt {}; need {} clouds at stride 1 and dt {}",
            frozen.len(),
            frozen.stride,
            frozen.dt,
            cfg.steps + 1,
            dt
        )));
    }
    let n = field.dims().state();
    if let Some(c) = frozen.clouds.iter().find(|c| c.dim() != n || c.is_empty()) {
        return Err(Error::GridMismatch(format!(
            "frozen cloud at t = {} has {} particles of dimension {}",
            c.t,
            c.len(),
            c.dim()
        )));
    }
    Ok(())
}

/// Standard SDE whose measure argument at step `k` is `frozen.clouds[k]`.
///
/// Uses the same stream families as [`simulate_mckean`], so a field with no
/// measure dependence gives bit-identical output.
pub fn simulate_linearized(
    field: &CoefficientField,
    init: &InitialLaw,
    frozen: &FlowOfMarginals,
    cfg: &SimConfig,
) -> Result<(FlowOfMarginals, PathEnsemble)> {
    cfg.validate()?;
    check_frozen(frozen, field, cfg)?;
    let mut sys = System::new(field, init, cfg, domain::INIT_X, domain::NOISE_X)?;
    for k in 0..cfg.steps {
        sys.draw_noise(cfg, k);
        sys.advance(field, cfg, k, Some(frozen.clouds[k].states()))?;
        sys.commit(cfg, k);
    }
    Ok(sys.finish(cfg))
}

#[derive(Debug, Clone)]
pub struct TwoCopyOutput {
    pub flow_x: FlowOfMarginals,
    pub flow_y: FlowOfMarginals,
    pub paths_x: PathEnsemble,
    pub paths_y: PathEnsemble,
}

/// Two clouds with independent initial draws and drivers. The X step reads
/// its measure from Y and vice versa.
pub fn simulate_two_copy(field: &CoefficientField, init: &InitialLaw, cfg: &SimConfig) -> Result<TwoCopyOutput> {
    cfg.validate()?;
    let mut x = System::new(field, init, cfg, domain::INIT_X, domain::NOISE_X)?;
    let mut y = System::new(field, init, cfg, domain::INIT_Y, domain::NOISE_Y)?;
    for k in 0..cfg.steps {
        x.draw_noise(cfg, k);
        y.draw_noise(cfg, k);
        x.advance(field, cfg, k, Some(&y.states))?;
        y.advance(field, cfg, k, Some(&x.states))?;
        x.commit(cfg, k);
        y.commit(cfg, k);
    }
    let (flow_x, paths_x) = x.finish(cfg);
    let (flow_y, paths_y) = y.finish(cfg);
    Ok(TwoCopyOutput {
        flow_x,
        flow_y,
        paths_x,
        paths_y,
    })
}
