use std::fmt::Write as _;

use mkv_core::coefficients::pairwise_mean;
use mkv_core::holder_net::{self, CoverageOptions, EpsNet, HolderBallSpec};
use mkv_core::io;
use mkv_core::measure::{tv_distance, w1_distance, EmpiricalMeasure, HistogramGrid};
use mkv_core::particle::{
    picard_fixed_point, simulate_linearized, simulate_mckean, simulate_two_copy, FlowOfMarginals,
    ParticleCloud, PathEnsemble, PicardOptions,
};
use mkv_core::verify::{
    contraction_experiment, exp_moment_check, girsanov_density, picard_tv_history, scheffe_check,
    verify_fourth_moment, verify_increment_scaling,
};
use mkv_core::ScenarioRegistry;
use num_bigint::BigUint;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{Outputs, SCHEMA_VERSION};

pub const FLOW_CSV: &str = "flow.csv";
pub const FLOW_CACHE: &str = "flow.bin";
pub const PATHS_CSV: &str = "paths.csv";
pub const PATHS_CACHE: &str = "paths.bin";

pub struct Ctx<'a> {
    pub cfg: RunConfig,
    pub registry: &'a ScenarioRegistry,
    pub out_dir: std::path::PathBuf,
    pub outputs: Outputs,
    /// Text printed to stdout after a successful run.
    pub stdout: String,
}

fn csv_bytes<F>(write: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> mkv_core::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn every(flow: &FlowOfMarginals, stride: usize) -> FlowOfMarginals {
    FlowOfMarginals {
        dt: flow.dt,
        stride: flow.stride * stride,
        clouds: flow.clouds.iter().step_by(stride).cloned().collect(),
    }
}

#[derive(Serialize)]
struct CloudStats {
    t: f64,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

fn cloud_stats(cloud: &ParticleCloud) -> CloudStats {
    let (mean, variance) = (0..cloud.dim())
        .map(|j| {
            let col = cloud.column(j);
            let m = pairwise_mean(&col);
            let dev: Vec<f64> = col.iter().map(|v| (v - m) * (v - m)).collect();
            (m, pairwise_mean(&dev))
        })
        .unzip();
    CloudStats {
        t: cloud.t,
        mean,
        variance,
    }
}

fn distance_series(
    a: &FlowOfMarginals,
    b: &FlowOfMarginals,
    bins: Option<usize>,
    projections: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), CliError> {
    let mut times = Vec::with_capacity(a.len());
    let mut tv = Vec::with_capacity(a.len());
    let mut w1 = Vec::with_capacity(a.len());
    for (ca, cb) in a.clouds.iter().zip(&b.clouds) {
        let ma = EmpiricalMeasure::from_cloud(ca)?;
        let mb = EmpiricalMeasure::from_cloud(cb)?;
        let grid = HistogramGrid::covering(&[&ma, &mb], bins)?;
        times.push(ca.t);
        tv.push(tv_distance(&ma, &mb, &grid)?);
        w1.push(w1_distance(&ma, &mb, projections, 0)?);
    }
    Ok((times, tv, w1))
}

impl Ctx<'_> {
    fn stage_flow(&mut self, csv: &str, cache: &str, flow: &FlowOfMarginals) -> Result<(), CliError> {
        if self.cfg.output.csv {
            let run_id = self.cfg.run.id.clone();
            self.outputs.add(csv, csv_bytes(|b| io::write_flow_csv(b, &run_id, flow))?);
        }
        if self.cfg.output.cache {
            let hash = self.cfg.artifact_hash();
            self.outputs.add(cache, csv_bytes(|b| io::write_flow_cache(b, &hash, flow))?);
        }
        Ok(())
    }

    fn stage_paths(&mut self, csv: &str, cache: &str, paths: &PathEnsemble) -> Result<(), CliError> {
        if paths.is_empty() {
            return Ok(());
        }
        if self.cfg.output.csv {
            let run_id = self.cfg.run.id.clone();
            self.outputs.add(csv, csv_bytes(|b| io::write_paths_csv(b, &run_id, paths))?);
        }
        // verify reads this cache, so it is written regardless of `output.cache`
        let hash = self.cfg.artifact_hash();
        self.outputs.add(cache, csv_bytes(|b| io::write_paths_cache(b, &hash, paths))?);
        Ok(())
    }
}

pub fn simulate(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let field = ctx.cfg.field(ctx.registry)?;
    let dims = field.dims();
    let init = ctx.cfg.initial_law(dims.state())?;
    let sim = ctx.cfg.sim_config();
    let mut summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "scenario": ctx.cfg.scenario_id()?,
        "state_dim": dims.state(),
        "noise_dim": dims.noise(),
        "particles": sim.particles,
        "steps": sim.steps,
        "dt": sim.dt(),
        "two_copy": ctx.cfg.sim.two_copy,
    });
    if ctx.cfg.sim.two_copy {
        let out = simulate_two_copy(&field, &init, &sim)?;
        ctx.stage_flow(FLOW_CSV, FLOW_CACHE, &out.flow_x)?;
        ctx.stage_flow("flow_copy.csv", "flow_copy.bin", &out.flow_y)?;
        ctx.stage_paths(PATHS_CSV, PATHS_CACHE, &out.paths_x)?;
        ctx.stage_paths("paths_copy.csv", "paths_copy.bin", &out.paths_y)?;
        let (t, tv, w1) = distance_series(&out.flow_x, &out.flow_y, None, ctx.cfg.picard.projections)?;
        ctx.outputs.add("distances.csv", csv_bytes(|b| io::write_distance_csv(b, &t, &tv, &w1))?);
        summary["terminal"] = json!(cloud_stats(out.flow_x.last()));
        summary["terminal_copy"] = json!(cloud_stats(out.flow_y.last()));
        summary["paths_stored"] = json!(out.paths_x.paths);
    } else {
        let (flow, paths) = simulate_mckean(&field, &init, &sim)?;
        ctx.stage_flow(FLOW_CSV, FLOW_CACHE, &flow)?;
        ctx.stage_paths(PATHS_CSV, PATHS_CACHE, &paths)?;
        summary["terminal"] = json!(cloud_stats(flow.last()));
        summary["paths_stored"] = json!(paths.paths);
    }
    ctx.outputs.add_json("simulate.json", &summary);
    let _ = writeln!(ctx.stdout, "simulated {} particles over {} steps", sim.particles, sim.steps);
    Ok(())
}

pub fn picard(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let field = ctx.cfg.field(ctx.registry)?;
    let init = ctx.cfg.initial_law(field.dims().state())?;
    let sim = ctx.cfg.sim_config();
    let p = &ctx.cfg.picard;
    let opts = PicardOptions {
        tol: p.tol,
        max_iter: p.max_iter,
        projections: p.projections,
        projection_seed: sim.seed,
    };
    let out = picard_fixed_point(&field, &init, &sim, &opts)?;
    let tv = picard_tv_history(&out, p.bins)?;
    let flow = every(&out.flow, sim.flow_stride);
    ctx.stage_flow(FLOW_CSV, FLOW_CACHE, &flow)?;
    let mut hist = String::from("iteration,w1_sup,tv_terminal\n");
    for (k, (w, t)) in out.history.iter().zip(&tv).enumerate() {
        let _ = writeln!(hist, "{},{w:e},{t:e}", k + 1);
    }
    ctx.outputs.add("picard_history.csv", hist.into_bytes());
    ctx.outputs.add_json(
        "picard.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "picard",
            "converged": out.converged,
            "selected": out.selected,
            "tol": opts.tol,
            "history": out.history,
            "tv_history": tv,
            "terminal": cloud_stats(out.flow.last()),
        }),
    );
    if out.converged {
        let _ = writeln!(ctx.stdout, "converged after {} iterations", out.selected);
    } else {
        eprintln!(
            "warning: no convergence within {} iterations; kept iterate {}",
            opts.max_iter, out.selected
        );
        let _ = writeln!(ctx.stdout, "not converged; kept iterate {}", out.selected);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    /// `abs`, `rel` or `min`.
    pub rule: &'static str,
    pub pass: bool,
}

impl Check {
    fn abs(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance: tol,
            rule: "abs",
            pass: (value - target).abs() <= tol,
        }
    }

    fn rel(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance: tol,
            rule: "rel",
            pass: ((value - target) / target).abs() <= tol,
        }
    }

    fn min(name: &str, value: f64, target: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target,
            tolerance: 0.0,
            rule: "min",
            pass: value >= target,
        }
    }
}

pub fn verify(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let path = ctx.out_dir.join(PATHS_CACHE);
    let file = std::fs::File::open(&path).map_err(|e| {
        CliError::Config(format!(
            "artifact {} is unavailable ({e}); run `simulate` with sim.paths > 0 first",
            path.display()
        ))
    })?;
    let ens = io::read_paths_cache(std::io::BufReader::new(file), &ctx.cfg.artifact_hash())?;
    let v = ctx.cfg.verify.clone();
    let init_cloud = ens.initial_cloud();
    let moment = verify_fourth_moment(&ens, &EmpiricalMeasure::from_cloud(&init_cloud)?)?;
    let mut checks = Vec::new();
    let increments = match &v.lags {
        Some(lags) => {
            let r = verify_increment_scaling(&ens, lags, v.block)?;
            if let Some(s) = v.expect_slope {
                checks.push(Check::abs("increment_slope", r.slope, s, v.slope_tol));
            }
            if let Some(m) = v.min_slope {
                checks.push(Check::min("increment_slope_min", r.slope, m));
            }
            if let Some(c) = v.expect_constant {
                checks.push(Check::rel("increment_constant", r.constant, c, v.constant_rel_tol));
            }
            Some(r)
        }
        None => None,
    };
    let exp_moment = v.exp_delta.map(|d| exp_moment_check(&ens, d)).transpose()?;
    if v.coordinate >= ens.dims.state() {
        return Err(CliError::Config(format!(
            "invalid value for `verify.coordinate`: {} but the state has {} coordinates",
            v.coordinate,
            ens.dims.state()
        )));
    }
    let terminal = ens.terminal_cloud().column(v.coordinate);
    let mean = pairwise_mean(&terminal);
    let dev: Vec<f64> = terminal.iter().map(|x| (x - mean) * (x - mean)).collect();
    let variance = pairwise_mean(&dev);
    let fourth: Vec<f64> = terminal.iter().map(|x| x.powi(4)).collect();
    let fourth = pairwise_mean(&fourth);
    if let Some(t) = v.expect_terminal_variance {
        checks.push(Check::rel("terminal_variance", variance, t, v.terminal_variance_rel_tol));
    }
    if let Some(t) = v.expect_terminal_fourth {
        checks.push(Check::rel("terminal_fourth_moment", fourth, t, v.terminal_fourth_rel_tol));
    }

    let mut csv = String::from("check,value,target,tolerance,rule,pass\n");
    let _ = writeln!(ctx.stdout, "{:<24} {:>14} {:>14} {:>10}  result", "check", "value", "target", "tol");
    for c in &checks {
        let _ = writeln!(
            csv,
            "{},{:e},{:e},{:e},{},{}",
            c.name, c.value, c.target, c.tolerance, c.rule, c.pass
        );
        let _ = writeln!(
            ctx.stdout,
            "{:<24} {:>14.6} {:>14.6} {:>10.4}  {}",
            c.name,
            c.value,
            c.target,
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    ctx.outputs.add_json(
        "verify.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "verify",
            "paths": ens.paths,
            "moment": moment,
            "increments": increments,
            "exp_moment": exp_moment,
            "terminal": {
                "coordinate": v.coordinate,
                "mean": mean,
                "variance": variance,
                "fourth_moment": fourth,
            },
            "checks": checks,
            "all_pass": checks.iter().all(|c| c.pass),
        }),
    );
    ctx.outputs.add("verify.csv", csv.into_bytes());
    Ok(())
}

pub fn uniqueness(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let field = ctx.cfg.field(ctx.registry)?;
    let n = field.dims().state();
    let init = ctx.cfg.initial_law(n)?;
    let u = ctx.cfg.uniqueness.clone();
    let mut sim = ctx.cfg.sim_config().with_flow_stride(1);
    let paths = if ctx.cfg.sim.paths > 0 { ctx.cfg.sim.paths } else { sim.particles };
    sim = sim.with_paths(paths);
    if let Some(why) = field.law_independence_violation() {
        return Err(mkv_core::Error::Precondition(format!(
            "the uniqueness argument needs a law-independent {why}"
        ))
        .into());
    }
    let flow_cfg = sim.clone().with_paths(0);
    let (mu1, _) = simulate_mckean(&field, &init, &flow_cfg)?;
    let mu2_seed = u.mu2_seed.unwrap_or(sim.seed.wrapping_add(1));
    let init2 = match &u.mu2_init {
        Some(law) => {
            law.validate()?;
            law.clone()
        }
        None => init.clone(),
    };
    let mu2 = if u.same_flow {
        mu1.clone()
    } else {
        let mut c = flow_cfg.clone();
        c.seed = mu2_seed;
        simulate_mckean(&field, &init2, &c)?.0
    };
    let contraction = contraction_experiment(&field, &init, &mu1, &mu2, &sim, u.bins)?;
    let (_, paths1) = simulate_linearized(&field, &init, &mu1, &sim)?;
    let girsanov = girsanov_density(&paths1, &field, &mu1, &mu2)?;
    let mut target_cfg = sim.clone();
    target_cfg.seed = sim.seed.wrapping_add(2);
    let (_, target) = simulate_linearized(&field, &init, &mu2, &target_cfg)?;
    let scheffe = scheffe_check(
        &paths1.terminal_cloud(),
        &girsanov,
        &target.terminal_cloud(),
        u.bins,
        sim.seed,
    )?;

    let mut csv = String::from("t,v,input_tv,bound,self_bound,satisfied\n");
    for k in 0..contraction.times.len() {
        let _ = writeln!(
            csv,
            "{:e},{:e},{:e},{:e},{:e},{}",
            contraction.times[k],
            contraction.v_curve[k],
            contraction.input_tv[k],
            contraction.bound_curve[k],
            contraction.self_bound_curve[k],
            contraction.satisfied[k]
        );
    }
    ctx.outputs.add("contraction.csv", csv.into_bytes());
    let (t, tv, w1) = distance_series(&mu1, &mu2, u.bins, ctx.cfg.picard.projections)?;
    ctx.outputs.add("distances.csv", csv_bytes(|b| io::write_distance_csv(b, &t, &tv, &w1))?);
    ctx.outputs.add_json(
        "uniqueness.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "uniqueness",
            "mu2_seed": if u.same_flow { sim.seed } else { mu2_seed },
            "target_seed": target_cfg.seed,
            "contraction": contraction,
            "girsanov": {
                "paths": girsanov.log_gamma.len(),
                "mean_gamma": girsanov.mean_gamma,
                "se_gamma": girsanov.se_gamma,
                "mean_gamma_sq": girsanov.mean_gamma_sq,
                "se_gamma_sq": girsanov.se_gamma_sq,
                "lambda_sup": girsanov.lambda_sup,
                "all_positive": girsanov.all_positive,
            },
            "scheffe": scheffe,
        }),
    );
    let _ = writeln!(
        ctx.stdout,
        "C = {:.6}, T* = {:.6}, bound satisfied at all times: {}",
        contraction.c_estimate, contraction.threshold_t, contraction.all_satisfied
    );
    Ok(())
}

fn element_rows(net: &EpsNet, limit: u64) -> Option<String> {
    if net.count > BigUint::from(limit) {
        return None;
    }
    let k = net.spec.dim;
    let per: Vec<Vec<i32>> = if net.zero_only {
        vec![vec![0; net.intervals + 1]]
    } else {
        net.iter_levels_1d().collect()
    };
    let total: usize = per.len().pow(k as u32);
    let times = net.node_times();
    let mut out = String::from("index,node,t");
    for c in 0..k {
        let _ = write!(out, ",x{c}");
    }
    out.push('\n');
    for index in 0..total {
        let mut rest = index;
        let mut levels = vec![Vec::new(); k];
        for c in (0..k).rev() {
            levels[c] = per[rest % per.len()].clone();
            rest /= per.len();
        }
        let values = net.node_values(&levels);
        for (i, t) in times.iter().enumerate() {
            let _ = write!(out, "{index},{i},{t:e}");
            for v in &values[i * k..(i + 1) * k] {
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        }
    }
    Some(out)
}

pub fn net(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let field = ctx.cfg.field(ctx.registry)?;
    let dims = field.dims();
    let init = ctx.cfg.initial_law(dims.state())?;
    let sim = ctx.cfg.sim_config();
    let paths = if ctx.cfg.sim.paths > 0 { ctx.cfg.sim.paths } else { sim.particles };
    let (_, ens) = simulate_mckean(&field, &init, &sim.clone().with_paths(paths))?;
    let h = ctx.cfg.holder.clone();
    let coords: Vec<usize> = match &h.coords {
        Some(c) => c.clone(),
        None if dims.degenerate() > 0 => (0..dims.degenerate()).collect(),
        None => (0..dims.state()).collect(),
    };
    let ens = ens.restrict(&coords)?;
    let (radius, source) = match h.h {
        Some(v) => (v, "config"),
        None => (holder_net::suggest_h(&ens, h.alpha, h.h_quantile), "quantile"),
    };
    let spec = HolderBallSpec::new(h.alpha, radius, sim.horizon, coords.len());
    let opts = CoverageOptions {
        refine: h.refine,
        h_quantile: h.h_quantile,
        max_log10_size: h.max_log10_size,
    };
    let report = holder_net::coverage_test(&ens, &spec, h.epsilon, &opts)?;
    let net = holder_net::build_net(&spec, h.epsilon, h.max_log10_size)?;
    ctx.outputs.add_json(
        "net.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "net",
            "coords": coords,
            "h_source": source,
            "net": net,
        }),
    );
    if let Some(rows) = element_rows(&net, h.export_limit) {
        ctx.outputs.add("net_elements.csv", rows.into_bytes());
    }
    ctx.outputs.add_json(
        "coverage.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "net",
            "coverage": report,
        }),
    );
    let _ = writeln!(
        ctx.stdout,
        "h = {:.6} ({source}), log10 size = {:.2}, covered {}/{} = {:.4} (target {:.4})",
        radius,
        net.log10_count,
        report.covered,
        report.paths_tested,
        report.covered_fraction,
        report.target_fraction
    );
    Ok(())
}
