use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use mkv_cli::{run_with, Cli, CliError, RunSummary};
use mkv_core::coefficients::{CoefficientField, Dims};
use mkv_core::ScenarioRegistry;
use serde_json::Value;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn invoke(cmd: &str, config: &Path, out: &Path, extra: &[&str], reg: &ScenarioRegistry) -> Result<RunSummary, CliError> {
    let mut argv = vec![
        "mkvsim".to_string(),
        cmd.to_string(),
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    argv.extend(extra.iter().map(|s| s.to_string()));
    run_with(&Cli::try_parse_from(argv).unwrap(), reg)
}

fn builtin(cmd: &str, config: &Path, out: &Path) -> Result<RunSummary, CliError> {
    invoke(cmd, config, out, &[], &ScenarioRegistry::builtin())
}

fn json(path: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const LANGEVIN: &str = r#"
scenario.id = "langevin"
scenario.kappa = 0.0
sim.particles = 400
sim.horizon = 1.0
sim.steps = 100
sim.seed = 5
sim.paths = 400
sim.flow_stride = 50
"#;

#[test]
fn simulate_writes_listed_outputs_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", LANGEVIN);
    let out = dir.path().join("out");
    let s = builtin("simulate", &cfg, &out).unwrap();
    let mut listed: BTreeSet<String> = s.manifest.outputs.iter().map(|o| o.file.clone()).collect();
    assert!(listed.contains("flow.csv") && listed.contains("paths.bin"));
    listed.insert("manifest_simulate.json".into());
    let present: BTreeSet<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(present, listed);
    let csv = std::fs::read_to_string(out.join("flow.csv")).unwrap();
    assert!(csv.starts_with("run_id,path_id,step,t,x0,x1\n"));
    assert_eq!(csv.lines().count(), 1 + 400 * 3);
    let m = json(out.join("manifest_simulate.json"));
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["seed"], 5);
}

#[test]
fn missing_scenario_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "sim.particles = 10\n");
    let err = builtin("simulate", &cfg, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("scenario.id"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn blow_up_reports_the_step() {
    // x1' = 1e100 x1^3 overflows within a few steps from x1 = 1
    let mut reg = ScenarioRegistry::builtin();
    reg.register("stiff", |_| {
        Ok(CoefficientField::new(
            "stiff",
            Dims::new(1, 1)?,
            |_, _, _, _: &mut [f64]| {},
            |_, x: &[f64], _, o: &mut [f64]| o[0] = 1e100 * x[0].powi(3),
            |_, _, _, o: &mut [f64]| o[0] = 1.0,
        )
        .with_measure_free(true, true, true))
    });
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "scenario.id = \"stiff\"\nsim.particles = 4\nsim.steps = 20\ninit.kind = \"point_mass\"\ninit.z = [1.0]\n",
    );
    let err = invoke("simulate", &cfg, &dir.path().join("out"), &[], &reg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("at step"), "{err}");
}

#[test]
fn picard_on_a_measure_free_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "scenario.id = \"kinetic\"\nsim.particles = 100\nsim.steps = 20\npicard.tol = 1e-9\n",
    );
    let out = dir.path().join("out");
    builtin("picard", &cfg, &out).unwrap();
    let r = json(out.join("picard.json"));
    assert_eq!(r["history"][1], 0.0);
    assert_eq!(r["converged"], true);
    let zero = write_config(dir.path(), "z.toml", "scenario.id = \"kinetic\"\npicard.max_iter = 0\n");
    assert_eq!(builtin("picard", &zero, &out).unwrap_err().exit_code(), 2);
}

#[test]
fn picard_converges_below_the_contraction_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        r#"
scenario.id = "uniqueness"
sim.particles = 300
sim.horizon = 0.03
sim.steps = 30
picard.tol = 1e-4
picard.max_iter = 20
init.kind = "gaussian"
init.center = [0.0, 0.0]
init.std = [1.0, 1.0]
"#,
    );
    let out = dir.path().join("out");
    builtin("picard", &cfg, &out).unwrap();
    assert_eq!(json(out.join("picard.json"))["converged"], true);
}

#[test]
fn verify_brownian_increments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        r#"
scenario.id = "brownian"
sim.particles = 4000
sim.steps = 128
sim.paths = 4000
sim.flow_stride = 128
output.csv = false
verify.lags = [0.0078125, 0.015625, 0.03125, 0.0625, 0.125]
verify.expect_slope = 2.0
verify.slope_tol = 0.15
"#,
    );
    let out = dir.path().join("out");
    builtin("simulate", &cfg, &out).unwrap();
    let s = builtin("verify", &cfg, &out).unwrap();
    assert!(s.stdout.contains("PASS"), "{}", s.stdout);
    let r = json(out.join("verify.json"));
    assert_eq!(r["all_pass"], true, "{r}");
}

#[test]
fn verify_integrated_brownian_variance() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{LANGEVIN}sim.particles = 4000\nsim.paths = 4000\noutput.csv = false\nverify.expect_terminal_variance = {}\n",
        1.0 / 3.0
    )
    .replace("sim.particles = 400\n", "")
    .replace("sim.paths = 400\n", "");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    builtin("simulate", &cfg, &out).unwrap();
    builtin("verify", &cfg, &out).unwrap();
    let r = json(out.join("verify.json"));
    assert_eq!(r["all_pass"], true, "{r}");
}

#[test]
fn verify_rejects_bad_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", LANGEVIN);
    let out = dir.path().join("out");
    builtin("simulate", &cfg, &out).unwrap();
    let bin = out.join("paths.bin");
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes[1] ^= 0xff;
    std::fs::write(&bin, &bytes).unwrap();
    assert_eq!(builtin("verify", &cfg, &out).unwrap_err().exit_code(), 2);

    builtin("simulate", &cfg, &out).unwrap();
    let other = write_config(dir.path(), "o.toml", &LANGEVIN.replace("sim.seed = 5", "sim.seed = 6"));
    let err = builtin("verify", &other, &out).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("different configuration"));
}

const UNIQUENESS: &str = r#"
scenario.id = "uniqueness"
sim.particles = 300
sim.horizon = 0.03
sim.steps = 12
sim.paths = 300
init.kind = "gaussian"
init.center = [0.0, 0.0]
init.std = [1.0, 1.0]
"#;

#[test]
fn uniqueness_with_equal_flows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{UNIQUENESS}uniqueness.same_flow = true\n"));
    let out = dir.path().join("out");
    builtin("uniqueness", &cfg, &out).unwrap();
    let r = json(out.join("uniqueness.json"));
    let v = r["contraction"]["v_curve"].as_array().unwrap();
    assert!(v.iter().all(|x| x.as_f64() == Some(0.0)));
    assert_eq!(r["contraction"]["c_estimate"], 3.0);
}

#[test]
fn uniqueness_bound_holds_below_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", UNIQUENESS);
    let out = dir.path().join("out");
    builtin("uniqueness", &cfg, &out).unwrap();
    let r = json(out.join("uniqueness.json"));
    assert_eq!(r["contraction"]["all_satisfied"], true, "{}", r["contraction"]);
}

#[test]
fn uniqueness_needs_law_independent_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &UNIQUENESS.replace("\"uniqueness\"", "\"rough\""));
    let err = builtin("uniqueness", &cfg, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("sigma1"), "{err}");
}

#[test]
fn net_commands() {
    let dir = tempfile::tempdir().unwrap();
    let base = "scenario.id = \"langevin\"\nsim.particles = 200\nsim.steps = 64\nsim.paths = 200\n";
    let capped = write_config(
        dir.path(),
        "a.toml",
        &format!("{base}holder.h = 1.0\nholder.epsilon = 0.25\nholder.max_log10_size = 20.0\n"),
    );
    let err = builtin("net", &capped, &dir.path().join("a")).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("try epsilon"), "{err}");

    let small = write_config(dir.path(), "b.toml", &format!("{base}holder.h = 0.5\nholder.epsilon = 1.1\n"));
    let out = dir.path().join("b");
    builtin("net", &small, &out).unwrap();
    assert_eq!(json(out.join("net.json"))["net"]["count"], "1");
    assert!(out.join("net_elements.csv").exists());

    let cover = write_config(dir.path(), "c.toml", &format!("{base}holder.epsilon = 0.5\n"));
    let out = dir.path().join("c");
    builtin("net", &cover, &out).unwrap();
    let r = json(out.join("coverage.json"));
    assert!(r["coverage"]["covered_fraction"].as_f64().unwrap() > 0.9);
}

#[test]
fn worker_count_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", LANGEVIN);
    let reg = ScenarioRegistry::builtin();
    let a = invoke("simulate", &cfg, &dir.path().join("a"), &["--workers", "1"], &reg).unwrap();
    let b = invoke("simulate", &cfg, &dir.path().join("b"), &["--workers", "4"], &reg).unwrap();
    assert_eq!(a.manifest.outputs, b.manifest.outputs);
    assert_eq!(a.manifest.config_sha256, b.manifest.config_sha256);
    let c = invoke("simulate", &cfg, &dir.path().join("c"), &["--seed", "6"], &reg).unwrap();
    assert_ne!(a.manifest.outputs, c.manifest.outputs);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_mkvsim");
    let good = write_config(dir.path(), "g.toml", "scenario.id = \"kinetic\"\nsim.particles = 10\nsim.steps = 4\n");
    let bad = write_config(dir.path(), "b.toml", "scenario.id = \"nope\"\n");
    let run = |cfg: &Path| {
        Process::new(exe)
            .args(["simulate", "--config"])
            .arg(cfg)
            .arg("--out")
            .arg(dir.path().join("o"))
            .output()
            .unwrap()
    };
    assert_eq!(run(&good).status.code(), Some(0));
    let out = run(&bad);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.id"));
    let unknown = Process::new(exe).arg("frobnicate").output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));
}
