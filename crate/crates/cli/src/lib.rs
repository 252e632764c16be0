//! Command-line front end: reads a run configuration, drives one
//! computation and writes its artifacts plus a manifest.
//!
//! Exit codes: `0` success, `2` configuration or validation error, `3`
//! numerical failure during the run.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mkv_core::ScenarioRegistry;

pub use config::RunConfig;
pub use error::CliError;
pub use manifest::{RunManifest, SCHEMA_VERSION};

#[derive(Debug, Clone, Parser)]
#[command(name = "mkvsim", version, about = "Particle simulation and checks for degenerate McKean-Vlasov SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate the particle system and write the flow and paths.
    Simulate(RunArgs),
    /// Picard iteration over flows of marginals.
    Picard(RunArgs),
    /// Moment, increment and terminal checks on stored paths.
    Verify(RunArgs),
    /// Girsanov density, contraction and Scheffe checks.
    Uniqueness(RunArgs),
    /// Build an epsilon-net and classify simulated paths.
    Net(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides `run.workers`.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Picard(_) => "picard",
            Command::Verify(_) => "verify",
            Command::Uniqueness(_) => "uniqueness",
            Command::Net(_) => "net",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Picard(a)
            | Command::Verify(a)
            | Command::Uniqueness(a)
            | Command::Net(a) => a,
        }
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub stdout: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs one command against `registry`.
pub fn run_with(cli: &Cli, registry: &ScenarioRegistry) -> Result<RunSummary, CliError> {
    let started_at = now();
    let args = cli.command.args();
    let (mut cfg, _) = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.run.workers = w;
    }
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    cfg.validate(registry)?;
    let workers = cfg.run.workers;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("invalid value for `run.workers`: {e}")))?;
    let mut ctx = commands::Ctx {
        out_dir: cfg.output.dir.clone(),
        cfg,
        registry,
        outputs: Default::default(),
        stdout: String::new(),
    };
    pool.install(|| match &cli.command {
        Command::Simulate(_) => commands::simulate(&mut ctx),
        Command::Picard(_) => commands::picard(&mut ctx),
        Command::Verify(_) => commands::verify(&mut ctx),
        Command::Uniqueness(_) => commands::uniqueness(&mut ctx),
        Command::Net(_) => commands::net(&mut ctx),
    })?;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        command: cli.command.name().into(),
        config_sha256: hex::encode(ctx.cfg.hash()),
        library_version: mkv_core::VERSION.into(),
        seed: ctx.cfg.sim.seed,
        workers,
        started_at,
        finished_at: now(),
        outputs: ctx.outputs.entries(),
    };
    ctx.outputs.commit(&ctx.out_dir, &manifest)?;
    Ok(RunSummary {
        out_dir: ctx.out_dir,
        manifest,
        stdout: ctx.stdout,
    })
}

/// Runs with the built-in scenarios and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match run_with(cli, &ScenarioRegistry::builtin()) {
        Ok(summary) => {
            print!("{}", summary.stdout);
            println!(
                "wrote {} files and {} to {}",
                summary.manifest.outputs.len(),
                RunManifest::file_name(&summary.manifest.command),
                summary.out_dir.display()
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
