//! Run configuration.
//!
//! A config is a TOML document. Every key may be written dotted at top level
//! (`sim.particles = 1000`) or inside its table (`[sim]`). Unknown keys are
//! rejected. See the README for the full key list.

use std::path::{Path, PathBuf};

use mkv_core::particle::{InitialLaw, Interaction, SimConfig};
use mkv_core::verify::Block;
use mkv_core::{CoefficientField, MollifierSpec, ScenarioParams, ScenarioRegistry};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub sim: SimSection,
    /// Defaults to the point mass at the origin.
    pub init: Option<InitialLaw>,
    pub mollify: Option<MollifySection>,
    #[serde(default)]
    pub picard: PicardSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub holder: HolderSection,
    #[serde(default)]
    pub uniqueness: UniquenessSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Written to the `run_id` CSV column.
    pub id: String,
    /// Worker threads; `0` lets the runtime choose. Never affects results.
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            id: "run".into(),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub id: Option<String>,
    pub dim: usize,
    pub kappa: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let p = ScenarioParams::default();
        Self {
            id: None,
            dim: p.dim,
            kappa: p.kappa,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub particles: usize,
    pub horizon: f64,
    pub steps: usize,
    pub seed: u64,
    /// Particles recorded as full paths.
    pub paths: usize,
    pub flow_stride: usize,
    /// Interaction atoms per particle and step; unset means every particle.
    pub subsample: Option<usize>,
    /// Run the two-copy system instead of the self-interacting one.
    pub two_copy: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            particles: 1000,
            horizon: 1.0,
            steps: 100,
            seed: 0,
            paths: 0,
            flow_stride: 1,
            subsample: None,
            two_copy: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifySection {
    pub n: u32,
    #[serde(default = "default_mollify_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_mollify_samples() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSection {
    pub tol: f64,
    pub max_iter: usize,
    pub projections: usize,
    /// Bins per axis for the TV history; unset uses the default rule.
    pub bins: Option<usize>,
}

impl Default for PicardSection {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 10,
            projections: 32,
            bins: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub block: Block,
    /// Lags for the increment fit; unset skips the fit.
    pub lags: Option<Vec<f64>>,
    /// `delta` of the exponential moment; unset skips it.
    pub exp_delta: Option<f64>,
    /// Coordinate for terminal statistics.
    pub coordinate: usize,
    pub expect_slope: Option<f64>,
    pub slope_tol: f64,
    pub min_slope: Option<f64>,
    pub expect_constant: Option<f64>,
    pub constant_rel_tol: f64,
    pub expect_terminal_variance: Option<f64>,
    pub terminal_variance_rel_tol: f64,
    pub expect_terminal_fourth: Option<f64>,
    pub terminal_fourth_rel_tol: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            block: Block::Full,
            lags: None,
            exp_delta: None,
            coordinate: 0,
            expect_slope: None,
            slope_tol: 0.15,
            min_slope: None,
            expect_constant: None,
            constant_rel_tol: 0.15,
            expect_terminal_variance: None,
            terminal_variance_rel_tol: 0.05,
            expect_terminal_fourth: None,
            terminal_fourth_rel_tol: 0.10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HolderSection {
    pub alpha: f64,
    /// Ball radius; unset uses the `h_quantile` of empirical ball constants.
    pub h: Option<f64>,
    pub h_quantile: f64,
    pub epsilon: f64,
    pub refine: usize,
    pub max_log10_size: f64,
    /// Path coordinates to classify; unset means the degenerate block.
    pub coords: Option<Vec<usize>>,
    /// Largest net exported element by element.
    pub export_limit: u64,
}

impl Default for HolderSection {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            h: None,
            h_quantile: 0.995,
            epsilon: 0.5,
            refine: 2,
            max_log10_size: mkv_core::holder_net::DEFAULT_MAX_LOG10_SIZE,
            coords: None,
            export_limit: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniquenessSection {
    /// Seed of the second input flow; unset uses `sim.seed + 1`.
    pub mu2_seed: Option<u64>,
    /// Initial law of the second input flow; unset uses `init`.
    pub mu2_init: Option<InitialLaw>,
    /// Use the first flow twice.
    pub same_flow: bool,
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: bool,
    pub cache: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            csv: true,
            cache: true,
        }
    }
}

fn invalid(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid value for `{key}`: {reason}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| CliError::Config(format!("config {} is not UTF-8", path.display())))?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn scenario_id(&self) -> Result<&str, CliError> {
        self.scenario
            .id
            .as_deref()
            .ok_or_else(|| CliError::Config("missing required key `scenario.id`".into()))
    }

    /// Checks key ranges and that the scenario exists.
    pub fn validate(&self, registry: &ScenarioRegistry) -> Result<(), CliError> {
        let id = self.scenario_id()?;
        if !registry.contains(id) {
            let known: Vec<&str> = registry.ids().collect();
            return Err(invalid(
                "scenario.id",
                format!("unknown scenario `{id}` (known: {})", known.join(", ")),
            ));
        }
        if self.scenario.dim == 0 {
            return Err(invalid("scenario.dim", "must be positive"));
        }
        self.sim_config()
            .validate()
            .map_err(|e| invalid("sim", e))?;
        if let Some(m) = &self.mollify {
            if m.n == 0 || m.samples == 0 {
                return Err(invalid("mollify", "`n` and `samples` must be positive"));
            }
        }
        if let Some(init) = &self.init {
            init.validate().map_err(|e| invalid("init", e))?;
        }
        if !(self.picard.tol > 0.0) {
            return Err(invalid("picard.tol", "must be positive"));
        }
        if self.picard.max_iter == 0 {
            return Err(invalid("picard.max_iter", "must be at least 1"));
        }
        if self.picard.projections == 0 {
            return Err(invalid("picard.projections", "must be positive"));
        }
        let h = &self.holder;
        if !(h.alpha > 0.0 && h.alpha <= 1.0) {
            return Err(invalid("holder.alpha", "must lie in (0, 1]"));
        }
        if !(h.epsilon > 0.0 && h.epsilon.is_finite()) {
            return Err(invalid("holder.epsilon", "must be positive"));
        }
        if matches!(h.h, Some(v) if !(v > 0.0 && v.is_finite())) {
            return Err(invalid("holder.h", "must be positive"));
        }
        if !(h.h_quantile > 0.0 && h.h_quantile <= 1.0) {
            return Err(invalid("holder.h_quantile", "must lie in (0, 1]"));
        }
        if h.refine == 0 {
            return Err(invalid("holder.refine", "must be positive"));
        }
        if self.run.id.contains([',', '\n', '"']) {
            return Err(invalid("run.id", "must not contain commas, quotes or newlines"));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.sim;
        let mut cfg = SimConfig::new(s.particles, s.horizon, s.steps, s.seed)
            .with_paths(s.paths)
            .with_flow_stride(s.flow_stride);
        if let Some(m) = s.subsample {
            cfg.interaction = Interaction::Subsample { m };
        }
        cfg
    }

    pub fn field(&self, registry: &ScenarioRegistry) -> Result<CoefficientField, CliError> {
        let params = ScenarioParams {
            dim: self.scenario.dim,
            kappa: self.scenario.kappa,
        };
        let base = registry.build(self.scenario_id()?, &params)?;
        match &self.mollify {
            None => Ok(base),
            Some(m) => Ok(mkv_core::mollify(&base, &MollifierSpec::new(m.n, m.samples, m.seed))?.into_field()),
        }
    }

    pub fn initial_law(&self, state_dim: usize) -> Result<InitialLaw, CliError> {
        let init = self.init.clone().unwrap_or_else(|| InitialLaw::zero(state_dim));
        if init.dim() != state_dim {
            return Err(invalid(
                "init",
                format!("has dimension {}, the scenario state has {state_dim}", init.dim()),
            ));
        }
        Ok(init)
    }

    /// SHA-256 of the effective configuration. Worker count and output
    /// directory are left out: neither changes any output byte.
    pub fn hash(&self) -> [u8; 32] {
        let mut canonical = self.clone();
        canonical.run.workers = 0;
        canonical.output.dir = PathBuf::new();
        sha256(&serde_json::to_vec(&canonical).expect("config serializes"))
    }

    /// SHA-256 of the keys that determine simulated artifacts.
    pub fn artifact_hash(&self) -> [u8; 32] {
        let identity = (&self.scenario, &self.sim, &self.init, &self.mollify);
        sha256(&serde_json::to_vec(&identity).expect("config serializes"))
    }
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = RunConfig::parse("scenario.id = \"langevin\"\nsim.particles = 50\n").unwrap();
        let b = RunConfig::parse("[scenario]\nid = \"langevin\"\n[sim]\nparticles = 50\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.sim.particles, 50);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sim.particels = 5\n").is_err());
    }

    #[test]
    fn missing_scenario_is_named() {
        let c = RunConfig::parse("sim.particles = 5\n").unwrap();
        let err = c.validate(&ScenarioRegistry::builtin()).unwrap_err();
        assert!(err.to_string().contains("scenario.id"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn initial_law_from_keys() {
        let c = RunConfig::parse(
            "scenario.id = \"kinetic\"\ninit.kind = \"gaussian\"\ninit.center = [0.0, 1.0]\ninit.std = [1.0, 0.5]\n",
        )
        .unwrap();
        c.validate(&ScenarioRegistry::builtin()).unwrap();
        assert_eq!(c.initial_law(2).unwrap().dim(), 2);
        assert!(c.initial_law(4).is_err());
    }

    #[test]
    fn workers_do_not_change_the_hash() {
        let a = RunConfig::parse("scenario.id = \"kinetic\"\nrun.workers = 1\n").unwrap();
        let b = RunConfig::parse("scenario.id = \"kinetic\"\nrun.workers = 8\n").unwrap();
        assert_eq!(a.hash(), b.hash());
    }
}
