//! Strict JSON experiment configuration and the run manifest.
//!
//! Unknown keys are rejected everywhere: a silently ignored typo in an
//! exponent would invalidate an experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::hamiltonian::{renorm_constant, AndersonOperator};
use crate::noise::sample_space_white_noise;
use crate::rng::{Purpose, RngStream};
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default = "default_side", rename = "L")]
    pub l: f64,
}

fn default_side() -> f64 {
    std::f64::consts::TAU
}

/// Renormalization constant: computed from the lattice symbol or pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RenormSpec {
    Auto(String),
    Explicit(f64),
}

impl Default for RenormSpec {
    fn default() -> Self {
        RenormSpec::Auto("auto".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(default = "default_mass_floor")]
    pub mass_floor: f64,
    #[serde(default)]
    pub renorm: RenormSpec,
}

fn default_mass_floor() -> f64 {
    1.0
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self {
            mass_floor: default_mass_floor(),
            renorm: RenormSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "N")]
    pub n_trunc: usize,
    #[serde(default = "default_n_para", rename = "n")]
    pub n_para: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_p")]
    pub p: u32,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub ramp_steps: u32,
    #[serde(default = "default_true")]
    pub noise_on: bool,
    #[serde(default = "default_true")]
    pub cubic_on: bool,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_n_para() -> usize {
    2
}
fn default_eps() -> f64 {
    0.1
}
fn default_sigma() -> f64 {
    0.2
}
fn default_p() -> u32 {
    2
}
fn default_q() -> f64 {
    2.0
}
fn default_true() -> bool {
    true
}
fn default_record_every() -> usize {
    10
}

/// Observable selector for the statistical harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ObservableSpec {
    /// `cos(<u, cos(k . x)>)`, bounded by one.
    #[serde(rename = "fourier_char")]
    FourierChar { k1: i64, k2: i64 },
    /// `<u, cos(k . x)>`.
    #[serde(rename = "linear")]
    Linear { k1: i64, k2: i64 },
    /// `L^2` norm of the projection onto the lowest `k + 1` eigenmodes.
    #[serde(rename = "low_norm")]
    LowNorm { k: usize },
    /// `L^p` norm of the field.
    #[serde(rename = "lp_norm")]
    LpNorm { p: f64 },
}

/// Experiment-specific knobs; validation of which are required happens per
/// subcommand.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observables: Option<Vec<ObservableSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_box: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cond: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_targets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_feynman_kac: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stat: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    pub solver: SolverBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        TorusGrid::new(self.grid.m, self.grid.l)?;
        if self.hamiltonian.mass_floor <= 0.0 {
            return Err(Error::Config("hamiltonian.mass_floor must be positive".into()));
        }
        if let RenormSpec::Auto(word) = &self.hamiltonian.renorm {
            if word != "auto" {
                return Err(Error::Config(format!(
                    "hamiltonian.renorm must be \"auto\" or a number, got {word:?}"
                )));
            }
        }
        self.solver_config().validate()?;
        if self.solver.n_trunc >= self.grid.m * self.grid.m {
            return Err(Error::Config(format!(
                "solver.N = {} out of range for M = {}",
                self.solver.n_trunc, self.grid.m
            )));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.solver.dt,
            t_final: self.solver.t_final,
            n_trunc: self.solver.n_trunc,
            n_para: self.solver.n_para,
            eps: self.solver.eps,
            sigma_reg: self.solver.sigma,
            p: self.solver.p,
            q: self.solver.q,
            lambda_min: self.hamiltonian.mass_floor,
            ramp_steps: self.solver.ramp_steps,
            noise_on: self.solver.noise_on,
            cubic_on: self.solver.cubic_on,
            record_every: self.solver.record_every,
        }
    }

    /// Sample the potential from the master seed and assemble the operator.
    pub fn build_operator(&self) -> Result<AndersonOperator> {
        let grid = TorusGrid::new(self.grid.m, self.grid.l)?;
        let mut stream = RngStream::new(self.seed, Purpose::Potential, 0);
        let xi = sample_space_white_noise(grid, &mut stream);
        let c = match self.hamiltonian.renorm {
            RenormSpec::Explicit(c) => c,
            RenormSpec::Auto(_) => renorm_constant(grid),
        };
        Ok(AndersonOperator::assemble(grid, &xi, c, 0.0)?
            .ensure_positive(self.hamiltonian.mass_floor))
    }

    /// Canonical SHA-256 hash of the serialized configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One pass/fail line of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

/// Written next to every report. The wall clock lives only here, so all
/// other outputs are byte-identical across reruns and worker counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub checks: Vec<CheckResult>,
}

impl RunManifest {
    pub fn new(config_hash: String, workers: usize) -> Self {
        Self {
            config_hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: 0.0,
            workers,
            checks: Vec::new(),
        }
    }
}
