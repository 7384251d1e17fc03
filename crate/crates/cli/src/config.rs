//! Run configuration. Every run echoes the resolved config into its manifest,
//! which is enough to repeat the run.

use std::collections::BTreeMap;
use std::path::PathBuf;

use definetti_core::convergence::LimitKind;
use definetti_core::ensembles::{EnsembleKind, EnsembleSpec};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Reduce,
    Limit,
    Sweep,
    Verify,
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyKind {
    Claim,
    Series,
    FreeEnergy,
}

impl VerifyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerifyKind::Claim => "claim",
            VerifyKind::Series => "series",
            VerifyKind::FreeEnergy => "free-energy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    1_000_000
}

impl Default for McConfig {
    fn default() -> Self {
        Self { samples: default_samples(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory receiving the artifacts and `manifest.json`.
    #[serde(default = "default_out")]
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<Format>,
    /// Fill the `wall_time_s` column. Off by default so artifacts are
    /// byte-identical across runs.
    #[serde(default)]
    pub timings: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { path: default_out(), format: None, timings: false }
    }
}

/// Parameters only the `verify` command reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub kind: VerifyKind,
    /// Power of the Hamiltonian in the moment identity.
    #[serde(default = "one")]
    pub j: usize,
    /// Truncation order of the exponential series.
    #[serde(default = "default_order")]
    pub order: usize,
    /// Number of random perturbations in the free-energy check.
    #[serde(default = "default_perturbations")]
    pub perturbations: usize,
}

fn one() -> usize {
    1
}

fn default_order() -> usize {
    6
}

fn default_perturbations() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default)]
    pub command: Option<Command>,
    pub ensemble: EnsembleSpec,
    #[serde(default = "one")]
    pub m: usize,
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub limit: Option<LimitKind>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(format!("unsupported schema {} (expected {SCHEMA_VERSION})", cfg.schema));
        }
        Ok(cfg)
    }

    /// Limit used by `limit` and `sweep` when the config names none.
    pub fn resolved_limit(&self) -> LimitKind {
        self.limit.unwrap_or(match self.ensemble.kind {
            EnsembleKind::Uniform => LimitKind::Uniform,
            EnsembleKind::Noninteracting if self.ensemble.scaled => LimitKind::Noninteracting,
            EnsembleKind::Noninteracting => LimitKind::Condensate,
            EnsembleKind::Meanfield => LimitKind::Meanfield,
        })
    }

    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}
