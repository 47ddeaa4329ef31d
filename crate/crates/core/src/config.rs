//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{ModelSpec1D, ModelSpecND};
use crate::solver1d::Scheme;
use crate::solvernd::{SplitOrder, MAX_GENES};
use crate::ssa::Sampling;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBlock {
    /// One self-regulated gene.
    OneGene(ModelSpec1D),
    /// A network of up to three genes.
    Network(ModelSpecND),
}

impl ModelBlock {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::OneGene(m) => m.validate(),
            Self::Network(m) => {
                if m.dim() > MAX_GENES {
                    return Err(Error::InvalidSpec(format!("at most {MAX_GENES} genes are supported")));
                }
                m.validate()
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::OneGene(_) => 1,
            Self::Network(m) => m.dim(),
        }
    }
}

/// Starting density of a solver run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Open-loop gamma density with the run's burst parameters.
    #[default]
    Gamma,
    /// The stationary density itself.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_observe_every")]
    pub observe_every: f64,
    /// Time between tensor or profile snapshots; defaults to a tenth of `t_end`.
    #[serde(default)]
    pub snapshot_every: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub split: SplitOrder,
    #[serde(default)]
    pub initial: InitialCondition,
    /// Drift per unit time at which the multi-gene stationary iteration stops.
    #[serde(default = "default_stationary_tolerance")]
    pub stationary_tolerance: f64,
}

fn default_observe_every() -> f64 {
    0.5
}

fn default_stationary_tolerance() -> f64 {
    1e-11
}

impl SolverBlock {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.dt) || !ok(self.t_end) || !ok(self.observe_every) || !ok(self.stationary_tolerance) {
            return Err(Error::Config("solver: dt, t_end, observe_every and stationary_tolerance must be > 0".into()));
        }
        if self.snapshot_every.is_some_and(|s| !ok(s)) {
            return Err(Error::Config("solver: snapshot_every must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyBlock {
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_probes() -> usize {
    500
}

fn default_seed() -> u64 {
    1
}

impl Default for EntropyBlock {
    fn default() -> Self {
        Self {
            probes: default_probes(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsaBlock {
    pub samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_stride")]
    pub stride: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Histogram bins per axis.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Initial state; zeros when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

fn default_burn_in() -> f64 {
    50.0
}

fn default_stride() -> f64 {
    1.0
}

fn default_bins() -> usize {
    40
}

impl SsaBlock {
    pub fn sampling(&self) -> Sampling {
        Sampling {
            burn_in: self.burn_in,
            stride: self.stride,
            record_events: false,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.samples == 0 || self.bins == 0 {
            return Err(Error::Config("ssa: samples and bins must be >= 1".into()));
        }
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) || !(self.stride > 0.0 && self.stride.is_finite()) {
            return Err(Error::Config("ssa: burn_in must be >= 0 and stride > 0".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != dim || x0.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("ssa: x0 needs {dim} finite values >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory, relative to the working directory.
    pub output: PathBuf,
    pub model: ModelBlock,
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: Option<SolverBlock>,
    #[serde(default)]
    pub entropy: EntropyBlock,
    #[serde(default)]
    pub ssa: Option<SsaBlock>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.grid.cells < 2 || !(self.grid.origin_ratio > 0.0 && self.grid.origin_ratio < 1.0) {
            return Err(Error::Config("grid: need cells >= 2 and 0 < origin_ratio < 1".into()));
        }
        if self.grid.x_max.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Config("grid: x_max must be > 0".into()));
        }
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        if let Some(s) = &self.ssa {
            s.validate(self.model.dim())?;
        }
        if self.entropy.probes == 0 {
            return Err(Error::Config("entropy: probes must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialisation, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn solver(&self) -> Result<&SolverBlock> {
        self.solver.as_ref().ok_or_else(|| Error::Config("missing [solver] block".into()))
    }

    pub fn ssa(&self) -> Result<&SsaBlock> {
        self.ssa.as_ref().ok_or_else(|| Error::Config("missing [ssa] block".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_GENE: &str = r#"
output = "out/shape1"

[model]
kind = "one_gene"
a = 5.0
b = 10.0
k = 45.0
h = -4
eps = 0.15

[grid]
cells = 2048

[solver]
dt = 0.01
t_end = 60.0

[ssa]
samples = 100000
"#;

    const TOGGLE: &str = r#"
output = "out/toggle"

[model]
kind = "network"

[[model.genes]]
k_m = 8.0
b = 16.0
input = { kind = "repressor", regulator = 1, k = 45.0, h = 4, eps = 0.15 }

[[model.genes]]
k_m = 8.0
b = 16.0
input = { kind = "repressor", regulator = 0, k = 45.0, h = 4, eps = 0.15 }

[grid]
cells = 256

[solver]
dt = 0.05
t_end = 20.0
split = "symmetric"
"#;

    #[test]
    fn parses_and_round_trips() {
        for text in [ONE_GENE, TOGGLE] {
            let c = RunConfig::from_toml(text).unwrap();
            let again = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
            assert_eq!(c, again);
            assert_eq!(c.hash().unwrap(), again.hash().unwrap());
        }
        let c = RunConfig::from_toml(TOGGLE).unwrap();
        assert_eq!(c.model.dim(), 2);
        assert_eq!(c.solver().unwrap().split, SplitOrder::Symmetric);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = ONE_GENE.replace("cells = 2048", "cells = 2048\nspacing = 3");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = ONE_GENE.replace("eps = 0.15", "eps = 0.15\nleak = 1");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = TOGGLE.replace("regulator = 1,", "regulator = 1, gain = 2,");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(RunConfig::from_toml(&ONE_GENE.replace("eps = 0.15", "eps = 1.5")).is_err());
        assert!(RunConfig::from_toml(&ONE_GENE.replace("dt = 0.01", "dt = -1.0")).is_err());
        assert!(RunConfig::from_toml(&TOGGLE.replace("regulator = 1", "regulator = 4")).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_toml(ONE_GENE).unwrap();
        let b = RunConfig::from_toml(&ONE_GENE.replace("t_end = 60.0", "t_end = 61.0")).unwrap();
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
