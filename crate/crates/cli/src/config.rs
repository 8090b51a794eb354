//! Experiment configuration: a versioned TOML schema with strict parsing.

use anyhow::{bail, Context, Result};
use neumann_core::eigen::Method;
use neumann_core::perturbation::Family;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub version: u32,
    /// Built-in domain name, path to a domain file, or an inline domain table.
    pub domain: Option<toml::Value>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub whitney: WhitneyConfig,
    #[serde(default)]
    pub dimension: DimensionConfig,
    #[serde(default)]
    pub heat: HeatConfig,
    #[serde(default)]
    pub sobolev: SobolevConfig,
    #[serde(default)]
    pub perturb: PerturbConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: SCHEMA_VERSION,
            domain: None,
            out: None,
            seed: None,
            jobs: None,
            spectrum: Default::default(),
            whitney: Default::default(),
            dimension: Default::default(),
            heat: Default::default(),
            sobolev: Default::default(),
            perturb: Default::default(),
            verify: Default::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub h: Option<f64>,
    pub m: Option<usize>,
    pub tol: Option<f64>,
    pub method: Option<Method>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhitneyConfig {
    pub k_max: Option<i32>,
    /// Lattice points per axis in each cube for the point-distance check.
    pub per_axis: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionConfig {
    pub eps_min: Option<f64>,
    pub eps_max: Option<f64>,
    pub count: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatConfig {
    pub h: Option<f64>,
    pub m: Option<usize>,
    /// Kernel exponent `M`; defaults by domain type.
    pub exponent: Option<f64>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub samples: Option<usize>,
    /// Times in (0, 1] for the reconstructed bounds.
    pub times: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevConfig {
    pub q: Option<Vec<f64>>,
    /// Cell sizes of the refinement study.
    pub levels: Option<Vec<f64>>,
    pub max_iter: Option<usize>,
    pub restarts: Option<usize>,
    /// Exponent of the `x^-δ` probe on cusp domains.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub family: Option<Family>,
    pub eps: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub h: Option<f64>,
    pub exponent: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub h: Option<f64>,
    pub m: Option<usize>,
    pub n_max: Option<usize>,
    pub eps: Option<Vec<f64>>,
    pub exponent: Option<f64>,
    pub k_max: Option<i32>,
    pub sigma: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        if cfg.version != SCHEMA_VERSION {
            bail!("config schema version {} is not supported (expected {SCHEMA_VERSION})", cfg.version);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        ExperimentConfig::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Canonical serialization used for hashing; independent of formatting
    /// and key order in the source file.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

pub fn check_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(v.is_finite() && v > lo && v <= hi) {
        bail!("{name} = {v} is outside ({lo}, {hi}]");
    }
    Ok(v)
}

pub fn check_count(name: &str, v: usize, lo: usize, hi: usize) -> Result<usize> {
    if !(lo..=hi).contains(&v) {
        bail!("{name} = {v} is outside [{lo}, {hi}]");
    }
    Ok(v)
}

pub fn check_grid(name: &str, v: &[f64], lo: f64, hi: f64, min_len: usize) -> Result<Vec<f64>> {
    if v.len() < min_len {
        bail!("{name} needs at least {min_len} values, got {}", v.len());
    }
    for (i, x) in v.iter().enumerate() {
        check_range(&format!("{name}[{i}]"), *x, lo, hi)?;
    }
    Ok(v.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_schema() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            version = 1
            seed = 7
            out = "out"
            [domain]
            kind = "box"
            lo = [0.0, 0.0]
            hi = [1.0, 1.0]
            [spectrum]
            h = 0.0625
            m = 10
            method = "lanczos"
            [perturb]
            family = "graph_shrink"
            eps = [0.01, 0.02]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.spectrum.m, Some(10));
        assert_eq!(cfg.spectrum.method, Some(Method::Lanczos));
        assert_eq!(cfg.perturb.family, Some(Family::GraphShrink));
        assert!(cfg.domain.unwrap().is_table());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(ExperimentConfig::from_toml("sed = 3").is_err());
        let e = ExperimentConfig::from_toml("[spectrum]\nhh = 0.1").unwrap_err();
        assert!(format!("{e:#}").contains("hh"), "{e:#}");
        assert!(ExperimentConfig::from_toml("version = 2").is_err());
        assert!(ExperimentConfig::from_toml("[perturb]\nfamily = \"shrink\"").is_err());
    }

    #[test]
    fn canonical_form_ignores_layout() {
        let a = ExperimentConfig::from_toml("seed = 1\n[spectrum]\nm = 4\nh = 0.5").unwrap();
        let b = ExperimentConfig::from_toml("[spectrum]\nh = 0.5\nm = 4\n\n[whitney]\n").unwrap();
        let b = ExperimentConfig { seed: Some(1), ..b };
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn ranges() {
        assert!(check_range("h", 0.1, 0.0, 0.5).is_ok());
        assert!(check_range("h", 0.0, 0.0, 0.5).is_err());
        assert!(check_range("h", f64::NAN, 0.0, 0.5).is_err());
        assert!(check_count("m", 0, 1, 10).is_err());
        assert!(check_grid("eps", &[0.1], 0.0, 0.5, 2).is_err());
    }
}
