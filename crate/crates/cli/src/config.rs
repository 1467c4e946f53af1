use std::path::{Path, PathBuf};

use amlmc::experiments::ReportConfig;
use amlmc::mlmc::{EstimatorConfig, Scheme};
use amlmc::setup::{Example, Setup};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const OUT_ENV: &str = "AMLMC_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorParams {
    pub theta: f64,
    pub c_xi: f64,
    pub warmup: u64,
    pub max_levels: usize,
    /// Samples per level written to the per-sample log.
    pub sample_log: usize,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self { theta: 0.5, c_xi: 1.96, warmup: 20, max_levels: 12, sample_log: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceParams {
    pub adaptive_meshes: usize,
    pub uniform_meshes: usize,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self { adaptive_meshes: 9, uniform_meshes: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub setup: Setup,
    pub scheme: Scheme,
    pub tols: Vec<f64>,
    pub seed: u64,
    pub realizations: usize,
    pub out: PathBuf,
    pub estimator: EstimatorParams,
    /// Meshes generated by `hierarchy`; derived from the tolerances when unset.
    pub hierarchy_depth: Option<usize>,
    /// Reference mean for error columns; computed when it has a closed form.
    pub reference: Option<f64>,
    /// Hierarchy mesh the unit-coefficient reference is computed on.
    pub reference_mesh: usize,
    pub convergence: ConvergenceParams,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            setup: Setup::new(Example::LognormalConstant, 1.0),
            scheme: Scheme::Amlmc,
            tols: vec![0.25, 0.125, 0.0625, 0.03125],
            seed: 1,
            realizations: 1,
            out: default_out(),
            estimator: EstimatorParams::default(),
            hierarchy_depth: None,
            reference: None,
            reference_mesh: 7,
            convergence: ConvergenceParams::default(),
            report: ReportConfig::default(),
        }
    }
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("amlmc-out"))
}

/// Values given on the command line; unset fields keep their defaults.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub example: Option<u8>,
    pub sigma2: Option<f64>,
    pub scheme: Option<Scheme>,
    pub tols: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub realizations: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults, then flags, then the config file.
    pub fn resolve(flags: &Overrides, file: Option<&Path>) -> Result<Self> {
        let mut c = RunConfig::default();
        if let Some(e) = flags.example {
            c.setup.example = Example::try_from(e)?;
        }
        if let Some(s) = flags.sigma2 {
            c.setup.sigma2 = s;
        }
        if let Some(s) = flags.scheme {
            c.scheme = s;
        }
        if let Some(t) = &flags.tols {
            c.tols = t.clone();
        }
        if let Some(s) = flags.seed {
            c.seed = s;
        }
        if let Some(r) = flags.realizations {
            c.realizations = r;
        }
        if let Some(o) = &flags.out {
            c.out = o.clone();
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            let mut merged = serde_json::to_value(&c)?;
            merge(&mut merged, patch);
            c = serde_json::from_value(merged).with_context(|| format!("invalid config {}", path.display()))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.setup.validate()?;
        if self.tols.is_empty() {
            bail!("the tolerance list is empty");
        }
        if let Some(t) = self.tols.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            bail!("tolerance {t} is not positive");
        }
        if self.realizations == 0 {
            bail!("realizations must be positive");
        }
        self.estimator_config(self.tols[0], self.seed).validate()?;
        Ok(())
    }

    pub fn estimator_config(&self, tol: f64, seed: u64) -> EstimatorConfig {
        let e = &self.estimator;
        EstimatorConfig {
            theta: e.theta,
            c_xi: e.c_xi,
            warmup: e.warmup,
            max_levels: e.max_levels,
            sample_log: e.sample_log,
            level_tols: self.setup.level_tolerances(),
            ..EstimatorConfig::new(self.scheme, tol, self.setup.sigma2, seed)
        }
    }

    /// SHA-256 of the resolved configuration without its output directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("out");
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of hierarchy meshes needed to reach half the smallest tolerance.
    pub fn hierarchy_depth(&self) -> usize {
        if let Some(d) = self.hierarchy_depth {
            return d;
        }
        let target = 0.5 * self.tols.iter().copied().fold(f64::INFINITY, f64::min);
        let seq = self.setup.hierarchy_tolerances();
        (0..self.setup.max_depth).find(|&k| seq.tol(k) <= target).map_or(self.setup.max_depth, |k| k + 1)
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::default();
        let b = RunConfig { out: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { seed: 2, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn hierarchy_depth_from_tolerances() {
        let mut c = RunConfig::default();
        c.setup.example = Example::Deterministic;
        c.tols = vec![1.0 / 64.0];
        assert_eq!(c.hierarchy_depth(), 3);
    }
}
