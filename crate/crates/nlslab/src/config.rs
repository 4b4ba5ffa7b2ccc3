//! Run configuration: TOML (or JSON) descriptions of a single experiment.

use crate::evolve::IntegratorConfig;
use crate::diagnostics::FateOptions;
use crate::params::{ProblemSpec, Sign};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecConfig {
    pub d: u32,
    pub a: f64,
    pub alpha: f64,
    /// "focusing" or "defocusing".
    pub mu: Sign,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: usize,
    pub r_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 4096, r_max: 40.0 }
    }
}

/// Initial-data descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    Gaussian { amplitude: f64, width: f64 },
    GroundStateMultiple { c: f64 },
    FromFile { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    /// Relative band half-width used by the classifier.
    pub classify_tol: f64,
    /// Fate-proxy factors.
    pub fate: FateOptions,
    /// Emit a field snapshot every this many samples (0 = endpoints only).
    pub snapshot_every: usize,
    /// Relative tolerance of the dual-route threshold cross-check.
    pub threshold_cross_tol: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            classify_tol: crate::diagnostics::DEFAULT_CLASSIFY_TOL,
            fate: FateOptions::default(),
            snapshot_every: 0,
            threshold_cross_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: SpecConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub initial: InitialData,
    #[serde(default)]
    pub monitors: MonitorConfig,
    /// Output directory for CSVs, manifest, and plot script.
    pub output: PathBuf,
}

impl RunConfig {
    /// Parses a config file; `.json` selects JSON, anything else is TOML.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.n < 8 || !(self.grid.r_max > 0.0) {
            return Err(Error::Config(
                "grid requires n >= 8 and r_max > 0".to_string(),
            ));
        }
        if !(self.integrator.dt > self.integrator.dt_min && self.integrator.dt_min > 0.0) {
            return Err(Error::Config("integrator requires dt > dt_min > 0".to_string()));
        }
        match &self.initial {
            InitialData::Gaussian { amplitude, width } => {
                if !(*amplitude > 0.0 && *width > 0.0) {
                    return Err(Error::Config(
                        "gaussian initial data requires positive amplitude and width".to_string(),
                    ));
                }
            }
            InitialData::GroundStateMultiple { c } => {
                if !(*c > 0.0) {
                    return Err(Error::Config(
                        "ground-state multiple requires c > 0".to_string(),
                    ));
                }
            }
            InitialData::FromFile { path } => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "initial-data file {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        Ok(ProblemSpec::new(
            self.spec.d,
            self.spec.a,
            self.spec.alpha,
            self.spec.mu,
        )?)
    }
}
