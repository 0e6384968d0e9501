use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::ConstantsConfig;
use crate::distributions::CoordinateDistribution;
use crate::error::{Error, Result};
use crate::estimators::ExponentRule;
use crate::spectral::MatrixSpec;

/// The only schema version this build understands.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Analyze,
    Bound,
    Estimate,
    Exact,
    Verify,
    FitConstant,
}

/// Which inequality fixes the radius convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// `A` is an orthogonal projection of rank `d`; radius `M t √d`.
    Projection,
    /// General `A`; radius `M t ‖A‖_HS`.
    #[default]
    Anisotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusUnit {
    /// Values are Euclidean radii in the target space.
    Absolute,
    /// Values are the unit radius `t` of the chosen theorem.
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusGrid {
    pub unit: RadiusUnit,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    /// Candidate centers in the target space; `A · mode` when absent.
    #[serde(default)]
    pub centers: Option<Vec<Vec<f64>>>,
}

fn default_samples() -> usize {
    100_000
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings { samples: default_samples(), seed: 0, stream: 0, centers: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    /// Defaults to the rule matching `theorem`.
    #[serde(default)]
    pub rule: Option<ExponentRule>,
}

fn default_m() -> f64 {
    1.0
}

/// One self-describing experiment. Serialising a resolved config gives a
/// sidecar from which the run can be repeated exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub matrix: Option<MatrixSpec>,
    #[serde(default)]
    pub coordinates: Vec<CoordinateDistribution>,
    #[serde(default)]
    pub radii: Option<RadiusGrid>,
    #[serde(default)]
    pub theorem: Theorem,
    #[serde(default = "default_m")]
    pub m_factor: f64,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub fit: Option<FitSettings>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {} (this build reads schema {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn mode(&self) -> Result<Mode> {
        self.mode.ok_or_else(|| Error::Config("no mode given".into()))
    }

    pub(crate) fn matrix(&self) -> Result<&MatrixSpec> {
        self.matrix.as_ref().ok_or_else(|| Error::Config("mode requires a matrix".into()))
    }

    pub(crate) fn radii(&self) -> Result<&RadiusGrid> {
        self.radii.as_ref().ok_or_else(|| Error::Config("mode requires a radius grid".into()))
    }

    /// Checks the fields `mode` needs.
    pub fn validate(&self) -> Result<()> {
        let mode = self.mode()?;
        self.matrix()?;
        self.constants.validate()?;
        if !(self.m_factor >= 1.0) || !self.m_factor.is_finite() {
            return Err(Error::Config(format!("m_factor = {} must be at least 1", self.m_factor)));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("eps = {e} must lie in (0, 1)")));
        }
        if mode == Mode::Analyze {
            return Ok(());
        }
        let grid = self.radii()?;
        if grid.values.is_empty() || grid.values.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Config("radius grid must be nonempty and positive".into()));
        }
        if self.coordinates.is_empty() {
            return Err(Error::Config("mode requires coordinate distributions".into()));
        }
        for c in &self.coordinates {
            c.validate()?;
        }
        if matches!(mode, Mode::Estimate | Mode::Verify | Mode::FitConstant)
            && self.estimator.samples < crate::estimators::MIN_SAMPLES
        {
            return Err(Error::Config(format!(
                "estimator.samples must be at least {}",
                crate::estimators::MIN_SAMPLES
            )));
        }
        if mode == Mode::Exact && self.coordinates.iter().any(|c| !c.is_discrete()) {
            return Err(Error::Config("exact mode needs discrete coordinates".into()));
        }
        Ok(())
    }
}
