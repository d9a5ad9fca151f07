//! Pass/fail thresholds and problem sizes for `verify`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../tolerances.toml");

/// Only this file format version is accepted.
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interpolation {
    pub instances: usize,
    pub n: usize,
    pub p: usize,
    pub residual_rel: f64,
    pub stationarity: f64,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedForm {
    pub instances: usize,
    pub n: usize,
    pub p: usize,
    pub rel_error: f64,
    pub feasible_points: usize,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flow {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub sigma: f64,
    pub theta_rel: f64,
    pub balancedness: f64,
    pub step_scale: f64,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alpha {
    pub instances: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trace {
    pub n: usize,
    pub eps: f64,
    pub p: Vec<usize>,
    pub reference_p: usize,
    pub trials: usize,
    pub band: f64,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaConcentration {
    pub k: usize,
    pub eps: f64,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub trials: usize,
    pub lower: f64,
    pub upper: f64,
    pub trend_n: Vec<usize>,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decomposition {
    pub rel: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trend {
    pub k: usize,
    pub eps: f64,
    pub p: usize,
    pub n: Vec<usize>,
    pub sigma: f64,
    pub trials: usize,
    /// One-sided normal quantile for the paired comparison.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ranks {
    pub samples: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Determinism {
    pub threads: Vec<usize>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub version: u32,
    pub interpolation: Interpolation,
    pub closed_form: ClosedForm,
    pub flow: Flow,
    pub alpha: Alpha,
    pub trace: Trace,
    pub alpha_concentration: AlphaConcentration,
    pub decomposition: Decomposition,
    pub trend: Trend,
    pub ranks: Ranks,
    pub determinism: Determinism,
}

impl Tolerances {
    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN).expect("built-in tolerance table parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let t: Self = toml::from_str(text).map_err(|e| Error::Config(format!("tolerances: {e}")))?;
        if t.version != VERSION {
            return Err(Error::Config(format!(
                "tolerances version {} is not supported (expected {VERSION})",
                t.version
            )));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}
