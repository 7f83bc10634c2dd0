//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{CouplingConfig, PhysicalParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    ConvergeSpace,
    ConvergeTime,
    Vibrate,
    Infsup,
    SingleSolve,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ConvergeSpace => "converge-space",
            Self::ConvergeTime => "converge-time",
            Self::Vibrate => "vibrate",
            Self::Infsup => "infsup",
            Self::SingleSolve => "single-solve",
        }
    }
}

/// Free vibration settings; only read by the `vibrate` experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VibrationConfig {
    pub depth: f64,
    pub amplitude: f64,
}

impl Default for VibrationConfig {
    fn default() -> Self {
        Self {
            depth: 0.5,
            amplitude: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    /// Mesh levels (cells per unit length) for spatial studies and the inf-sup sweep.
    pub levels: Vec<usize>,
    /// Mesh level for temporal studies, vibration and single solves.
    pub n: usize,
    pub dt: f64,
    /// Time steps for temporal studies, decreasing.
    pub dts: Vec<f64>,
    pub t_final: f64,
    /// Manufactured solution amplitude.
    pub zeta: f64,
    pub output: PathBuf,
    /// Only used to seed property tests.
    pub seed: u64,
    pub params: PhysicalParams,
    pub coupling: CouplingConfig,
    pub vibration: VibrationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::default(),
            levels: vec![2, 4, 8],
            n: 8,
            dt: 1e-4,
            dts: vec![0.5, 0.25, 0.125],
            t_final: 1e-3,
            zeta: crate::mms::ExactSolution::default().zeta,
            output: PathBuf::from("results"),
            seed: 0,
            params: PhysicalParams::default(),
            coupling: CouplingConfig::default(),
            vibration: VibrationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = offending_key(&message).unwrap_or_else(|| "<document>".into());
            Error::config(key, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.coupling.validate()?;
        if self.levels.is_empty() || self.levels.contains(&0) || self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("levels", "must be positive and strictly increasing"));
        }
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.dts.is_empty() || self.dts.iter().any(|&d| !(d > 0.0)) || self.dts.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("dts", "must be positive and strictly decreasing"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", format!("must be positive, got {}", self.t_final)));
        }
        if !self.zeta.is_finite() {
            return Err(Error::config("zeta", "must be finite"));
        }
        if !(self.vibration.depth > 0.0) {
            return Err(Error::config("vibration.depth", "must be positive"));
        }
        if self.experiment == ExperimentKind::ConvergeTime && self.params.omega < 1.0 {
            return Err(Error::config("params.omega", "must be at least 1 for temporal studies"));
        }
        Ok(())
    }
}

/// Pulls the first backquoted name out of a serde message such as
/// "unknown field `foo`, expected ...".
fn offending_key(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn omega_round_trips() {
        let cfg = RunConfig::from_toml_str("experiment = \"converge-time\"\n[params]\nomega = 1e5\n").unwrap();
        assert_eq!(cfg.params.omega, 1e5);
        let back = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn negative_viscosity_names_the_key() {
        match RunConfig::from_toml_str("[params]\nnu_f = -1.0\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "nu_f"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        match RunConfig::from_toml_str("tolerance = 3\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "tolerance"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coupling_mode_parses() {
        let cfg = RunConfig::from_toml_str("[coupling]\nmode = \"monolithic\"\ntheta = 0.5\n").unwrap();
        assert_eq!(cfg.coupling.mode, crate::params::CouplingMode::Monolithic);
        assert_eq!(cfg.coupling.theta, 0.5);
    }

    #[test]
    fn non_increasing_levels_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("levels = [4, 2]\n"),
            Err(Error::Config { key, .. }) if key == "levels"
        ));
    }
}
