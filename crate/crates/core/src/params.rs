//! Physical coefficients and coupling options.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    pub rho_f: f64,
    pub nu_f: f64,
    /// Rotational inertia of the plate.
    pub rho_rot: f64,
    pub rho_p: f64,
    /// Flexural rigidity.
    pub d: f64,
    /// Scaling of the plate time-derivative terms.
    pub omega: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            rho_f: 1.0,
            nu_f: 1.0,
            rho_rot: 1.0,
            rho_p: 1.0,
            d: 1.0,
            omega: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("rho_f", self.rho_f, true),
            ("nu_f", self.nu_f, true),
            ("rho_rot", self.rho_rot, false),
            ("rho_p", self.rho_p, true),
            ("d", self.d, true),
            ("omega", self.omega, false),
        ];
        for (key, v, strict) in checks {
            if !v.is_finite() || v < 0.0 || (strict && v == 0.0) {
                let bound = if strict { "positive" } else { "nonnegative" };
                return Err(Error::config(key, format!("must be finite and {bound}, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    #[default]
    Partitioned,
    Monolithic,
}

/// Discrete space of the interface multiplier `g`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierSpace {
    /// Plate displacement space (P2, zero on the plate boundary). The weak
    /// kinematic constraint then equals nodal `u3 = ẇ`, and the partitioned
    /// scheme loads the plate with the discrete fluid reaction, so both
    /// coupling modes solve the same algebraic system.
    #[default]
    Plate,
    /// Continuous P1 on all plate vertices. The partitioned scheme loads the
    /// plate with the nodal trace of the fluid pressure.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    pub mode: CouplingMode,
    pub multiplier: MultiplierSpace,
    /// Relative tolerance on the interface velocity increment.
    pub tol: f64,
    pub max_iter: usize,
    /// Under-relaxation factor in (0, 1].
    pub theta: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            mode: CouplingMode::Partitioned,
            multiplier: MultiplierSpace::Plate,
            tol: 1e-8,
            max_iter: 50,
            theta: 1.0,
        }
    }
}

impl CouplingConfig {
    pub fn monolithic() -> Self {
        Self {
            mode: CouplingMode::Monolithic,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be at least 1"));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::config("theta", format!("must lie in (0, 1], got {}", self.theta)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PhysicalParams::default().validate().unwrap();
        CouplingConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_values_name_the_key() {
        let p = PhysicalParams {
            nu_f: -1.0,
            ..Default::default()
        };
        match p.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "nu_f"),
            other => panic!("{other:?}"),
        }
        let c = CouplingConfig {
            theta: 1.5,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config { .. })));
    }
}
