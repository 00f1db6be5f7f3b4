use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvectionScheme {
    Upwind,
    /// First-order upwind in the matrix plus a deferred second-order
    /// correction evaluated on the previous-step field.
    LinearUpwind,
    /// Linear interpolation of the transported field, fully implicit. This
    /// is the discretization the POD-Galerkin convection tensor projects.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionScheme {
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    ImplicitEuler,
}

/// How the quadratic convective term is made linear in the unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linearization {
    /// Convecting velocity at step n, transported field at step n+1.
    Mixed,
    /// Both factors at step n; convection moves entirely into `b`.
    Explicit,
}

/// Physical and numerical parameters of one transport problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    pub rho: f64,
    pub nu: f64,
    pub dt: f64,
    pub su: f64,
    pub sp: f64,
    pub convection_scheme: ConvectionScheme,
    pub diffusion_scheme: DiffusionScheme,
    pub time_scheme: TimeScheme,
    pub linearization: Linearization,
    /// Factor in front of the convective divergence (`1/2` for Burgers).
    pub convection_coeff: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            rho: 1.0,
            nu: 0.01,
            dt: 0.001,
            su: 0.0,
            sp: 0.0,
            convection_scheme: ConvectionScheme::LinearUpwind,
            diffusion_scheme: DiffusionScheme::Central,
            time_scheme: TimeScheme::ImplicitEuler,
            linearization: Linearization::Mixed,
            convection_coeff: 0.5,
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.rho, self.nu, self.dt, self.su, self.sp, self.convection_coeff]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("transport config".into()));
        }
        if self.dt <= 0.0 {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.nu < 0.0 {
            return Err(Error::invalid(format!("nu must be non-negative, got {}", self.nu)));
        }
        if self.rho <= 0.0 {
            return Err(Error::invalid(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}
