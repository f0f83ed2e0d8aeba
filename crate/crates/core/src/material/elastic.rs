//! Saint Venant-Kirchhoff laws: linear elasticity in Green strain.

use serde::{Deserialize, Serialize};

use crate::doe::OrthotropicElastic;
use crate::error::{DmnError, Result};
use crate::tensor::{isotropic_stiffness, Mat6};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicElastic {
    #[serde(rename = "E")]
    pub e: f64,
    pub nu: f64,
}

impl IsotropicElastic {
    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0) || !(self.nu > -1.0 && self.nu < 0.5) {
            return Err(DmnError::Validation(format!(
                "isotropic elastic constants out of range: E={}, nu={}",
                self.e, self.nu
            )));
        }
        Ok(())
    }

    pub fn stiffness(&self) -> Mat6 {
        isotropic_stiffness(self.e, self.nu)
    }
}

/// Orthotropic constants with compliance `Dᵢⱼ = −νᵢⱼ/Eⱼ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthotropicParams {
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "E2")]
    pub e2: f64,
    #[serde(rename = "E3")]
    pub e3: f64,
    #[serde(rename = "G12")]
    pub g12: f64,
    #[serde(rename = "G13")]
    pub g13: f64,
    #[serde(rename = "G23")]
    pub g23: f64,
    pub nu12: f64,
    pub nu13: f64,
    pub nu23: f64,
}

impl OrthotropicParams {
    /// Inverse of [`constants`](Self::constants).
    pub fn from_constants(c: &OrthotropicElastic) -> Self {
        Self {
            e1: c.e11,
            e2: c.e22,
            e3: c.e33,
            g12: c.g12,
            g13: c.g31,
            g23: c.g23,
            nu12: c.nu12,
            nu13: c.nu31 * c.e33 / c.e11,
            nu23: c.nu23,
        }
    }

    pub fn constants(&self) -> OrthotropicElastic {
        OrthotropicElastic::from_engineering(
            self.e1, self.e2, self.e3, self.g12, self.g13, self.g23, self.nu12, self.nu13,
            self.nu23,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !self.constants().is_positive_definite() {
            return Err(DmnError::Validation(
                "orthotropic constants give a non-positive-definite compliance".into(),
            ));
        }
        Ok(())
    }

    pub fn stiffness(&self) -> Result<Mat6> {
        self.constants().stiffness()
    }
}
