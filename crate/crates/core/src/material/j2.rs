//! Isotropic J2 plasticity with exponential hardening, written in the
//! Green strain / second Piola-Kirchhoff pair with additive plastic strain.

use serde::{Deserialize, Serialize};

use super::Internal;
use crate::error::{DmnError, Result};
use crate::tensor::{isotropic_stiffness, Mat6, Vec6};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct J2Params {
    #[serde(rename = "E_m")]
    pub e: f64,
    #[serde(rename = "nu_m")]
    pub nu: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

const MAX_RETURN_ITERATIONS: usize = 50;

impl J2Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0) || !(self.nu > -1.0 && self.nu < 0.5) {
            return Err(DmnError::Validation(
                "J2 elastic constants out of range".into(),
            ));
        }
        if !(self.a3 - self.a2 > 0.0) || self.a1 < 0.0 || self.a2 < 0.0 {
            return Err(DmnError::Validation(
                "J2 hardening needs a3 > a2 ≥ 0, a1 ≥ 0".into(),
            ));
        }
        Ok(())
    }

    /// Yield stress and hardening slope at effective plastic strain `eps`.
    pub fn yield_stress(&self, eps: f64) -> (f64, f64) {
        let x = (-self.a1 * eps).exp();
        (self.a3 - self.a2 * x, self.a1 * self.a2 * x)
    }

    fn shear(&self) -> f64 {
        self.e / (2.0 * (1.0 + self.nu))
    }

    fn bulk(&self) -> f64 {
        self.e / (3.0 * (1.0 - 2.0 * self.nu))
    }

    pub(crate) fn green_law(
        &self,
        e: &Vec6,
        internal: &Internal,
    ) -> Result<(Vec6, Mat6, Internal)> {
        let (eps_n, ep_n) = match internal {
            Internal::J2 { eps_bar, plastic } => (*eps_bar, Vec6::from_column_slice(plastic)),
            Internal::None => (0.0, Vec6::zeros()),
            _ => return Err(DmnError::Validation("state does not match J2 model".into())),
        };
        let c = isotropic_stiffness(self.e, self.nu);
        let g = self.shear();
        let k = self.bulk();
        let m = Vec6::from_column_slice(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let s_tr = c * (e - ep_n);
        let dev = s_tr - m * (m.dot(&s_tr) / 3.0);
        let norm = dev.norm();
        let q_tr = 1.5f64.sqrt() * norm;
        let (sy, _) = self.yield_stress(eps_n);
        if q_tr - sy <= 0.0 {
            return Ok((
                s_tr,
                c,
                Internal::J2 {
                    eps_bar: eps_n,
                    plastic: ep_n.into(),
                },
            ));
        }

        // Scalar return: q_tr − 3GΔγ − σ_Y(ε̄ₙ + Δγ) = 0, monotone in Δγ.
        let mut dg = 0.0;
        let mut converged = false;
        let mut res = 0.0;
        for _ in 0..MAX_RETURN_ITERATIONS {
            let (sy, h) = self.yield_stress(eps_n + dg);
            res = q_tr - 3.0 * g * dg - sy;
            if res.abs() <= 1e-12 * q_tr {
                converged = true;
                break;
            }
            dg += res / (3.0 * g + h);
            dg = dg.max(0.0);
        }
        if !converged {
            return Err(DmnError::NoConvergence {
                context: "J2 return mapping".into(),
                iterations: MAX_RETURN_ITERATIONS,
                residual: res.abs() / q_tr,
            });
        }
        let (_, h) = self.yield_stress(eps_n + dg);
        let n_hat = dev / norm;
        // Flow direction 3/2·dev/q in Mandel form.
        let n = n_hat * 1.5f64.sqrt();
        let s = s_tr - n * (2.0 * g * dg);
        let ep = ep_n + n * dg;
        let idev = Mat6::identity() - m * m.transpose() / 3.0;
        let tangent = m * m.transpose() * k
            + idev * (2.0 * g * (1.0 - 3.0 * g * dg / q_tr))
            + n_hat * n_hat.transpose() * (6.0 * g * g * (dg / q_tr - 1.0 / (3.0 * g + h)));
        Ok((
            s,
            tangent,
            Internal::J2 {
                eps_bar: eps_n + dg,
                plastic: ep.into(),
            },
        ))
    }
}
