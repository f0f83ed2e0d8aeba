//! Compressible Mooney-Rivlin solid with Mullins-type stress softening.
//!
//! `W = D·W_d + W_h` with the isochoric part
//! `W_d = C10(I1·I3^{-1/3} − 3) + C01(I2·I3^{-2/3} − 3)`, the volumetric part
//! `W_h = K(J − 1 − ln J)` and the damage factor
//! `D = 1 − η·erf((W_max − W_d)/(a + b·W_max))`.

use serde::{Deserialize, Serialize};

use super::{combine, outer, sym_product, Internal};
use crate::error::{DmnError, Result};
use crate::tensor::{mandel_from_sym, mandel_from_tensor4, sym_from_mandel, Mat3, Mat6, Vec6};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MooneyRivlinParams {
    #[serde(rename = "C10")]
    pub c10: f64,
    #[serde(rename = "C01")]
    pub c01: f64,
    pub nu: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
}

fn one() -> f64 {
    1.0
}

impl MooneyRivlinParams {
    pub fn neo_hookean(c10: f64, nu: f64) -> Self {
        Self {
            c10,
            c01: 0.0,
            nu,
            eta: 0.0,
            a: 1.0,
            b: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c10 + self.c01 > 0.0) || !(self.nu > -1.0 && self.nu < 0.5) {
            return Err(DmnError::Validation(format!(
                "Mooney-Rivlin constants out of range: C10+C01={}, nu={}",
                self.c10 + self.c01,
                self.nu
            )));
        }
        if self.eta < 0.0 || self.eta > 1.0 || self.a <= 0.0 || self.b < 0.0 {
            return Err(DmnError::Validation(
                "Mullins parameters need 0≤η≤1, a>0, b≥0".into(),
            ));
        }
        Ok(())
    }

    pub fn shear_modulus(&self) -> f64 {
        2.0 * (self.c10 + self.c01)
    }

    pub fn bulk_modulus(&self) -> f64 {
        2.0 * self.shear_modulus() * (1.0 + self.nu) / (3.0 * (1.0 - 2.0 * self.nu))
    }

    /// Isochoric strain energy at right Cauchy-Green tensor `c`.
    pub fn isochoric_energy(&self, c: &Mat3) -> f64 {
        let i1 = c.trace();
        let i2 = 0.5 * (i1 * i1 - (c * c).trace());
        let i3 = c.determinant();
        self.c10 * (i1 * i3.powf(-1.0 / 3.0) - 3.0) + self.c01 * (i2 * i3.powf(-2.0 / 3.0) - 3.0)
    }

    /// Damage factor and its derivative with respect to `W_d` at fixed `W_max`.
    pub fn damage(&self, wd: f64, wd_max: f64) -> (f64, f64) {
        let s = self.a + self.b * wd_max;
        let x = (wd_max - wd) / s;
        let d = 1.0 - self.eta * libm::erf(x);
        let dd = self.eta * std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp() / s;
        (d, dd)
    }

    pub(crate) fn green_law(
        &self,
        e: &Vec6,
        internal: &Internal,
    ) -> Result<(Vec6, Mat6, Internal)> {
        let wd_max_prev = match internal {
            Internal::Mullins { wd_max } => *wd_max,
            Internal::None => 0.0,
            _ => {
                return Err(DmnError::Validation(
                    "state does not match Mooney-Rivlin model".into(),
                ))
            }
        };
        let id = Mat3::identity();
        let c = id + sym_from_mandel(e) * 2.0;
        let i3 = c.determinant();
        if !(i3 > 0.0) {
            return Err(DmnError::NonPositiveJacobian {
                det: i3.max(0.0).sqrt(),
            });
        }
        let ci = c
            .try_inverse()
            .ok_or(DmnError::NonPositiveJacobian { det: 0.0 })?;
        let ci = (ci + ci.transpose()) * 0.5;
        let j = i3.sqrt();
        let i1 = c.trace();
        let i2 = 0.5 * (i1 * i1 - (c * c).trace());
        let p13 = i3.powf(-1.0 / 3.0);
        let p23 = i3.powf(-2.0 / 3.0);
        let k = self.bulk_modulus();

        let a1 = id - ci * (i1 / 3.0);
        let a2 = id * i1 - c - ci * (2.0 * i2 / 3.0);
        let s_d = a1 * (2.0 * self.c10 * p13) + a2 * (2.0 * self.c01 * p23);
        let s_h = ci * (k * (j - 1.0));

        let cc = sym_product(&ci, &ci);
        let ident = sym_product(&id, &id);
        // dS_d/dC
        let d1 = combine(&[
            (-(1.0 / 3.0) * 2.0 * self.c10 * p13, &outer(&a1, &ci)),
            (-(1.0 / 3.0) * 2.0 * self.c10 * p13, &outer(&ci, &id)),
            ((i1 / 3.0) * 2.0 * self.c10 * p13, &cc),
        ]);
        let b = id * i1 - c;
        let d2 = combine(&[
            (-(2.0 / 3.0) * 2.0 * self.c01 * p23, &outer(&a2, &ci)),
            (2.0 * self.c01 * p23, &outer(&id, &id)),
            (-2.0 * self.c01 * p23, &ident),
            (-(2.0 / 3.0) * 2.0 * self.c01 * p23, &outer(&ci, &b)),
            ((2.0 / 3.0) * i2 * 2.0 * self.c01 * p23, &cc),
        ]);
        let dh = combine(&[(0.5 * k * j, &outer(&ci, &ci)), (-k * (j - 1.0), &cc)]);

        let wd = self.isochoric_energy(&c);
        let (d, dd, wd_max) = if wd >= wd_max_prev {
            (1.0, 0.0, wd)
        } else {
            let (d, dd) = self.damage(wd, wd_max_prev);
            (d, dd, wd_max_prev)
        };

        let sd6 = mandel_from_sym(&s_d);
        let s = sd6 * d + mandel_from_sym(&s_h);
        let tangent = (mandel_from_tensor4(&d1) + mandel_from_tensor4(&d2)) * (2.0 * d)
            + mandel_from_tensor4(&dh) * 2.0
            + sd6 * sd6.transpose() * dd;
        Ok((
            s,
            (tangent + tangent.transpose()) * 0.5,
            Internal::Mullins { wd_max },
        ))
    }
}
