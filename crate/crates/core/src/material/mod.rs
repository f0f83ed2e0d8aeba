//! Online constitutive laws.
//!
//! Every law maps a previous state and a new deformation gradient (or, in
//! small-strain mode, a new Mandel strain) to the new stress, the consistent
//! tangent, and the new state. Laws written in Green strain / second
//! Piola-Kirchhoff stress share the push-forward in [`finite_from_green`].

mod crystal;
mod elastic;
mod hyperelastic;
mod j2;

pub use crystal::{fcc_slip_systems, CrystalParams, CrystalState};
pub use elastic::{IsotropicElastic, OrthotropicParams};
pub use hyperelastic::MooneyRivlinParams;
pub use j2::J2Params;

use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};
use crate::tensor::{
    mandel_from_sym, mat3_from_vec9, sym_from_mandel, tensor4_from_mandel, vec9_from_mat3,
    vec9_index, Mat3, Mat6, Mat9, Vec6, Vec9, VEC9_PAIRS,
};

pub type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];

/// A constitutive law with its parameters; serialized with a `model` tag and
/// the tabulated parameter names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MaterialModel {
    IsotropicElastic(IsotropicElastic),
    OrthotropicElastic(OrthotropicParams),
    MooneyRivlin(MooneyRivlinParams),
    J2Exponential(J2Params),
    CrystalPlasticity(CrystalParams),
}

/// History variables of one material point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Internal {
    #[default]
    None,
    Mullins {
        wd_max: f64,
    },
    J2 {
        eps_bar: f64,
        /// Plastic Green strain, Mandel.
        plastic: [f64; 6],
    },
    Crystal(Box<CrystalState>),
}

/// Converged state of a material point: strain measure `x` (F as Vec9, or
/// Mandel ε), stress `s` (P as Vec9, or Mandel σ), and history.
#[derive(Debug, Clone, PartialEq)]
pub struct PointState<const D: usize> {
    pub x: SVector<f64, D>,
    pub s: SVector<f64, D>,
    pub internal: Internal,
}

pub type MaterialState = PointState<9>;

#[derive(Debug, Clone)]
pub struct PointResponse<const D: usize> {
    pub s: SVector<f64, D>,
    pub tangent: SMatrix<f64, D, D>,
    /// `(s_new − s_prev) − tangent·(x_new − x_prev)`.
    pub residual: SVector<f64, D>,
    pub state: PointState<D>,
}

pub type MaterialResponse = PointResponse<9>;

/// Residual stress of an incremental update.
pub fn residual_from_update<const D: usize>(
    s_new: &SVector<f64, D>,
    s_prev: &SVector<f64, D>,
    tangent: &SMatrix<f64, D, D>,
    dx: &SVector<f64, D>,
) -> SVector<f64, D> {
    (s_new - s_prev) - tangent * dx
}

pub fn identity9() -> Vec9 {
    vec9_from_mat3(&Mat3::identity())
}

impl MaterialModel {
    pub fn name(&self) -> &'static str {
        match self {
            MaterialModel::IsotropicElastic(_) => "isotropic_elastic",
            MaterialModel::OrthotropicElastic(_) => "orthotropic_elastic",
            MaterialModel::MooneyRivlin(_) => "mooney_rivlin",
            MaterialModel::J2Exponential(_) => "j2_exponential",
            MaterialModel::CrystalPlasticity(_) => "crystal_plasticity",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MaterialModel::IsotropicElastic(p) => p.validate(),
            MaterialModel::OrthotropicElastic(p) => p.validate(),
            MaterialModel::MooneyRivlin(p) => p.validate(),
            MaterialModel::J2Exponential(p) => p.validate(),
            MaterialModel::CrystalPlasticity(p) => p.validate(),
        }
    }

    /// Whether a small-strain (Mandel) evaluation is available.
    pub fn supports_small_strain(&self) -> bool {
        !matches!(self, MaterialModel::CrystalPlasticity(_))
    }

    pub fn initial_internal(&self) -> Internal {
        match self {
            MaterialModel::IsotropicElastic(_) | MaterialModel::OrthotropicElastic(_) => {
                Internal::None
            }
            MaterialModel::MooneyRivlin(_) => Internal::Mullins { wd_max: 0.0 },
            MaterialModel::J2Exponential(_) => Internal::J2 {
                eps_bar: 0.0,
                plastic: [0.0; 6],
            },
            MaterialModel::CrystalPlasticity(p) => Internal::Crystal(Box::new(p.initial_state())),
        }
    }

    pub fn initial_state(&self) -> MaterialState {
        PointState {
            x: identity9(),
            s: Vec9::zeros(),
            internal: self.initial_internal(),
        }
    }

    pub fn initial_small_state(&self) -> PointState<6> {
        PointState {
            x: Vec6::zeros(),
            s: Vec6::zeros(),
            internal: self.initial_internal(),
        }
    }

    /// Stress and material tangent in terms of Green strain, for laws that
    /// are formulated that way.
    fn green_law(&self, e: &Vec6, internal: &Internal) -> Result<(Vec6, Mat6, Internal)> {
        match self {
            MaterialModel::IsotropicElastic(p) => {
                let c = p.stiffness();
                Ok((c * e, c, Internal::None))
            }
            MaterialModel::OrthotropicElastic(p) => {
                let c = p.stiffness()?;
                Ok((c * e, c, Internal::None))
            }
            MaterialModel::MooneyRivlin(p) => p.green_law(e, internal),
            MaterialModel::J2Exponential(p) => p.green_law(e, internal),
            MaterialModel::CrystalPlasticity(_) => Err(DmnError::Validation(
                "crystal plasticity has no Green-strain form".into(),
            )),
        }
    }

    /// Finite-strain update to deformation gradient `f_new` over time `dt`.
    pub fn evaluate(
        &self,
        state: &MaterialState,
        f_new: &Vec9,
        dt: f64,
    ) -> Result<MaterialResponse> {
        let f = mat3_from_vec9(f_new);
        let det = f.determinant();
        if !(det > 0.0) {
            return Err(DmnError::NonPositiveJacobian { det });
        }
        let (p, a, internal) = match self {
            MaterialModel::CrystalPlasticity(cp) => {
                let Internal::Crystal(cs) = &state.internal else {
                    return Err(DmnError::Validation(
                        "state does not match crystal model".into(),
                    ));
                };
                let (p, a, s) = cp.update(cs, &f, dt)?;
                (p, a, Internal::Crystal(Box::new(s)))
            }
            _ => {
                let e = green_strain(&f);
                let (s, c, internal) = self.green_law(&e, &state.internal)?;
                let (p, a) = finite_from_green(&f, &s, &c);
                (p, a, internal)
            }
        };
        let dx = f_new - state.x;
        let residual = residual_from_update(&p, &state.s, &a, &dx);
        Ok(PointResponse {
            s: p,
            tangent: a,
            residual,
            state: PointState {
                x: *f_new,
                s: p,
                internal,
            },
        })
    }

    /// Small-strain update: the Green-strain law evaluated at `E = ε`.
    pub fn evaluate_small(
        &self,
        state: &PointState<6>,
        eps_new: &Vec6,
    ) -> Result<PointResponse<6>> {
        if !self.supports_small_strain() {
            return Err(DmnError::Validation(format!(
                "{} is only available in finite-strain mode",
                self.name()
            )));
        }
        let (s, c, internal) = self.green_law(eps_new, &state.internal)?;
        let dx = eps_new - state.x;
        let residual = residual_from_update(&s, &state.s, &c, &dx);
        Ok(PointResponse {
            s,
            tangent: c,
            residual,
            state: PointState {
                x: *eps_new,
                s,
                internal,
            },
        })
    }
}

/// Mandel Green strain `(FᵀF − I)/2`.
pub fn green_strain(f: &Mat3) -> Vec6 {
    mandel_from_sym(&((f.transpose() * f - Mat3::identity()) * 0.5))
}

/// First Piola-Kirchhoff stress `P = F·S` and tangent
/// `A_iJkL = δ_ik S_LJ + F_iM ℂ_MJPL F_kP`, both in Vec9 form.
pub fn finite_from_green(f: &Mat3, s: &Vec6, c: &Mat6) -> (Vec9, Mat9) {
    let s3 = sym_from_mandel(s);
    let p = vec9_from_mat3(&(f * s3));
    let t = tensor4_from_mandel(c);
    // G[i][J][k][L] = Σ_M Σ_P F_iM ℂ_MJPL F_kP, contracted in two passes.
    let mut half = [[[[0.0; 3]; 3]; 3]; 3]; // half[i][J][P][L] = Σ_M F_iM ℂ_MJPL
    for i in 0..3 {
        for j in 0..3 {
            for pp in 0..3 {
                for l in 0..3 {
                    half[i][j][pp][l] = (0..3).map(|m| f[(i, m)] * t[m][j][pp][l]).sum();
                }
            }
        }
    }
    let mut a = Mat9::zeros();
    for (r, &(i, j)) in VEC9_PAIRS.iter().enumerate() {
        for (q, &(k, l)) in VEC9_PAIRS.iter().enumerate() {
            let mut v: f64 = (0..3).map(|pp| half[i][j][pp][l] * f[(k, pp)]).sum();
            if i == k {
                v += s3[(l, j)];
            }
            a[(r, q)] = v;
        }
    }
    (p, a)
}

/// `A ⊗ B`.
pub(crate) fn outer(a: &Mat3, b: &Mat3) -> Tensor4 {
    let mut t = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    t[i][j][k][l] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    t
}

/// `½(A_ik B_jl + A_il B_jk)`.
pub(crate) fn sym_product(a: &Mat3, b: &Mat3) -> Tensor4 {
    let mut t = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    t[i][j][k][l] = 0.5 * (a[(i, k)] * b[(j, l)] + a[(i, l)] * b[(j, k)]);
                }
            }
        }
    }
    t
}

/// `Σ cᵢ·Tᵢ`.
pub(crate) fn combine(terms: &[(f64, &Tensor4)]) -> Tensor4 {
    let mut t = [[[[0.0; 3]; 3]; 3]; 3];
    for (c, x) in terms {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        t[i][j][k][l] += c * x[i][j][k][l];
                    }
                }
            }
        }
    }
    t
}

/// Index of `F_ij` in the Vec9 ordering.
pub fn f_index(i: usize, j: usize) -> usize {
    vec9_index(i, j)
}

pub(crate) fn mat3_from_rows(r: &[[f64; 3]; 3]) -> Mat3 {
    Matrix3::from_fn(|i, j| r[i][j])
}

pub(crate) fn rows_from_mat3(m: &Mat3) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}
