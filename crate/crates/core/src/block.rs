//! Two-layer building block: laminate homogenization of two rotated phases
//! across an interface normal to axis 3, followed by a rotation.
//!
//! The same code serves the small-strain Mandel form (`D = 6`, interface set
//! [`MANDEL_INTERFACE`]) and the finite-strain 9-component form (`D = 9`,
//! interface set [`VEC9_INTERFACE`]).

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{DmnError, Result};
use crate::tensor::{
    rcond3, rotation6, rotation6_derivatives, rotation9, EulerAngles, Mat6, Mat9, Vec9,
    MANDEL_INTERFACE, VEC9_INTERFACE,
};

/// Below this volume fraction the minority phase is dropped.
pub const FRACTION_EPS: f64 = 1e-12;
/// Reciprocal condition number below which the interface solve is refused.
pub const RCOND_MIN: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Regime {
    Laminate,
    OnlyFirst,
    OnlySecond,
}

/// Result of homogenizing two phases; keeps the interface factorization so
/// residual homogenization and de-homogenization can reuse it.
#[derive(Debug, Clone)]
pub struct BlockSolution<const D: usize> {
    pub f1: f64,
    pub f2: f64,
    /// Homogenized stiffness / tangent before rotation.
    pub c: SMatrix<f64, D, D>,
    /// Strain concentration tensor of phase 1.
    pub s1: SMatrix<f64, D, D>,
    k: [usize; 3],
    delta: SMatrix<f64, D, D>,
    m_inv: Matrix3<f64>,
    regime: Regime,
}

fn complement<const D: usize>(k: &[usize; 3]) -> Vec<usize> {
    (0..D).filter(|i| !k.contains(i)).collect()
}

fn sub3<const D: usize>(m: &SMatrix<f64, D, D>, k: &[usize; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[(k[r], k[c])])
}

fn pick3<const D: usize>(v: &SVector<f64, D>, k: &[usize; 3]) -> Vector3<f64> {
    Vector3::new(v[k[0]], v[k[1]], v[k[2]])
}

/// Laminate homogenization with interface components `k`.
pub fn homogenize<const D: usize>(
    c1: &SMatrix<f64, D, D>,
    c2: &SMatrix<f64, D, D>,
    w1: f64,
    w2: f64,
    k: &[usize; 3],
) -> Result<BlockSolution<D>> {
    let total = w1 + w2;
    if !(total > 0.0) {
        return Err(DmnError::AllLeavesDeactivated);
    }
    let f1 = w1 / total;
    let f2 = w2 / total;
    let delta = c2 - c1;
    let identity = SMatrix::<f64, D, D>::identity();
    if f2 < FRACTION_EPS || f1 < FRACTION_EPS {
        let (c, regime) = if f2 < FRACTION_EPS {
            (*c1, Regime::OnlyFirst)
        } else {
            (*c2, Regime::OnlySecond)
        };
        return Ok(BlockSolution {
            f1,
            f2,
            c,
            s1: identity,
            k: *k,
            delta,
            m_inv: Matrix3::zeros(),
            regime,
        });
    }

    let m = sub3(c1, k) * f2 + sub3(c2, k) * f1;
    let rcond = rcond3(&m);
    if rcond < RCOND_MIN {
        return Err(DmnError::SingularInterfaceSystem { node: None, rcond });
    }
    let m_inv = m
        .try_inverse()
        .ok_or(DmnError::SingularInterfaceSystem { node: None, rcond })?;

    let mut b = SMatrix::<f64, 3, D>::zeros();
    for r in 0..3 {
        for col in 0..D {
            b[(r, col)] = if k.contains(&col) {
                c2[(k[r], col)]
            } else {
                f2 * delta[(k[r], col)]
            };
        }
    }
    let s = m_inv * b;
    let mut s1 = identity;
    for r in 0..3 {
        s1.set_row(k[r], &s.row(r));
    }
    let c = c2 - delta * s1 * f1;
    Ok(BlockSolution {
        f1,
        f2,
        c,
        s1,
        k: *k,
        delta,
        m_inv,
        regime: Regime::Laminate,
    })
}

impl<const D: usize> BlockSolution<D> {
    /// Whether one phase was dropped because its fraction vanished.
    pub fn is_degenerate(&self) -> bool {
        self.regime != Regime::Laminate
    }

    /// Concentration tensor of phase 2: `(I − f₁s¹)/f₂`.
    pub fn s2(&self) -> SMatrix<f64, D, D> {
        match self.regime {
            Regime::Laminate => (SMatrix::identity() - self.s1 * self.f1) / self.f2,
            _ => SMatrix::identity(),
        }
    }

    /// Homogenized residual stress of the block.
    pub fn residual(&self, dp1: &SVector<f64, D>, dp2: &SVector<f64, D>) -> SVector<f64, D> {
        match self.regime {
            Regime::OnlyFirst => *dp1,
            Regime::OnlySecond => *dp2,
            Regime::Laminate => {
                let jump = pick3(&(dp2 - dp1), &self.k);
                let x = self.m_inv * jump;
                let mut coupling = SVector::<f64, D>::zeros();
                for r in 0..3 {
                    coupling += self.delta.column(self.k[r]) * x[r];
                }
                dp1 * self.f1 + dp2 * self.f2 - coupling * (self.f1 * self.f2)
            }
        }
    }

    /// Splits a parent increment into the two phase increments.
    pub fn dehomogenize(
        &self,
        dp1: &SVector<f64, D>,
        dp2: &SVector<f64, D>,
        df: &SVector<f64, D>,
    ) -> (SVector<f64, D>, SVector<f64, D>) {
        match self.regime {
            Regime::OnlyFirst | Regime::OnlySecond => (*df, *df),
            Regime::Laminate => {
                let jump = pick3(&(dp2 - dp1), &self.k);
                let x = self.m_inv * jump * self.f2;
                let mut df1 = self.s1 * df;
                for r in 0..3 {
                    df1[self.k[r]] += x[r];
                }
                let df2 = (df - df1 * self.f1) / self.f2;
                (df1, df2)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Small-strain block

pub fn homogenize_linear(cbar1: &Mat6, cbar2: &Mat6, w1: f64, w2: f64) -> Result<BlockSolution<6>> {
    homogenize(cbar1, cbar2, w1, w2, &MANDEL_INTERFACE)
}

/// `C̄ = Z⁻¹·Y⁻¹·X⁻¹·C·X·Y·Z`, applied one axis at a time.
pub fn rotate_linear(c: &Mat6, angles: &EulerAngles) -> Mat6 {
    use crate::tensor::{rot6_x, rot6_y, rot6_z};
    let x = rot6_x(angles.alpha);
    let y = rot6_y(angles.beta);
    let z = rot6_z(angles.gamma);
    let cx = x.transpose() * c * x;
    let cy = y.transpose() * cx * y;
    z.transpose() * cy * z
}

/// Sensitivities of a scalar with respect to the block inputs.
#[derive(Debug, Clone)]
pub struct HomogenizeGrad {
    pub g_c1: Mat6,
    pub g_c2: Mat6,
    pub g_w1: f64,
    pub g_w2: f64,
}

fn dot<const R: usize, const C: usize>(a: &SMatrix<f64, R, C>, b: &SMatrix<f64, R, C>) -> f64 {
    a.component_mul(b).sum()
}

/// Reverse-mode pass through [`homogenize_linear`] given `∂L/∂C`.
pub fn homogenize_linear_backward(
    c1: &Mat6,
    c2: &Mat6,
    w1: f64,
    w2: f64,
    sol: &BlockSolution<6>,
    g_c: &Mat6,
) -> HomogenizeGrad {
    match sol.regime {
        Regime::OnlyFirst => {
            return HomogenizeGrad {
                g_c1: *g_c,
                g_c2: Mat6::zeros(),
                g_w1: 0.0,
                g_w2: 0.0,
            }
        }
        Regime::OnlySecond => {
            return HomogenizeGrad {
                g_c1: Mat6::zeros(),
                g_c2: *g_c,
                g_w1: 0.0,
                g_w2: 0.0,
            }
        }
        Regime::Laminate => {}
    }
    let k = &sol.k;
    let jset = complement::<6>(k);
    let (f1, f2) = (sol.f1, sol.f2);
    let delta = &sol.delta;

    // C = C2 − f1·ΔC·s1
    let mut g_c2 = *g_c;
    let mut g_delta = -(g_c * sol.s1.transpose()) * f1;
    let mut g_f1 = -dot(g_c, &(delta * sol.s1));
    let mut g_f2 = 0.0;
    let g_s1 = -(delta.transpose() * g_c) * f1;

    // rows k of s1: S = M⁻¹·B
    let g_s = SMatrix::<f64, 3, 6>::from_fn(|r, c| g_s1[(k[r], c)]);
    let s = SMatrix::<f64, 3, 6>::from_fn(|r, c| sol.s1[(k[r], c)]);
    let g_b = sol.m_inv.transpose() * g_s;
    let g_m = -(g_b * s.transpose());

    // M = f2·C1_kk + f1·C2_kk
    let mut g_c1 = Mat6::zeros();
    for r in 0..3 {
        for c in 0..3 {
            g_c1[(k[r], k[c])] += f2 * g_m[(r, c)];
            g_c2[(k[r], k[c])] += f1 * g_m[(r, c)];
        }
    }
    g_f2 += dot(&g_m, &sub3(c1, k));
    g_f1 += dot(&g_m, &sub3(c2, k));

    // B[:, j] = f2·ΔC[k, j];  B[:, k] = C2[k, k]
    for r in 0..3 {
        for &j in &jset {
            g_delta[(k[r], j)] += f2 * g_b[(r, j)];
            g_f2 += g_b[(r, j)] * delta[(k[r], j)];
        }
        for &kc in k.iter() {
            g_c2[(k[r], kc)] += g_b[(r, kc)];
        }
    }

    g_c2 += g_delta;
    g_c1 -= g_delta;
    let g_f1_total = g_f1 - g_f2;
    let total = w1 + w2;
    HomogenizeGrad {
        g_c1,
        g_c2,
        g_w1: g_f1_total * f2 / total,
        g_w2: -g_f1_total * f1 / total,
    }
}

/// Elementary factors of a Mandel rotation and their angle derivatives,
/// computed once and reused across many stiffness matrices.
#[derive(Debug, Clone)]
pub struct PreparedRotation {
    pub r: Mat6,
    d: [Mat6; 3],
}

impl PreparedRotation {
    pub fn new(angles: &EulerAngles) -> Self {
        use crate::tensor::{rot6_x, rot6_y, rot6_z};
        let x = rot6_x(angles.alpha);
        let y = rot6_y(angles.beta);
        let z = rot6_z(angles.gamma);
        let (dx, dy, dz) = rotation6_derivatives(angles);
        let yz = y * z;
        Self {
            r: x * yz,
            d: [dx * yz, x * dy * z, x * y * dz],
        }
    }

    /// `RᵀCR`.
    pub fn apply(&self, c: &Mat6) -> Mat6 {
        self.r.transpose() * c * self.r
    }

    /// Returns `∂L/∂C` and `∂L/∂(α, β, γ)` given `∂L/∂(RᵀCR)`.
    pub fn backward(&self, c: &Mat6, g_cbar: &Mat6) -> (Mat6, [f64; 3]) {
        let g_c = self.r * g_cbar * self.r.transpose();
        // ⟨G, dRᵀ·C·R + Rᵀ·C·dR⟩ = ⟨dR, C·R·Gᵀ + Cᵀ·R·G⟩
        let w = c * self.r * g_cbar.transpose() + c.transpose() * self.r * g_cbar;
        let g = [
            dot(&self.d[0], &w),
            dot(&self.d[1], &w),
            dot(&self.d[2], &w),
        ];
        (g_c, g)
    }
}

/// Reverse-mode pass through [`rotate_linear`]: returns `∂L/∂C` and
/// `∂L/∂(α, β, γ)` given `∂L/∂C̄`.
pub fn rotate_linear_backward(c: &Mat6, angles: &EulerAngles, g_cbar: &Mat6) -> (Mat6, [f64; 3]) {
    PreparedRotation::new(angles).backward(c, g_cbar)
}

/// Gradients of `⟨upstream, rotate(homogenize(C̄¹, C̄², w¹, w²))⟩`.
#[derive(Debug, Clone)]
pub struct BlockGradients {
    pub g_cbar1: Mat6,
    pub g_cbar2: Mat6,
    pub g_w1: f64,
    pub g_w2: f64,
    pub g_angles: [f64; 3],
}

pub fn grad_linear(
    cbar1: &Mat6,
    cbar2: &Mat6,
    w1: f64,
    w2: f64,
    angles: &EulerAngles,
    upstream: &Mat6,
) -> Result<BlockGradients> {
    let sol = homogenize_linear(cbar1, cbar2, w1, w2)?;
    let (g_c, g_angles) = rotate_linear_backward(&sol.c, angles, upstream);
    let h = homogenize_linear_backward(cbar1, cbar2, w1, w2, &sol, &g_c);
    Ok(BlockGradients {
        g_cbar1: h.g_c1,
        g_cbar2: h.g_c2,
        g_w1: h.g_w1,
        g_w2: h.g_w2,
        g_angles,
    })
}

// ---------------------------------------------------------------------------
// Finite-strain block

/// Homogenized tangent, residual, and the cached interface solve.
#[derive(Debug, Clone)]
pub struct FiniteBlock {
    pub a: Mat9,
    pub dp: Vec9,
    pub solution: BlockSolution<9>,
}

pub fn homogenize_finite(
    abar1: &Mat9,
    abar2: &Mat9,
    dpbar1: &Vec9,
    dpbar2: &Vec9,
    w1: f64,
    w2: f64,
) -> Result<FiniteBlock> {
    let solution = homogenize(abar1, abar2, w1, w2, &VEC9_INTERFACE)?;
    let dp = solution.residual(dpbar1, dpbar2);
    Ok(FiniteBlock {
        a: solution.c,
        dp,
        solution,
    })
}

/// `Ā = (Rᶠ)⁻¹·A·Rᶠ`, `δP̄ = (Rᶠ)⁻¹·δP`.
pub fn rotate_finite(a: &Mat9, dp: &Vec9, angles: &EulerAngles) -> (Mat9, Vec9) {
    let r = rotation9(angles);
    let rt = r.transpose();
    (rt * a * r, rt * dp)
}

/// Splits a parent increment `ΔF` into the phase increments of a block.
pub fn dehomogenize_finite(
    block: &FiniteBlock,
    dpbar1: &Vec9,
    dpbar2: &Vec9,
    df_parent: &Vec9,
) -> (Vec9, Vec9) {
    block.solution.dehomogenize(dpbar1, dpbar2, df_parent)
}

/// Rotation of a Mandel stiffness by the full `R` (rather than step-by-step).
pub fn rotate_linear_direct(c: &Mat6, angles: &EulerAngles) -> Mat6 {
    let r = rotation6(angles);
    r.transpose() * c * r
}
