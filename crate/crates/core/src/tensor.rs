//! Mandel 6-vector and 9-component deformation-gradient algebra, and the
//! elementary rotation matrices acting on both notations.
//!
//! Orderings:
//! - Mandel: `{11, 22, 33, √2·23, √2·13, √2·12}`; index 2 (33) is the
//!   interface normal component of a building block.
//! - Vec9: `{11, 22, 33, 23, 32, 13, 31, 12, 21}`.
//!
//! Every 6×6 / 9×9 rotation here is the matrix representation of the
//! tensor map `T ↦ Q·T·Qᵀ` for a proper 3×3 rotation `Q`, so both are
//! orthogonal and compose like the underlying 3×3 rotations.

use nalgebra::{Matrix2, Matrix3, Matrix4, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Vec9 = SVector<f64, 9>;
pub type Mat9 = SMatrix<f64, 9, 9>;
pub type Mat3 = Matrix3<f64>;

/// Tensor index pairs of the Mandel components.
pub const MANDEL_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
/// Tensor index pairs of the Vec9 components.
pub const VEC9_PAIRS: [(usize, usize); 9] = [
    (0, 0),
    (1, 1),
    (2, 2),
    (1, 2),
    (2, 1),
    (0, 2),
    (2, 0),
    (0, 1),
    (1, 0),
];

/// Mandel components whose stress is continuous across the block interface.
pub const MANDEL_INTERFACE: [usize; 3] = [2, 3, 4];
/// Vec9 components whose traction is continuous across the block interface.
pub const VEC9_INTERFACE: [usize; 3] = [2, 3, 5];

fn mandel_weight(a: usize) -> f64 {
    if a < 3 {
        1.0
    } else {
        SQRT_2
    }
}

/// Tait-Bryan angles in radians. Unbounded; see [`EulerAngles::canonical`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerAngles {
    pub const ZERO: EulerAngles = EulerAngles {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Each angle wrapped into (−π, π].
    pub fn canonical(&self) -> Self {
        Self::new(
            wrap_angle(self.alpha),
            wrap_angle(self.beta),
            wrap_angle(self.gamma),
        )
    }

    /// Underlying 3×3 rotation `Q` with `rotation6(self) = mandel_rotation(Q)`.
    pub fn rotation3(&self) -> Mat3 {
        rotation3(self)
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

pub fn mandel_from_sym(m: &Mat3) -> Vec6 {
    Vec6::from_fn(|a, _| {
        let (i, j) = MANDEL_PAIRS[a];
        mandel_weight(a) * 0.5 * (m[(i, j)] + m[(j, i)])
    })
}

pub fn sym_from_mandel(v: &Vec6) -> Mat3 {
    let mut m = Mat3::zeros();
    for (a, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
        let x = v[a] / mandel_weight(a);
        m[(i, j)] = x;
        m[(j, i)] = x;
    }
    m
}

pub fn vec9_from_mat3(m: &Mat3) -> Vec9 {
    Vec9::from_fn(|a, _| {
        let (i, j) = VEC9_PAIRS[a];
        m[(i, j)]
    })
}

pub fn mat3_from_vec9(v: &Vec9) -> Mat3 {
    let mut m = Mat3::zeros();
    for (a, &(i, j)) in VEC9_PAIRS.iter().enumerate() {
        m[(i, j)] = v[a];
    }
    m
}

/// Vec9 index of tensor component `(i, j)`.
pub fn vec9_index(i: usize, j: usize) -> usize {
    VEC9_PAIRS
        .iter()
        .position(|&p| p == (i, j))
        .expect("index in range")
}

/// Linear map taking a Mandel strain to the Vec9 of the same symmetric tensor.
pub fn sym_embedding() -> SMatrix<f64, 9, 6> {
    let mut t = SMatrix::<f64, 9, 6>::zeros();
    for (a, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
        let w = mandel_weight(a);
        t[(vec9_index(i, j), a)] = 1.0 / w;
        if i != j {
            t[(vec9_index(j, i), a)] = 1.0 / w;
        }
    }
    t
}

/// Restricts a 9×9 tangent to symmetric strain/stress, in Mandel form.
pub fn project_tangent(a: &Mat9) -> Mat6 {
    let t = sym_embedding();
    t.transpose() * a * t
}

/// Embeds a Mandel stiffness as a 9×9 tangent acting on symmetric gradients.
pub fn embed_stiffness(c: &Mat6) -> Mat9 {
    let t = sym_embedding();
    t * c * t.transpose()
}

/// Mandel vector of the symmetric part of a Vec9 tensor.
pub fn mandel_from_vec9(v: &Vec9) -> Vec6 {
    sym_embedding().transpose() * v
}

// ---------------------------------------------------------------------------
// Elementary blocks

fn r_p(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    let sc = SQRT_2 * s * c;
    Matrix3::new(c * c, s * s, sc, s * s, c * c, -sc, -sc, sc, c * c - s * s)
}

fn r_p_prime(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    let d2 = 2.0 * s * c;
    let dsc = SQRT_2 * (c * c - s * s);
    Matrix3::new(-d2, d2, dsc, d2, -d2, -dsc, -dsc, dsc, -2.0 * d2)
}

fn r_v(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn r_v_prime(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(-s, -c, c, -s)
}

fn r_pf(theta: f64) -> Matrix4<f64> {
    let (s, c) = theta.sin_cos();
    let sc = s * c;
    Matrix4::new(
        c * c,
        s * s,
        sc,
        sc, //
        s * s,
        c * c,
        -sc,
        -sc, //
        -sc,
        sc,
        c * c,
        -s * s, //
        -sc,
        sc,
        -s * s,
        c * c,
    )
}

fn r_pf_prime(theta: f64) -> Matrix4<f64> {
    let (s, c) = theta.sin_cos();
    let d2 = 2.0 * s * c;
    let dsc = c * c - s * s;
    Matrix4::new(
        -d2, d2, dsc, dsc, //
        d2, -d2, -dsc, -dsc, //
        -dsc, dsc, -d2, -d2, //
        -dsc, dsc, -d2, -d2,
    )
}

fn place<const D: usize, const K: usize>(
    out: &mut SMatrix<f64, D, D>,
    idx: [usize; K],
    block: &SMatrix<f64, K, K>,
) {
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            out[(i, j)] = block[(r, c)];
        }
    }
}

/// Which elementary axis a 6×6 / 9×9 factor rotates about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Elementary 6×6 Mandel rotation about `axis`. With `derivative` set,
/// returns the entrywise derivative with respect to the angle instead.
fn elementary6(axis: Axis, theta: f64, derivative: bool) -> Mat6 {
    let mut m = Mat6::zeros();
    // Y uses r(−β); its derivative picks up the chain-rule sign.
    let (t, sign) = match axis {
        Axis::Y => (-theta, -1.0),
        _ => (theta, 1.0),
    };
    let (p, v) = if derivative {
        (r_p_prime(t) * sign, r_v_prime(t) * sign)
    } else {
        (r_p(t), r_v(t))
    };
    let (fixed, pidx, vidx) = match axis {
        Axis::X => (0, [1, 2, 3], [4, 5]),
        Axis::Y => (1, [0, 2, 4], [3, 5]),
        Axis::Z => (2, [0, 1, 5], [3, 4]),
    };
    if !derivative {
        m[(fixed, fixed)] = 1.0;
    }
    place(&mut m, pidx, &p);
    place(&mut m, vidx, &v);
    m
}

fn elementary9(axis: Axis, theta: f64, derivative: bool) -> Mat9 {
    let mut m = Mat9::zeros();
    let (t, sign) = match axis {
        Axis::Y => (-theta, -1.0),
        _ => (theta, 1.0),
    };
    let (p, v) = if derivative {
        (r_pf_prime(t) * sign, r_v_prime(t) * sign)
    } else {
        (r_pf(t), r_v(t))
    };
    let (fixed, pidx, v1, v2) = match axis {
        Axis::X => (0, [1, 2, 3, 4], [5, 7], [6, 8]),
        Axis::Y => (1, [0, 2, 5, 6], [3, 8], [4, 7]),
        Axis::Z => (2, [0, 1, 7, 8], [3, 5], [4, 6]),
    };
    if !derivative {
        m[(fixed, fixed)] = 1.0;
    }
    place(&mut m, pidx, &p);
    place(&mut m, v1, &v);
    place(&mut m, v2, &v);
    m
}

pub fn rot6_x(alpha: f64) -> Mat6 {
    elementary6(Axis::X, alpha, false)
}
pub fn rot6_y(beta: f64) -> Mat6 {
    elementary6(Axis::Y, beta, false)
}
pub fn rot6_z(gamma: f64) -> Mat6 {
    elementary6(Axis::Z, gamma, false)
}

/// `R = X(α)·Y(β)·Z(γ)` in Mandel notation.
pub fn rotation6(angles: &EulerAngles) -> Mat6 {
    rot6_x(angles.alpha) * rot6_y(angles.beta) * rot6_z(angles.gamma)
}

/// Entrywise angle derivatives `(X'(α), Y'(β), Z'(γ))`.
pub fn rotation6_derivatives(angles: &EulerAngles) -> (Mat6, Mat6, Mat6) {
    (
        elementary6(Axis::X, angles.alpha, true),
        elementary6(Axis::Y, angles.beta, true),
        elementary6(Axis::Z, angles.gamma, true),
    )
}

pub fn rot9_x(alpha: f64) -> Mat9 {
    elementary9(Axis::X, alpha, false)
}
pub fn rot9_y(beta: f64) -> Mat9 {
    elementary9(Axis::Y, beta, false)
}
pub fn rot9_z(gamma: f64) -> Mat9 {
    elementary9(Axis::Z, gamma, false)
}

/// `Rᶠ = Xᶠ(α)·Yᶠ(β)·Zᶠ(γ)` over the Vec9 ordering.
pub fn rotation9(angles: &EulerAngles) -> Mat9 {
    rot9_x(angles.alpha) * rot9_y(angles.beta) * rot9_z(angles.gamma)
}

pub fn rotation9_derivatives(angles: &EulerAngles) -> (Mat9, Mat9, Mat9) {
    (
        elementary9(Axis::X, angles.alpha, true),
        elementary9(Axis::Y, angles.beta, true),
        elementary9(Axis::Z, angles.gamma, true),
    )
}

// ---------------------------------------------------------------------------
// 3×3 rotations

fn rx(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}
fn ry(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}
fn rz(t: f64) -> Mat3 {
    let (s, c) = t.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// The 3×3 rotation represented by `rotation6(angles)`:
/// `Q = Rx(α)ᵀ·Ry(β)ᵀ·Rz(γ)ᵀ` with right-handed active elementary rotations.
pub fn rotation3(angles: &EulerAngles) -> Mat3 {
    rx(angles.alpha).transpose() * ry(angles.beta).transpose() * rz(angles.gamma).transpose()
}

/// Inverse of [`rotation3`]. At gimbal lock (β = ±π/2) γ is set to zero.
pub fn angles_from_rotation3(q: &Mat3) -> EulerAngles {
    // qᵀ = Rz(γ)·Ry(β)·Rx(α)
    let m = q.transpose();
    let sb = (-m[(2, 0)]).clamp(-1.0, 1.0);
    let cb = (m[(2, 1)].powi(2) + m[(2, 2)].powi(2)).sqrt();
    if cb > 1e-12 {
        let alpha = m[(2, 1)].atan2(m[(2, 2)]);
        let gamma = m[(1, 0)].atan2(m[(0, 0)]);
        EulerAngles::new(alpha, sb.atan2(cb), gamma)
    } else {
        // m = Ry(β)·Rx(α) when γ = 0
        let alpha = (-m[(1, 2)]).atan2(m[(1, 1)]);
        EulerAngles::new(alpha, sb.signum() * PI / 2.0, 0.0)
    }
}

/// Mandel matrix of `ε ↦ Q·ε·Qᵀ`, built column by column from the tensor map.
pub fn mandel_rotation(q: &Mat3) -> Mat6 {
    let mut m = Mat6::zeros();
    for b in 0..6 {
        let mut e = Vec6::zeros();
        e[b] = 1.0;
        let t = q * sym_from_mandel(&e) * q.transpose();
        m.set_column(b, &mandel_from_sym(&t));
    }
    m
}

/// Vec9 matrix of `F ↦ Q·F·Qᵀ`.
pub fn vec9_rotation(q: &Mat3) -> Mat9 {
    let mut m = Mat9::zeros();
    for b in 0..9 {
        let mut e = Vec9::zeros();
        e[b] = 1.0;
        let t = q * mat3_from_vec9(&e) * q.transpose();
        m.set_column(b, &vec9_from_mat3(&t));
    }
    m
}

/// `C̄ = R⁻¹·C·R` for an orthogonal Mandel rotation.
pub fn rotate_stiffness(c: &Mat6, angles: &EulerAngles) -> Mat6 {
    let r = rotation6(angles);
    r.transpose() * c * r
}

/// Symmetric part of a square matrix.
pub fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    (m + m.transpose()) * 0.5
}

/// Max |a_ij − a_ji| / max|a_ij|.
pub fn asymmetry<const D: usize>(m: &SMatrix<f64, D, D>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() / scale
}

/// Isotropic Mandel stiffness from Young's modulus and Poisson's ratio.
pub fn isotropic_stiffness(e: f64, nu: f64) -> Mat6 {
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    isotropic_from_lame(lambda, mu)
}

pub fn isotropic_from_lame(lambda: f64, mu: f64) -> Mat6 {
    let mut c = Mat6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = lambda;
        }
        c[(i, i)] += 2.0 * mu;
    }
    for i in 3..6 {
        c[(i, i)] = 2.0 * mu;
    }
    c
}

/// 4th-order tensor (minor and major symmetric) from a Mandel matrix.
pub fn tensor4_from_mandel(c: &Mat6) -> [[[[f64; 3]; 3]; 3]; 3] {
    let mut t = [[[[0.0; 3]; 3]; 3]; 3];
    for (a, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
        for (b, &(k, l)) in MANDEL_PAIRS.iter().enumerate() {
            let v = c[(a, b)] / (mandel_weight(a) * mandel_weight(b));
            for (p, q) in [(i, j), (j, i)] {
                for (r, s) in [(k, l), (l, k)] {
                    t[p][q][r][s] = v;
                }
            }
        }
    }
    t
}

/// Mandel matrix of a 4th-order tensor with minor symmetries.
pub fn mandel_from_tensor4(t: &[[[[f64; 3]; 3]; 3]; 3]) -> Mat6 {
    Mat6::from_fn(|a, b| {
        let (i, j) = MANDEL_PAIRS[a];
        let (k, l) = MANDEL_PAIRS[b];
        mandel_weight(a) * mandel_weight(b) * t[i][j][k][l]
    })
}

/// Reciprocal 1-norm condition number of a 3×3 matrix; 0 when singular.
pub fn rcond3(m: &Mat3) -> f64 {
    let norm1 = |x: &Mat3| (0..3).map(|j| x.column(j).abs().sum()).fold(0.0, f64::max);
    match m.try_inverse() {
        Some(inv) => {
            let n = norm1(m) * norm1(&inv);
            if n.is_finite() && n > 0.0 {
                1.0 / n
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}
