//! Design of experiments for offline training data: random orthotropic phase
//! pairs and the targets produced by an oracle.

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DmnError, Result};
use crate::network::MaterialNetwork;
use crate::tensor::Mat6;

/// Orthotropic elastic constants in the principal frame.
///
/// Poisson ratios follow the compliance layout
/// `D₁₂ = −ν₁₂/E₂₂`, `D₂₃ = −ν₂₃/E₃₃`, `D₁₃ = −ν₃₁/E₁₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthotropicElastic {
    pub e11: f64,
    pub e22: f64,
    pub e33: f64,
    pub g23: f64,
    pub g31: f64,
    pub g12: f64,
    pub nu12: f64,
    pub nu23: f64,
    pub nu31: f64,
}

impl OrthotropicElastic {
    pub fn isotropic(e: f64, nu: f64) -> Self {
        let g = e / (2.0 * (1.0 + nu));
        Self {
            e11: e,
            e22: e,
            e33: e,
            g23: g,
            g31: g,
            g12: g,
            nu12: nu,
            nu23: nu,
            nu31: nu,
        }
    }

    /// From tabulated engineering constants whose compliance reads
    /// `Dᵢⱼ = −νᵢⱼ/Eⱼ` (`νᵢⱼ`: contraction along `i` under stress along `j`).
    #[allow(clippy::too_many_arguments)]
    pub fn from_engineering(
        e1: f64,
        e2: f64,
        e3: f64,
        g12: f64,
        g13: f64,
        g23: f64,
        nu12: f64,
        nu13: f64,
        nu23: f64,
    ) -> Self {
        Self {
            e11: e1,
            e22: e2,
            e33: e3,
            g23,
            g31: g13,
            g12,
            nu12,
            nu23,
            nu31: nu13 * e1 / e3,
        }
    }

    /// Mandel compliance matrix.
    pub fn compliance(&self) -> Mat6 {
        let mut d = Mat6::zeros();
        d[(0, 0)] = 1.0 / self.e11;
        d[(1, 1)] = 1.0 / self.e22;
        d[(2, 2)] = 1.0 / self.e33;
        d[(0, 1)] = -self.nu12 / self.e22;
        d[(1, 2)] = -self.nu23 / self.e33;
        d[(0, 2)] = -self.nu31 / self.e11;
        d[(1, 0)] = d[(0, 1)];
        d[(2, 1)] = d[(1, 2)];
        d[(2, 0)] = d[(0, 2)];
        d[(3, 3)] = 1.0 / (2.0 * self.g23);
        d[(4, 4)] = 1.0 / (2.0 * self.g31);
        d[(5, 5)] = 1.0 / (2.0 * self.g12);
        d
    }

    pub fn is_positive_definite(&self) -> bool {
        let d = self.compliance();
        d.iter().all(|x| x.is_finite()) && d.cholesky().is_some()
    }

    /// Mandel stiffness, the inverse of [`compliance`](Self::compliance).
    pub fn stiffness(&self) -> Result<Mat6> {
        let d = self.compliance();
        let chol = d
            .cholesky()
            .ok_or_else(|| DmnError::Validation("compliance is not positive definite".into()))?;
        let c = chol.inverse();
        Ok((c + c.transpose()) * 0.5)
    }
}

/// Draws one phase with moduli geometrically rescaled to mean `ebar`.
pub fn sample_orthotropic<R: Rng>(rng: &mut R, ebar: f64) -> OrthotropicElastic {
    let mut e = [0.0; 3];
    for x in e.iter_mut() {
        *x = 10f64.powf(rng.random_range(-1.0..=1.0));
    }
    let mean = (e[0] * e[1] * e[2]).cbrt();
    for x in e.iter_mut() {
        *x *= ebar / mean;
    }
    let [e11, e22, e33] = e;
    let g12 = rng.random_range(0.25..=0.5) * (e11 * e22).sqrt();
    let g23 = rng.random_range(0.25..=0.5) * (e22 * e33).sqrt();
    let g31 = rng.random_range(0.25..=0.5) * (e33 * e11).sqrt();
    let nu12 = open_half(rng) * (e22 / e11).sqrt();
    let nu23 = open_half(rng) * (e33 / e22).sqrt();
    let nu31 = open_half(rng) * (e11 / e33).sqrt();
    OrthotropicElastic {
        e11,
        e22,
        e33,
        g23,
        g31,
        g12,
        nu12,
        nu23,
        nu31,
    }
}

/// Uniform on the open interval (0, 0.5).
fn open_half<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.random_range(0.0..0.5);
        if x > 0.0 {
            return x;
        }
    }
}

pub const MAX_SAMPLING_TRIES: usize = 1000;

/// Phase 1 at unit mean modulus, phase 2 at `10^U[−3, 3]`.
pub fn sample_phase_pair<R: Rng>(rng: &mut R) -> Result<(OrthotropicElastic, OrthotropicElastic)> {
    let p1 = sample_until_valid(rng, |_| 1.0)?;
    let p2 = sample_until_valid(rng, |r| 10f64.powf(r.random_range(-3.0..=3.0)))?;
    Ok((p1, p2))
}

fn sample_until_valid<R: Rng>(
    rng: &mut R,
    ebar: impl Fn(&mut R) -> f64,
) -> Result<OrthotropicElastic> {
    for _ in 0..MAX_SAMPLING_TRIES {
        let scale = ebar(rng);
        let p = sample_orthotropic(rng, scale);
        if p.is_positive_definite() {
            return Ok(p);
        }
    }
    Err(DmnError::Validation(format!(
        "no positive-definite compliance in {MAX_SAMPLING_TRIES} draws"
    )))
}

/// Exact stiffness of a two-phase laminate with interface normal along
/// axis 3, assembled as the full averaging / continuity system for each
/// unit macroscopic strain.
pub fn laminate_oracle(c1: &Mat6, c2: &Mat6, f1: f64) -> Result<Mat6> {
    let f2 = 1.0 - f1;
    let mut sys = SMatrix::<f64, 12, 12>::zeros();
    // rows 0..6: f1·ε¹ + f2·ε² = ε̄
    for i in 0..6 {
        sys[(i, i)] = f1;
        sys[(i, 6 + i)] = f2;
    }
    // in-plane strains continuous
    for (r, &i) in [0usize, 1, 5].iter().enumerate() {
        sys[(6 + r, i)] = 1.0;
        sys[(6 + r, 6 + i)] = -1.0;
    }
    // tractions on the interface continuous
    for (r, &i) in [2usize, 3, 4].iter().enumerate() {
        for j in 0..6 {
            sys[(9 + r, j)] = c1[(i, j)];
            sys[(9 + r, 6 + j)] = -c2[(i, j)];
        }
    }
    let lu = sys.lu();
    let mut out = Mat6::zeros();
    for b in 0..6 {
        let mut rhs = SVector::<f64, 12>::zeros();
        rhs[b] = 1.0;
        let x = lu.solve(&rhs).ok_or_else(|| DmnError::OracleFailure {
            sample: 0,
            reason: "singular laminate system".into(),
        })?;
        let e1 = x.fixed_rows::<6>(0).into_owned();
        let e2 = x.fixed_rows::<6>(6).into_owned();
        out.set_column(b, &(c1 * e1 * f1 + c2 * e2 * f2));
    }
    Ok(out)
}

/// Source of target stiffness for a phase pair.
#[derive(Debug, Clone)]
pub enum Oracle {
    /// A frozen reference network.
    Teacher(MaterialNetwork),
    /// A single laminate with phase-1 fraction `f1`.
    Laminate { f1: f64 },
}

impl Oracle {
    pub fn name(&self) -> &'static str {
        match self {
            Oracle::Teacher(_) => "teacher",
            Oracle::Laminate { .. } => "laminate",
        }
    }

    pub fn single_phase(&self) -> bool {
        matches!(self, Oracle::Teacher(net) if net.is_single_phase())
    }

    pub fn evaluate(&self, c1: &Mat6, c2: Option<&Mat6>) -> Result<Mat6> {
        match self {
            Oracle::Teacher(net) => Ok(net.forward_linear(c1, c2)?.output),
            Oracle::Laminate { f1 } => laminate_oracle(c1, c2.unwrap_or(c1), *f1),
        }
    }
}

/// One training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    #[serde(with = "crate::io::mat6_rows")]
    pub c_p1: Mat6,
    #[serde(
        with = "crate::io::opt_mat6_rows",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub c_p2: Option<Mat6>,
    #[serde(with = "crate::io::mat6_rows")]
    pub c_target: Mat6,
}

/// `count` samples from `seed`, the first `n_train` forming the training set.
pub fn generate_dataset(
    oracle: &Oracle,
    count: usize,
    n_train: usize,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if n_train > count {
        return Err(DmnError::Validation(format!(
            "split {n_train} exceeds count {count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let single = oracle.single_phase();
    let mut inputs = Vec::with_capacity(count);
    for _ in 0..count {
        let (p1, p2) = sample_phase_pair(&mut rng)?;
        let c1 = p1.stiffness()?;
        let c2 = if single { None } else { Some(p2.stiffness()?) };
        inputs.push((c1, c2));
    }
    let samples: Vec<Sample> = inputs
        .into_par_iter()
        .enumerate()
        .map(|(id, (c1, c2))| {
            let t = oracle
                .evaluate(&c1, c2.as_ref())
                .map_err(|e| DmnError::OracleFailure {
                    sample: id,
                    reason: e.to_string(),
                })?;
            Ok(Sample {
                id,
                c_p1: c1,
                c_p2: c2,
                c_target: (t + t.transpose()) * 0.5,
            })
        })
        .collect::<Result<_>>()?;
    let mut train = samples;
    let test = train.split_off(n_train);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::homogenize_linear;
    use crate::tensor::isotropic_stiffness;

    #[test]
    fn phase_one_mean_modulus_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (p1, _) = sample_phase_pair(&mut rng).unwrap();
            assert!(((p1.e11 * p1.e22 * p1.e33).cbrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn isotropic_constants_give_isotropic_stiffness() {
        let c = OrthotropicElastic::isotropic(3.0, 0.25)
            .stiffness()
            .unwrap();
        let r = (c - isotropic_stiffness(3.0, 0.25)).amax() / c.amax();
        assert!(r < 1e-13);
    }

    #[test]
    fn laminate_oracle_matches_block() {
        let c1 = isotropic_stiffness(1.0, 0.3);
        let c2 = isotropic_stiffness(10.0, 0.3);
        let lam = laminate_oracle(&c1, &c2, 0.5).unwrap();
        let blk = homogenize_linear(&c1, &c2, 0.5, 0.5).unwrap().c;
        assert!((lam - blk).amax() / lam.amax() < 1e-12);
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = generate_dataset(&Oracle::Laminate { f1: 0.4 }, 10, 8, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(te[0].id, 8);
    }
}
