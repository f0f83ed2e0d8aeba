//! Rate-dependent FCC crystal plasticity with multiplicative split
//! `F = Fe·Fp`, power-law slip, latent hardening and a back stress.
//!
//! The local problem is solved implicitly in the normalized overstresses
//! `y_α = (τ_α − a_α)/τ0_α`, from which `Δγ_α = Δt·γ̇0·|y_α|^{m−1}·y_α`.

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{mat3_from_rows, rows_from_mat3};
use crate::error::{DmnError, Result};
use crate::tensor::{
    mandel_from_sym, mat3_from_vec9, sym_from_mandel, vec9_from_mat3, Mat3, Mat6, Mat9, Vec9,
};

pub const NUM_SLIP: usize = 12;
const MAX_LOCAL_ITERATIONS: usize = 50;
const LOCAL_TOL: f64 = 1e-10;
const MAX_Y_STEP: f64 = 0.2;
const STAGNATION_STEP: f64 = 1e-12;
const STAGNATION_TOL: f64 = 1e-7;

type VecS = SVector<f64, NUM_SLIP>;
type MatS = SMatrix<f64, NUM_SLIP, NUM_SLIP>;

/// Parameters with the tabulated names; stresses in MPa, rates in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrystalParams {
    #[serde(rename = "C1111")]
    pub c1111: f64,
    #[serde(rename = "C1122")]
    pub c1122: f64,
    #[serde(rename = "C2323")]
    pub c2323: f64,
    pub gamma_dot_0: f64,
    pub m: f64,
    pub tau0: f64,
    #[serde(rename = "H")]
    pub h_direct: f64,
    #[serde(rename = "R")]
    pub r_recovery: f64,
    pub chi: f64,
    #[serde(default)]
    pub a0: f64,
    pub h: f64,
    pub r: f64,
}

/// History of one crystal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalState {
    pub fp_inv: [[f64; 3]; 3],
    pub tau0: [f64; NUM_SLIP],
    pub back: [f64; NUM_SLIP],
    /// Accumulated slip per system.
    pub gamma: [f64; NUM_SLIP],
    /// Last converged normalized overstress, reused as the initial guess.
    pub y: [f64; NUM_SLIP],
}

/// The 12 {111}⟨110⟩ systems as unit (slip direction, plane normal) pairs.
pub fn fcc_slip_systems() -> [(Vector3<f64>, Vector3<f64>); NUM_SLIP] {
    let raw: [([f64; 3], [f64; 3]); NUM_SLIP] = [
        ([0.0, 1.0, -1.0], [1.0, 1.0, 1.0]),
        ([1.0, 0.0, -1.0], [1.0, 1.0, 1.0]),
        ([1.0, -1.0, 0.0], [1.0, 1.0, 1.0]),
        ([0.0, 1.0, -1.0], [-1.0, 1.0, 1.0]),
        ([1.0, 0.0, 1.0], [-1.0, 1.0, 1.0]),
        ([1.0, 1.0, 0.0], [-1.0, 1.0, 1.0]),
        ([0.0, 1.0, 1.0], [1.0, -1.0, 1.0]),
        ([1.0, 0.0, -1.0], [1.0, -1.0, 1.0]),
        ([1.0, 1.0, 0.0], [1.0, -1.0, 1.0]),
        ([0.0, 1.0, 1.0], [1.0, 1.0, -1.0]),
        ([1.0, 0.0, 1.0], [1.0, 1.0, -1.0]),
        ([1.0, -1.0, 0.0], [1.0, 1.0, -1.0]),
    ];
    raw.map(|(s, n)| (Vector3::from(s).normalize(), Vector3::from(n).normalize()))
}

/// Intermediate quantities of the local update at a trial `y`.
struct Local {
    residual: VecS,
    p: Vec9,
    dgamma: VecS,
    tau0: VecS,
    back: VecS,
    fp_inv: Mat3,
}

impl CrystalParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c1111 > self.c1122.abs()
            && self.c2323 > 0.0
            && self.c1111 + 2.0 * self.c1122 > 0.0
            && self.gamma_dot_0 > 0.0
            && self.m >= 1.0
            && self.tau0 > 0.0
            && self.h_direct >= 0.0
            && self.r_recovery >= 0.0
            && self.h >= 0.0
            && self.r >= 0.0;
        if !ok {
            return Err(DmnError::Validation(
                "crystal plasticity parameters out of range".into(),
            ));
        }
        Ok(())
    }

    /// Cubic elastic stiffness of the intermediate configuration, Mandel.
    pub fn stiffness(&self) -> Mat6 {
        let mut c = Mat6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                c[(i, j)] = if i == j { self.c1111 } else { self.c1122 };
            }
            c[(3 + i, 3 + i)] = 2.0 * self.c2323;
        }
        c
    }

    /// Latent hardening ratio `q = χ + (1 − χ)δ`.
    pub fn latent(&self, a: usize, b: usize) -> f64 {
        self.chi + (1.0 - self.chi) * if a == b { 1.0 } else { 0.0 }
    }

    pub fn initial_state(&self) -> CrystalState {
        CrystalState {
            fp_inv: rows_from_mat3(&Mat3::identity()),
            tau0: [self.tau0; NUM_SLIP],
            back: [self.a0; NUM_SLIP],
            gamma: [0.0; NUM_SLIP],
            y: [0.0; NUM_SLIP],
        }
    }

    fn slip_increment(&self, y: f64, dt: f64) -> f64 {
        dt * self.gamma_dot_0 * y.abs().powf(self.m - 1.0) * y
    }

    /// Elastic response at plastic inverse `fp_inv`: `(P, τ_α)`.
    pub fn elastic_response(&self, f: &Mat3, fp_inv: &Mat3) -> (Mat3, VecS) {
        let fe = f * fp_inv;
        let ce = fe.transpose() * fe;
        let ee = (ce - Mat3::identity()) * 0.5;
        let se = sym_from_mandel(&(self.stiffness() * mandel_from_sym(&ee)));
        let je = fe.determinant();
        let mandel = ce * se;
        let tau = VecS::from_iterator(
            fcc_slip_systems()
                .iter()
                .map(|(s, n)| s.dot(&(mandel * n)) / je),
        );
        (fe * se * fp_inv.transpose(), tau)
    }

    fn local(&self, st: &CrystalState, f: &Mat3, y: &VecS, dt: f64) -> Local {
        let systems = fcc_slip_systems();
        let dgamma = y.map(|v| self.slip_increment(v, dt));
        let sum_abs: f64 = dgamma.iter().map(|g| g.abs()).sum();
        let mut tau0 = VecS::zeros();
        let mut back = VecS::zeros();
        let mut lp = Mat3::zeros();
        for a in 0..NUM_SLIP {
            let hard: f64 = (0..NUM_SLIP).map(|b| self.latent(a, b) * dgamma[b]).sum();
            tau0[a] = (st.tau0[a] + self.h_direct * hard) / (1.0 + self.r_recovery * sum_abs);
            back[a] = (st.back[a] + self.h * dgamma[a]) / (1.0 + self.r * dgamma[a].abs());
            lp += systems[a].0 * systems[a].1.transpose() * dgamma[a];
        }
        let fp_inv = mat3_from_rows(&st.fp_inv) * (-lp).exp();
        let (p, tau) = self.elastic_response(f, &fp_inv);
        let residual = VecS::from_fn(|a, _| y[a] - (tau[a] - back[a]) / tau0[a]);
        Local {
            residual,
            p: vec9_from_mat3(&p),
            dgamma,
            tau0,
            back,
            fp_inv,
        }
    }

    fn jacobian_y(&self, st: &CrystalState, f: &Mat3, y: &VecS, dt: f64, central: bool) -> MatS {
        let h = 1e-7;
        let base = if central {
            None
        } else {
            Some(self.local(st, f, y, dt).residual)
        };
        let mut j = MatS::zeros();
        for b in 0..NUM_SLIP {
            let mut yp = *y;
            yp[b] += h;
            let rp = self.local(st, f, &yp, dt).residual;
            let col = match &base {
                Some(r0) => (rp - r0) / h,
                None => {
                    let mut ym = *y;
                    ym[b] -= h;
                    (rp - self.local(st, f, &ym, dt).residual) / (2.0 * h)
                }
            };
            j.set_column(b, &col);
        }
        j
    }

    /// Implicit update to deformation gradient `f` over `dt`, returning
    /// `(P, ∂P/∂F, new state)`. The tangent is the exact linearization of
    /// the converged local problem; it is not symmetric in general.
    pub fn update_unsymmetric(
        &self,
        st: &CrystalState,
        f: &Mat3,
        dt: f64,
    ) -> Result<(Vec9, Mat9, CrystalState)> {
        if !(dt > 0.0) {
            return Err(DmnError::Validation(
                "crystal plasticity needs dt > 0".into(),
            ));
        }
        let y_prev = VecS::from_column_slice(&st.y);
        let trial = self.local(st, f, &VecS::zeros(), dt).residual * -1.0;
        // The solution lies between zero and the elastic trial on each system.
        let mut y = VecS::from_fn(|a, _| {
            let t = trial[a];
            if t >= 0.0 {
                y_prev[a].clamp(0.0, t)
            } else {
                y_prev[a].clamp(t, 0.0)
            }
        });
        // Slip on one system shifts the resolved shear on the others, so the
        // trial only bounds the solution collectively; the bound guards
        // against overflow of the power law.
        let limit = 1.5 * trial.amax() + 1e-8;
        let bound = VecS::repeat(limit);
        let mut loc = self.local(st, f, &y, dt);
        let mut norm = loc.residual.amax();
        let mut iterations = 0;
        while norm > LOCAL_TOL {
            if iterations == MAX_LOCAL_ITERATIONS {
                return Err(DmnError::NoConvergence {
                    context: "crystal plasticity local update".into(),
                    iterations,
                    residual: norm,
                });
            }
            iterations += 1;
            let jac = self.jacobian_y(st, f, &y, dt, false);
            let mut dy =
                jac.lu()
                    .solve(&(-loc.residual))
                    .ok_or_else(|| DmnError::NoConvergence {
                        context: "crystal plasticity local Jacobian".into(),
                        iterations,
                        residual: norm,
                    })?;
            let big = dy.amax();
            // Residual at its roundoff floor: the correction no longer moves y.
            if big < STAGNATION_STEP && norm < STAGNATION_TOL {
                break;
            }
            if big > MAX_Y_STEP {
                dy *= MAX_Y_STEP / big;
            }
            let mut step = 1.0;
            loop {
                let cand = VecS::from_fn(|a, _| (y[a] + step * dy[a]).clamp(-bound[a], bound[a]));
                let l = self.local(st, f, &cand, dt);
                let n = l.residual.amax();
                if n < norm || step < 1e-3 {
                    y = cand;
                    loc = l;
                    norm = n;
                    break;
                }
                step *= 0.5;
            }
        }

        // Tangent by the implicit function theorem on R(F, y) = 0.
        let hf = 1e-7;
        let mut p_f = Mat9::zeros();
        let mut r_f = SMatrix::<f64, NUM_SLIP, 9>::zeros();
        let fv = vec9_from_mat3(f);
        for q in 0..9 {
            let mut fp = fv;
            let mut fm = fv;
            fp[q] += hf;
            fm[q] -= hf;
            let lp = self.local(st, &mat3_from_vec9(&fp), &y, dt);
            let lm = self.local(st, &mat3_from_vec9(&fm), &y, dt);
            p_f.set_column(q, &((lp.p - lm.p) / (2.0 * hf)));
            r_f.set_column(q, &((lp.residual - lm.residual) / (2.0 * hf)));
        }
        let hy = 1e-7;
        let mut p_y = SMatrix::<f64, 9, NUM_SLIP>::zeros();
        for b in 0..NUM_SLIP {
            let mut yp = y;
            let mut ym = y;
            yp[b] += hy;
            ym[b] -= hy;
            let d = (self.local(st, f, &yp, dt).p - self.local(st, f, &ym, dt).p) / (2.0 * hy);
            p_y.set_column(b, &d);
        }
        let jac = self.jacobian_y(st, f, &y, dt, true);
        let dy_df = jac.lu().solve(&r_f).ok_or(DmnError::NoConvergence {
            context: "crystal plasticity tangent".into(),
            iterations,
            residual: norm,
        })?;
        let a = p_f - p_y * dy_df;

        let mut gamma = st.gamma;
        for (g, d) in gamma.iter_mut().zip(loc.dgamma.iter()) {
            *g += d.abs();
        }
        let state = CrystalState {
            fp_inv: rows_from_mat3(&loc.fp_inv),
            tau0: loc.tau0.into(),
            back: loc.back.into(),
            gamma,
            y: y.into(),
        };
        Ok((loc.p, a, state))
    }

    /// As [`update_unsymmetric`](Self::update_unsymmetric) with the tangent
    /// replaced by its symmetric part.
    pub fn update(
        &self,
        st: &CrystalState,
        f: &Mat3,
        dt: f64,
    ) -> Result<(Vec9, Mat9, CrystalState)> {
        let (p, a, s) = self.update_unsymmetric(st, f, dt)?;
        Ok((p, (a + a.transpose()) * 0.5, s))
    }
}
