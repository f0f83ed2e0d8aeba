//! Reference computations that share no code with the library solvers.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

/// Two-phase laminate (normal along axis 3) in plain tensor components.
///
/// Unknowns are both phases' strains as 3×3 symmetric tensors stored by
/// their six independent components; conditions are strain averaging,
/// continuity of the in-plane strains and continuity of the tractions
/// `σ·e3`. The stiffnesses act on tensor components, so the Mandel input is
/// converted with explicit √2 factors here rather than through library code.
pub fn laminate_dense(
    c1: &nalgebra::SMatrix<f64, 6, 6>,
    c2: &nalgebra::SMatrix<f64, 6, 6>,
    f1: f64,
) -> nalgebra::SMatrix<f64, 6, 6> {
    let r2 = 2f64.sqrt();
    // Voigt-like tensor components (e11,e22,e33,e23,e13,e12), engineering-free.
    let w = [1.0, 1.0, 1.0, r2, r2, r2];
    // σ_tensor_i = Σ_j K_ij ε_tensor_j with K_ij = C_ij·w_j/w_i.
    let k =
        |c: &nalgebra::SMatrix<f64, 6, 6>| DMatrix::from_fn(6, 6, |i, j| c[(i, j)] * w[j] / w[i]);
    let (k1, k2) = (k(c1), k(c2));
    let f2 = 1.0 - f1;
    let mut a = DMatrix::<f64>::zeros(12, 12);
    for i in 0..6 {
        a[(i, i)] = f1;
        a[(i, 6 + i)] = f2;
    }
    // in-plane tensor strains e11, e22, e12 continuous
    for (r, &i) in [0usize, 1, 5].iter().enumerate() {
        a[(6 + r, i)] = 1.0;
        a[(6 + r, 6 + i)] = -1.0;
    }
    // tractions σ33, σ23, σ13 continuous
    for (r, &i) in [2usize, 3, 4].iter().enumerate() {
        for j in 0..6 {
            a[(9 + r, j)] = k1[(i, j)];
            a[(9 + r, 6 + j)] = -k2[(i, j)];
        }
    }
    let lu = a.lu();
    let mut out = nalgebra::SMatrix::<f64, 6, 6>::zeros();
    for b in 0..6 {
        // unit Mandel strain b as tensor components
        let mut rhs = DVector::<f64>::zeros(12);
        rhs[b] = 1.0 / w[b];
        let x = lu.solve(&rhs).expect("laminate system is regular");
        let e1 = x.rows(0, 6).into_owned();
        let e2 = x.rows(6, 6).into_owned();
        let s = &k1 * e1 * f1 + &k2 * e2 * f2;
        for i in 0..6 {
            out[(i, b)] = s[i] * w[i];
        }
    }
    out
}

/// Cubic crystal parameters for the explicit reference.
#[derive(Clone, Copy)]
pub struct CrystalRef {
    pub c11: f64,
    pub c12: f64,
    pub c44: f64,
    pub gdot0: f64,
    pub m: f64,
    pub tau0: f64,
    pub h_direct: f64,
    pub h_back: f64,
}

fn slip_systems() -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let planes: [[f64; 3]; 4] = [
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, -1.0],
    ];
    let dirs: [[f64; 3]; 6] = [
        [0.0, 1.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, -1.0],
        [1.0, 0.0, -1.0],
        [1.0, -1.0, 0.0],
    ];
    let mut out = Vec::new();
    for p in planes {
        let n = Vector3::from(p);
        for d in dirs {
            let s = Vector3::from(d);
            if s.dot(&n).abs() < 1e-12 {
                out.push((s.normalize(), n.normalize()));
            }
        }
    }
    assert_eq!(out.len(), 12);
    out
}

impl CrystalRef {
    fn second_pk(&self, e: &Matrix3<f64>) -> Matrix3<f64> {
        let tr = e.trace();
        let mut s = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                s[(i, j)] = if i == j {
                    self.c12 * tr + (self.c11 - self.c12) * e[(i, i)]
                } else {
                    2.0 * self.c44 * e[(i, j)]
                };
            }
        }
        s
    }

    /// First Piola-Kirchhoff stress and resolved shears at `f` with plastic part `fp`.
    fn response(
        &self,
        f: &Matrix3<f64>,
        fp: &Matrix3<f64>,
        sys: &[(Vector3<f64>, Vector3<f64>)],
    ) -> (Matrix3<f64>, Vec<f64>) {
        let fp_inv = fp.try_inverse().unwrap();
        let fe = f * fp_inv;
        let ce = fe.transpose() * fe;
        let se = self.second_pk(&((ce - Matrix3::identity()) * 0.5));
        let je = fe.determinant();
        let m = ce * se;
        let tau = sys.iter().map(|(s, n)| s.dot(&(m * n)) / je).collect();
        (fe * se * fp_inv.transpose(), tau)
    }

    /// Forward-Euler uniaxial stress along the cube axis at constant
    /// `rate` up to `strain`, in `substeps` steps. Returns `P11` at the end.
    pub fn uniaxial_explicit(&self, rate: f64, strain: f64, substeps: usize) -> f64 {
        let sys = slip_systems();
        let dt = strain / rate / substeps as f64;
        let mut fp = Matrix3::<f64>::identity();
        let mut tau0 = vec![self.tau0; 12];
        let mut back = vec![0.0; 12];
        let mut lat = [1.0, 1.0];
        let mut p11 = 0.0;
        for k in 1..=substeps {
            let f11 = 1.0 + strain * k as f64 / substeps as f64;
            let build = |l: [f64; 2]| Matrix3::from_diagonal(&Vector3::new(f11, l[0], l[1]));
            // lateral stresses vanish
            for _ in 0..20 {
                let (p, _) = self.response(&build(lat), &fp, &sys);
                let r = [p[(1, 1)], p[(2, 2)]];
                if r[0].abs().max(r[1].abs()) < 1e-9 {
                    break;
                }
                let h = 1e-7;
                let mut jac = nalgebra::Matrix2::zeros();
                for c in 0..2 {
                    let mut l = lat;
                    l[c] += h;
                    let (pp, _) = self.response(&build(l), &fp, &sys);
                    jac[(0, c)] = (pp[(1, 1)] - r[0]) / h;
                    jac[(1, c)] = (pp[(2, 2)] - r[1]) / h;
                }
                let d = jac.lu().solve(&nalgebra::Vector2::new(r[0], r[1])).unwrap();
                lat[0] -= d[0];
                lat[1] -= d[1];
            }
            let (p, tau) = self.response(&build(lat), &fp, &sys);
            p11 = p[(0, 0)];
            let mut lp = Matrix3::zeros();
            let mut rates = vec![0.0; 12];
            for a in 0..12 {
                let y = (tau[a] - back[a]) / tau0[a];
                rates[a] = self.gdot0 * y.abs().powf(self.m - 1.0) * y;
                lp += sys[a].0 * sys[a].1.transpose() * rates[a];
            }
            fp = (Matrix3::identity() + lp * dt) * fp;
            let total: f64 = rates.iter().sum();
            for a in 0..12 {
                tau0[a] += dt * self.h_direct * total;
                back[a] += dt * self.h_back * rates[a];
            }
        }
        p11
    }
}
