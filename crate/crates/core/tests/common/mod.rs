#![allow(dead_code)]

pub mod oracles;

use dmn_core::doe::{sample_phase_pair, Sample};
use dmn_core::network::MaterialNetwork;
use dmn_core::tensor::{mandel_from_tensor4, tensor4_from_mandel, Mat3, Mat6};
use rand::Rng;

/// Five-point central difference of `f` at `x` along each coordinate.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let at = |p: &mut Vec<f64>, d: f64| {
            p[i] = x[i] + d;
            let v = f(p);
            p[i] = x[i];
            v
        };
        let (f1, fm1) = (at(&mut p, h), at(&mut p, -h));
        let (f2, fm2) = (at(&mut p, 2.0 * h), at(&mut p, -2.0 * h));
        g[i] = (8.0 * (f1 - fm1) - (f2 - fm2)) / (12.0 * h);
    }
    g
}

/// Largest relative mismatch over components where either value exceeds `floor`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| a.abs() > floor || n.abs() > floor)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max)
}

/// Brute-force rotation of a Mandel stiffness through its 4th-order tensor:
/// `C'_ijkl = Q_pi Q_qj Q_rk Q_sl C_pqrs`.
pub fn rotate_tensor4(c: &Mat6, q: &Mat3) -> Mat6 {
    let t = tensor4_from_mandel(c);
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut s = 0.0;
                    for p in 0..3 {
                        for qq in 0..3 {
                            for r in 0..3 {
                                for w in 0..3 {
                                    s += q[(p, i)]
                                        * q[(qq, j)]
                                        * q[(r, k)]
                                        * q[(w, l)]
                                        * t[p][qq][r][w];
                                }
                            }
                        }
                    }
                    out[i][j][k][l] = s;
                }
            }
        }
    }
    mandel_from_tensor4(&out)
}

pub fn random_phase_pair<R: Rng>(rng: &mut R) -> (Mat6, Mat6) {
    let (p1, p2) = sample_phase_pair(rng).unwrap();
    (p1.stiffness().unwrap(), p2.stiffness().unwrap())
}

/// Inputs paired with targets from a different random network.
pub fn random_samples<R: Rng>(rng: &mut R, n: usize, depth: usize) -> Vec<Sample> {
    let other = MaterialNetwork::random(depth, rng);
    (0..n)
        .map(|id| {
            let (c1, c2) = random_phase_pair(rng);
            let t = other.forward_linear(&c1, Some(&c2)).unwrap().output;
            Sample {
                id,
                c_p1: c1,
                c_p2: Some(c2),
                c_target: t,
            }
        })
        .collect()
}

pub fn flatten_params(net: &MaterialNetwork) -> Vec<f64> {
    net.z
        .iter()
        .copied()
        .chain(net.angles.iter().flat_map(|a| a.as_array()))
        .collect()
}

pub fn with_params(net: &MaterialNetwork, x: &[f64]) -> MaterialNetwork {
    let mut n = net.clone();
    let nz = n.z.len();
    n.z.copy_from_slice(&x[..nz]);
    for (k, a) in n.angles.iter_mut().enumerate() {
        a.alpha = x[nz + 3 * k];
        a.beta = x[nz + 3 * k + 1];
        a.gamma = x[nz + 3 * k + 2];
    }
    n
}

pub fn rel(a: &Mat6, b: &Mat6) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}
