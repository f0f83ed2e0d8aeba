//! Binary-tree material network.
//!
//! Nodes use heap numbering: the root is node 1, node `n` has children `2n`
//! and `2n + 1`, and the bottom layer of a depth-`N` tree is
//! `2^(N-1) ..= 2^N - 1`. Per-node arrays are indexed by `n - 1`; per-leaf
//! arrays by the position `j` within the bottom layer.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::block::{
    homogenize_linear, homogenize_linear_backward, BlockSolution, PreparedRotation,
};
use crate::error::{DmnError, Result};
use crate::tensor::{angles_from_rotation3, rotation3, rotation6, EulerAngles, Mat3, Mat6};

pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialNetwork {
    pub depth: usize,
    /// Activation of each bottom-layer node.
    pub z: Vec<f64>,
    /// Rotation angles of every node.
    pub angles: Vec<EulerAngles>,
    /// Phase id (1 or 2) of each bottom-layer node.
    pub phases: Vec<u8>,
    /// Nodes removed by compression: they forward their single active
    /// child unchanged and their own rotation is ignored.
    pub collapsed: Vec<bool>,
}

/// Per-node weights (index `n`, slot 0 unused) and phase-1 volume fraction.
#[derive(Debug, Clone)]
pub struct Weights {
    pub node: Vec<f64>,
    pub vf1: f64,
}

impl Weights {
    pub fn total(&self) -> f64 {
        self.node[1]
    }
}

impl MaterialNetwork {
    /// Two-phase network with zero angles and unit activations.
    pub fn new(depth: usize) -> Self {
        assert!(depth >= 1, "depth must be at least 1");
        let leaves = 1usize << (depth - 1);
        let nodes = (1usize << depth) - 1;
        Self {
            depth,
            z: vec![1.0; leaves],
            angles: vec![EulerAngles::ZERO; nodes],
            phases: (0..leaves)
                .map(|j| if j % 2 == 0 { 1 } else { 2 })
                .collect(),
            collapsed: vec![false; nodes],
        }
    }

    /// Network whose leaves all take the phase-1 material.
    pub fn new_single_phase(depth: usize) -> Self {
        let mut net = Self::new(depth);
        net.phases.iter_mut().for_each(|p| *p = 1);
        net
    }

    /// Random initialization: `z ~ U(0.2, 0.8)`, angles `~ U(−π/2, π/2)`.
    pub fn random<R: Rng>(depth: usize, rng: &mut R) -> Self {
        let mut net = Self::new(depth);
        for z in net.z.iter_mut() {
            *z = rng.random_range(0.2..0.8);
        }
        for a in net.angles.iter_mut() {
            *a = EulerAngles::new(
                rng.random_range(-FRAC_PI_2..FRAC_PI_2),
                rng.random_range(-FRAC_PI_2..FRAC_PI_2),
                rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            );
        }
        net
    }

    /// [`random`](Self::random) drawn from a ChaCha8 stream seeded with `seed`.
    pub fn random_seeded(depth: usize, seed: u64) -> Self {
        Self::random(depth, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn num_leaves(&self) -> usize {
        1 << (self.depth - 1)
    }

    pub fn num_nodes(&self) -> usize {
        (1 << self.depth) - 1
    }

    /// `7·2^(N-1) − 3` trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.num_leaves() + 3 * self.num_nodes()
    }

    pub fn first_leaf(&self) -> usize {
        self.num_leaves()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node >= self.first_leaf()
    }

    pub fn leaf_node(&self, j: usize) -> usize {
        self.first_leaf() + j
    }

    pub fn leaf_index(&self, node: usize) -> usize {
        node - self.first_leaf()
    }

    pub fn is_single_phase(&self) -> bool {
        self.phases.iter().all(|&p| p == 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.depth > 24 {
            return Err(DmnError::Validation(format!(
                "unsupported depth {}",
                self.depth
            )));
        }
        if self.z.len() != self.num_leaves()
            || self.phases.len() != self.num_leaves()
            || self.angles.len() != self.num_nodes()
            || self.collapsed.len() != self.num_nodes()
        {
            return Err(DmnError::Validation(
                "array lengths do not match depth".into(),
            ));
        }
        if self.phases.iter().any(|&p| p != 1 && p != 2) {
            return Err(DmnError::Validation("phase ids must be 1 or 2".into()));
        }
        let angles = self.angles.iter().flat_map(|a| a.as_array());
        if self.z.iter().copied().chain(angles).any(|x| !x.is_finite()) {
            return Err(DmnError::Validation("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> Result<Weights> {
        let n_total = 1usize << self.depth;
        let mut node = vec![0.0; n_total];
        let first = self.first_leaf();
        for (j, &z) in self.z.iter().enumerate() {
            node[first + j] = relu(z);
        }
        for n in (1..first).rev() {
            node[n] = node[2 * n] + node[2 * n + 1];
        }
        if !(node[1] > 0.0) {
            return Err(DmnError::AllLeavesDeactivated);
        }
        let w1: f64 = (0..self.num_leaves())
            .filter(|&j| self.phases[j] == 1)
            .map(|j| node[first + j])
            .sum();
        Ok(Weights {
            vf1: w1 / node[1],
            node,
        })
    }

    /// Number of active bottom-layer nodes.
    pub fn active_leaves(&self) -> usize {
        self.z.iter().filter(|&&z| z > 0.0).count()
    }

    pub fn prepare(&self) -> Vec<PreparedRotation> {
        self.angles.iter().map(PreparedRotation::new).collect()
    }

    fn phase_stiffness<'a>(&self, j: usize, c1: &'a Mat6, c2: Option<&'a Mat6>) -> &'a Mat6 {
        match (self.phases[j], c2) {
            (2, Some(c2)) => c2,
            _ => c1,
        }
    }

    /// Active child of a node with exactly one active child.
    fn active_child(&self, w: &[f64], n: usize) -> usize {
        if w[2 * n] > 0.0 {
            2 * n
        } else {
            2 * n + 1
        }
    }

    pub fn forward_linear(&self, c_p1: &Mat6, c_p2: Option<&Mat6>) -> Result<LinearForward> {
        let w = self.weights()?;
        let rot = self.prepare();
        self.forward_prepared(&w, &rot, c_p1, c_p2)
    }

    /// Forward pass with weights and rotations computed by the caller.
    pub fn forward_prepared(
        &self,
        w: &Weights,
        rot: &[PreparedRotation],
        c_p1: &Mat6,
        c_p2: Option<&Mat6>,
    ) -> Result<LinearForward> {
        let n_total = 1usize << self.depth;
        let mut c = vec![Mat6::zeros(); n_total];
        let mut cbar = vec![Mat6::zeros(); n_total];
        let mut sol: Vec<Option<BlockSolution<6>>> = vec![None; n_total];
        let first = self.first_leaf();
        let wn = &w.node;
        for n in (1..n_total).rev() {
            if !(wn[n] > 0.0) {
                continue;
            }
            if n >= first {
                c[n] = *self.phase_stiffness(n - first, c_p1, c_p2);
                cbar[n] = rot[n - 1].apply(&c[n]);
            } else if self.collapsed[n - 1] {
                cbar[n] = cbar[self.active_child(wn, n)];
            } else {
                let s = homogenize_linear(&cbar[2 * n], &cbar[2 * n + 1], wn[2 * n], wn[2 * n + 1])
                    .map_err(|e| e.at_node(n))?;
                c[n] = s.c;
                cbar[n] = rot[n - 1].apply(&c[n]);
                sol[n] = Some(s);
            }
        }
        Ok(LinearForward {
            output: cbar[1],
            c,
            cbar,
            sol,
        })
    }

    /// Reverse pass: gradient of a scalar `L` with respect to `z` and the
    /// angles, given `∂L/∂C̄_rve`.
    pub fn backward_linear(
        &self,
        w: &Weights,
        rot: &[PreparedRotation],
        fwd: &LinearForward,
        g_out: &Mat6,
    ) -> Gradient {
        let n_total = 1usize << self.depth;
        let first = self.first_leaf();
        let wn = &w.node;
        let mut g_cbar = vec![Mat6::zeros(); n_total];
        let mut g_w = vec![0.0; n_total];
        let mut grad = Gradient::zeros(self);
        g_cbar[1] = *g_out;
        for n in 1..n_total {
            if !(wn[n] > 0.0) {
                continue;
            }
            if n < first && self.collapsed[n - 1] {
                let child = self.active_child(wn, n);
                g_cbar[child] = g_cbar[n];
                continue;
            }
            let (g_c, g_a) = rot[n - 1].backward(&fwd.c[n], &g_cbar[n]);
            grad.angles[n - 1] = g_a;
            if n >= first {
                continue;
            }
            let s = fwd.sol[n].as_ref().expect("forward cache for active block");
            let h = homogenize_linear_backward(
                &fwd.cbar[2 * n],
                &fwd.cbar[2 * n + 1],
                wn[2 * n],
                wn[2 * n + 1],
                s,
                &g_c,
            );
            g_cbar[2 * n] = h.g_c1;
            g_cbar[2 * n + 1] = h.g_c2;
            g_w[2 * n] += h.g_w1;
            g_w[2 * n + 1] += h.g_w2;
        }
        // A node's weight is the sum of its children's, so its sensitivity
        // reaches every descendant leaf.
        for n in 2..n_total {
            g_w[n] += g_w[n / 2];
        }
        for j in 0..self.num_leaves() {
            if self.z[j] > 0.0 {
                grad.z[j] = g_w[first + j];
            }
        }
        grad
    }

    /// Composed 3×3 rotation of node `n` along its path to the root,
    /// `Q_n·Q_parent···Q_root`, skipping collapsed nodes.
    pub fn composed_rotation(&self, n: usize) -> Mat3 {
        let mut q = Mat3::identity();
        let mut m = n;
        while m >= 1 {
            if !(m < self.first_leaf() && self.collapsed[m - 1]) {
                q *= rotation3(&self.angles[m - 1]);
            }
            m /= 2;
        }
        q
    }

    pub fn export_orientations(&self) -> Result<Vec<LeafOrientation>> {
        let w = self.weights()?;
        let first = self.first_leaf();
        let mut out = Vec::new();
        for j in 0..self.num_leaves() {
            let n = first + j;
            if !(w.node[n] > 0.0) {
                continue;
            }
            let q = self.composed_rotation(n);
            out.push(LeafOrientation {
                leaf: n,
                phase: self.phases[j],
                weight: w.node[n],
                fraction: w.node[n] / w.total(),
                rotation: [
                    [q[(0, 0)], q[(0, 1)], q[(0, 2)]],
                    [q[(1, 0)], q[(1, 1)], q[(1, 2)]],
                    [q[(2, 0)], q[(2, 1)], q[(2, 2)]],
                ],
                angles: angles_from_rotation3(&q).canonical(),
            });
        }
        Ok(out)
    }

    pub fn export_treemap(&self) -> Result<Treemap> {
        let w = self.weights()?;
        let root = self.treemap_node(&w, 1);
        Ok(Treemap {
            active_leaves: self.active_leaves(),
            vf1: w.vf1,
            root,
        })
    }

    fn treemap_node(&self, w: &Weights, n: usize) -> TreemapNode {
        let first = self.first_leaf();
        if n < first && self.collapsed[n - 1] {
            return self.treemap_node(w, self.active_child(&w.node, n));
        }
        let mut node = TreemapNode {
            node: n,
            weight: w.node[n],
            fraction: w.node[n] / w.total(),
            phase: None,
            children: Vec::new(),
        };
        if n >= first {
            node.phase = Some(self.phases[n - first]);
        } else {
            for c in [2 * n, 2 * n + 1] {
                if w.node[c] > 0.0 {
                    node.children.push(self.treemap_node(w, c));
                }
            }
        }
        node
    }

    /// Swaps the subtrees rooted at two nodes of the same level.
    pub fn swap_subtrees(&mut self, a: usize, b: usize) {
        let first = self.first_leaf();
        let (mut a, mut b, mut width) = (a, b, 1usize);
        while a < (1 << self.depth) {
            for i in 0..width {
                let (x, y) = (a + i, b + i);
                self.angles.swap(x - 1, y - 1);
                self.collapsed.swap(x - 1, y - 1);
                if x >= first {
                    self.z.swap(x - first, y - first);
                    self.phases.swap(x - first, y - first);
                }
            }
            a *= 2;
            b *= 2;
            width *= 2;
        }
    }

    /// Single-child deletion and sibling-subtree merging.
    pub fn compress(&mut self, opts: &CompressOptions) -> Result<CompressReport> {
        let before = self.active_leaves();
        let first = self.first_leaf();

        // Heavier child first, so similar subtrees line up position by position.
        for n in 1..first {
            let w = self.weights()?;
            if w.node[2 * n + 1] > w.node[2 * n] {
                self.swap_subtrees(2 * n, 2 * n + 1);
            }
        }

        let mut merged = 0;
        for n in (1..first).rev() {
            let w = self.weights()?;
            if self.collapsed[n - 1] || !(w.node[2 * n] > 0.0) || !(w.node[2 * n + 1] > 0.0) {
                continue;
            }
            if self.similar(&w, 2 * n, 2 * n + 1, opts) {
                self.merge_into(2 * n, 2 * n + 1);
                merged += 1;
            }
        }

        let mut collapsed = 0;
        for n in (1..first).rev() {
            let w = self.weights()?;
            if self.collapsed[n - 1] || !(w.node[n] > 0.0) {
                continue;
            }
            let active = (w.node[2 * n] > 0.0) as usize + (w.node[2 * n + 1] > 0.0) as usize;
            if active != 1 {
                continue;
            }
            let mut target = self.active_child(&w.node, n);
            while target < first && self.collapsed[target - 1] {
                target = self.active_child(&w.node, target);
            }
            let q = rotation3(&self.angles[target - 1]) * rotation3(&self.angles[n - 1]);
            self.angles[target - 1] = angles_from_rotation3(&q);
            self.angles[n - 1] = EulerAngles::ZERO;
            self.collapsed[n - 1] = true;
            collapsed += 1;
        }

        Ok(CompressReport {
            active_before: before,
            active_after: self.active_leaves(),
            merged,
            collapsed,
            output_delta: None,
        })
    }

    /// [`compress`](Self::compress), also reporting the largest relative change
    /// of the homogenized stiffness over the given phase pairs.
    pub fn compress_with_probe(
        &mut self,
        opts: &CompressOptions,
        probes: &[(Mat6, Option<Mat6>)],
    ) -> Result<CompressReport> {
        let before: Vec<Mat6> = probes
            .iter()
            .map(|(c1, c2)| self.forward_linear(c1, c2.as_ref()).map(|f| f.output))
            .collect::<Result<_>>()?;
        let mut report = self.compress(opts)?;
        let mut delta: f64 = 0.0;
        for ((c1, c2), b) in probes.iter().zip(&before) {
            let a = self.forward_linear(c1, c2.as_ref())?.output;
            delta = delta.max((a - b).norm() / b.norm());
        }
        report.output_delta = Some(delta);
        Ok(report)
    }

    fn similar(&self, w: &Weights, a: usize, b: usize, opts: &CompressOptions) -> bool {
        let first = self.first_leaf();
        let (wa, wb) = (w.node[a] > 0.0, w.node[b] > 0.0);
        if wa != wb {
            return false;
        }
        if !wa {
            return true;
        }
        let ca = a < first && self.collapsed[a - 1];
        let cb = b < first && self.collapsed[b - 1];
        if ca != cb {
            return false;
        }
        if a >= first {
            return self.phases[a - first] == self.phases[b - first]
                && relaxed_rotation_match(&self.angles[a - 1], &self.angles[b - 1], opts.tol);
        }
        if !ca {
            let exact = rotation6(&self.angles[a - 1]).transpose() * rotation6(&self.angles[b - 1]);
            if (exact - Mat6::identity()).amax() >= opts.tol {
                return false;
            }
            let fa = w.node[2 * a] / w.node[a];
            let fb = w.node[2 * b] / w.node[b];
            if (fa - fb).abs() >= opts.fraction_tol {
                return false;
            }
        }
        self.similar(w, 2 * a, 2 * b, opts) && self.similar(w, 2 * a + 1, 2 * b + 1, opts)
    }

    /// Moves all weight of subtree `b` onto the matching leaves of `a`.
    fn merge_into(&mut self, a: usize, b: usize) {
        let first = self.first_leaf();
        let (mut a, mut b, mut width) = (a, b, 1usize);
        while a < first {
            a *= 2;
            b *= 2;
            width *= 2;
        }
        for i in 0..width {
            let (ja, jb) = (a + i - first, b + i - first);
            if self.z[jb] > 0.0 {
                self.z[ja] = relu(self.z[ja]) + self.z[jb];
            }
            self.z[jb] = -1.0;
        }
    }
}

/// `||Re(λ)| − 1| < tol` for every eigenvalue of `R_a⁻¹·R_b`.
fn relaxed_rotation_match(a: &EulerAngles, b: &EulerAngles, tol: f64) -> bool {
    let m = rotation6(a).transpose() * rotation6(b);
    m.complex_eigenvalues()
        .iter()
        .all(|l| (l.re.abs() - 1.0).abs() < tol)
}

#[derive(Debug, Clone)]
pub struct LinearForward {
    pub output: Mat6,
    c: Vec<Mat6>,
    cbar: Vec<Mat6>,
    sol: Vec<Option<BlockSolution<6>>>,
}

impl LinearForward {
    /// Rotated output of node `n`.
    pub fn node_output(&self, n: usize) -> &Mat6 {
        &self.cbar[n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub z: Vec<f64>,
    pub angles: Vec<[f64; 3]>,
}

impl Gradient {
    pub fn zeros(net: &MaterialNetwork) -> Self {
        Self {
            z: vec![0.0; net.num_leaves()],
            angles: vec![[0.0; 3]; net.num_nodes()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.z.iter_mut().zip(&other.z) {
            *a += b;
        }
        for (a, b) in self.angles.iter_mut().zip(&other.angles) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.z.iter_mut().for_each(|x| *x *= s);
        self.angles.iter_mut().flatten().for_each(|x| *x *= s);
    }

    /// Flattened `[z..., α₁, β₁, γ₁, α₂, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.z
            .iter()
            .copied()
            .chain(self.angles.iter().flatten().copied())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CompressOptions {
    /// Rotation similarity tolerance.
    pub tol: f64,
    /// Tolerance on matching child weight fractions.
    pub fraction_tol: f64,
}

impl Default for CompressOptions {
    fn default() -> Self {
        Self {
            tol: 0.05,
            fraction_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompressReport {
    pub active_before: usize,
    pub active_after: usize,
    pub merged: usize,
    pub collapsed: usize,
    pub output_delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeafOrientation {
    pub leaf: usize,
    pub phase: u8,
    pub weight: f64,
    pub fraction: f64,
    pub rotation: [[f64; 3]; 3],
    pub angles: EulerAngles,
}

impl LeafOrientation {
    pub fn matrix(&self) -> Mat3 {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreemapNode {
    pub node: usize,
    pub weight: f64,
    pub fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<u8>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<TreemapNode>,
}

impl TreemapNode {
    pub fn leaves(&self) -> Vec<&TreemapNode> {
        if self.children.is_empty() {
            vec![self]
        } else {
            self.children.iter().flat_map(|c| c.leaves()).collect()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Treemap {
    pub active_leaves: usize,
    pub vf1: f64,
    pub root: TreemapNode,
}
