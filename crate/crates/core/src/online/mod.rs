//! Online nonlinear prediction with a trained network.
//!
//! Each load increment iterates on the leaf deformation increments: leaf
//! tangents and residual stresses are homogenized up the tree, the macro
//! system is solved under mixed control, and the macro increment is split
//! back down the tree. The same loop runs on Vec9 finite-strain quantities
//! ([`Finite`]) or on Mandel small-strain quantities ([`SmallStrain`]).

mod concat;
mod path;

pub use concat::{concatenate, dof_report, Assembly, DofReport};
pub use path::{
    ControlFlag, HistoryRow, LoadPath, LoadStep, PathKinematics, PathOutcome, HISTORY_COLUMNS,
    LOAD_PATH_FORMAT,
};

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rayon::prelude::*;
use std::marker::PhantomData;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::block::{homogenize, BlockSolution};
use crate::error::{DmnError, Result};
use crate::material::{identity9, MaterialModel, PointResponse, PointState};
use crate::network::MaterialNetwork;
use crate::tensor::{rotation6, rotation9, EulerAngles, MANDEL_INTERFACE, VEC9_INTERFACE};

/// Kinematic setting of the online loop.
pub trait Kinematics<const D: usize>: Clone + std::fmt::Debug + Send + Sync + 'static {
    const INTERFACE: [usize; 3];
    const NAME: &'static str;
    fn rotation(angles: &EulerAngles) -> SMatrix<f64, D, D>;
    fn reference() -> SVector<f64, D>;
    fn initial(m: &MaterialModel) -> PointState<D>;
    fn evaluate(
        m: &MaterialModel,
        st: &PointState<D>,
        x: &SVector<f64, D>,
        dt: f64,
    ) -> Result<PointResponse<D>>;
}

/// Deformation gradient / first Piola-Kirchhoff stress, Vec9.
#[derive(Debug, Clone, Copy)]
pub struct Finite;

/// Mandel strain / Cauchy stress, geometric nonlinearity disabled.
#[derive(Debug, Clone, Copy)]
pub struct SmallStrain;

impl Kinematics<9> for Finite {
    const INTERFACE: [usize; 3] = VEC9_INTERFACE;
    const NAME: &'static str = "finite";
    fn rotation(angles: &EulerAngles) -> SMatrix<f64, 9, 9> {
        rotation9(angles)
    }
    fn reference() -> SVector<f64, 9> {
        identity9()
    }
    fn initial(m: &MaterialModel) -> PointState<9> {
        m.initial_state()
    }
    fn evaluate(
        m: &MaterialModel,
        st: &PointState<9>,
        x: &SVector<f64, 9>,
        dt: f64,
    ) -> Result<PointResponse<9>> {
        m.evaluate(st, x, dt)
    }
}

impl Kinematics<6> for SmallStrain {
    const INTERFACE: [usize; 3] = MANDEL_INTERFACE;
    const NAME: &'static str = "small-strain";
    fn rotation(angles: &EulerAngles) -> SMatrix<f64, 6, 6> {
        rotation6(angles)
    }
    fn reference() -> SVector<f64, 6> {
        SVector::zeros()
    }
    fn initial(m: &MaterialModel) -> PointState<6> {
        m.initial_small_state()
    }
    fn evaluate(
        m: &MaterialModel,
        st: &PointState<6>,
        x: &SVector<f64, 6>,
        _dt: f64,
    ) -> Result<PointResponse<6>> {
        m.evaluate_small(st, x)
    }
}

/// Iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolveConfig {
    /// Tolerance on the max relative change of the leaf increments.
    pub tol: f64,
    pub max_iterations: usize,
    /// Number of times an increment may be halved.
    pub max_cutbacks: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 50,
            max_cutbacks: 4,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iterations == 0 {
            return Err(DmnError::Validation(
                "solver tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Counts node visits and material evaluations, including those of grafts.
#[derive(Debug, Default)]
pub struct OpCounter {
    pub leaf_evaluations: AtomicU64,
    pub node_operations: AtomicU64,
}

impl OpCounter {
    pub fn total(&self) -> u64 {
        self.leaf_evaluations.load(Ordering::Relaxed) + self.node_operations.load(Ordering::Relaxed)
    }

    fn add_leaf(&self, n: u64) {
        self.leaf_evaluations.fetch_add(n, Ordering::Relaxed);
    }

    fn add_nodes(&self, n: u64) {
        self.node_operations.fetch_add(n, Ordering::Relaxed);
    }
}

/// Material behind a leaf: a constitutive law or a nested RVE.
#[derive(Debug, Clone)]
pub enum LeafLaw<K, const D: usize> {
    Material(MaterialModel),
    Graft(Box<Rve<K, D>>),
}

#[derive(Debug, Clone)]
enum Kind {
    Leaf {
        slot: usize,
    },
    Block {
        children: [usize; 2],
        w: [f64; 2],
        node: usize,
    },
    Pass {
        child: usize,
    },
}

#[derive(Debug, Clone)]
struct EvalNode<const D: usize> {
    rot: SMatrix<f64, D, D>,
    kind: Kind,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    law: usize,
    leaf: usize,
}

/// A network compiled for online evaluation: active nodes only, collapsed
/// nodes resolved, one material slot per active leaf.
#[derive(Debug, Clone)]
pub struct Rve<K, const D: usize> {
    nodes: Vec<EvalNode<D>>,
    root: usize,
    /// Children before parents.
    order: Vec<usize>,
    slots: Vec<Slot>,
    laws: Vec<LeafLaw<K, D>>,
    _k: PhantomData<K>,
}

/// Converged state of an RVE and all its material points.
#[derive(Debug, Clone, PartialEq)]
pub struct RveState<const D: usize> {
    pub x: SVector<f64, D>,
    pub s: SVector<f64, D>,
    pub slots: Vec<SlotState<D>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SlotState<const D: usize> {
    Point(PointState<D>),
    Graft(Box<RveState<D>>),
}

impl<const D: usize> SlotState<D> {
    pub fn x(&self) -> &SVector<f64, D> {
        match self {
            SlotState::Point(p) => &p.x,
            SlotState::Graft(g) => &g.x,
        }
    }

    pub fn s(&self) -> &SVector<f64, D> {
        match self {
            SlotState::Point(p) => &p.s,
            SlotState::Graft(g) => &g.s,
        }
    }
}

/// Macro increment under mixed control: where `prescribed[i]` the strain
/// increment `dx[i]` is imposed, elsewhere the stress increment `ds[i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Increment<const D: usize> {
    pub prescribed: [bool; D],
    pub dx: SVector<f64, D>,
    pub ds: SVector<f64, D>,
}

impl<const D: usize> Increment<D> {
    pub fn strain(dx: SVector<f64, D>) -> Self {
        Self {
            prescribed: [true; D],
            dx,
            ds: SVector::zeros(),
        }
    }

    fn scaled(&self, t: f64) -> Self {
        Self {
            prescribed: self.prescribed,
            dx: self.dx * t,
            ds: self.ds * t,
        }
    }
}

/// Outcome of one converged increment.
#[derive(Debug, Clone)]
pub struct StepInfo<const D: usize> {
    /// Macro tangent of the last iteration.
    pub tangent: SMatrix<f64, D, D>,
    /// Fixed-point iterations summed over sub-increments.
    pub iterations: usize,
    pub cutbacks: usize,
    /// Largest gap between the linearized macro stress increment and the
    /// averaged leaf increments, relative to the latter.
    pub hill_mandel_gap: f64,
}

/// Solves `A_UU·x_U = b_U` under mixed control and returns `(Δx, Δs)`.
pub fn macro_solve<const D: usize>(
    a: &SMatrix<f64, D, D>,
    dp: &SVector<f64, D>,
    inc: &Increment<D>,
) -> Result<(SVector<f64, D>, SVector<f64, D>)> {
    let unknown: Vec<usize> = (0..D).filter(|&i| !inc.prescribed[i]).collect();
    let mut dx = SVector::<f64, D>::zeros();
    for i in 0..D {
        if inc.prescribed[i] {
            dx[i] = inc.dx[i];
        }
    }
    if !unknown.is_empty() {
        let n = unknown.len();
        let auu = DMatrix::from_fn(n, n, |r, c| a[(unknown[r], unknown[c])]);
        let known = a * dx;
        let b = DVector::from_fn(n, |r, _| {
            inc.ds[unknown[r]] - dp[unknown[r]] - known[unknown[r]]
        });
        let svd = auu.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(DmnError::SingularMacroTangent);
        }
        let sol = svd
            .solve(&b, smax * 1e-13)
            .map_err(|_| DmnError::SingularMacroTangent)?;
        let misfit = (&auu * &sol - &b).amax();
        if !(misfit <= 1e-8 * (b.amax() + smax * sol.amax()).max(f64::MIN_POSITIVE)) {
            return Err(DmnError::SingularMacroTangent);
        }
        for (r, &i) in unknown.iter().enumerate() {
            dx[i] = sol[r];
        }
    }
    let mut ds = a * dx + dp;
    for &i in &unknown {
        ds[i] = inc.ds[i];
    }
    Ok((dx, ds))
}

struct Forward<const D: usize> {
    abar: Vec<SMatrix<f64, D, D>>,
    dbar: Vec<SVector<f64, D>>,
    sol: Vec<Option<BlockSolution<D>>>,
}

impl<K: Kinematics<D>, const D: usize> Rve<K, D> {
    /// Compiles `net` with one law per phase (`phase2` may be omitted for
    /// single-phase networks).
    pub fn new(
        net: &MaterialNetwork,
        phase1: LeafLaw<K, D>,
        phase2: Option<LeafLaw<K, D>>,
    ) -> Result<Self> {
        net.validate()?;
        let w = net.weights()?;
        let first = net.first_leaf();
        let needs_two = (0..net.num_leaves()).any(|j| net.z[j] > 0.0 && net.phases[j] == 2);
        if needs_two && phase2.is_none() {
            return Err(DmnError::Validation(
                "network has active phase-2 leaves but no phase-2 material".into(),
            ));
        }
        let mut laws = vec![phase1];
        if let Some(p2) = phase2 {
            laws.push(p2);
        }
        for l in &laws {
            if let LeafLaw::Material(m) = l {
                m.validate()?;
                if D == 6 && !m.supports_small_strain() {
                    return Err(DmnError::Validation(format!(
                        "{} is only available in finite-strain mode",
                        m.name()
                    )));
                }
            }
        }
        let mut rve = Rve {
            nodes: Vec::new(),
            root: 0,
            order: Vec::new(),
            slots: Vec::new(),
            laws,
            _k: PhantomData,
        };
        rve.root = rve.compile(net, &w.node, first, 1);
        rve.order = rve.post_order();
        Ok(rve)
    }

    fn compile(&mut self, net: &MaterialNetwork, wn: &[f64], first: usize, n: usize) -> usize {
        if n < first && net.collapsed[n - 1] {
            let child = if wn[2 * n] > 0.0 { 2 * n } else { 2 * n + 1 };
            return self.compile(net, wn, first, child);
        }
        let rot = K::rotation(&net.angles[n - 1]);
        let kind = if n >= first {
            let j = n - first;
            self.slots.push(Slot {
                law: if net.phases[j] == 2 { 1 } else { 0 },
                leaf: j,
            });
            Kind::Leaf {
                slot: self.slots.len() - 1,
            }
        } else {
            let a = wn[2 * n] > 0.0;
            let b = wn[2 * n + 1] > 0.0;
            if a && b {
                let c0 = self.compile(net, wn, first, 2 * n);
                let c1 = self.compile(net, wn, first, 2 * n + 1);
                Kind::Block {
                    children: [c0, c1],
                    w: [wn[2 * n], wn[2 * n + 1]],
                    node: n,
                }
            } else {
                let c = self.compile(net, wn, first, if a { 2 * n } else { 2 * n + 1 });
                Kind::Pass { child: c }
            }
        };
        self.nodes.push(EvalNode { rot, kind });
        self.nodes.len() - 1
    }

    fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((n, done)) = stack.pop() {
            if done {
                out.push(n);
                continue;
            }
            stack.push((n, true));
            match self.nodes[n].kind {
                Kind::Leaf { .. } => {}
                Kind::Block { children, .. } => {
                    stack.push((children[1], false));
                    stack.push((children[0], false));
                }
                Kind::Pass { child } => stack.push((child, false)),
            }
        }
        out
    }

    /// Number of material slots (active leaves) at this level.
    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    /// Material points after recursively expanding grafts.
    pub fn num_material_points(&self) -> usize {
        self.slots
            .iter()
            .map(|s| match &self.laws[s.law] {
                LeafLaw::Material(_) => 1,
                LeafLaw::Graft(g) => g.num_material_points(),
            })
            .sum()
    }

    pub fn has_grafts(&self) -> bool {
        self.laws.iter().any(|l| matches!(l, LeafLaw::Graft(_)))
    }

    /// Network leaf id and phase law index of each slot.
    pub fn slot_leaves(&self) -> Vec<(usize, usize)> {
        self.slots.iter().map(|s| (s.leaf, s.law + 1)).collect()
    }

    /// Splices every graft into a single tree so one fixed-point loop
    /// covers all scales.
    pub fn flattened(&self) -> Self {
        let mut out = Rve {
            nodes: self.nodes.clone(),
            root: self.root,
            order: Vec::new(),
            slots: Vec::new(),
            laws: Vec::new(),
            _k: PhantomData,
        };
        // Material laws keep their index; grafts are appended.
        for l in &self.laws {
            out.laws.push(match l {
                LeafLaw::Material(m) => LeafLaw::Material(m.clone()),
                // kept for indexing; no slot refers to it after splicing
                LeafLaw::Graft(g) => LeafLaw::Graft(g.clone()),
            });
        }
        let flat_grafts: Vec<Option<Rve<K, D>>> = self
            .laws
            .iter()
            .map(|l| match l {
                LeafLaw::Graft(g) => Some(g.flattened()),
                LeafLaw::Material(_) => None,
            })
            .collect();
        for n in 0..self.nodes.len() {
            let Kind::Leaf { slot } = self.nodes[n].kind else {
                continue;
            };
            let s = self.slots[slot];
            match &flat_grafts[s.law] {
                None => {
                    out.slots.push(s);
                    out.nodes[n].kind = Kind::Leaf {
                        slot: out.slots.len() - 1,
                    };
                }
                Some(g) => {
                    let node_off = out.nodes.len();
                    let law_off = out.laws.len();
                    for gl in &g.laws {
                        out.laws.push(gl.clone());
                    }
                    for gn in &g.nodes {
                        let kind = match gn.kind {
                            Kind::Leaf { slot: gs } => {
                                let sl = g.slots[gs];
                                out.slots.push(Slot {
                                    law: sl.law + law_off,
                                    leaf: sl.leaf,
                                });
                                Kind::Leaf {
                                    slot: out.slots.len() - 1,
                                }
                            }
                            Kind::Block { children, w, node } => Kind::Block {
                                children: [children[0] + node_off, children[1] + node_off],
                                w,
                                node,
                            },
                            Kind::Pass { child } => Kind::Pass {
                                child: child + node_off,
                            },
                        };
                        out.nodes.push(EvalNode { rot: gn.rot, kind });
                    }
                    out.nodes[n].kind = Kind::Pass {
                        child: g.root + node_off,
                    };
                }
            }
        }
        out.order = out.post_order();
        out
    }

    pub fn initial_state(&self) -> RveState<D> {
        RveState {
            x: K::reference(),
            s: SVector::zeros(),
            slots: self
                .slots
                .iter()
                .map(|s| match &self.laws[s.law] {
                    LeafLaw::Material(m) => SlotState::Point(K::initial(m)),
                    LeafLaw::Graft(g) => SlotState::Graft(Box::new(g.initial_state())),
                })
                .collect(),
        }
    }

    fn evaluate_slot(
        &self,
        slot: usize,
        st: &SlotState<D>,
        x_new: &SVector<f64, D>,
        dt: f64,
        cfg: &SolveConfig,
        ops: &OpCounter,
    ) -> Result<(PointResponseLite<D>, SlotState<D>)> {
        let s = self.slots[slot];
        let out = match (&self.laws[s.law], st) {
            (LeafLaw::Material(m), SlotState::Point(p)) => {
                ops.add_leaf(1);
                let r = K::evaluate(m, p, x_new, dt)?;
                (
                    PointResponseLite {
                        s: r.s,
                        tangent: r.tangent,
                        residual: r.residual,
                    },
                    SlotState::Point(r.state),
                )
            }
            (LeafLaw::Graft(g), SlotState::Graft(gs)) => {
                let dx = x_new - gs.x;
                let (new, info) = g.solve(gs, &Increment::strain(dx), dt, cfg, ops)?;
                let residual = (new.s - gs.s) - info.tangent * dx;
                (
                    PointResponseLite {
                        s: new.s,
                        tangent: info.tangent,
                        residual,
                    },
                    SlotState::Graft(Box::new(new)),
                )
            }
            _ => {
                return Err(DmnError::Validation(
                    "slot state does not match its law".into(),
                ))
            }
        };
        Ok(out)
    }

    fn forward(&self, resp: &[PointResponseLite<D>], ops: &OpCounter) -> Result<Forward<D>> {
        let n = self.nodes.len();
        let mut f = Forward {
            abar: vec![SMatrix::zeros(); n],
            dbar: vec![SVector::zeros(); n],
            sol: vec![None; n],
        };
        for &i in &self.order {
            let node = &self.nodes[i];
            let (a, d) = match node.kind {
                Kind::Leaf { slot } => (resp[slot].tangent, resp[slot].residual),
                Kind::Pass { child } => (f.abar[child], f.dbar[child]),
                Kind::Block {
                    children: [c0, c1],
                    w,
                    node: id,
                } => {
                    let s = homogenize(&f.abar[c0], &f.abar[c1], w[0], w[1], &K::INTERFACE)
                        .map_err(|e| e.at_node(id))?;
                    let d = s.residual(&f.dbar[c0], &f.dbar[c1]);
                    let a = s.c;
                    f.sol[i] = Some(s);
                    (a, d)
                }
            };
            let rt = node.rot.transpose();
            f.abar[i] = rt * a * node.rot;
            f.dbar[i] = rt * d;
        }
        ops.add_nodes(n as u64);
        Ok(f)
    }

    fn backward(
        &self,
        f: &Forward<D>,
        dx_macro: &SVector<f64, D>,
        ops: &OpCounter,
    ) -> Vec<SVector<f64, D>> {
        let n = self.nodes.len();
        let mut dxbar = vec![SVector::<f64, D>::zeros(); n];
        let mut out = vec![SVector::<f64, D>::zeros(); self.slots.len()];
        dxbar[self.root] = *dx_macro;
        for &i in self.order.iter().rev() {
            let node = &self.nodes[i];
            let local = node.rot * dxbar[i];
            match node.kind {
                Kind::Leaf { slot } => out[slot] = local,
                Kind::Pass { child } => dxbar[child] = local,
                Kind::Block {
                    children: [c0, c1], ..
                } => {
                    let s = f.sol[i].as_ref().expect("block solution from forward pass");
                    let (d0, d1) = s.dehomogenize(&f.dbar[c0], &f.dbar[c1], &local);
                    dxbar[c0] = d0;
                    dxbar[c1] = d1;
                }
            }
        }
        ops.add_nodes(n as u64);
        out
    }

    /// Volume average of the leaf stress increments, accumulated through
    /// the rotations.
    fn average(&self, ds: &[SVector<f64, D>]) -> SVector<f64, D> {
        let mut acc = vec![SVector::<f64, D>::zeros(); self.nodes.len()];
        for &i in &self.order {
            let node = &self.nodes[i];
            let v = match node.kind {
                Kind::Leaf { slot } => ds[slot],
                Kind::Pass { child } => acc[child],
                Kind::Block {
                    children: [c0, c1],
                    w,
                    ..
                } => {
                    let t = w[0] + w[1];
                    acc[c0] * (w[0] / t) + acc[c1] * (w[1] / t)
                }
            };
            acc[i] = node.rot.transpose() * v;
        }
        acc[self.root]
    }

    /// One increment without cutbacks.
    pub fn solve_once(
        &self,
        st: &RveState<D>,
        inc: &Increment<D>,
        dt: f64,
        cfg: &SolveConfig,
        ops: &OpCounter,
    ) -> Result<(RveState<D>, StepInfo<D>)> {
        let mut dx: Vec<SVector<f64, D>> = vec![SVector::zeros(); self.slots.len()];
        let mut last_change = f64::INFINITY;
        for iter in 1..=cfg.max_iterations {
            let resp: Vec<PointResponseLite<D>> = (0..self.slots.len())
                .into_par_iter()
                .map(|j| {
                    let x = st.slots[j].x() + dx[j];
                    self.evaluate_slot(j, &st.slots[j], &x, dt, cfg, ops)
                        .map(|r| r.0)
                        .map_err(|e| e.at_leaf(self.slots[j].leaf))
                })
                .collect::<Result<_>>()?;
            let f = self.forward(&resp, ops)?;
            let (dx_macro, ds_macro) = macro_solve(&f.abar[self.root], &f.dbar[self.root], inc)?;
            let new_dx = self.backward(&f, &dx_macro, ops);
            let change = new_dx
                .iter()
                .zip(&dx)
                .map(|(n, o)| (n - o).norm() / o.norm().max(1e-12))
                .fold(0.0, f64::max);
            dx = new_dx;
            last_change = change;
            if change < cfg.tol {
                let finals: Vec<(PointResponseLite<D>, SlotState<D>)> = (0..self.slots.len())
                    .into_par_iter()
                    .map(|j| {
                        let x = st.slots[j].x() + dx[j];
                        self.evaluate_slot(j, &st.slots[j], &x, dt, cfg, ops)
                            .map_err(|e| e.at_leaf(self.slots[j].leaf))
                    })
                    .collect::<Result<_>>()?;
                let ds_leaf: Vec<SVector<f64, D>> = finals
                    .iter()
                    .zip(&st.slots)
                    .map(|((r, _), s)| r.s - s.s())
                    .collect();
                let ds_avg = self.average(&ds_leaf);
                let gap = (ds_macro - ds_avg).norm() / ds_avg.norm().max(1e-300);
                let state = RveState {
                    x: st.x + dx_macro,
                    s: st.s + ds_avg,
                    slots: finals.into_iter().map(|(_, s)| s).collect(),
                };
                return Ok((
                    state,
                    StepInfo {
                        tangent: f.abar[self.root],
                        iterations: iter,
                        cutbacks: 0,
                        hill_mandel_gap: if ds_avg.norm() > 0.0 { gap } else { 0.0 },
                    },
                ));
            }
        }
        Err(DmnError::NoConvergence {
            context: format!("{} online fixed point", K::NAME),
            iterations: cfg.max_iterations,
            residual: last_change,
        })
    }

    /// One increment, halving it on failure up to `cfg.max_cutbacks` times.
    pub fn solve(
        &self,
        st: &RveState<D>,
        inc: &Increment<D>,
        dt: f64,
        cfg: &SolveConfig,
        ops: &OpCounter,
    ) -> Result<(RveState<D>, StepInfo<D>)> {
        self.solve_cut(st, inc, dt, cfg, ops, cfg.max_cutbacks)
    }

    fn solve_cut(
        &self,
        st: &RveState<D>,
        inc: &Increment<D>,
        dt: f64,
        cfg: &SolveConfig,
        ops: &OpCounter,
        budget: usize,
    ) -> Result<(RveState<D>, StepInfo<D>)> {
        match self.solve_once(st, inc, dt, cfg, ops) {
            Ok(r) => Ok(r),
            Err(e) if budget == 0 || !retryable(&e) => Err(e),
            Err(_) => {
                let half = inc.scaled(0.5);
                let (mid, i1) = self.solve_cut(st, &half, 0.5 * dt, cfg, ops, budget - 1)?;
                let (end, i2) = self.solve_cut(&mid, &half, 0.5 * dt, cfg, ops, budget - 1)?;
                Ok((
                    end,
                    StepInfo {
                        tangent: i2.tangent,
                        iterations: i1.iterations + i2.iterations,
                        cutbacks: 1 + i1.cutbacks + i2.cutbacks,
                        hill_mandel_gap: i1.hill_mandel_gap.max(i2.hill_mandel_gap),
                    },
                ))
            }
        }
    }
}

fn retryable(e: &DmnError) -> bool {
    match e {
        DmnError::AtLeaf { source, .. } => retryable(source),
        DmnError::Validation(_) | DmnError::Format(_) | DmnError::Io(_) | DmnError::Json(_) => {
            false
        }
        DmnError::AllLeavesDeactivated => false,
        _ => true,
    }
}

#[derive(Debug, Clone)]
struct PointResponseLite<const D: usize> {
    s: SVector<f64, D>,
    tangent: SMatrix<f64, D, D>,
    residual: SVector<f64, D>,
}
