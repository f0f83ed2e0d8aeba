//! Multiscale assemblies: every active leaf of one phase of a root network
//! delegates to a private copy of a lower-scale network.

use serde::{Deserialize, Serialize};

use super::{Kinematics, LeafLaw, Rve};
use crate::error::{DmnError, Result};
use crate::network::MaterialNetwork;

/// Degrees of freedom counted as active leaves with an independent
/// material input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofReport {
    pub root_target: usize,
    pub root_other: usize,
    pub graft_leaves: usize,
    /// Active leaves of the root alone.
    pub two_scale: usize,
    /// Root leaves of other phases plus one graft per target leaf.
    pub three_scale: usize,
}

fn active_of_phase(net: &MaterialNetwork, phase: u8) -> usize {
    (0..net.num_leaves())
        .filter(|&j| net.z[j] > 0.0 && net.phases[j] == phase)
        .count()
}

pub fn dof_report(root: &MaterialNetwork, graft: &MaterialNetwork, target_phase: u8) -> DofReport {
    let root_target = active_of_phase(root, target_phase);
    let root_other = root.active_leaves() - root_target;
    let graft_leaves = graft.active_leaves();
    DofReport {
        root_target,
        root_other,
        graft_leaves,
        two_scale: root_target + root_other,
        three_scale: root_other + root_target * graft_leaves,
    }
}

/// A root network, the phase it grafts onto, and the DOF accounting.
#[derive(Debug, Clone)]
pub struct Assembly<K, const D: usize> {
    pub rve: Rve<K, D>,
    pub dofs: DofReport,
    pub target_phase: u8,
}

/// Builds the assembly: leaves of `target_phase` in `root` are driven by
/// `graft` with its own phase laws; the other root phase uses `other`.
pub fn concatenate<K: Kinematics<D>, const D: usize>(
    root: &MaterialNetwork,
    graft: &MaterialNetwork,
    target_phase: u8,
    other: LeafLaw<K, D>,
    graft_phase1: LeafLaw<K, D>,
    graft_phase2: Option<LeafLaw<K, D>>,
) -> Result<Assembly<K, D>> {
    if target_phase != 1 && target_phase != 2 {
        return Err(DmnError::Validation(format!(
            "target phase must be 1 or 2, got {target_phase}"
        )));
    }
    if active_of_phase(root, target_phase) == 0 {
        return Err(DmnError::Validation(format!(
            "root has no active leaf of phase {target_phase}"
        )));
    }
    let sub = LeafLaw::Graft(Box::new(Rve::new(graft, graft_phase1, graft_phase2)?));
    let (p1, p2) = if target_phase == 1 {
        (sub, other)
    } else {
        (other, sub)
    };
    let rve = Rve::new(root, p1, Some(p2))?;
    Ok(Assembly {
        rve,
        dofs: dof_report(root, graft, target_phase),
        target_phase,
    })
}
