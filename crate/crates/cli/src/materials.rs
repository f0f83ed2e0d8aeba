//! Material assignment files for `predict` and `eval`.

use std::path::Path;

use dmn_core::io::load_tagged_json;
use dmn_core::material::{identity9, MaterialModel};
use dmn_core::tensor::{project_tangent, Mat6};
use dmn_core::{DmnError, Result};
use serde::{Deserialize, Serialize};

pub const MATERIALS_FORMAT: &str = "dmn-materials";

/// Phase laws of a network. For an assembly, `phase1`/`phase2` belong to
/// the grafted network and `other` to the root phase that is not grafted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialsFile {
    pub format: String,
    pub version: u32,
    pub phase1: MaterialModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase2: Option<MaterialModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<MaterialModel>,
}

impl MaterialsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = load_tagged_json(path, MATERIALS_FORMAT)?;
        m.phase1.validate()?;
        if let Some(p) = &m.phase2 {
            p.validate()?;
        }
        if let Some(p) = &m.other {
            p.validate()?;
        }
        Ok(m)
    }
}

/// Initial stiffness of a law in Mandel form.
pub fn initial_stiffness(m: &MaterialModel) -> Result<Mat6> {
    let r = m.evaluate(&m.initial_state(), &identity9(), 1.0)?;
    Ok(project_tangent(&r.tangent))
}

pub fn require_phase2(m: &MaterialsFile, two_phase: bool) -> Result<Option<MaterialModel>> {
    match (&m.phase2, two_phase) {
        (None, true) => Err(DmnError::Validation(
            "two-phase network needs a phase2 material".into(),
        )),
        (p, _) => Ok(p.clone()),
    }
}
