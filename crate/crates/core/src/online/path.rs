//! Load paths under mixed macroscopic control and the resulting history.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use super::{Finite, Increment, Kinematics, OpCounter, Rve, RveState, SmallStrain, SolveConfig};
use crate::error::{DmnError, Result};
use crate::tensor::{Vec6, Vec9};

pub const LOAD_PATH_FORMAT: &str = "dmn-load-path";

/// Which quantity of a component is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlFlag {
    /// Deformation gradient component.
    F,
    /// First Piola-Kirchhoff stress component.
    P,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadStep {
    /// End-of-step value of each component (F or P according to the flag),
    /// Vec9 order.
    pub target: [f64; 9],
    #[serde(default = "unit_dt")]
    pub dt: f64,
}

fn unit_dt() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPath {
    pub format: String,
    pub version: u32,
    pub flags: [ControlFlag; 9],
    pub steps: Vec<LoadStep>,
}

/// Components fixed kinematically in the uniaxial preset: F11, F32, F31, F21.
const UNIAXIAL_F: [usize; 4] = [0, 4, 6, 8];

impl LoadPath {
    pub fn new(flags: [ControlFlag; 9], steps: Vec<LoadStep>) -> Self {
        Self {
            format: LOAD_PATH_FORMAT.into(),
            version: crate::io::FORMAT_VERSION,
            flags,
            steps,
        }
    }

    /// Uniaxial stress along axis 1: `F11` follows `f11`, the lower shear
    /// components of F stay zero to exclude rigid rotation, and all other
    /// stress components vanish.
    pub fn uniaxial(f11: &[f64], dt: f64) -> Self {
        let mut flags = [ControlFlag::P; 9];
        for i in UNIAXIAL_F {
            flags[i] = ControlFlag::F;
        }
        let steps = f11
            .iter()
            .map(|&v| {
                let mut target = [0.0; 9];
                target[0] = v;
                LoadStep { target, dt }
            })
            .collect();
        Self::new(flags, steps)
    }

    /// Every component of F prescribed.
    pub fn deformation(targets: &[Vec9], dt: f64) -> Self {
        let steps = targets
            .iter()
            .map(|t| LoadStep {
                target: std::array::from_fn(|i| t[i]),
                dt,
            })
            .collect();
        Self::new([ControlFlag::F; 9], steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != LOAD_PATH_FORMAT || self.version != crate::io::FORMAT_VERSION {
            return Err(DmnError::Format(format!(
                "expected {LOAD_PATH_FORMAT} version {}, found {} version {}",
                crate::io::FORMAT_VERSION,
                self.format,
                self.version
            )));
        }
        if !self.flags.contains(&ControlFlag::F) {
            return Err(DmnError::Validation(
                "at least one component must be F-prescribed".into(),
            ));
        }
        if self.steps.is_empty() {
            return Err(DmnError::Validation("load path has no steps".into()));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if !(s.dt > 0.0) || s.target.iter().any(|v| !v.is_finite()) {
                return Err(DmnError::Validation(format!(
                    "step {i}: dt must be positive and targets finite"
                )));
            }
        }
        Ok(())
    }

    /// Strain-controlled flags and end-of-step targets in Mandel form.
    ///
    /// A shear pair counts as strain-controlled only if both its F
    /// components are; a mixed pair is stress-controlled and its
    /// F-prescribed partner must be zero. Unequal prescribed shear pairs
    /// would carry a rotation and are rejected.
    pub fn small_strain_control(&self, step: &LoadStep) -> Result<([bool; 6], Vec6)> {
        let mut pres = [false; 6];
        let mut t = Vec6::zeros();
        for i in 0..3 {
            pres[i] = self.flags[i] == ControlFlag::F;
            t[i] = if pres[i] {
                step.target[i] - 1.0
            } else {
                step.target[i]
            };
        }
        for (m, (a, b)) in [(3usize, (3usize, 4usize)), (4, (5, 6)), (5, (7, 8))] {
            let (fa, fb) = (self.flags[a], self.flags[b]);
            let (va, vb) = (step.target[a], step.target[b]);
            match (fa, fb) {
                (ControlFlag::F, ControlFlag::F) => {
                    if (va - vb).abs() > 1e-12 * (1.0 + va.abs().max(vb.abs())) {
                        return Err(DmnError::Validation(
                            "small-strain mode cannot impose a rotational deformation".into(),
                        ));
                    }
                    pres[m] = true;
                    t[m] = SQRT_2 * 0.5 * (va + vb);
                }
                (ControlFlag::P, ControlFlag::P) => t[m] = SQRT_2 * 0.5 * (va + vb),
                (ControlFlag::F, ControlFlag::P) | (ControlFlag::P, ControlFlag::F) => {
                    let (fv, pv) = if fa == ControlFlag::F {
                        (va, vb)
                    } else {
                        (vb, va)
                    };
                    if fv != 0.0 {
                        return Err(DmnError::Validation(
                            "small-strain mode needs mixed shear pairs with a zero F component"
                                .into(),
                        ));
                    }
                    t[m] = SQRT_2 * pv;
                }
            }
        }
        Ok((pres, t))
    }
}

/// One converged load step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub step: usize,
    pub time: f64,
    pub iterations: usize,
    pub cutbacks: usize,
    pub f: [f64; 9],
    pub p: [f64; 9],
}

pub const HISTORY_COLUMNS: [&str; 9] = ["11", "22", "33", "23", "32", "13", "31", "12", "21"];

impl HistoryRow {
    pub fn csv_header() -> String {
        let mut cols = vec![
            "step".to_string(),
            "time".into(),
            "iterations".into(),
            "cutbacks".into(),
        ];
        cols.extend(HISTORY_COLUMNS.iter().map(|c| format!("F{c}")));
        cols.extend(HISTORY_COLUMNS.iter().map(|c| format!("P{c}")));
        cols.join(",")
    }

    pub fn csv_line(&self) -> String {
        let mut parts = vec![
            self.step.to_string(),
            format!("{:e}", self.time),
            self.iterations.to_string(),
            self.cutbacks.to_string(),
        ];
        parts.extend(self.f.iter().chain(self.p.iter()).map(|v| format!("{v:e}")));
        parts.join(",")
    }
}

/// The initial row, rows of all converged steps and, if the run stopped
/// early, why.
#[derive(Debug)]
pub struct PathOutcome<const D: usize> {
    pub rows: Vec<HistoryRow>,
    pub state: RveState<D>,
    pub error: Option<DmnError>,
}

impl<const D: usize> PathOutcome<D> {
    pub fn to_csv(&self) -> String {
        let mut s = HistoryRow::csv_header();
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }

    pub fn into_result(self) -> Result<Vec<HistoryRow>> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.rows),
        }
    }
}

fn mandel_to_vec9(v: &Vec6, strain: bool) -> [f64; 9] {
    let h = v[3] / SQRT_2;
    let g = v[4] / SQRT_2;
    let k = v[5] / SQRT_2;
    let d = if strain { 1.0 } else { 0.0 };
    [v[0] + d, v[1] + d, v[2] + d, h, h, g, g, k, k]
}

/// Per-kinematics translation between the 9-component path and the
/// solver's variables.
pub trait PathKinematics<const D: usize>: Kinematics<D> {
    fn control(path: &LoadPath, step: &LoadStep) -> Result<([bool; D], SVector<f64, D>)>;
    fn report(x: &SVector<f64, D>, s: &SVector<f64, D>) -> ([f64; 9], [f64; 9]);
}

impl PathKinematics<9> for Finite {
    fn control(path: &LoadPath, step: &LoadStep) -> Result<([bool; 9], Vec9)> {
        Ok((
            std::array::from_fn(|i| path.flags[i] == ControlFlag::F),
            Vec9::from_column_slice(&step.target),
        ))
    }

    fn report(x: &Vec9, s: &Vec9) -> ([f64; 9], [f64; 9]) {
        (std::array::from_fn(|i| x[i]), std::array::from_fn(|i| s[i]))
    }
}

impl PathKinematics<6> for SmallStrain {
    fn control(path: &LoadPath, step: &LoadStep) -> Result<([bool; 6], Vec6)> {
        path.small_strain_control(step)
    }

    fn report(x: &Vec6, s: &Vec6) -> ([f64; 9], [f64; 9]) {
        (mandel_to_vec9(x, true), mandel_to_vec9(s, false))
    }
}

impl<K: PathKinematics<D>, const D: usize> Rve<K, D> {
    /// Runs every step of `path` from the initial state, calling `on_row`
    /// for the initial state and after each converged step. Stops at the first failure and keeps the
    /// rows produced so far.
    pub fn run_path(
        &self,
        path: &LoadPath,
        cfg: &SolveConfig,
        ops: &OpCounter,
        mut on_row: impl FnMut(&HistoryRow),
    ) -> Result<PathOutcome<D>> {
        path.validate()?;
        cfg.validate()?;
        for step in &path.steps {
            K::control(path, step)?;
        }
        let mut state = self.initial_state();
        let mut rows = Vec::with_capacity(path.steps.len() + 1);
        let mut time = 0.0;
        let (f, p) = K::report(&state.x, &state.s);
        let initial = HistoryRow {
            step: 0,
            time,
            iterations: 0,
            cutbacks: 0,
            f,
            p,
        };
        on_row(&initial);
        rows.push(initial);
        for (i, step) in path.steps.iter().enumerate() {
            let (prescribed, target) = K::control(path, step)?;
            let inc = Increment {
                prescribed,
                dx: target - state.x,
                ds: target - state.s,
            };
            match self.solve(&state, &inc, step.dt, cfg, ops) {
                Ok((next, info)) => {
                    state = next;
                    time += step.dt;
                    let (f, p) = K::report(&state.x, &state.s);
                    let row = HistoryRow {
                        step: i + 1,
                        time,
                        iterations: info.iterations,
                        cutbacks: info.cutbacks,
                        f,
                        p,
                    };
                    on_row(&row);
                    rows.push(row);
                }
                Err(e) => {
                    return Ok(PathOutcome {
                        rows,
                        state,
                        error: Some(e),
                    })
                }
            }
        }
        Ok(PathOutcome {
            rows,
            state,
            error: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniaxial_flags() {
        let p = LoadPath::uniaxial(&[1.01], 1.0);
        let f: Vec<usize> = (0..9).filter(|&i| p.flags[i] == ControlFlag::F).collect();
        assert_eq!(f, vec![0, 4, 6, 8]);
        p.validate().unwrap();
    }

    #[test]
    fn small_strain_mapping_of_uniaxial_preset() {
        let p = LoadPath::uniaxial(&[1.01], 1.0);
        let (pres, t) = p.small_strain_control(&p.steps[0]).unwrap();
        assert_eq!(pres, [true, false, false, false, false, false]);
        assert!((t[0] - 0.01).abs() < 1e-15 && t.rows(1, 5).amax() == 0.0);
    }

    #[test]
    fn rotational_path_is_rejected_in_small_strain() {
        let mut t = crate::material::identity9();
        t[7] = 0.01;
        let p = LoadPath::deformation(&[t], 1.0);
        assert!(matches!(
            p.small_strain_control(&p.steps[0]),
            Err(DmnError::Validation(_))
        ));
    }

    #[test]
    fn path_without_strain_control_is_rejected() {
        let p = LoadPath::new(
            [ControlFlag::P; 9],
            vec![LoadStep {
                target: [0.0; 9],
                dt: 1.0,
            }],
        );
        assert!(p.validate().is_err());
    }
}
