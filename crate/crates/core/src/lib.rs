//! Deep material network: a binary tree of two-phase laminate building
//! blocks trained offline on linear-elastic stiffness data and evaluated
//! online with nonlinear, finite-strain constitutive laws at its leaves.

pub mod block;
pub mod doe;
pub mod error;
pub mod io;
pub mod material;
pub mod network;
pub mod online;
pub mod tensor;
pub mod train;

pub use error::{DmnError, Result};
