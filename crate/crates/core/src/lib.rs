//! Finite element solver for quasi-static Biot poroelasticity.

pub mod assembly;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod schemes;
pub mod spaces;

pub use error::{Error, Result};
