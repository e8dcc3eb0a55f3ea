//! Fixed-point first-order MPC: problem setup, offline transformations, fast
//! gradient and ADMM solvers in exact and bit-accurate fixed-point
//! arithmetic, a priori round-off and overflow certification, and a
//! latency/resource model for parallel hardware.

pub mod admm;
pub mod bench;
pub mod certify;
pub mod error;
pub mod fgm;
pub mod fxp;
pub mod hwmodel;
pub mod linalg;
pub mod model;
pub mod qp;
pub mod transform;

pub use error::{Error, Result};
