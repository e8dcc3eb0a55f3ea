//! Offline problem transformations.

pub mod admm;
pub mod artifact;
pub mod condense;
pub mod fgm;
pub mod penalty;
pub mod sparse;

pub use admm::{precompute_admm, AdmmOffline, AdmmOfflineReport};
pub use condense::{condense, prediction_matrices, CondensedQp};
pub use fgm::{normalize_fgm, normalize_fgm_exact, FgmOffline};
pub use penalty::{exact_penalty_check, hard_feasible, solve_mpc, OracleMode, PenaltyReport};
pub use sparse::{build_sparse, scale_soft_constraints, Component, Layout, SparseQp};
