//! Numerical diagnostics for whether the global minimizer of a random,
//! possibly nonconvex objective `Q(t, z)` is unique.
//!
//! The crate provides a genericity checker for the pairwise objective
//! difference, a seeded multistart global search with clustering, and
//! models for normal mixtures, penalized regression, weakly identified
//! nonlinear models and Gaussian-process threshold limits.

pub mod domain;
pub mod error;
pub mod genericity;
pub mod globalopt;
pub mod linalg;
pub mod mixture;
pub mod objective;
pub mod penalized;
pub mod report;
pub mod stats;
pub mod threshold;
pub mod weakid;

pub use domain::{Domain, Region};
pub use error::{Error, Result};
pub use genericity::{check_triple, scan_grid, Condition, GenericityVerdict, ScanReport};
pub use globalopt::{multistart_minimize, ArgminReport, MultistartConfig, RandomModel, Verdict};
pub use objective::{FdConfig, FnObjective, Objective};

/// Crate version recorded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
