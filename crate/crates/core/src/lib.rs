//! Minimum-cost sizing of cloud-hosted MapReduce clusters under deadline
//! constraints.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the domain types, cost and accuracy arithmetic and
//!   input validation;
//! * [`sim`] simulates the closed fork-join network of one class;
//! * [`analytic`] provides closed-form bounds and the reserved/spot split;
//! * [`optimizer`] runs the per-class hill climb and VM type selection;
//! * [`io`] reads problems, writes solutions and drives sweeps and
//!   validation studies.

pub mod analytic;
pub mod io;
pub mod model;
pub mod money;
pub mod optimizer;
pub mod sim;

pub use model::{ApplicationClass, ClassSolution, Diagnostic, JobProfile, Problem, Severity, Solution, VmType};
pub use money::Money;

/// Version string echoed into solution documents.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
