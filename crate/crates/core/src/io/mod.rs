//! File formats and study drivers used by the command-line front end.

mod problem;
mod solution;
mod sweep;
mod validation;

pub use problem::{parse_problem, ParseMode, ParsedProblem};
pub use solution::{emit_solution, parse_solution, ClassEntry, SolutionDocument, SolutionStatus};
pub use sweep::{run_sweep, sweep_csv, SweepAxis, SweepError, SweepRow, SweepSpec, SWEEP_CSV_HEADER};
pub use validation::{
    mean_abs_theta_percent, parse_validation_rows, run_validate, validation_csv, NetworkInputs, RowFailure,
    ValidationInput, ValidationOutcome, ValidationRow, ValidationRows, VALIDATION_CSV_HEADER,
};

use std::fmt;

use thiserror::Error;

use crate::model::Diagnostic;

#[derive(Debug, Error, PartialEq)]
pub enum InputError {
    #[error("invalid JSON: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{}", DiagnosticList(.0))]
    Invalid(Vec<Diagnostic>),
}

impl InputError {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        InputError::Syntax {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

struct DiagnosticList<'a>(&'a [Diagnostic]);

impl fmt::Display for DiagnosticList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input failed validation:")?;
        for d in self.0 {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

/// Serializes non-finite floats as `null` and reads `null` back as
/// positive infinity.
pub(crate) mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            s.serialize_f64(*value)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
