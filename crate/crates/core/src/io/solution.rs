use serde::{Deserialize, Serialize};

use super::finite_or_null;
use crate::model::{ClassSolution, Solution};
use crate::money::Money;
use crate::TOOL_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolutionStatus {
    Complete,
    /// At least one class could not meet its deadline.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub class_id: String,
    pub vm_type: String,
    pub vms: u32,
    pub reserved: u32,
    pub spot: u32,
    #[serde(with = "finite_or_null")]
    pub predicted_time_ms: f64,
    #[serde(with = "finite_or_null")]
    pub ci_half_width_ms: f64,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// The optimizer's output file. Field order is fixed, so emitting the same
/// solution twice yields identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDocument {
    pub tool_version: String,
    pub seed: u64,
    pub status: SolutionStatus,
    #[serde(default)]
    pub currency: String,
    pub hourly_cost: Money,
    pub classes: Vec<ClassEntry>,
}

impl SolutionDocument {
    pub fn new(solution: &Solution, seed: u64, currency: &str) -> Self {
        let classes = solution
            .per_class
            .iter()
            .map(|c| ClassEntry {
                class_id: c.class_id.clone(),
                vm_type: c.vm_type.clone(),
                vms: c.vms,
                reserved: c.reserved,
                spot: c.spot,
                predicted_time_ms: c.predicted_time,
                ci_half_width_ms: c.ci_half_width,
                feasible: c.feasible,
                diagnostics: c.diagnostics.clone(),
            })
            .collect();
        SolutionDocument {
            tool_version: TOOL_VERSION.to_string(),
            seed,
            status: if solution.is_complete() {
                SolutionStatus::Complete
            } else {
                SolutionStatus::Partial
            },
            currency: currency.to_string(),
            hourly_cost: solution.hourly_cost,
            classes,
        }
    }

    pub fn to_solution(&self) -> Solution {
        Solution {
            per_class: self
                .classes
                .iter()
                .map(|c| ClassSolution {
                    class_id: c.class_id.clone(),
                    vm_type: c.vm_type.clone(),
                    vms: c.vms,
                    reserved: c.reserved,
                    spot: c.spot,
                    predicted_time: c.predicted_time_ms,
                    ci_half_width: c.ci_half_width_ms,
                    feasible: c.feasible,
                    diagnostics: c.diagnostics.clone(),
                })
                .collect(),
            hourly_cost: self.hourly_cost,
        }
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn emit_solution(doc: &SolutionDocument) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("solution documents always serialize");
    text.push('\n');
    text
}

pub fn parse_solution(text: &str) -> Result<SolutionDocument, super::InputError> {
    serde_json::from_str(text).map_err(super::InputError::from_json)
}
