//! Domain types shared by the simulator, the analytic bounds and the
//! optimizer, together with the cost and accuracy arithmetic and input
//! validation.
//!
//! Durations are `f64` milliseconds throughout. Prices are [`Money`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

/// Declared sample means may drift this far (relative) from the profile
/// average before validation warns.
pub const SAMPLE_MEAN_TOLERANCE: f64 = 0.10;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("class `{class_id}` references unknown VM type `{vm_type}`")]
    UnknownVmType { class_id: String, vm_type: String },
    #[error("{0}")]
    Domain(String),
}

/// A purchasable machine shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmType {
    pub id: String,
    /// Task containers one VM can run concurrently.
    pub containers: u32,
    /// Spot price per hour.
    pub sigma: Money,
    /// Reserved price per hour, already normalized over the contract term.
    pub pi: Money,
}

/// Statistical characterization of one job class running on one VM type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobProfile {
    pub n_map: u32,
    pub n_reduce: u32,
    pub map_avg: f64,
    pub map_max: f64,
    pub reduce_avg: f64,
    pub reduce_max: f64,
    pub shuffle_typ_avg: f64,
    pub shuffle_typ_max: f64,
    /// First-wave shuffle maximum. Carried for completeness; no model reads it.
    pub shuffle_first_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_samples: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce_samples: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle_samples: Option<Vec<f64>>,
}

impl JobProfile {
    /// A profile whose maxima equal the averages and that carries no samples.
    pub fn from_averages(
        n_map: u32,
        n_reduce: u32,
        map_avg: f64,
        reduce_avg: f64,
        shuffle_typ_avg: f64,
    ) -> Self {
        JobProfile {
            n_map,
            n_reduce,
            map_avg,
            map_max: map_avg,
            reduce_avg,
            reduce_max: reduce_avg,
            shuffle_typ_avg,
            shuffle_typ_max: shuffle_typ_avg,
            shuffle_first_max: shuffle_typ_avg,
            map_samples: None,
            reduce_samples: None,
            shuffle_samples: None,
        }
    }

    /// Mean duration a reduce container is held: reduce work plus the
    /// typical shuffle.
    pub fn reduce_service_mean(&self) -> f64 {
        self.reduce_avg + self.shuffle_typ_avg
    }
}

/// A workload class: a group of users submitting the same kind of job
/// under one deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationClass {
    pub id: String,
    pub h_users: u32,
    /// Mean of the exponential think time between a completion and the
    /// user's next submission.
    pub think_time: f64,
    pub deadline: f64,
    /// Maximum fraction of the class's VMs that may be spot instances.
    pub spot_fraction_cap: f64,
    /// Candidate VM types, keyed by VM type id.
    pub profiles: BTreeMap<String, JobProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub catalog: Vec<VmType>,
    pub classes: Vec<ApplicationClass>,
}

impl Problem {
    pub fn vm_type(&self, id: &str) -> Option<&VmType> {
        self.catalog.iter().find(|vm| vm.id == id)
    }

    pub fn class(&self, id: &str) -> Option<&ApplicationClass> {
        self.classes.iter().find(|c| c.id == id)
    }
}

/// Sizing chosen for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSolution {
    pub class_id: String,
    pub vm_type: String,
    pub vms: u32,
    pub reserved: u32,
    pub spot: u32,
    pub predicted_time: f64,
    pub ci_half_width: f64,
    pub feasible: bool,
    /// Explanations attached when the class could not be made feasible.
    pub diagnostics: Vec<String>,
}

impl ClassSolution {
    pub fn hourly_cost(&self, vm: &VmType) -> Money {
        vm.sigma * self.spot + vm.pi * self.reserved
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub per_class: Vec<ClassSolution>,
    pub hourly_cost: Money,
}

impl Solution {
    /// Builds a solution and prices it against `catalog`.
    pub fn assemble(per_class: Vec<ClassSolution>, catalog: &[VmType]) -> Result<Self, ModelError> {
        let hourly_cost = cost(&per_class, catalog)?;
        Ok(Solution {
            per_class,
            hourly_cost,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.per_class.iter().all(|c| c.feasible)
    }
}

/// Cluster hourly renting cost: spot price times spot VMs plus reserved
/// price times reserved VMs, summed over classes.
pub fn cost(per_class: &[ClassSolution], catalog: &[VmType]) -> Result<Money, ModelError> {
    per_class
        .iter()
        .map(|cs| {
            catalog
                .iter()
                .find(|vm| vm.id == cs.vm_type)
                .map(|vm| cs.hourly_cost(vm))
                .ok_or_else(|| ModelError::UnknownVmType {
                    class_id: cs.class_id.clone(),
                    vm_type: cs.vm_type.clone(),
                })
        })
        .sum()
}

/// Relative prediction error `(simulated - measured) / measured`. Negative
/// values mean the prediction is optimistic and may hide a deadline miss.
pub fn accuracy(simulated: f64, measured: f64) -> Result<f64, ModelError> {
    if !(measured.is_finite() && measured > 0.0) {
        return Err(ModelError::Domain(format!(
            "measured response time must be positive, got {measured}"
        )));
    }
    Ok((simulated - measured) / measured)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Location of the offending field, using the JSON input's key names.
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn warning(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{level}: {}: {}", self.path, self.message)
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(Diagnostic::is_error)
}

/// Checks every domain invariant and reports violations. Never mutates.
pub fn validate(problem: &Problem) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if problem.catalog.is_empty() {
        out.push(Diagnostic::error("vm_types", "catalog must list at least one VM type"));
    }
    let mut vm_ids = HashSet::new();
    for (k, vm) in problem.catalog.iter().enumerate() {
        let at = |field: &str| format!("vm_types[{k}].{field}");
        if !vm_ids.insert(vm.id.as_str()) {
            out.push(Diagnostic::error(at("id"), format!("duplicate VM type id `{}`", vm.id)));
        }
        if vm.containers == 0 {
            out.push(Diagnostic::error(at("containers"), "must be at least 1"));
        }
        if vm.sigma.is_negative() {
            out.push(Diagnostic::error(at("sigma_per_hour"), "price must be nonnegative"));
        }
        if vm.pi.is_negative() {
            out.push(Diagnostic::error(at("pi_per_hour"), "price must be nonnegative"));
        }
    }

    if problem.classes.is_empty() {
        out.push(Diagnostic::error("classes", "at least one application class is required"));
    }
    let mut class_ids = HashSet::new();
    for (k, class) in problem.classes.iter().enumerate() {
        let at = |field: &str| format!("classes[{k}].{field}");
        if !class_ids.insert(class.id.as_str()) {
            out.push(Diagnostic::error(at("id"), format!("duplicate class id `{}`", class.id)));
        }
        if class.h_users == 0 {
            out.push(Diagnostic::error(at("h_users"), "must be at least 1"));
        }
        if !(class.think_time.is_finite() && class.think_time >= 0.0) {
            out.push(Diagnostic::error(at("think_time_ms"), "must be a finite nonnegative duration"));
        }
        if !(class.deadline.is_finite() && class.deadline > 0.0) {
            out.push(Diagnostic::error(at("deadline_ms"), "must be a finite positive duration"));
        }
        let eta = class.spot_fraction_cap;
        if !(0.0..1.0).contains(&eta) {
            out.push(Diagnostic::error(
                at("eta"),
                format!(
                    "spot fraction cap must lie in [0, 1), got {eta}; \
                     the bound spot <= eta/(1-eta) * reserved is undefined at eta = 1"
                ),
            ));
        }
        if class.profiles.is_empty() {
            out.push(Diagnostic::error(at("profiles"), "at least one candidate VM type is required"));
        }
        for (vm_id, profile) in &class.profiles {
            let base = format!("classes[{k}].profiles.{vm_id}");
            if problem.vm_type(vm_id).is_none() {
                out.push(Diagnostic::error(
                    base.clone(),
                    format!("VM type `{vm_id}` is not in the catalog"),
                ));
            }
            validate_profile(profile, &base, &mut out);
        }
    }
    out
}

fn validate_profile(p: &JobProfile, base: &str, out: &mut Vec<Diagnostic>) {
    let at = |field: &str| format!("{base}.{field}");
    if p.n_map == 0 {
        out.push(Diagnostic::error(at("n_map"), "a job needs at least one map task"));
    }
    let durations = [
        ("map_avg_ms", p.map_avg),
        ("map_max_ms", p.map_max),
        ("reduce_avg_ms", p.reduce_avg),
        ("reduce_max_ms", p.reduce_max),
        ("shuffle_typ_avg_ms", p.shuffle_typ_avg),
        ("shuffle_typ_max_ms", p.shuffle_typ_max),
        ("shuffle_first_max_ms", p.shuffle_first_max),
    ];
    for (name, value) in durations {
        if !(value.is_finite() && value >= 0.0) {
            out.push(Diagnostic::error(at(name), "must be a finite nonnegative duration"));
        }
    }
    let pairs = [
        ("map_max_ms", p.map_avg, p.map_max),
        ("reduce_max_ms", p.reduce_avg, p.reduce_max),
        ("shuffle_typ_max_ms", p.shuffle_typ_avg, p.shuffle_typ_max),
    ];
    for (name, avg, max) in pairs {
        if max < avg {
            out.push(Diagnostic::error(
                at(name),
                format!("maximum {max} is below the average {avg}"),
            ));
        }
    }
    let lists = [
        ("map_samples_ms", &p.map_samples, p.map_avg),
        ("reduce_samples_ms", &p.reduce_samples, p.reduce_avg),
        ("shuffle_samples_ms", &p.shuffle_samples, p.shuffle_typ_avg),
    ];
    for (name, samples, avg) in lists {
        let Some(samples) = samples else { continue };
        if samples.is_empty() {
            out.push(Diagnostic::error(at(name), "sample list must not be empty"));
            continue;
        }
        if samples.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            out.push(Diagnostic::error(at(name), "samples must be finite nonnegative durations"));
            continue;
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        if (mean - avg).abs() > SAMPLE_MEAN_TOLERANCE * avg.abs() {
            out.push(Diagnostic::warning(
                at(name),
                format!("sample mean {mean:.2} differs from the declared average {avg:.2} by more than 10%"),
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn vm(id: &str, sigma: f64, pi: f64) -> VmType {
        VmType {
            id: id.into(),
            containers: 2,
            sigma: Money::from_f64(sigma),
            pi: Money::from_f64(pi),
        }
    }

    fn class_solution(class_id: &str, vm_type: &str, reserved: u32, spot: u32) -> ClassSolution {
        ClassSolution {
            class_id: class_id.into(),
            vm_type: vm_type.into(),
            vms: reserved + spot,
            reserved,
            spot,
            predicted_time: 0.0,
            ci_half_width: 0.0,
            feasible: true,
            diagnostics: Vec::new(),
        }
    }

    pub(crate) fn two_class_problem() -> Problem {
        let profile = JobProfile::from_averages(4, 2, 100.0, 150.0, 50.0);
        let class = |id: &str| ApplicationClass {
            id: id.into(),
            h_users: 2,
            think_time: 1000.0,
            deadline: 5000.0,
            spot_fraction_cap: 0.3,
            profiles: BTreeMap::from([("small".to_string(), profile.clone())]),
        };
        Problem {
            catalog: vec![vm("small", 0.05, 0.1)],
            classes: vec![class("a"), class("b")],
        }
    }

    #[test]
    fn cost_single_class() {
        let catalog = [vm("t", 0.1, 0.2)];
        let c = cost(&[class_solution("a", "t", 3, 2)], &catalog).unwrap();
        assert_eq!(c, Money::from_f64(0.8));
    }

    #[test]
    fn cost_of_nothing_is_zero() {
        assert_eq!(cost(&[], &[]).unwrap(), Money::ZERO);
    }

    #[test]
    fn cost_two_classes_adds() {
        let catalog = [vm("x", 0.05, 0.1), vm("y", 0.2, 0.3)];
        let per_class = [class_solution("a", "x", 6, 4), class_solution("b", "y", 5, 0)];
        assert_eq!(cost(&per_class, &catalog).unwrap(), Money::from_f64(2.3));
    }

    #[test]
    fn cost_rejects_unknown_type_naming_the_class() {
        let err = cost(&[class_solution("q7", "ghost", 1, 0)], &[vm("t", 0.1, 0.2)]).unwrap_err();
        assert_eq!(
            err,
            ModelError::UnknownVmType {
                class_id: "q7".into(),
                vm_type: "ghost".into()
            }
        );
        assert!(err.to_string().contains("q7"));
    }

    #[test]
    fn assemble_stores_cost() {
        let catalog = [vm("t", 0.1, 0.2)];
        let s = Solution::assemble(vec![class_solution("a", "t", 3, 2)], &catalog).unwrap();
        assert_eq!(s.hourly_cost, Money::from_f64(0.8));
    }

    #[test]
    fn accuracy_examples() {
        assert_abs_diff_eq!(accuracy(28_022.81, 36_881.0).unwrap(), -0.2402, epsilon = 5e-5);
        assert_abs_diff_eq!(accuracy(808_330.61, 637_888.0).unwrap(), 0.2672, epsilon = 5e-5);
        assert_eq!(accuracy(1000.0, 1000.0).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_requires_positive_measurement() {
        assert!(matches!(accuracy(10.0, 0.0), Err(ModelError::Domain(_))));
        assert!(matches!(accuracy(10.0, -3.0), Err(ModelError::Domain(_))));
        assert!(matches!(accuracy(10.0, f64::NAN), Err(ModelError::Domain(_))));
    }

    #[test]
    fn well_formed_problem_is_clean() {
        assert_eq!(validate(&two_class_problem()), vec![]);
    }

    #[test]
    fn zero_deadline_is_reported_at_its_path() {
        let mut p = two_class_problem();
        p.classes[1].deadline = 0.0;
        let d = validate(&p);
        assert_eq!(d.len(), 1);
        assert!(d[0].is_error());
        assert_eq!(d[0].path, "classes[1].deadline_ms");
    }

    #[test]
    fn avg_above_max_is_one_error() {
        let mut p = two_class_problem();
        let profile = p.classes[0].profiles.get_mut("small").unwrap();
        profile.map_avg = 200.0;
        profile.map_max = 150.0;
        let d = validate(&p);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].path, "classes[0].profiles.small.map_max_ms");
    }

    #[test]
    fn eta_of_one_is_rejected() {
        let mut p = two_class_problem();
        p.classes[0].spot_fraction_cap = 1.0;
        let d = validate(&p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "classes[0].eta");
    }

    #[test]
    fn unknown_vm_reference_and_duplicates() {
        let mut p = two_class_problem();
        p.classes[1].id = "a".into();
        let profile = p.classes[0].profiles["small"].clone();
        p.classes[0].profiles.insert("large".into(), profile);
        let d = validate(&p);
        let paths: Vec<_> = d.iter().map(|d| d.path.as_str()).collect();
        assert!(paths.contains(&"classes[1].id"));
        assert!(paths.contains(&"classes[0].profiles.large"));
    }

    #[test]
    fn drifting_samples_warn_but_do_not_fail() {
        let mut p = two_class_problem();
        let profile = p.classes[0].profiles.get_mut("small").unwrap();
        profile.map_samples = Some(vec![150.0, 170.0]);
        let d = validate(&p);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        assert!(!has_errors(&d));
    }

    #[test]
    fn empty_problem_reports_catalog_and_classes() {
        let d = validate(&Problem {
            catalog: vec![],
            classes: vec![],
        });
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn validate_is_idempotent() {
        let mut p = two_class_problem();
        p.classes[0].h_users = 0;
        let before = p.clone();
        assert_eq!(validate(&p), validate(&p));
        assert_eq!(p, before);
    }
}
