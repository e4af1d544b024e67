//! Problem documents.
//!
//! ```json
//! {
//!   "currency": "EUR",
//!   "vm_types": [
//!     { "id": "m4.xlarge", "containers": 8, "sigma_per_hour": 0.05, "pi_per_hour": 0.12 }
//!   ],
//!   "classes": [
//!     {
//!       "id": "R1", "h_users": 10, "think_time_ms": 10000, "deadline_ms": 180000, "eta": 0.3,
//!       "profiles": {
//!         "m4.xlarge": { "n_map": 500, "n_reduce": 1, "map_avg_ms": 4200, "map_max_ms": 9000, ... }
//!       }
//!     }
//!   ]
//! }
//! ```
//!
//! `think_time_ms` and `eta` default to 0, `n_reduce` and the reduce and
//! shuffle averages default to 0, and every maximum defaults to its average.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use super::InputError;
use crate::model::{self, ApplicationClass, Diagnostic, JobProfile, Problem, VmType};
use crate::money::Money;

const TOP_KEYS: &[&str] = &["currency", "vm_types", "classes"];
const VM_KEYS: &[&str] = &["id", "containers", "sigma_per_hour", "pi_per_hour"];
const CLASS_KEYS: &[&str] = &["id", "h_users", "think_time_ms", "deadline_ms", "eta", "profiles"];
pub(crate) const PROFILE_KEYS: &[&str] = &[
    "n_map",
    "n_reduce",
    "map_avg_ms",
    "map_max_ms",
    "reduce_avg_ms",
    "reduce_max_ms",
    "shuffle_typ_avg_ms",
    "shuffle_typ_max_ms",
    "shuffle_first_max_ms",
    "map_samples_ms",
    "reduce_samples_ms",
    "shuffle_samples_ms",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ParseMode {
    /// Unknown fields are errors.
    #[default]
    Strict,
    /// Unknown fields are reported as warnings and ignored.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedProblem {
    pub problem: Problem,
    pub currency: String,
    /// Non-fatal findings (unknown fields in lenient mode, sample drift).
    pub warnings: Vec<Diagnostic>,
}

#[derive(Deserialize)]
struct RawProblem {
    currency: Option<String>,
    vm_types: Option<Vec<RawVm>>,
    classes: Option<Vec<RawClass>>,
}

#[derive(Deserialize)]
struct RawVm {
    id: Option<String>,
    containers: Option<u32>,
    sigma_per_hour: Option<Money>,
    pi_per_hour: Option<Money>,
}

#[derive(Deserialize)]
struct RawClass {
    id: Option<String>,
    h_users: Option<u32>,
    think_time_ms: Option<f64>,
    deadline_ms: Option<f64>,
    eta: Option<f64>,
    profiles: Option<BTreeMap<String, RawProfile>>,
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct RawProfile {
    n_map: Option<u32>,
    n_reduce: Option<u32>,
    map_avg_ms: Option<f64>,
    map_max_ms: Option<f64>,
    reduce_avg_ms: Option<f64>,
    reduce_max_ms: Option<f64>,
    shuffle_typ_avg_ms: Option<f64>,
    shuffle_typ_max_ms: Option<f64>,
    shuffle_first_max_ms: Option<f64>,
    map_samples_ms: Option<Vec<f64>>,
    reduce_samples_ms: Option<Vec<f64>>,
    shuffle_samples_ms: Option<Vec<f64>>,
}

fn missing(path: String) -> Diagnostic {
    Diagnostic::error(path, "required field is missing")
}

impl RawProfile {
    pub(crate) fn into_profile(self, base: &str, errors: &mut Vec<Diagnostic>) -> Option<JobProfile> {
        let n_map = self.n_map;
        let map_avg = self.map_avg_ms;
        if n_map.is_none() {
            errors.push(missing(format!("{base}.n_map")));
        }
        if map_avg.is_none() {
            errors.push(missing(format!("{base}.map_avg_ms")));
        }
        let (n_map, map_avg) = (n_map?, map_avg?);
        let reduce_avg = self.reduce_avg_ms.unwrap_or(0.0);
        let shuffle_typ_avg = self.shuffle_typ_avg_ms.unwrap_or(0.0);
        let shuffle_typ_max = self.shuffle_typ_max_ms.unwrap_or(shuffle_typ_avg);
        Some(JobProfile {
            n_map,
            n_reduce: self.n_reduce.unwrap_or(0),
            map_avg,
            map_max: self.map_max_ms.unwrap_or(map_avg),
            reduce_avg,
            reduce_max: self.reduce_max_ms.unwrap_or(reduce_avg),
            shuffle_typ_avg,
            shuffle_typ_max,
            shuffle_first_max: self.shuffle_first_max_ms.unwrap_or(shuffle_typ_max),
            map_samples: self.map_samples_ms,
            reduce_samples: self.reduce_samples_ms,
            shuffle_samples: self.shuffle_samples_ms,
        })
    }
}

/// Reads a problem document and validates it.
pub fn parse_problem(text: &str, mode: ParseMode) -> Result<ParsedProblem, InputError> {
    let raw: RawProblem = serde_json::from_str(text).map_err(InputError::from_json)?;
    let value: Value = serde_json::from_str(text).map_err(InputError::from_json)?;

    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    for path in unknown_fields(&value) {
        let message = "unknown field";
        match mode {
            ParseMode::Strict => errors.push(Diagnostic::error(path, message)),
            ParseMode::Lenient => warnings.push(Diagnostic::warning(path, message)),
        }
    }

    let catalog = match raw.vm_types {
        None => {
            errors.push(missing("vm_types".into()));
            Vec::new()
        }
        Some(vms) => vms
            .into_iter()
            .enumerate()
            .filter_map(|(k, vm)| {
                let at = |f: &str| format!("vm_types[{k}].{f}");
                let fields = (vm.id, vm.containers, vm.sigma_per_hour, vm.pi_per_hour);
                if fields.0.is_none() {
                    errors.push(missing(at("id")));
                }
                if fields.1.is_none() {
                    errors.push(missing(at("containers")));
                }
                if fields.2.is_none() {
                    errors.push(missing(at("sigma_per_hour")));
                }
                if fields.3.is_none() {
                    errors.push(missing(at("pi_per_hour")));
                }
                Some(VmType {
                    id: fields.0?,
                    containers: fields.1?,
                    sigma: fields.2?,
                    pi: fields.3?,
                })
            })
            .collect(),
    };

    let classes = match raw.classes {
        None => {
            errors.push(missing("classes".into()));
            Vec::new()
        }
        Some(classes) => classes
            .into_iter()
            .enumerate()
            .filter_map(|(k, c)| {
                let at = |f: &str| format!("classes[{k}].{f}");
                if c.id.is_none() {
                    errors.push(missing(at("id")));
                }
                if c.h_users.is_none() {
                    errors.push(missing(at("h_users")));
                }
                if c.deadline_ms.is_none() {
                    errors.push(missing(at("deadline_ms")));
                }
                if c.profiles.is_none() {
                    errors.push(missing(at("profiles")));
                }
                let profiles = c
                    .profiles
                    .unwrap_or_default()
                    .into_iter()
                    .map(|(vm_id, raw)| {
                        let base = format!("classes[{k}].profiles.{vm_id}");
                        raw.into_profile(&base, &mut errors).map(|p| (vm_id, p))
                    })
                    .collect::<Vec<_>>();
                Some(ApplicationClass {
                    id: c.id?,
                    h_users: c.h_users?,
                    think_time: c.think_time_ms.unwrap_or(0.0),
                    deadline: c.deadline_ms?,
                    spot_fraction_cap: c.eta.unwrap_or(0.0),
                    profiles: profiles.into_iter().collect::<Option<BTreeMap<_, _>>>()?,
                })
            })
            .collect(),
    };

    if !errors.is_empty() {
        return Err(InputError::Invalid(errors));
    }
    let problem = Problem { catalog, classes };
    let (fatal, soft): (Vec<_>, Vec<_>) = model::validate(&problem).into_iter().partition(Diagnostic::is_error);
    if !fatal.is_empty() {
        return Err(InputError::Invalid(fatal));
    }
    warnings.extend(soft);
    Ok(ParsedProblem {
        problem,
        currency: raw.currency.unwrap_or_default(),
        warnings,
    })
}

/// Paths of object keys the schema does not know.
fn unknown_fields(value: &Value) -> Vec<String> {
    let mut out = Vec::new();
    let Some(top) = value.as_object() else {
        return out;
    };
    extra_keys(top, TOP_KEYS, "", &mut out);
    if let Some(vms) = top.get("vm_types").and_then(Value::as_array) {
        for (k, vm) in vms.iter().enumerate() {
            if let Some(obj) = vm.as_object() {
                extra_keys(obj, VM_KEYS, &format!("vm_types[{k}]."), &mut out);
            }
        }
    }
    if let Some(classes) = top.get("classes").and_then(Value::as_array) {
        for (k, class) in classes.iter().enumerate() {
            let Some(obj) = class.as_object() else { continue };
            extra_keys(obj, CLASS_KEYS, &format!("classes[{k}]."), &mut out);
            if let Some(profiles) = obj.get("profiles").and_then(Value::as_object) {
                for (vm_id, p) in profiles {
                    if let Some(p) = p.as_object() {
                        extra_keys(p, PROFILE_KEYS, &format!("classes[{k}].profiles.{vm_id}."), &mut out);
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn extra_keys(obj: &serde_json::Map<String, Value>, known: &[&str], prefix: &str, out: &mut Vec<String>) {
    out.extend(
        obj.keys()
            .filter(|k| !known.contains(&k.as_str()))
            .map(|k| format!("{prefix}{k}")),
    );
}
