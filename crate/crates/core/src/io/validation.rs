//! Prediction-accuracy studies: simulate (or replay) each measured
//! configuration and report the relative error of the prediction.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::problem::RawProfile;
use super::InputError;
use crate::model::{self, Diagnostic};
use crate::optimizer::derive_seed;
use crate::sim::{self, NetworkSpec, ServicePolicy, SimParams};

pub const VALIDATION_CSV_HEADER: &str = "label,measured_ms,simulated_ms,theta_percent,note";

/// Where a row's predicted response time comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkInputs {
    /// A prediction obtained elsewhere, replayed as is.
    Replay { simulated_ms: f64 },
    /// A ready-made network.
    Network { network: NetworkSpec },
    /// A job profile (problem-file schema) plus the cluster it ran on.
    Profile {
        profile: Value,
        capacity: u32,
        h_users: u32,
        #[serde(default)]
        think_time_ms: f64,
        #[serde(default)]
        policy: ServicePolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationInput {
    pub label: String,
    pub measured_ms: f64,
    #[serde(flatten)]
    pub inputs: NetworkInputs,
}

/// A validation rows file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRows {
    #[serde(default)]
    pub params: SimParams,
    pub rows: Vec<ValidationInput>,
}

pub fn parse_validation_rows(text: &str) -> Result<ValidationRows, InputError> {
    let rows: ValidationRows = serde_json::from_str(text).map_err(InputError::from_json)?;
    let bad: Vec<_> = rows
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !(r.measured_ms > 0.0 && r.measured_ms.is_finite()))
        .map(|(k, _)| Diagnostic::error(format!("rows[{k}].measured_ms"), "must be a positive duration"))
        .collect();
    if bad.is_empty() {
        Ok(rows)
    } else {
        Err(InputError::Invalid(bad))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub label: String,
    pub measured_t: f64,
    pub simulated_tau: f64,
    /// `(tau - T) / T`.
    pub theta: f64,
}

impl ValidationRow {
    pub fn new(label: impl Into<String>, measured_t: f64, simulated_tau: f64) -> Result<Self, model::ModelError> {
        Ok(ValidationRow {
            label: label.into(),
            measured_t,
            simulated_tau,
            theta: model::accuracy(simulated_tau, measured_t)?,
        })
    }

    /// A prediction below the measurement underestimates the response time.
    pub fn is_conservative(&self) -> bool {
        self.theta >= 0.0
    }

    pub fn theta_percent(&self) -> f64 {
        self.theta * 100.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowFailure {
    pub label: String,
    pub measured_t: f64,
    pub message: String,
}

pub type ValidationOutcome = Result<ValidationRow, RowFailure>;

fn predict(input: &ValidationInput, params: &SimParams) -> Result<f64, String> {
    let spec = match &input.inputs {
        NetworkInputs::Replay { simulated_ms } => return Ok(*simulated_ms),
        NetworkInputs::Network { network } => network.clone(),
        NetworkInputs::Profile {
            profile,
            capacity,
            h_users,
            think_time_ms,
            policy,
        } => {
            let raw: RawProfile = serde_json::from_value(profile.clone()).map_err(|e| e.to_string())?;
            let mut errors = Vec::new();
            let profile = raw.into_profile("profile", &mut errors).ok_or_else(|| {
                errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
            })?;
            sim::build_network(&profile, *capacity, *h_users, *think_time_ms, *policy).map_err(|e| e.to_string())?
        }
    };
    let params = SimParams {
        seed: derive_seed(params.seed, &input.label, "validate"),
        ..params.clone()
    };
    let estimate = sim::estimate_response_time(&spec, &params).map_err(|e| e.to_string())?;
    Ok(estimate.mean_response)
}

/// Predicts every row and computes its accuracy. A failing row is reported
/// and the remaining rows still run.
pub fn run_validate(inputs: &[ValidationInput], params: &SimParams) -> Vec<ValidationOutcome> {
    inputs
        .iter()
        .map(|input| {
            let fail = |message: String| RowFailure {
                label: input.label.clone(),
                measured_t: input.measured_ms,
                message,
            };
            let tau = predict(input, params).map_err(fail)?;
            ValidationRow::new(input.label.clone(), input.measured_ms, tau).map_err(|e| fail(e.to_string()))
        })
        .collect()
}

/// Mean of `|theta|` in percent over the rows that succeeded.
pub fn mean_abs_theta_percent(outcomes: &[ValidationOutcome]) -> Option<f64> {
    let ok: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok())
        .map(|r| r.theta_percent().abs())
        .collect();
    (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
}

pub fn validation_csv(outcomes: &[ValidationOutcome]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(VALIDATION_CSV_HEADER.split(',')).expect("in-memory write");
    for o in outcomes {
        let record = match o {
            Ok(r) => [
                r.label.clone(),
                format!("{:.2}", r.measured_t),
                format!("{:.2}", r.simulated_tau),
                format!("{:.2}", r.theta_percent()),
                if r.is_conservative() {
                    String::new()
                } else {
                    "non-conservative".into()
                },
            ],
            Err(f) => [
                f.label.clone(),
                format!("{:.2}", f.measured_t),
                String::new(),
                String::new(),
                format!("failed: {}", f.message),
            ],
        };
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ServiceDistribution, ThinkKind};

    fn deterministic_row(label: &str, measured: f64) -> ValidationInput {
        ValidationInput {
            label: label.into(),
            measured_ms: measured,
            inputs: NetworkInputs::Network {
                network: NetworkSpec {
                    h_users: 1,
                    think_time: 10_000.0,
                    think_kind: ThinkKind::Exponential,
                    n_map: 4,
                    n_reduce: 2,
                    map_service: ServiceDistribution::Deterministic { mean: 100.0 },
                    reduce_service: Some(ServiceDistribution::Deterministic { mean: 200.0 }),
                    capacity: 2,
                },
            },
        }
    }

    #[test]
    fn exact_prediction_has_zero_theta() {
        let out = run_validate(&[deterministic_row("det", 400.0)], &SimParams::default());
        let row = out[0].as_ref().unwrap();
        assert_eq!(row.simulated_tau, 400.0);
        assert_eq!(row.theta, 0.0);
        assert!(row.is_conservative());
    }

    #[test]
    fn underestimate_is_flagged() {
        let out = run_validate(&[deterministic_row("slow", 500.0)], &SimParams::default());
        let row = out[0].as_ref().unwrap();
        assert!(row.theta < 0.0);
        assert!(!row.is_conservative());
        assert!(validation_csv(&out).lines().nth(1).unwrap().ends_with("non-conservative"));
    }

    #[test]
    fn failing_row_does_not_stop_the_run() {
        let mut broken = deterministic_row("broken", 400.0);
        if let NetworkInputs::Network { network } = &mut broken.inputs {
            network.capacity = 0;
        }
        let out = run_validate(&[broken, deterministic_row("ok", 400.0)], &SimParams::default());
        assert!(out[0].is_err());
        assert!(out[1].is_ok());
        let csv = validation_csv(&out);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("failed: invalid network"));
        assert_eq!(mean_abs_theta_percent(&out), Some(0.0));
    }

    #[test]
    fn rows_file_accepts_all_input_kinds() {
        let text = r#"{
            "params": { "batch_size": 20, "max_batches": 10 },
            "rows": [
                { "label": "replayed", "measured_ms": 36881, "simulated_ms": 28022.81 },
                { "label": "profiled", "measured_ms": 300, "capacity": 1, "h_users": 1,
                  "think_time_ms": 1000, "policy": "deterministic",
                  "profile": { "n_map": 1, "n_reduce": 1, "map_avg_ms": 100, "reduce_avg_ms": 150, "shuffle_typ_avg_ms": 50 } }
            ]
        }"#;
        let rows = parse_validation_rows(text).unwrap();
        assert_eq!(rows.params.batch_size, 20);
        let out = run_validate(&rows.rows, &rows.params);
        let first = out[0].as_ref().unwrap();
        assert!((first.theta_percent() - -24.02).abs() < 0.005);
        assert_eq!(out[1].as_ref().unwrap().theta, 0.0);
    }

    #[test]
    fn nonpositive_measurement_is_an_input_error() {
        let text = r#"{ "rows": [ { "label": "x", "measured_ms": 0, "simulated_ms": 5 } ] }"#;
        assert!(matches!(parse_validation_rows(text), Err(InputError::Invalid(_))));
    }
}
