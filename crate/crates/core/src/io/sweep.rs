use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Problem;
use crate::money::Money;
use crate::optimizer::{self, OptimizeError, OptimizerConfig};

pub const SWEEP_CSV_HEADER: &str = "axis_value,vm_type,vms,reserved,spot,hourly_cost,predicted_time_ms,feasible";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Deadline,
    HUsers,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deadline" => Ok(SweepAxis::Deadline),
            "h_users" => Ok(SweepAxis::HUsers),
            other => Err(format!("unknown sweep axis `{other}` (expected deadline or h_users)")),
        }
    }
}

/// One parameter of one class varied over an ordered list of values, all
/// else fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base_problem: Problem,
    pub axis: SweepAxis,
    pub class_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub vm_type: String,
    pub vms: u32,
    pub reserved: u32,
    pub spot: u32,
    /// Hourly cost of the swept class alone.
    pub hourly_cost: Money,
    pub predicted_time_ms: f64,
    pub feasible: bool,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("class `{0}` is not in the problem")]
    UnknownClass(String),
    #[error("invalid sweep values: {0}")]
    BadValues(String),
    #[error("optimizing at {axis_value}: {source}")]
    Optimize {
        axis_value: f64,
        #[source]
        source: OptimizeError,
    },
}

impl SweepSpec {
    pub fn check(&self) -> Result<(), SweepError> {
        if self.base_problem.class(&self.class_id).is_none() {
            return Err(SweepError::UnknownClass(self.class_id.clone()));
        }
        if self.values.is_empty() {
            return Err(SweepError::BadValues("at least one value is required".into()));
        }
        let increasing = self.values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(SweepError::BadValues("values must be strictly monotone".into()));
        }
        for &v in &self.values {
            let ok = match self.axis {
                SweepAxis::Deadline => v > 0.0 && v.is_finite(),
                SweepAxis::HUsers => v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX),
            };
            if !ok {
                return Err(SweepError::BadValues(format!("{v} is not a valid {:?} value", self.axis)));
            }
        }
        Ok(())
    }
}

/// Optimizes the swept class once per axis value, in the given order.
///
/// Only the swept class is optimized at each point; classes are sized
/// independently, so the others cannot affect it.
pub fn run_sweep(spec: &SweepSpec, config: &OptimizerConfig) -> Result<Vec<SweepRow>, SweepError> {
    spec.check()?;
    let base = spec.base_problem.class(&spec.class_id).expect("checked above");
    spec.values
        .iter()
        .map(|&value| {
            let mut class = base.clone();
            match spec.axis {
                SweepAxis::Deadline => class.deadline = value,
                SweepAxis::HUsers => class.h_users = value as u32,
            }
            let problem = Problem {
                catalog: spec.base_problem.catalog.clone(),
                classes: vec![class],
            };
            let solution = optimizer::optimize(&problem, config, None).map_err(|source| SweepError::Optimize {
                axis_value: value,
                source,
            })?;
            let cs = &solution.per_class[0];
            Ok(SweepRow {
                axis_value: value,
                vm_type: cs.vm_type.clone(),
                vms: cs.vms,
                reserved: cs.reserved,
                spot: cs.spot,
                hourly_cost: solution.hourly_cost,
                predicted_time_ms: cs.predicted_time,
                feasible: cs.feasible,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(SWEEP_CSV_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.axis_value.to_string(),
            r.vm_type.clone(),
            r.vms.to_string(),
            r.reserved.to_string(),
            r.spot.to_string(),
            r.hourly_cost.to_string(),
            format!("{:.2}", r.predicted_time_ms),
            r.feasible.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}
