//! Discrete-event simulation of the closed fork-join network a class of
//! MapReduce users induces on its containers.
//!
//! Users alternate between thinking and waiting for a job. A submitted job
//! forks into map tasks that queue for admission into a finite capacity
//! region holding `capacity` containers. Map completions release their
//! container before the join; once every map task of the job is done the job
//! forks its reduce tasks back into the same admission queue, where they take
//! priority over map tasks. The job completes when its last reduce finishes.

mod dist;
mod engine;
mod output;

pub use dist::ServiceDistribution;
pub use engine::{
    run_replication, write_trace_tsv, Completion, Simulator, Snapshot, TaskKind, TraceKind,
    TraceRecord,
};
pub use output::{batch_means, estimate_response_time, BatchMeans};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::JobProfile;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("empirical service requested but the profile has no {0}")]
    MissingSamples(&'static str),
    #[error("simulation aborted after {events} events with {completions} job completions")]
    EventCapExceeded {
        events: u64,
        completions: usize,
        /// Response times recorded before the abort.
        partial: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThinkKind {
    #[default]
    Exponential,
    /// Fixed think time. Meant for tests.
    Deterministic,
}

/// How task durations are drawn when a profile becomes a network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServicePolicy {
    #[default]
    Exponential,
    Empirical,
    Deterministic,
}

/// A fully instantiated closed network for one class on one cluster size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub h_users: u32,
    pub think_time: f64,
    #[serde(default)]
    pub think_kind: ThinkKind,
    pub n_map: u32,
    pub n_reduce: u32,
    pub map_service: ServiceDistribution,
    /// Absent for map-only jobs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce_service: Option<ServiceDistribution>,
    /// Containers available to the class.
    pub capacity: u32,
}

impl NetworkSpec {
    pub fn check(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidSpec(msg.to_string()));
        if self.capacity == 0 {
            return bad("capacity must be at least 1");
        }
        if self.n_map == 0 {
            return bad("jobs need at least one map task");
        }
        if self.h_users == 0 {
            return bad("at least one user is required");
        }
        if !(self.think_time.is_finite() && self.think_time >= 0.0) {
            return bad("think time must be finite and nonnegative");
        }
        if !self.map_service.is_valid() {
            return bad("map service distribution is invalid");
        }
        match (&self.reduce_service, self.n_reduce) {
            (None, 0) => Ok(()),
            (Some(_), 0) => bad("reduce service given for a map-only job"),
            (None, _) => bad("reduce tasks need a reduce service distribution"),
            (Some(d), _) if !d.is_valid() => bad("reduce service distribution is invalid"),
            (Some(_), _) => Ok(()),
        }
    }
}

/// Output-analysis and run-control settings for one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub seed: u64,
    /// Completions discarded before batching starts.
    pub warmup_jobs: usize,
    /// Completions per batch.
    pub batch_size: usize,
    /// Batches collected before the precision target is first checked.
    pub min_batches: usize,
    pub max_batches: usize,
    pub confidence: f64,
    pub target_rel_half_width: f64,
    /// Hard cap on processed events for one run.
    pub max_events: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            seed: 42,
            warmup_jobs: 50,
            batch_size: 50,
            min_batches: 10,
            max_batches: 200,
            confidence: 0.95,
            target_rel_half_width: 0.05,
            max_events: 200_000_000,
        }
    }
}

impl SimParams {
    pub fn check(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidParams(msg));
        if self.batch_size < 10 {
            return bad(format!("batch_size must be at least 10, got {}", self.batch_size));
        }
        if self.max_batches < 2 {
            return bad(format!("max_batches must be at least 2, got {}", self.max_batches));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence must lie in (0, 1), got {}", self.confidence));
        }
        if !(self.target_rel_half_width.is_finite() && self.target_rel_half_width > 0.0) {
            return bad("target relative half-width must be positive".into());
        }
        Ok(())
    }

    /// Completions needed to fill every batch.
    pub fn total_jobs(&self) -> usize {
        self.warmup_jobs + self.batch_size * self.max_batches
    }
}

/// Simulated mean response time with its confidence half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean_response: f64,
    pub half_width: f64,
    pub completions: usize,
    pub converged: bool,
    /// Events the run processed.
    pub events: u64,
}

/// Turns a job profile into a network for `capacity` containers.
///
/// Map tasks keep the profile's map duration. Reduce containers are held for
/// the reduce duration plus the typical shuffle, so the reduce service mean is
/// `reduce_avg + shuffle_typ_avg`. For empirical replay the reduce and shuffle
/// sample lists are shuffled independently and summed pairwise; without
/// shuffle samples the shuffle average is added to every reduce sample.
pub fn build_network(
    profile: &JobProfile,
    capacity: u32,
    h_users: u32,
    think_time: f64,
    policy: ServicePolicy,
) -> Result<NetworkSpec, SimError> {
    let reduce_mean = profile.reduce_service_mean();
    let (map_service, reduce_service) = match policy {
        ServicePolicy::Exponential => (
            ServiceDistribution::Exponential { mean: profile.map_avg },
            ServiceDistribution::Exponential { mean: reduce_mean },
        ),
        ServicePolicy::Deterministic => (
            ServiceDistribution::Deterministic { mean: profile.map_avg },
            ServiceDistribution::Deterministic { mean: reduce_mean },
        ),
        ServicePolicy::Empirical => {
            let map = profile
                .map_samples
                .clone()
                .ok_or(SimError::MissingSamples("map samples"))?;
            let reduce = if profile.n_reduce == 0 {
                Vec::new()
            } else {
                let reduce = profile
                    .reduce_samples
                    .as_deref()
                    .ok_or(SimError::MissingSamples("reduce samples"))?;
                fold_shuffle_samples(reduce, profile)
            };
            (
                ServiceDistribution::Empirical { samples: map },
                ServiceDistribution::Empirical { samples: reduce },
            )
        }
    };
    let spec = NetworkSpec {
        h_users,
        think_time,
        think_kind: ThinkKind::Exponential,
        n_map: profile.n_map,
        n_reduce: profile.n_reduce,
        map_service,
        reduce_service: (profile.n_reduce > 0).then_some(reduce_service),
        capacity,
    };
    spec.check()?;
    Ok(spec)
}

fn fold_shuffle_samples(reduce: &[f64], profile: &JobProfile) -> Vec<f64> {
    match profile.shuffle_samples.as_deref() {
        None => reduce.iter().map(|r| r + profile.shuffle_typ_avg).collect(),
        Some(shuffle) => {
            // Fixed stream: the pairing must not depend on the run seed.
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5417);
            let mut reduce = reduce.to_vec();
            let mut shuffle = shuffle.to_vec();
            reduce.shuffle(&mut rng);
            shuffle.shuffle(&mut rng);
            let n = reduce.len().max(shuffle.len());
            (0..n)
                .map(|i| reduce[i % reduce.len()] + shuffle[i % shuffle.len()])
                .collect()
        }
    }
}
