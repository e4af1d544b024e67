//! Closed-form sizing helpers: an asymptotic response-time bound used to
//! seed the search, the smallest container count that bound accepts, and the
//! cheapest reserved/spot split of a fixed VM count.

use crate::model::{JobProfile, ModelError};
use crate::money::Money;

/// Default ceiling for [`initial_containers`].
pub const DEFAULT_MAX_CONTAINERS: u32 = 1_000_000;

/// Slack for floating-point rounding in `eta * vms`.
const SPOT_EPS: f64 = 1e-9;

/// Work a single job puts on the containers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandSummary {
    pub n_map: u32,
    pub n_reduce: u32,
    pub map_mean: f64,
    /// Reduce plus typical shuffle.
    pub reduce_mean: f64,
    /// Container-milliseconds per job.
    pub total_work: f64,
    /// Response time of a job running alone with unlimited containers.
    pub min_service: f64,
}

impl DemandSummary {
    /// Time for one job's map and reduce waves on `containers` slots.
    pub fn wave_time(&self, containers: u32) -> f64 {
        let waves = |tasks: u32| tasks.div_ceil(containers) as f64;
        waves(self.n_map) * self.map_mean + waves(self.n_reduce) * self.reduce_mean
    }
}

pub fn demand(profile: &JobProfile) -> DemandSummary {
    let map_mean = profile.map_avg;
    let reduce_mean = profile.reduce_service_mean();
    let total_work = f64::from(profile.n_map) * map_mean + f64::from(profile.n_reduce) * reduce_mean;
    let min_service = if profile.n_reduce >= 1 {
        map_mean + reduce_mean
    } else {
        map_mean
    };
    DemandSummary {
        n_map: profile.n_map,
        n_reduce: profile.n_reduce,
        map_mean,
        reduce_mean,
        total_work,
        min_service,
    }
}

/// Balanced-bound response time on `containers` slots with `h_users`
/// users thinking `think_time` on average:
/// `max(wave_time(c), H * W / c - Z)`.
///
/// The first term is the single-job wave schedule, the second the
/// saturation asymptote of a closed network. Nonincreasing in `containers`,
/// nondecreasing in `h_users`.
pub fn t_approx(summary: &DemandSummary, containers: u32, h_users: u32, think_time: f64) -> f64 {
    assert!(containers >= 1, "t_approx needs at least one container");
    let single = summary.wave_time(containers);
    let saturated = f64::from(h_users) * summary.total_work / f64::from(containers) - think_time;
    single.max(saturated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitialCapacity {
    pub containers: u32,
    /// False when even the ceiling misses the deadline under the bound.
    pub feasible: bool,
}

pub fn initial_containers(summary: &DemandSummary, h_users: u32, think_time: f64, deadline: f64) -> InitialCapacity {
    initial_containers_capped(summary, h_users, think_time, deadline, DEFAULT_MAX_CONTAINERS)
}

/// Smallest `c` in `1..=max_containers` with `t_approx(c) <= deadline`,
/// located by doubling and then bisection.
pub fn initial_containers_capped(
    summary: &DemandSummary,
    h_users: u32,
    think_time: f64,
    deadline: f64,
    max_containers: u32,
) -> InitialCapacity {
    let fits = |c: u32| t_approx(summary, c, h_users, think_time) <= deadline;
    let max_containers = max_containers.max(1);
    if fits(1) {
        return InitialCapacity {
            containers: 1,
            feasible: true,
        };
    }
    // Invariant: `lo` misses the deadline, `hi` is the probe.
    let mut lo = 1u32;
    let mut hi = 2u32.min(max_containers);
    while !fits(hi) {
        if hi == max_containers {
            return InitialCapacity {
                containers: max_containers,
                feasible: false,
            };
        }
        lo = hi;
        hi = hi.saturating_mul(2).min(max_containers);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    InitialCapacity {
        containers: hi,
        feasible: true,
    }
}

/// VMs needed to supply `containers` slots.
pub fn vms_for_containers(containers: u32, containers_per_vm: u32) -> u32 {
    containers.div_ceil(containers_per_vm).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PricingSplit {
    pub reserved: u32,
    pub spot: u32,
}

impl PricingSplit {
    pub fn hourly_cost(&self, sigma: Money, pi: Money) -> Money {
        sigma * self.spot + pi * self.reserved
    }
}

/// Cheapest `(reserved, spot)` with `reserved + spot = vms` and
/// `spot <= eta / (1 - eta) * reserved`.
///
/// The bound is equivalent to `spot <= eta * vms`, so when spot is strictly
/// cheaper the answer takes `floor(eta * vms)` spot VMs; otherwise all VMs
/// are reserved (ties go to reserved).
pub fn pricing_split(vms: u32, eta: f64, sigma: Money, pi: Money) -> Result<PricingSplit, ModelError> {
    if !(0.0..1.0).contains(&eta) {
        return Err(ModelError::Domain(format!("spot fraction cap must lie in [0, 1), got {eta}")));
    }
    let spot = if sigma < pi {
        ((eta * f64::from(vms) + SPOT_EPS).floor() as u32).min(vms)
    } else {
        0
    };
    Ok(PricingSplit {
        reserved: vms - spot,
        spot,
    })
}

/// Whether `spot <= eta / (1 - eta) * reserved` holds, up to rounding.
pub fn spot_cap_holds(reserved: u32, spot: u32, eta: f64) -> bool {
    f64::from(spot) * (1.0 - eta) <= eta * f64::from(reserved) + SPOT_EPS
}
