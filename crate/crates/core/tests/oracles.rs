//! Simulator and sizing helpers checked against independent reference
//! solutions.

mod common;

use approx::assert_relative_eq;
use mrsizer_core::analytic::{pricing_split, t_approx, demand};
use mrsizer_core::money::Money;
use mrsizer_core::sim::{estimate_response_time, NetworkSpec, ServiceDistribution, SimParams, ThinkKind};
use mrsizer_core::JobProfile;

use common::{brute_force_split, repairman_ctmc, repairman_mva};

fn repairman(h: u32, c: u32, s: f64, z: f64) -> NetworkSpec {
    NetworkSpec {
        h_users: h,
        think_time: z,
        think_kind: ThinkKind::Exponential,
        n_map: 1,
        n_reduce: 0,
        map_service: ServiceDistribution::Exponential { mean: s },
        reduce_service: None,
        capacity: c,
    }
}

#[test]
fn ctmc_and_mva_agree_on_single_server() {
    for h in 1..=8 {
        for (s, z) in [(100.0, 200.0), (50.0, 400.0), (100.0, 10.0)] {
            assert_relative_eq!(repairman_ctmc(h, 1, s, z), repairman_mva(h, s, z), max_relative = 1e-12);
        }
    }
}

#[test]
fn oracle_values_for_the_documented_examples() {
    // H=3, one server, S=100, Z=200, by hand:
    // n=1: R=100, X=1/300, Q=1/3
    // n=2: R=133.33, X=0.006, Q=0.8
    // n=3: R=180
    assert_relative_eq!(repairman_mva(3, 100.0, 200.0), 180.0, max_relative = 1e-12);
    // H=2 on two servers never queues.
    assert_relative_eq!(repairman_ctmc(2, 2, 50.0, 100.0), 50.0, max_relative = 1e-12);
}

#[test]
fn simulated_single_server_matches_oracle() {
    let exact = repairman_ctmc(3, 1, 100.0, 200.0);
    let est = estimate_response_time(&repairman(3, 1, 100.0, 200.0), &SimParams::default()).unwrap();
    assert!(
        (est.mean_response - exact).abs() <= est.half_width,
        "simulated {} +/- {} vs exact {exact}",
        est.mean_response,
        est.half_width
    );
}

#[test]
fn simulated_two_servers_two_users_matches_oracle() {
    let exact = repairman_ctmc(2, 2, 50.0, 100.0);
    let est = estimate_response_time(&repairman(2, 2, 50.0, 100.0), &SimParams::default()).unwrap();
    assert!((est.mean_response - exact).abs() <= est.half_width);
}

#[test]
fn t_approx_agrees_with_deterministic_wave_schedule() {
    // A lone job with deterministic tasks runs exactly its wave schedule.
    let s = demand(&JobProfile::from_averages(4, 2, 100.0, 150.0, 50.0));
    assert_eq!(t_approx(&s, 2, 1, 0.0), 400.0);
}

#[test]
fn pricing_split_matches_enumeration_for_documented_case() {
    let got = pricing_split(10, 0.3, Money::from_f64(0.05), Money::from_f64(0.1)).unwrap();
    assert_eq!((got.reserved, got.spot), brute_force_split(10, 0.3, 500, 1000));
    assert_eq!((got.reserved, got.spot), (7, 3));
}

mod workload_monotonicity {
    use std::collections::BTreeMap;

    use mrsizer_core::model::{ApplicationClass, JobProfile, VmType};
    use mrsizer_core::money::Money;
    use mrsizer_core::optimizer::{hill_climb, start_vms, AnalyticEvaluator};
    use proptest::prelude::*;

    fn sized(profile: &JobProfile, per_vm: u32, h: u32, z: f64, d: f64) -> Option<u32> {
        let vm = VmType {
            id: "v".into(),
            containers: per_vm,
            sigma: Money::from_ticks(1),
            pi: Money::from_ticks(2),
        };
        let class = ApplicationClass {
            id: "c".into(),
            h_users: h,
            think_time: z,
            deadline: d,
            spot_fraction_cap: 0.0,
            profiles: BTreeMap::from([("v".to_string(), profile.clone())]),
        };
        let start = start_vms(&class, &vm).unwrap();
        let out = hill_climb(&AnalyticEvaluator::default(), &class, &vm, start, 2000, None).unwrap();
        (out.converged && out.record.feasible).then_some(out.record.vms)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn more_users_or_tighter_deadlines_never_need_fewer_vms(
            n_map in 1u32..50, n_reduce in 0u32..10,
            map in 10u32..300, reduce in 10u32..300,
            per_vm in 1u32..6, h in 1u32..6, z in 0u32..3000,
            d in 400u32..5000, extra_users in 1u32..4, tighten in 0.5f64..1.0,
        ) {
            let p = JobProfile::from_averages(n_map, n_reduce, f64::from(map), f64::from(reduce), 0.0);
            let (z, d) = (f64::from(z), f64::from(d));
            if let Some(base) = sized(&p, per_vm, h, z, d) {
                if let Some(more) = sized(&p, per_vm, h + extra_users, z, d) {
                    prop_assert!(more >= base);
                }
                if let Some(tight) = sized(&p, per_vm, h, z, d * tighten) {
                    prop_assert!(tight >= base);
                }
            }
        }
    }
}
