//! Reference solutions shared by the integration suites. Nothing here calls
//! into the simulator or the analytic module.

#![allow(dead_code)]

/// Exact mean response time of the machine-repairman model: `h` users with
/// exponential think time of mean `z`, one station with `c` exponential
/// servers of mean `s`. Solved as a birth-death chain on the number of jobs
/// at the station; the response time follows from Little's law.
pub fn repairman_ctmc(h: u32, c: u32, s: f64, z: f64) -> f64 {
    assert!(z > 0.0, "needs a positive think time");
    // p[n+1] / p[n] = birth(n) / death(n+1)
    let birth = |n: u32| f64::from(h - n) / z;
    let death = |n: u32| f64::from(n.min(c)) / s;
    let mut weights = vec![1.0f64];
    for n in 0..h {
        let next = weights[n as usize] * birth(n) / death(n + 1);
        weights.push(next);
    }
    let total: f64 = weights.iter().sum();
    let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let jobs: f64 = p.iter().enumerate().map(|(n, pn)| n as f64 * pn).sum();
    let throughput: f64 = p
        .iter()
        .enumerate()
        .map(|(n, pn)| pn * death(n as u32))
        .sum();
    jobs / throughput
}

/// Exact mean-value analysis for a single-server station plus a delay
/// station. Second route for the `c = 1` case.
pub fn repairman_mva(h: u32, s: f64, z: f64) -> f64 {
    let mut queue = 0.0;
    let mut response = 0.0;
    for n in 1..=h {
        response = s * (1.0 + queue);
        let x = f64::from(n) / (response + z);
        queue = x * response;
    }
    response
}

/// Published accuracy rows: label, measured T (ms), simulated tau (ms),
/// printed theta (%).
pub struct AccuracyRow {
    pub label: &'static str,
    pub measured: f64,
    pub simulated: f64,
    pub printed_theta_percent: f64,
}

pub fn accuracy_rows() -> Vec<AccuracyRow> {
    let text = include_str!("../fixtures/accuracy_rows.json");
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| AccuracyRow {
            label: Box::leak(r["label"].as_str().unwrap().to_string().into_boxed_str()),
            measured: r["measured_ms"].as_f64().unwrap(),
            simulated: r["simulated_ms"].as_f64().unwrap(),
            printed_theta_percent: r["printed_theta_percent"].as_f64().unwrap(),
        })
        .collect()
}

/// Spot VMs allowed next to `reserved` reserved VMs.
pub fn spot_allowed(reserved: u32, spot: u32, eta: f64) -> bool {
    // s <= eta / (1 - eta) * R, multiplied through by (1 - eta) > 0
    f64::from(spot) * (1.0 - eta) <= eta * f64::from(reserved) + 1e-9
}

/// Cheapest (reserved, spot) by enumerating every split of `vms`; ties go to
/// fewer spot VMs.
pub fn brute_force_split(vms: u32, eta: f64, sigma_ticks: i64, pi_ticks: i64) -> (u32, u32) {
    (0..=vms)
        .map(|spot| (vms - spot, spot))
        .filter(|&(r, s)| spot_allowed(r, s, eta))
        .min_by_key(|&(r, s)| (sigma_ticks * i64::from(s) + pi_ticks * i64::from(r), s))
        .expect("all-reserved is always allowed")
}
