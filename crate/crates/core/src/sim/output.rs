use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{NetworkSpec, SimError, SimEstimate, SimParams, Simulator};

/// Confidence interval built from independent batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMeans {
    pub mean: f64,
    pub half_width: f64,
    pub batches: usize,
}

/// Student-t interval over `batch_means`. Needs at least two batches.
pub fn batch_means(batch_means: &[f64], confidence: f64) -> Option<BatchMeans> {
    let k = batch_means.len();
    if k < 2 {
        return None;
    }
    let n = k as f64;
    let mean = batch_means.iter().sum::<f64>() / n;
    let var = batch_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half_width = if var == 0.0 {
        0.0
    } else {
        let t = StudentsT::new(0.0, 1.0, n - 1.0)
            .expect("degrees of freedom are positive")
            .inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
        t * (var / n).sqrt()
    };
    Some(BatchMeans {
        mean,
        half_width,
        batches: k,
    })
}

/// Mean job response time with a batch-means confidence interval.
///
/// The first `warmup_jobs` completions are dropped; the rest are grouped in
/// batches of `batch_size`. From `min_batches` on, the run stops as soon as
/// the relative half-width reaches the target, and otherwise after
/// `max_batches`. Hitting the event cap yields a non-converged estimate from
/// whatever was collected (infinite half-width below two batches).
pub fn estimate_response_time(spec: &NetworkSpec, params: &SimParams) -> Result<SimEstimate, SimError> {
    params.check()?;
    let mut sim = Simulator::new(spec, params.seed)?;
    let first_check = params.min_batches.clamp(2, params.max_batches);

    let mut warm = 0usize;
    let mut completions = 0usize;
    let mut means = Vec::with_capacity(params.max_batches);
    let mut batch_sum = 0.0;
    let mut batch_len = 0usize;
    let mut tail_sum = 0.0;

    let mut summary = None;
    let mut converged = false;
    while means.len() < params.max_batches {
        let done = match sim.next_completion(params.max_events) {
            Ok(done) => done,
            Err(SimError::EventCapExceeded { .. }) => break,
            Err(other) => return Err(other),
        };
        completions += 1;
        let rt = done.response_time();
        if warm < params.warmup_jobs {
            warm += 1;
            tail_sum += rt;
            continue;
        }
        batch_sum += rt;
        batch_len += 1;
        if batch_len < params.batch_size {
            continue;
        }
        means.push(batch_sum / batch_len as f64);
        batch_sum = 0.0;
        batch_len = 0;
        if means.len() >= first_check {
            let ci = batch_means(&means, params.confidence).expect("at least two batches");
            summary = Some(ci);
            if relative(ci.half_width, ci.mean) <= params.target_rel_half_width {
                converged = true;
                break;
            }
        }
    }

    let events = sim.events_processed();
    if summary.as_ref().map(|s| s.batches) != Some(means.len()) {
        summary = batch_means(&means, params.confidence);
    }
    let estimate = match summary {
        Some(ci) => SimEstimate {
            mean_response: ci.mean,
            half_width: ci.half_width,
            completions,
            converged,
            events,
        },
        None => {
            let collected = means.iter().sum::<f64>() * params.batch_size as f64 + batch_sum;
            let n = means.len() * params.batch_size + batch_len;
            let mean = if n > 0 {
                collected / n as f64
            } else if warm > 0 {
                tail_sum / warm as f64
            } else {
                f64::INFINITY
            };
            SimEstimate {
                mean_response: mean,
                half_width: f64::INFINITY,
                completions,
                converged: false,
                events,
            }
        }
    };
    Ok(estimate)
}

fn relative(half_width: f64, mean: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        half_width / mean.abs()
    }
}
