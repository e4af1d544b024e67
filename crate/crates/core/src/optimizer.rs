//! Per-class cluster sizing.
//!
//! Classes never share VMs, so each one is sized on its own: for every
//! candidate VM type a unit-step hill climb finds the smallest VM count whose
//! evaluated response time meets the deadline, the count is split between
//! reserved and spot instances, and the cheapest candidate wins.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{self, PricingSplit};
use crate::model::{self, ApplicationClass, ClassSolution, Diagnostic, ModelError, Problem, Solution, VmType};
use crate::money::Money;
use crate::sim::{self, ServicePolicy, SimError, SimEstimate, SimParams};

/// Extra sizes probed below an infeasible one once noisy, non-monotone
/// response times have been observed.
pub const NON_MONOTONE_EXTRA_STEPS: u32 = 3;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("problem is invalid:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("simulating class `{class_id}` on {vms} x `{vm_type}`: {source}")]
    Simulation {
        class_id: String,
        vm_type: String,
        vms: u32,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("class `{class_id}` has no profile for VM type `{vm_type}`")]
    MissingProfile { class_id: String, vm_type: String },
    #[error("evaluation needs at least one VM")]
    ZeroVms,
}

fn format_diagnostics(diagnostics: &[Diagnostic]) -> String {
    diagnostics.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    #[default]
    Simulation,
    /// Uses the closed-form bound instead of simulating. Fast and noiseless.
    Analytic,
}

/// When an estimate counts as meeting the deadline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityRule {
    /// `mean + half_width <= deadline`.
    #[default]
    Conservative,
    /// `mean <= deadline`.
    MeanOnly,
}

impl FeasibilityRule {
    pub fn accepts(self, estimate: &SimEstimate, deadline: f64) -> bool {
        let t = match self {
            FeasibilityRule::Conservative => estimate.mean_response + estimate.half_width,
            FeasibilityRule::MeanOnly => estimate.mean_response,
        };
        t <= deadline
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub sim_params: SimParams,
    pub max_hc_steps: u32,
    pub cache_enabled: bool,
    pub feasibility: FeasibilityRule,
    pub evaluator: EvaluatorKind,
    pub service_policy: ServicePolicy,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            sim_params: SimParams::default(),
            max_hc_steps: 500,
            cache_enabled: true,
            feasibility: FeasibilityRule::Conservative,
            evaluator: EvaluatorKind::Simulation,
            service_policy: ServicePolicy::Exponential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub class_id: String,
    pub vm_type: String,
    pub vms: u32,
    pub containers: u32,
    pub estimate: SimEstimate,
    pub feasible: bool,
}

/// One hill-climbing step, reported as it happens.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressEvent {
    pub class_id: String,
    pub vm_type: String,
    pub vms: u32,
    pub feasible: bool,
    pub cost: Money,
}

pub type ProgressFn<'a> = dyn Fn(&ProgressEvent) + Sync + 'a;

/// Scores one cluster size for one class.
pub trait Evaluator: Sync {
    fn evaluate(&self, class: &ApplicationClass, vm: &VmType, vms: u32) -> Result<EvaluationRecord, OptimizeError>;
}

fn profile_for<'a>(class: &'a ApplicationClass, vm: &VmType) -> Result<&'a model::JobProfile, OptimizeError> {
    class.profiles.get(&vm.id).ok_or_else(|| OptimizeError::MissingProfile {
        class_id: class.id.clone(),
        vm_type: vm.id.clone(),
    })
}

/// Stable per-(class, type) seed. Every size of one climb shares it, so
/// sizes are compared under common random numbers, and the value does not
/// depend on which thread gets there first.
pub fn derive_seed(master: u64, class_id: &str, vm_type: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    let bytes = master
        .to_le_bytes()
        .into_iter()
        .chain(class_id.bytes())
        .chain(std::iter::once(0xff))
        .chain(vm_type.bytes());
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    class_id: String,
    vm_type: String,
    vms: u32,
    seed: u64,
}

/// Evaluates sizes by simulating the class's network.
pub struct SimulationEvaluator {
    params: SimParams,
    policy: ServicePolicy,
    rule: FeasibilityRule,
    cache_enabled: bool,
    cache: Mutex<HashMap<CacheKey, EvaluationRecord>>,
    events: AtomicU64,
    runs: AtomicU64,
}

impl SimulationEvaluator {
    pub fn new(config: &OptimizerConfig) -> Self {
        SimulationEvaluator {
            params: config.sim_params.clone(),
            policy: config.service_policy,
            rule: config.feasibility,
            cache_enabled: config.cache_enabled,
            cache: Mutex::new(HashMap::new()),
            events: AtomicU64::new(0),
            runs: AtomicU64::new(0),
        }
    }

    /// Total simulation events processed so far.
    pub fn simulated_events(&self) -> u64 {
        self.events.load(Ordering::Relaxed)
    }

    pub fn simulation_runs(&self) -> u64 {
        self.runs.load(Ordering::Relaxed)
    }
}

impl Evaluator for SimulationEvaluator {
    fn evaluate(&self, class: &ApplicationClass, vm: &VmType, vms: u32) -> Result<EvaluationRecord, OptimizeError> {
        if vms == 0 {
            return Err(OptimizeError::ZeroVms);
        }
        let seed = derive_seed(self.params.seed, &class.id, &vm.id);
        let key = CacheKey {
            class_id: class.id.clone(),
            vm_type: vm.id.clone(),
            vms,
            seed,
        };
        if self.cache_enabled {
            if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
                return Ok(hit.clone());
            }
        }

        let profile = profile_for(class, vm)?;
        let containers = vms * vm.containers;
        let wrap = |source| OptimizeError::Simulation {
            class_id: class.id.clone(),
            vm_type: vm.id.clone(),
            vms,
            source,
        };
        let spec = sim::build_network(profile, containers, class.h_users, class.think_time, self.policy).map_err(wrap)?;
        let params = SimParams {
            seed,
            ..self.params.clone()
        };
        let estimate = sim::estimate_response_time(&spec, &params).map_err(wrap)?;
        self.events.fetch_add(estimate.events, Ordering::Relaxed);
        self.runs.fetch_add(1, Ordering::Relaxed);

        let record = EvaluationRecord {
            class_id: class.id.clone(),
            vm_type: vm.id.clone(),
            vms,
            containers,
            feasible: self.rule.accepts(&estimate, class.deadline),
            estimate,
        };
        if self.cache_enabled {
            self.cache.lock().expect("cache lock").insert(key, record.clone());
        }
        Ok(record)
    }
}

/// Evaluates sizes with [`analytic::t_approx`]; zero half-width.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticEvaluator {
    pub rule: FeasibilityRule,
}

impl Evaluator for AnalyticEvaluator {
    fn evaluate(&self, class: &ApplicationClass, vm: &VmType, vms: u32) -> Result<EvaluationRecord, OptimizeError> {
        if vms == 0 {
            return Err(OptimizeError::ZeroVms);
        }
        let summary = analytic::demand(profile_for(class, vm)?);
        let containers = vms * vm.containers;
        let estimate = SimEstimate {
            mean_response: analytic::t_approx(&summary, containers, class.h_users, class.think_time),
            half_width: 0.0,
            completions: 0,
            converged: true,
            events: 0,
        };
        Ok(EvaluationRecord {
            class_id: class.id.clone(),
            vm_type: vm.id.clone(),
            vms,
            containers,
            feasible: self.rule.accepts(&estimate, class.deadline),
            estimate,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClimbOutcome {
    pub record: EvaluationRecord,
    /// False when the step budget ran out first.
    pub converged: bool,
    pub steps: u32,
}

struct Climber<'a> {
    evaluator: &'a dyn Evaluator,
    class: &'a ApplicationClass,
    vm: &'a VmType,
    progress: Option<&'a ProgressFn<'a>>,
    history: Vec<(u32, f64)>,
}

impl Climber<'_> {
    fn eval(&mut self, vms: u32) -> Result<EvaluationRecord, OptimizeError> {
        let record = self.evaluator.evaluate(self.class, self.vm, vms)?;
        self.history.push((vms, record.estimate.mean_response));
        if let Some(report) = self.progress {
            let split = analytic::pricing_split(vms, self.class.spot_fraction_cap, self.vm.sigma, self.vm.pi)?;
            report(&ProgressEvent {
                class_id: self.class.id.clone(),
                vm_type: self.vm.id.clone(),
                vms,
                feasible: record.feasible,
                cost: split.hourly_cost(self.vm.sigma, self.vm.pi),
            });
        }
        Ok(record)
    }

    /// True once a larger cluster has been seen to respond more slowly than
    /// a smaller one.
    fn non_monotone(&self) -> bool {
        self.history.iter().any(|&(va, ta)| {
            self.history
                .iter()
                .any(|&(vb, tb)| va < vb && ta < tb)
        })
    }
}

/// Unit-step hill climb on the VM count of one class on one VM type.
///
/// An infeasible start grows one VM at a time until feasible. A feasible
/// start shrinks one VM at a time while the smaller size stays feasible and
/// settles on the last feasible size. If the observed response times stop
/// decreasing with size (simulation noise), up to
/// [`NON_MONOTONE_EXTRA_STEPS`] further sizes below a failing one are probed
/// before giving up. Each size change counts as one step.
pub fn hill_climb(
    evaluator: &dyn Evaluator,
    class: &ApplicationClass,
    vm: &VmType,
    start_vms: u32,
    max_steps: u32,
    progress: Option<&ProgressFn<'_>>,
) -> Result<ClimbOutcome, OptimizeError> {
    let mut climber = Climber {
        evaluator,
        class,
        vm,
        progress,
        history: Vec::new(),
    };
    let mut steps = 0u32;
    let mut current = climber.eval(start_vms.max(1))?;

    if !current.feasible {
        while !current.feasible {
            if steps == max_steps {
                return Ok(ClimbOutcome {
                    record: current,
                    converged: false,
                    steps,
                });
            }
            steps += 1;
            current = climber.eval(current.vms + 1)?;
        }
        return Ok(ClimbOutcome {
            record: current,
            converged: true,
            steps,
        });
    }

    let mut best = current;
    'descend: while best.vms > 1 {
        let probes = if climber.non_monotone() {
            1 + NON_MONOTONE_EXTRA_STEPS
        } else {
            1
        };
        let mut k = 1;
        loop {
            if k > probes || k >= best.vms {
                break 'descend;
            }
            if steps == max_steps {
                return Ok(ClimbOutcome {
                    record: best,
                    converged: false,
                    steps,
                });
            }
            steps += 1;
            let candidate = climber.eval(best.vms - k)?;
            if candidate.feasible {
                best = candidate;
                continue 'descend;
            }
            // The first failure may reveal non-monotonicity; widen the scan.
            let widened = if climber.non_monotone() {
                1 + NON_MONOTONE_EXTRA_STEPS
            } else {
                1
            };
            if k >= widened {
                break 'descend;
            }
            k += 1;
        }
    }
    Ok(ClimbOutcome {
        record: best,
        converged: true,
        steps,
    })
}

/// Hill-climb result for one candidate VM type, priced.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult {
    pub outcome: ClimbOutcome,
    pub split: PricingSplit,
    pub cost: Money,
}

impl CandidateResult {
    pub fn vm_type(&self) -> &str {
        &self.outcome.record.vm_type
    }

    pub fn is_feasible(&self) -> bool {
        self.outcome.converged && self.outcome.record.feasible
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSelection {
    pub solution: ClassSolution,
    pub candidates: Vec<CandidateResult>,
}

/// Where the climb for one candidate starts: the analytic container
/// estimate converted to VMs, or one VM when the bound cannot meet the
/// deadline at all.
pub fn start_vms(class: &ApplicationClass, vm: &VmType) -> Result<u32, OptimizeError> {
    let summary = analytic::demand(profile_for(class, vm)?);
    let initial = analytic::initial_containers(&summary, class.h_users, class.think_time, class.deadline);
    Ok(if initial.feasible {
        analytic::vms_for_containers(initial.containers, vm.containers)
    } else {
        1
    })
}

/// Sizes `class` on each of its candidate VM types and keeps the cheapest
/// feasible one (ties: fewer VMs, then VM type id).
pub fn select_vm_type(
    evaluator: &dyn Evaluator,
    catalog: &[VmType],
    class: &ApplicationClass,
    config: &OptimizerConfig,
    progress: Option<&ProgressFn<'_>>,
) -> Result<ClassSelection, OptimizeError> {
    let candidates = class
        .profiles
        .keys()
        .map(|id| {
            catalog.iter().find(|vm| &vm.id == id).ok_or_else(|| {
                OptimizeError::Model(ModelError::UnknownVmType {
                    class_id: class.id.clone(),
                    vm_type: id.clone(),
                })
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let results = candidates
        .par_iter()
        .map(|vm| {
            let start = start_vms(class, vm)?;
            let outcome = hill_climb(evaluator, class, vm, start, config.max_hc_steps, progress)?;
            let split = analytic::pricing_split(outcome.record.vms, class.spot_fraction_cap, vm.sigma, vm.pi)?;
            Ok(CandidateResult {
                cost: split.hourly_cost(vm.sigma, vm.pi),
                outcome,
                split,
            })
        })
        .collect::<Result<Vec<_>, OptimizeError>>()?;

    let winner = results
        .iter()
        .filter(|r| r.is_feasible())
        .min_by(|a, b| {
            a.cost
                .cmp(&b.cost)
                .then(a.outcome.record.vms.cmp(&b.outcome.record.vms))
                .then_with(|| a.vm_type().cmp(b.vm_type()))
        });

    let solution = match winner {
        Some(best) => class_solution(class, best, true, Vec::new()),
        None => {
            let closest = results
                .iter()
                .min_by(|a, b| {
                    a.outcome
                        .record
                        .estimate
                        .mean_response
                        .total_cmp(&b.outcome.record.estimate.mean_response)
                        .then_with(|| a.vm_type().cmp(b.vm_type()))
                })
                .expect("validated classes have at least one candidate");
            let diagnostics = results
                .iter()
                .map(|r| {
                    let rec = &r.outcome.record;
                    format!(
                        "vm_type {}: best attempt {} VMs, predicted {:.2} ms (+/- {:.2}) against deadline {:.2} ms{}",
                        rec.vm_type,
                        rec.vms,
                        rec.estimate.mean_response,
                        rec.estimate.half_width,
                        class.deadline,
                        if r.outcome.converged {
                            ""
                        } else {
                            ", step budget exhausted"
                        }
                    )
                })
                .collect();
            class_solution(class, closest, false, diagnostics)
        }
    };
    Ok(ClassSelection {
        solution,
        candidates: results,
    })
}

fn class_solution(class: &ApplicationClass, r: &CandidateResult, feasible: bool, diagnostics: Vec<String>) -> ClassSolution {
    let rec = &r.outcome.record;
    ClassSolution {
        class_id: class.id.clone(),
        vm_type: rec.vm_type.clone(),
        vms: rec.vms,
        reserved: r.split.reserved,
        spot: r.split.spot,
        predicted_time: rec.estimate.mean_response,
        ci_half_width: rec.estimate.half_width,
        feasible,
        diagnostics,
    }
}

/// Sizes every class of a validated problem in parallel.
///
/// Infeasible classes stay in the result with `feasible = false`, making
/// the solution partial.
pub fn optimize(problem: &Problem, config: &OptimizerConfig, progress: Option<&ProgressFn<'_>>) -> Result<Solution, OptimizeError> {
    match config.evaluator {
        EvaluatorKind::Simulation => optimize_with(&SimulationEvaluator::new(config), problem, config, progress),
        EvaluatorKind::Analytic => optimize_with(
            &AnalyticEvaluator {
                rule: config.feasibility,
            },
            problem,
            config,
            progress,
        ),
    }
}

pub fn optimize_with(
    evaluator: &dyn Evaluator,
    problem: &Problem,
    config: &OptimizerConfig,
    progress: Option<&ProgressFn<'_>>,
) -> Result<Solution, OptimizeError> {
    let diagnostics = model::validate(problem);
    if model::has_errors(&diagnostics) {
        return Err(OptimizeError::Invalid(
            diagnostics.into_iter().filter(Diagnostic::is_error).collect(),
        ));
    }
    let per_class = problem
        .classes
        .par_iter()
        .map(|class| select_vm_type(evaluator, &problem.catalog, class, config, progress).map(|s| s.solution))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Solution::assemble(per_class, &problem.catalog)?)
}
