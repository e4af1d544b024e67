use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Deserialize;

use mrsizer_core::io::{
    self, emit_solution, mean_abs_theta_percent, parse_problem, parse_validation_rows, run_sweep, run_validate,
    sweep_csv, validation_csv, InputError, ParseMode, SolutionDocument, SweepAxis, SweepError, SweepSpec,
};
use mrsizer_core::optimizer::{self, EvaluatorKind, OptimizeError, OptimizerConfig, ProgressEvent, ProgressFn};
use mrsizer_core::sim::{self, NetworkSpec, SimParams, Simulator};

const EXIT_PARTIAL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mrsizer", version, about = "Size cloud MapReduce clusters against per-class deadlines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvaluatorArg {
    Simulation,
    Analytic,
}

#[derive(Subcommand)]
enum Command {
    /// Find the cheapest VM type and count for every class.
    Optimize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Target relative CI half-width for each simulation.
        #[arg(long)]
        ci_target: Option<f64>,
        /// Reject unknown fields instead of warning about them.
        #[arg(long)]
        strict: bool,
        #[arg(long, value_enum, default_value = "simulation")]
        evaluator: EvaluatorArg,
    },
    /// Estimate the mean response time of one network.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        /// Write an event trace (TSV) of the first `--trace-jobs` completions.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trace_jobs: usize,
    },
    /// Re-optimize one class over a list of deadlines or user counts.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long)]
        class: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value = "simulation")]
        evaluator: EvaluatorArg,
    },
    /// Compare predictions with measured response times.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    fn internal(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            error: error.into(),
        }
    }
}

impl From<OptimizeError> for Failure {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Invalid(_) | OptimizeError::Model(_) | OptimizeError::MissingProfile { .. } => {
                Failure::input(e)
            }
            OptimizeError::Simulation { .. } | OptimizeError::ZeroVms => Failure::internal(e),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize {
            input,
            output,
            seed,
            ci_target,
            strict,
            evaluator,
        } => cmd_optimize(&input, &output, seed, ci_target, strict, evaluator),
        Command::Simulate {
            input,
            trace,
            trace_jobs,
        } => cmd_simulate(&input, trace.as_deref(), trace_jobs),
        Command::Sweep {
            input,
            axis,
            class,
            values,
            output,
            seed,
            evaluator,
        } => cmd_sweep(&input, axis, class, values, &output, seed, evaluator),
        Command::Validate { input, output } => cmd_validate(&input, &output),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::internal)
}

fn input_error(path: &Path, e: InputError) -> Failure {
    let located = match &e {
        InputError::Syntax { line, column, .. } => format!("{}:{line}:{column}", path.display()),
        InputError::Invalid(_) => path.display().to_string(),
    };
    Failure::input(anyhow::Error::new(e).context(located))
}

fn load_problem(path: &Path, strict: bool) -> Result<io::ParsedProblem, Failure> {
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    let parsed = parse_problem(&read(path)?, mode).map_err(|e| input_error(path, e))?;
    for w in &parsed.warnings {
        warn!("{w}");
    }
    Ok(parsed)
}

fn config(seed: u64, ci_target: Option<f64>, evaluator: EvaluatorArg) -> Result<OptimizerConfig, Failure> {
    let mut config = OptimizerConfig {
        evaluator: match evaluator {
            EvaluatorArg::Simulation => EvaluatorKind::Simulation,
            EvaluatorArg::Analytic => EvaluatorKind::Analytic,
        },
        ..OptimizerConfig::default()
    };
    config.sim_params.seed = seed;
    if let Some(target) = ci_target {
        if !(target > 0.0 && target < 1.0) {
            return Err(Failure::input(anyhow::anyhow!("--ci-target must lie in (0, 1), got {target}")));
        }
        config.sim_params.target_rel_half_width = target;
    }
    Ok(config)
}

fn log_progress(e: &ProgressEvent) {
    info!(
        "class {} on {}: {} VMs, {}, {} per hour",
        e.class_id,
        e.vm_type,
        e.vms,
        if e.feasible { "feasible" } else { "infeasible" },
        e.cost
    );
}

fn cmd_optimize(
    input: &Path,
    output: &Path,
    seed: u64,
    ci_target: Option<f64>,
    strict: bool,
    evaluator: EvaluatorArg,
) -> Result<u8, Failure> {
    let parsed = load_problem(input, strict)?;
    let config = config(seed, ci_target, evaluator)?;
    let solution = optimizer::optimize(&parsed.problem, &config, Some(&log_progress as &ProgressFn<'_>))?;
    let doc = SolutionDocument::new(&solution, seed, &parsed.currency);
    write(output, &emit_solution(&doc))?;
    for c in solution.per_class.iter().filter(|c| !c.feasible) {
        warn!("class {} has no feasible configuration", c.class_id);
        for d in &c.diagnostics {
            warn!("  {d}");
        }
    }
    info!("hourly cost {} {}", solution.hourly_cost, parsed.currency);
    Ok(if solution.is_complete() { 0 } else { EXIT_PARTIAL })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    network: NetworkSpec,
    #[serde(default)]
    params: SimParams,
}

fn cmd_simulate(input: &Path, trace: Option<&Path>, trace_jobs: usize) -> Result<u8, Failure> {
    let text = read(input)?;
    let file: NetworkFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", input.display()))
        .map_err(Failure::input)?;
    file.network.check().map_err(Failure::input)?;
    file.params.check().map_err(Failure::input)?;
    let estimate = sim::estimate_response_time(&file.network, &file.params).map_err(Failure::internal)?;
    if let Some(path) = trace {
        let mut sim = Simulator::new(&file.network, file.params.seed)
            .map_err(Failure::internal)?
            .with_trace();
        for _ in 0..trace_jobs {
            sim.next_completion(file.params.max_events).map_err(Failure::internal)?;
        }
        let mut buf = Vec::new();
        sim::write_trace_tsv(&sim.take_trace(), &mut buf).map_err(Failure::internal)?;
        write(path, &String::from_utf8(buf).expect("trace is ASCII"))?;
    }
    let text = serde_json::to_string_pretty(&estimate).map_err(Failure::internal)?;
    println!("{text}");
    if !estimate.converged {
        warn!("target precision not reached within the batch or event budget");
    }
    Ok(0)
}

fn cmd_sweep(
    input: &Path,
    axis: SweepAxis,
    class_id: String,
    values: Vec<f64>,
    output: &Path,
    seed: u64,
    evaluator: EvaluatorArg,
) -> Result<u8, Failure> {
    let parsed = load_problem(input, false)?;
    let config = config(seed, None, evaluator)?;
    let spec = SweepSpec {
        base_problem: parsed.problem,
        axis,
        class_id,
        values,
    };
    let rows = run_sweep(&spec, &config).map_err(|e| match e {
        SweepError::Optimize { source, .. } => Failure::from(source),
        other => Failure::input(other),
    })?;
    write(output, &sweep_csv(&rows))?;
    let infeasible = rows.iter().filter(|r| !r.feasible).count();
    if infeasible > 0 {
        warn!("{infeasible} of {} sweep points are infeasible", rows.len());
    }
    Ok(0)
}

fn cmd_validate(input: &Path, output: &Path) -> Result<u8, Failure> {
    let rows = parse_validation_rows(&read(input)?).map_err(|e| input_error(input, e))?;
    rows.params.check().map_err(Failure::input)?;
    let outcomes = run_validate(&rows.rows, &rows.params);
    write(output, &validation_csv(&outcomes))?;
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    match mean_abs_theta_percent(&outcomes) {
        Some(mean) => println!("mean |theta| = {mean:.2}% over {} rows", outcomes.len() - failed),
        None => println!("mean |theta| = n/a (no row succeeded)"),
    }
    Ok(if failed == 0 { 0 } else { EXIT_PARTIAL })
}
