//! The four subcommands: tune, resume, report, simulate.

use std::path::Path;
use std::sync::atomic::AtomicBool;

use serde::Serialize;

use spsa_tune::checkpoint::{self, CheckpointError};
use spsa_tune::engine::{EngineError, RunReport, RunStatus, Tuner};
use spsa_tune::mrsim::MrCostModel;
use spsa_tune::objective::{build_objective, Objective, ObjectiveSpec, Scaled};
use spsa_tune::space::{AlgoPoint, ParameterSpace, RawValue};
use spsa_tune::trace::{read_trace, sparkline, summarize, JsonlWriter, TraceError};

use crate::config::{self, ConfigError, ResolvedConfig};

/// Command failures split by exit class: 1 usage/config, 2 objective
/// abort, 3 I/O.
#[derive(Debug)]
pub enum CommandError {
    Config(String),
    Objective(String),
    Io(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 1,
            CommandError::Objective(_) => 2,
            CommandError::Io(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CommandError::Config(m) | CommandError::Objective(m) | CommandError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CommandError::Io(e.to_string()),
            _ => CommandError::Config(e.to_string()),
        }
    }
}

impl From<EngineError> for CommandError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::ObjectiveFailed { .. } | EngineError::NoPenaltyBaseline { .. } => {
                CommandError::Objective(e.to_string())
            }
            EngineError::Trace(_) | EngineError::Checkpoint(_) => CommandError::Io(e.to_string()),
            _ => CommandError::Config(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CommandError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::VersionMismatch { .. } => CommandError::Config(e.to_string()),
            _ => CommandError::Io(e.to_string()),
        }
    }
}

impl From<TraceError> for CommandError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io(_) => CommandError::Io(e.to_string()),
            _ => CommandError::Config(e.to_string()),
        }
    }
}

/// Global flag overrides applied on top of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub max_iterations: Option<u64>,
    pub quiet: bool,
}

fn apply_overrides(resolved: &mut ResolvedConfig, overrides: Overrides) {
    if let Some(seed) = overrides.seed {
        resolved.options.seed = seed;
    }
    if let Some(max) = overrides.max_iterations {
        resolved.options.limits.max_iterations = max;
    }
}

fn ensure_parent(path: &Path) -> Result<(), CommandError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CommandError::Io(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    Ok(())
}

fn build_scaled_objective(
    resolved: &ResolvedConfig,
) -> Result<Box<dyn Objective>, CommandError> {
    let inner = build_objective(&resolved.objective_spec, &resolved.space)
        .map_err(|e| CommandError::Config(e.to_string()))?;
    if resolved.value_scale == 1.0 {
        Ok(inner)
    } else {
        Ok(Box::new(Scaled::new(inner, resolved.value_scale)))
    }
}

#[derive(Serialize)]
struct ParamReport {
    name: String,
    value: RawValue,
    rendered: String,
}

#[derive(Serialize)]
struct PointReport {
    theta: Vec<f64>,
    config: Vec<ParamReport>,
}

#[derive(Serialize)]
struct Summary {
    status: RunStatus,
    iterations: u64,
    eval_count: u64,
    best_value: Option<f64>,
    space_fingerprint: String,
    #[serde(rename = "final")]
    final_point: PointReport,
    best: PointReport,
}

fn point_report(space: &ParameterSpace, point: &AlgoPoint) -> Result<PointReport, CommandError> {
    let config = space
        .map_to_system(point)
        .map_err(|e| CommandError::Config(e.to_string()))?;
    Ok(PointReport {
        theta: point.coords().to_vec(),
        config: space
            .specs()
            .iter()
            .enumerate()
            .map(|(i, spec)| ParamReport {
                name: spec.name().to_string(),
                value: config.get(i),
                rendered: spec.render(&config.get(i)),
            })
            .collect(),
    })
}

fn finish_run(
    resolved: &ResolvedConfig,
    tuner: &Tuner<'_>,
    report: RunReport,
    overrides: Overrides,
) -> Result<(), CommandError> {
    let state = tuner.state();
    let summary = Summary {
        status: report.status,
        iterations: state.iteration,
        eval_count: state.eval_count,
        best_value: state.best_value,
        space_fingerprint: resolved.space.fingerprint(),
        final_point: point_report(&resolved.space, &state.theta)?,
        best: point_report(&resolved.space, &state.best_theta)?,
    };
    if let Some(path) = &resolved.summary_path {
        ensure_parent(path)?;
        let body = serde_json::to_vec_pretty(&summary)
            .map_err(|e| CommandError::Io(e.to_string()))?;
        std::fs::write(path, body)
            .map_err(|e| CommandError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    if !overrides.quiet {
        println!(
            "{:?} after {} iterations ({} evaluations)",
            report.status, state.iteration, state.eval_count
        );
        if let Some(best) = state.best_value {
            println!("best observed value {best}");
        }
        println!("final configuration:");
        for p in &summary.final_point.config {
            println!("  {} = {}", p.name, p.rendered);
        }
    }
    Ok(())
}

pub fn cmd_tune(
    config_path: &Path,
    overrides: Overrides,
    stop: Option<&AtomicBool>,
) -> Result<(), CommandError> {
    let mut resolved = config::load(config_path)?;
    apply_overrides(&mut resolved, overrides);
    ensure_parent(&resolved.trace_path)?;
    if let Some(path) = &resolved.options.checkpoint_path {
        ensure_parent(path)?;
    }
    let objective = build_scaled_objective(&resolved)?;
    let mut tuner = Tuner::new(&resolved.space, resolved.options.clone())?;
    let mut sink = JsonlWriter::open(&resolved.trace_path, false)
        .map_err(|e| CommandError::Io(format!("cannot open trace: {e}")))?;
    let report = tuner.run(objective.as_ref(), &mut sink, stop)?;
    finish_run(&resolved, &tuner, report, overrides)
}

pub fn cmd_resume(
    checkpoint_path: &Path,
    config_path: &Path,
    overrides: Overrides,
    stop: Option<&AtomicBool>,
) -> Result<(), CommandError> {
    let loaded = checkpoint::load(checkpoint_path)?;
    let mut resolved = config::load(config_path)?;
    apply_overrides(&mut resolved, overrides);
    let config_fingerprint = resolved.space.fingerprint();
    if config_fingerprint != loaded.space_fingerprint {
        return Err(CommandError::Config(format!(
            "checkpoint was created for a different parameter space: checkpoint fingerprint {}, config fingerprint {}",
            loaded.space_fingerprint, config_fingerprint
        )));
    }
    ensure_parent(&resolved.trace_path)?;
    let objective = build_scaled_objective(&resolved)?;
    let mut tuner = Tuner::resume(&resolved.space, resolved.options.clone(), loaded.state)?;
    let mut sink = JsonlWriter::open(&resolved.trace_path, true)
        .map_err(|e| CommandError::Io(format!("cannot open trace: {e}")))?;
    let report = tuner.run(objective.as_ref(), &mut sink, stop)?;
    finish_run(&resolved, &tuner, report, overrides)
}

pub fn cmd_report(
    trace_path: &Path,
    data_out: Option<&Path>,
    overrides: Overrides,
) -> Result<(), CommandError> {
    let rows = read_trace(trace_path)?;
    let summary = summarize(&rows)?;
    println!("iterations    {}", summary.iterations);
    println!("evaluations   {}", summary.eval_count);
    println!("initial f     {}", summary.initial_f);
    println!("best f        {}", summary.best_f);
    println!("improvement   {:.1}%", summary.improvement_pct);
    if !overrides.quiet {
        let values: Vec<f64> = rows.iter().map(|r| r.f_base).collect();
        println!("f per iter    {}", sparkline(&values));
    }
    if let Some(path) = data_out {
        ensure_parent(path)?;
        let mut body = String::new();
        for r in &rows {
            body.push_str(&format!("{} {}\n", r.iteration, r.f_base));
        }
        std::fs::write(path, body)
            .map_err(|e| CommandError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn cmd_simulate(config_path: &Path, overrides: Overrides) -> Result<(), CommandError> {
    let mut resolved = config::load(config_path)?;
    apply_overrides(&mut resolved, overrides);
    let ObjectiveSpec::MrSim { profile } = &resolved.objective_spec else {
        return Err(CommandError::Config(
            "simulate requires objective.kind = \"mrsim\"".to_string(),
        ));
    };
    let model = MrCostModel::new(profile.clone(), resolved.space.clone())
        .map_err(|e| CommandError::Config(e.to_string()))?;
    let point = resolved
        .options
        .initial_point
        .clone()
        .unwrap_or_else(|| resolved.space.default_point());
    let config = resolved
        .space
        .map_to_system(&point)
        .map_err(|e| CommandError::Config(e.to_string()))?;
    let breakdown = model
        .simulate(&config)
        .map_err(|e| CommandError::Config(e.to_string()))?;
    if !overrides.quiet {
        println!("configuration:");
        for (i, spec) in resolved.space.specs().iter().enumerate() {
            println!("  {} = {}", spec.name(), spec.render(&config.get(i)));
        }
    }
    println!("{breakdown}");
    Ok(())
}
