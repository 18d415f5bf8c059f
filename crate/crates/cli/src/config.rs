//! The declarative run-configuration file (TOML): parameter space,
//! objective, engine options, and output paths. Parsing is strict —
//! unknown keys are rejected and every validation error names the field
//! it concerns.

use std::path::PathBuf;

use serde::Deserialize;

use spsa_tune::engine::{EngineOptions, FailureFallback, FailurePolicy};
use spsa_tune::mrsim::{self, JobProfile};
use spsa_tune::objective::{ObjectiveSpec, ValueSource};
use spsa_tune::space::{AlgoPoint, ParameterSpace, ParameterSpec};
use spsa_tune::spsa::{PerturbOptions, StepSchedule, TerminationLimits};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    seed: Option<u64>,
    space: SpaceConfig,
    objective: ObjectiveConfig,
    engine: EngineConfig,
    output: OutputConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceConfig {
    /// Name of a bundled space; currently `mrsim-v1` (the eleven classic
    /// tunables).
    builtin: Option<String>,
    /// Explicit parameter declarations. With `builtin`, same-named entries
    /// override the bundled spec (that is how bounds are customized).
    #[serde(default)]
    params: Vec<ParamConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamConfig {
    name: String,
    kind: String,
    min: Option<f64>,
    max: Option<f64>,
    default: Option<toml::Value>,
    categories: Option<Vec<String>>,
    resolution: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveConfig {
    kind: String,
    /// Optional multiplier applied to every measured value; use it to
    /// normalize large raw magnitudes (e.g. seconds in the hundreds) so
    /// the gain takes sensible steps.
    value_scale: Option<f64>,
    // synthetic
    function: Option<String>,
    noise_sigma: Option<f64>,
    shift: Option<Vec<f64>>,
    // process
    command_template: Option<String>,
    value_source: Option<String>,
    timeout_seconds: Option<f64>,
    reentrant_safe: Option<bool>,
    // mrsim
    profile: Option<JobProfile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EngineConfig {
    max_iterations: u64,
    replicates: Option<u32>,
    window: Option<usize>,
    grad_tol: Option<f64>,
    checkpoint_every: Option<u64>,
    strict_paper_mode: Option<bool>,
    c_lo: Option<f64>,
    c_hi: Option<f64>,
    initial_point: Option<Vec<f64>>,
    schedule: Option<ScheduleConfig>,
    failure_policy: Option<FailurePolicyConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleConfig {
    kind: String,
    alpha0: f64,
    decay_exponent: Option<f64>,
    offset: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FailurePolicyConfig {
    retries: Option<u32>,
    /// `penalty`, `fixed_penalty`, or `abort`.
    fallback: Option<String>,
    penalty_factor: Option<f64>,
    penalty_value: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputConfig {
    trace_path: PathBuf,
    checkpoint_path: Option<PathBuf>,
    summary_path: Option<PathBuf>,
}

/// Everything a command needs, fully validated.
#[derive(Debug)]
pub struct ResolvedConfig {
    pub space: ParameterSpace,
    pub objective_spec: ObjectiveSpec,
    pub value_scale: f64,
    pub options: EngineOptions,
    pub trace_path: PathBuf,
    pub summary_path: Option<PathBuf>,
}

pub fn load(path: &std::path::Path) -> Result<ResolvedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let config: RunConfig = toml::from_str(&text)?;
    resolve(config)
}

fn resolve(config: RunConfig) -> Result<ResolvedConfig, ConfigError> {
    let seed = config
        .seed
        .ok_or_else(|| field_err("seed", "is mandatory; wall-clock seeding is not supported"))?;

    let space = build_space(&config.space)?;
    let objective_spec = build_objective_spec(&config.objective, &space)?;
    let value_scale = match config.objective.value_scale {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(field_err(
                "objective.value_scale",
                format!("must be a positive real, got {s}"),
            ))
        }
        None => 1.0,
    };
    let options = build_options(&config, seed, &space)?;

    Ok(ResolvedConfig {
        space,
        objective_spec,
        value_scale,
        options,
        trace_path: config.output.trace_path,
        summary_path: config.output.summary_path,
    })
}

fn build_space(space: &SpaceConfig) -> Result<ParameterSpace, ConfigError> {
    let mut specs: Vec<ParameterSpec> = match space.builtin.as_deref() {
        Some("mrsim-v1") => mrsim::default_space().specs().to_vec(),
        Some(other) => {
            return Err(field_err(
                "space.builtin",
                format!("unknown builtin space `{other}`; known: mrsim-v1"),
            ))
        }
        None => Vec::new(),
    };
    for param in &space.params {
        let spec = build_param(param)?;
        match specs.iter().position(|s| s.name() == spec.name()) {
            Some(i) => specs[i] = spec,
            None => specs.push(spec),
        }
    }
    if specs.is_empty() {
        return Err(field_err(
            "space",
            "declare at least one parameter or name a builtin space",
        ));
    }
    ParameterSpace::new(specs).map_err(|e| field_err("space.params", e.to_string()))
}

fn build_param(param: &ParamConfig) -> Result<ParameterSpec, ConfigError> {
    let field = format!("space.params.{}", param.name);
    let num_default = |value: &Option<toml::Value>| -> Result<Option<f64>, ConfigError> {
        match value {
            None => Ok(None),
            Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(toml::Value::Float(v)) => Ok(Some(*v)),
            Some(other) => Err(field_err(
                &format!("{field}.default"),
                format!("expected a number, got {other}"),
            )),
        }
    };
    if param.resolution.is_some() && param.kind != "real" {
        return Err(field_err(
            &format!("{field}.resolution"),
            "only real parameters take a resolution; discrete kinds are fixed at 1",
        ));
    }
    let spec = match param.kind.as_str() {
        "real" => {
            let min = param
                .min
                .ok_or_else(|| field_err(&format!("{field}.min"), "required for real kind"))?;
            let max = param
                .max
                .ok_or_else(|| field_err(&format!("{field}.max"), "required for real kind"))?;
            let default = num_default(&param.default)?
                .ok_or_else(|| field_err(&format!("{field}.default"), "required"))?;
            let spec = ParameterSpec::real(&param.name, min, max, default)
                .map_err(|e| field_err(&field, e.to_string()))?;
            match param.resolution {
                Some(r) => spec
                    .with_resolution(r)
                    .map_err(|e| field_err(&format!("{field}.resolution"), e.to_string()))?,
                None => spec,
            }
        }
        "integer" => {
            let int = |v: Option<f64>, part: &str| -> Result<i64, ConfigError> {
                let v =
                    v.ok_or_else(|| field_err(&format!("{field}.{part}"), "required"))?;
                if v.fract() != 0.0 {
                    return Err(field_err(
                        &format!("{field}.{part}"),
                        format!("must be integral, got {v}"),
                    ));
                }
                Ok(v as i64)
            };
            ParameterSpec::integer(
                &param.name,
                int(param.min, "min")?,
                int(param.max, "max")?,
                int(num_default(&param.default)?, "default")?,
            )
            .map_err(|e| field_err(&field, e.to_string()))?
        }
        "boolean" => {
            let default = match &param.default {
                Some(toml::Value::Boolean(b)) => *b,
                Some(other) => {
                    return Err(field_err(
                        &format!("{field}.default"),
                        format!("expected true or false, got {other}"),
                    ))
                }
                None => return Err(field_err(&format!("{field}.default"), "required")),
            };
            ParameterSpec::boolean(&param.name, default)
                .map_err(|e| field_err(&field, e.to_string()))?
        }
        "categorical" => {
            let categories = param.categories.as_ref().ok_or_else(|| {
                field_err(&format!("{field}.categories"), "required for categorical kind")
            })?;
            let default = match &param.default {
                Some(toml::Value::String(s)) => s.clone(),
                Some(other) => {
                    return Err(field_err(
                        &format!("{field}.default"),
                        format!("expected a category name, got {other}"),
                    ))
                }
                None => return Err(field_err(&format!("{field}.default"), "required")),
            };
            let refs: Vec<&str> = categories.iter().map(String::as_str).collect();
            ParameterSpec::categorical(&param.name, &refs, &default)
                .map_err(|e| field_err(&field, e.to_string()))?
        }
        other => {
            return Err(field_err(
                &format!("{field}.kind"),
                format!("unknown kind `{other}`; expected real, integer, boolean, or categorical"),
            ))
        }
    };
    Ok(spec)
}

fn build_objective_spec(
    objective: &ObjectiveConfig,
    space: &ParameterSpace,
) -> Result<ObjectiveSpec, ConfigError> {
    match objective.kind.as_str() {
        "synthetic" => {
            let function = objective
                .function
                .clone()
                .ok_or_else(|| field_err("objective.function", "required for synthetic kind"))?;
            Ok(ObjectiveSpec::Synthetic {
                function,
                noise_sigma: objective.noise_sigma.unwrap_or(0.0),
                shift: objective.shift.clone(),
            })
        }
        "process" => {
            let command_template = objective.command_template.clone().ok_or_else(|| {
                field_err("objective.command_template", "required for process kind")
            })?;
            let value_source = match objective.value_source.as_deref() {
                Some("wall_clock_seconds") | None => ValueSource::WallClockSeconds,
                Some("stdout_last_line") => ValueSource::StdoutLastLine,
                Some(other) => {
                    return Err(field_err(
                        "objective.value_source",
                        format!(
                            "unknown source `{other}`; expected wall_clock_seconds or stdout_last_line"
                        ),
                    ))
                }
            };
            let timeout_seconds = objective.timeout_seconds.ok_or_else(|| {
                field_err("objective.timeout_seconds", "required for process kind")
            })?;
            // Surface template problems at config time, not mid-run.
            spsa_tune::objective::process::validate_template(&command_template, space)
                .map_err(|e| field_err("objective.command_template", e.to_string()))?;
            Ok(ObjectiveSpec::Process {
                command_template,
                value_source,
                timeout_seconds,
                reentrant_safe: objective.reentrant_safe.unwrap_or(false),
            })
        }
        "mrsim" => {
            let profile = objective.profile.clone().unwrap_or_else(JobProfile::reference);
            profile
                .validate()
                .map_err(|e| field_err("objective.profile", e.to_string()))?;
            Ok(ObjectiveSpec::MrSim { profile })
        }
        other => Err(field_err(
            "objective.kind",
            format!("unknown kind `{other}`; expected synthetic, process, or mrsim"),
        )),
    }
}

fn build_options(
    config: &RunConfig,
    seed: u64,
    space: &ParameterSpace,
) -> Result<EngineOptions, ConfigError> {
    let engine = &config.engine;
    let n = space.dim();
    let mut limits = TerminationLimits::for_dim(engine.max_iterations, n);
    if let Some(tol) = engine.grad_tol {
        limits.grad_tol = tol;
    }
    if let Some(window) = engine.window {
        limits.window = window;
    }

    let schedule = match &engine.schedule {
        None => StepSchedule::constant(0.01),
        Some(s) => match s.kind.as_str() {
            "constant" => StepSchedule::Constant { alpha0: s.alpha0 },
            "decaying" => StepSchedule::Decaying {
                alpha0: s.alpha0,
                decay_exponent: s.decay_exponent.unwrap_or(1.0),
                offset: s.offset.unwrap_or(0.0),
            },
            other => {
                return Err(field_err(
                    "engine.schedule.kind",
                    format!("unknown kind `{other}`; expected constant or decaying"),
                ))
            }
        },
    };

    let failure_policy = match &engine.failure_policy {
        None => FailurePolicy::default(),
        Some(fp) => {
            let fallback = match fp.fallback.as_deref() {
                Some("penalty") | None => FailureFallback::Penalty {
                    factor: fp.penalty_factor.unwrap_or(1.5),
                },
                Some("fixed_penalty") => FailureFallback::FixedPenalty {
                    value: fp.penalty_value.ok_or_else(|| {
                        field_err("engine.failure_policy.penalty_value", "required for fixed_penalty")
                    })?,
                },
                Some("abort") => FailureFallback::Abort,
                Some(other) => {
                    return Err(field_err(
                        "engine.failure_policy.fallback",
                        format!("unknown fallback `{other}`; expected penalty, fixed_penalty, or abort"),
                    ))
                }
            };
            FailurePolicy {
                retries: fp.retries.unwrap_or(2),
                fallback,
            }
        }
    };

    let mut perturb = PerturbOptions {
        strict_paper: engine.strict_paper_mode.unwrap_or(false),
        ..Default::default()
    };
    if let Some(c_lo) = engine.c_lo {
        perturb.c_lo = c_lo;
    }
    if let Some(c_hi) = engine.c_hi {
        perturb.c_hi = c_hi;
    }

    let initial_point = match &engine.initial_point {
        None => None,
        Some(coords) => {
            if coords.len() != n {
                return Err(field_err(
                    "engine.initial_point",
                    format!("has {} coordinates, space has {n}", coords.len()),
                ));
            }
            Some(AlgoPoint::new(coords.clone()))
        }
    };

    let options = EngineOptions {
        schedule,
        replicates: engine.replicates.unwrap_or(1),
        limits,
        seed,
        perturb,
        failure_policy,
        checkpoint_path: config.output.checkpoint_path.clone(),
        checkpoint_every: engine.checkpoint_every.unwrap_or(0),
        initial_point,
    };
    options
        .validate()
        .map_err(|message| field_err("engine", message))?;
    Ok(options)
}
