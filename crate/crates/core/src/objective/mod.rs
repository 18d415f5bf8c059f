//! Uniform objective-evaluation contract with three adapters: analytic
//! synthetic functions, an external-process runner, and the MapReduce
//! cost simulator. The engine sees only [`Objective`]; lower values are
//! better everywhere (timing adapters measure seconds).

pub mod process;
pub mod synthetic;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mrsim::{JobProfile, MrCostModel, SimError};
use crate::space::{ParameterSpace, SpaceError, SystemConfig};

pub use process::{render_command, ProcessObjective, ValueSource};
pub use synthetic::{builtin_synthetics, synthetic_function, SyntheticFunction, SyntheticObjective};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("unknown synthetic function `{0}`; known: {known}", known = builtin_synthetics().join(", "))]
    UnknownFunction(String),
    #[error("function `{function}` does not take a shift vector")]
    ShiftUnsupported { function: String },
    #[error("shift has {got} entries but the space has {expected} dimensions")]
    ShiftDimension { expected: usize, got: usize },
    #[error("function `{function}` needs dimension at least {min}, space has {got}")]
    DimensionTooSmall {
        function: String,
        min: usize,
        got: usize,
    },
    #[error("template references unknown parameter `{0}`")]
    UnknownPlaceholder(String),
    #[error("template has an unterminated single-quoted segment")]
    UnbalancedQuote,
    #[error("template has an unclosed `{{` placeholder")]
    UnclosedPlaceholder,
    #[error("command template produced no arguments")]
    EmptyCommand,
    #[error("process objective: {0}")]
    Process(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Outcome class of one evaluation attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveStatus {
    Ok,
    Failed,
    Timeout,
}

/// One scalar measurement of the system under a configuration.
#[derive(Debug, Clone)]
pub struct ObjectiveSample {
    pub config: SystemConfig,
    /// Measured value, lower is better; finite iff `status` is `Ok`.
    pub value: f64,
    /// Wall-clock seconds spent on the evaluation itself.
    pub duration_seconds: f64,
    pub status: ObjectiveStatus,
    /// 1-based attempt number, filled in by the engine's retry loop.
    pub attempt: u32,
    pub diagnostic: Option<String>,
}

impl ObjectiveSample {
    pub fn ok(config: SystemConfig, value: f64, duration_seconds: f64) -> ObjectiveSample {
        ObjectiveSample {
            config,
            value,
            duration_seconds,
            status: ObjectiveStatus::Ok,
            attempt: 1,
            diagnostic: None,
        }
    }

    pub fn failed(
        config: SystemConfig,
        status: ObjectiveStatus,
        duration_seconds: f64,
        diagnostic: String,
    ) -> ObjectiveSample {
        ObjectiveSample {
            config,
            value: f64::NAN,
            duration_seconds,
            status,
            attempt: 1,
            diagnostic: Some(diagnostic),
        }
    }
}

/// Anything the engine can measure. Implementations must be deterministic
/// given `(config, rng stream)` unless the underlying system itself is
/// noisy.
pub trait Objective: Send + Sync {
    fn evaluate(&self, config: &SystemConfig, rng: &mut ChaCha8Rng) -> ObjectiveSample;

    /// Whether concurrent evaluations are allowed to overlap. Process
    /// objectives default to `false`: the target command may contend for
    /// machine resources and corrupt timing measurements.
    fn reentrant_safe(&self) -> bool {
        false
    }
}

/// Declarative objective description, as written in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectiveSpec {
    Synthetic {
        function: String,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        shift: Option<Vec<f64>>,
    },
    Process {
        command_template: String,
        value_source: ValueSource,
        timeout_seconds: f64,
        #[serde(default)]
        reentrant_safe: bool,
    },
    MrSim {
        profile: JobProfile,
    },
}

/// Instantiate the adapter described by a spec against a space.
pub fn build_objective(
    spec: &ObjectiveSpec,
    space: &ParameterSpace,
) -> Result<Box<dyn Objective>, ObjectiveError> {
    match spec {
        ObjectiveSpec::Synthetic {
            function,
            noise_sigma,
            shift,
        } => Ok(Box::new(SyntheticObjective::new(
            synthetic_function(function, space.dim(), shift.as_deref())?,
            *noise_sigma,
            space,
        ))),
        ObjectiveSpec::Process {
            command_template,
            value_source,
            timeout_seconds,
            reentrant_safe,
        } => Ok(Box::new(ProcessObjective::new(
            command_template,
            *value_source,
            *timeout_seconds,
            *reentrant_safe,
            space,
        )?)),
        ObjectiveSpec::MrSim { profile } => Ok(Box::new(MrSimObjective::new(
            MrCostModel::new(profile.clone(), space.clone())?,
        ))),
    }
}

/// Adapter exposing the analytic MapReduce cost model as an objective:
/// the value is the simulated total job time in seconds.
pub struct MrSimObjective {
    model: MrCostModel,
}

impl MrSimObjective {
    pub fn new(model: MrCostModel) -> MrSimObjective {
        MrSimObjective { model }
    }
}

impl Objective for MrSimObjective {
    fn evaluate(&self, config: &SystemConfig, _rng: &mut ChaCha8Rng) -> ObjectiveSample {
        let start = std::time::Instant::now();
        match self.model.simulate(config) {
            Ok(breakdown) => {
                ObjectiveSample::ok(config.clone(), breakdown.total, start.elapsed().as_secs_f64())
            }
            Err(e) => ObjectiveSample::failed(
                config.clone(),
                ObjectiveStatus::Failed,
                start.elapsed().as_secs_f64(),
                e.to_string(),
            ),
        }
    }

    fn reentrant_safe(&self) -> bool {
        true
    }
}

/// Multiplies measured values by a constant; useful to bring an objective
/// with large raw magnitudes (seconds in the hundreds) onto a scale where
/// the default gain of 0.01 takes sensible steps.
pub struct Scaled<O> {
    inner: O,
    scale: f64,
}

impl<O: Objective> Scaled<O> {
    pub fn new(inner: O, scale: f64) -> Scaled<O> {
        Scaled { inner, scale }
    }
}

impl<O: Objective> Objective for Scaled<O> {
    fn evaluate(&self, config: &SystemConfig, rng: &mut ChaCha8Rng) -> ObjectiveSample {
        let mut sample = self.inner.evaluate(config, rng);
        if sample.status == ObjectiveStatus::Ok {
            sample.value *= self.scale;
        }
        sample
    }

    fn reentrant_safe(&self) -> bool {
        self.inner.reentrant_safe()
    }
}

impl Objective for Box<dyn Objective> {
    fn evaluate(&self, config: &SystemConfig, rng: &mut ChaCha8Rng) -> ObjectiveSample {
        (**self).evaluate(config, rng)
    }

    fn reentrant_safe(&self) -> bool {
        (**self).reentrant_safe()
    }
}
