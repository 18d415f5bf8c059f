//! Derivative-free configuration tuning by simultaneous perturbation.
//!
//! The optimizer estimates a full gradient from just two noisy objective
//! measurements per step — perturb every knob at once with random signs,
//! observe, divide — and descends under projection onto normalized
//! parameter boxes. That makes it practical to tune systems where one
//! measurement is a whole benchmark run and the knob count makes
//! coordinate-wise probing unaffordable.
//!
//! ```
//! use spsa_tune::engine::{EngineOptions, Tuner};
//! use spsa_tune::objective::synthetic::{synthetic_function, SyntheticObjective};
//! use spsa_tune::space::{ParameterSpace, ParameterSpec};
//! use spsa_tune::spsa::StepSchedule;
//!
//! let space = ParameterSpace::new(vec![
//!     ParameterSpec::integer("buffer_mb", 32, 2048, 100)?,
//!     ParameterSpec::real("spill_percent", 0.05, 0.95, 0.8)?,
//! ])?;
//! let objective = SyntheticObjective::new(
//!     synthetic_function("quadratic", space.dim(), None)?,
//!     0.0,
//!     &space,
//! );
//!
//! let mut options = EngineOptions::new(42, 150, space.dim());
//! options.schedule = StepSchedule::constant(0.05);
//! let mut tuner = Tuner::new(&space, options)?;
//! let mut trace = Vec::new();
//! tuner.run(&objective, &mut trace, None)?;
//!
//! assert!(tuner.state().best_value.unwrap() < 0.05);
//! println!("{:?}", tuner.best_config()?);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! Crate layout:
//!
//! * [`space`] — parameter declarations, the unit-cube/raw-unit mapping,
//!   and the projection operator.
//! * [`spsa`] — perturbations, gradient estimation and averaging, the
//!   projected update, termination.
//! * [`engine`] — the resumable tuning loop with retry/penalty handling
//!   for failing objectives.
//! * [`objective`] — the evaluation contract: builtin analytic functions,
//!   an external-process runner, and the simulator adapter.
//! * [`mrsim`] — an analytic MapReduce cost model for desk-scale tuning
//!   experiments.
//! * [`trace`] / [`checkpoint`] — line-delimited run traces and atomic,
//!   versioned state snapshots.

pub mod checkpoint;
pub mod engine;
pub mod mrsim;
pub mod objective;
pub mod rng;
pub mod space;
pub mod spsa;
pub mod trace;

pub use engine::{EngineOptions, RunReport, RunStatus, Tuner};
pub use space::{AlgoPoint, ParamKind, ParameterSpace, ParameterSpec, RawValue, SystemConfig};
pub use spsa::{Decision, GradientEstimate, Perturbation, StepSchedule, TunerState};
