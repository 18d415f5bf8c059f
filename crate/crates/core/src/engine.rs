//! The tuning engine: drives the iterative loop — observe the base point,
//! draw a perturbation, observe the probe, estimate, average replicates,
//! take a projected step — while tracking best-so-far, emitting trace
//! rows, and checkpointing.
//!
//! Exactly `2 * replicates` objective evaluations happen per iteration.
//! Given the same seed, options, and a deterministic objective, the
//! trajectory is identical run to run, across checkpoint/resume splits,
//! and regardless of how evaluations would be scheduled: every evaluation
//! draws from its own generator stream keyed by the evaluation ordinal.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{self, Checkpoint, CheckpointError};
use crate::objective::{Objective, ObjectiveStatus};
use crate::rng::{eval_rng, rng_for, RngError, RngState, PERTURBATION_STREAM};
use crate::space::{AlgoPoint, ParameterSpace, SpaceError, SystemConfig};
use crate::spsa::{
    average_gradient, estimate_gradient, gen_perturbation, should_terminate, spsa_step, Decision,
    PerturbOptions, SpsaError, StepSchedule, TerminationLimits, TunerState,
};
use crate::trace::{IterationRecord, TraceSink};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("objective evaluation failed after {attempts} attempt(s): {diagnostic}")]
    ObjectiveFailed { attempts: u32, diagnostic: String },
    #[error("objective failed before any successful measurement; no baseline for a penalty ({diagnostic})")]
    NoPenaltyBaseline { diagnostic: String },
    #[error("invalid engine options: {0}")]
    InvalidOptions(String),
    #[error("initial point has dimension {got}, space has {expected}")]
    InitialPointDimension { expected: usize, got: usize },
    #[error("initial point must lie inside the unit cube")]
    InitialPointOutsideCube,
    #[error("trace sink: {0}")]
    Trace(#[source] std::io::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Spsa(#[from] SpsaError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Rng(#[from] RngError),
}

/// What to do when one evaluation keeps failing after retries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureFallback {
    /// Substitute the worst observed value scaled away from the optimum.
    Penalty { factor: f64 },
    /// Substitute a fixed value.
    FixedPenalty { value: f64 },
    /// Abort the run.
    Abort,
}

/// Retry-then-fallback policy for failed objective evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailurePolicy {
    pub retries: u32,
    pub fallback: FailureFallback,
}

impl Default for FailurePolicy {
    fn default() -> Self {
        FailurePolicy {
            retries: 2,
            fallback: FailureFallback::Penalty { factor: 1.5 },
        }
    }
}

impl FailurePolicy {
    /// Penalty substituted for an unrecoverable evaluation, given the worst
    /// value observed so far. Moves away from the optimum by
    /// `(factor - 1) * max(|worst|, 1)` so it stays a penalty even for
    /// objectives that go negative.
    fn penalty_from(&self, worst: f64) -> Option<f64> {
        match self.fallback {
            FailureFallback::Penalty { factor } => {
                Some(worst + (factor - 1.0) * worst.abs().max(1.0))
            }
            FailureFallback::FixedPenalty { value } => Some(value),
            FailureFallback::Abort => None,
        }
    }
}

/// Everything configurable about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub schedule: StepSchedule,
    pub replicates: u32,
    pub limits: TerminationLimits,
    pub seed: u64,
    pub perturb: PerturbOptions,
    pub failure_policy: FailurePolicy,
    /// Checkpoint file; written every `checkpoint_every` iterations and at
    /// the end of every run (including interrupted ones) when set.
    pub checkpoint_path: Option<PathBuf>,
    /// 0 means final-only checkpointing.
    pub checkpoint_every: u64,
    /// Starting iterate; the space's default point when absent.
    pub initial_point: Option<AlgoPoint>,
}

impl EngineOptions {
    /// Stock defaults: constant gain 0.01, one replicate, convergence
    /// tolerance scaled to the dimension.
    pub fn new(seed: u64, max_iterations: u64, n: usize) -> EngineOptions {
        EngineOptions {
            schedule: StepSchedule::constant(0.01),
            replicates: 1,
            limits: TerminationLimits::for_dim(max_iterations, n),
            seed,
            perturb: PerturbOptions::default(),
            failure_policy: FailurePolicy::default(),
            checkpoint_path: None,
            checkpoint_every: 0,
            initial_point: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.schedule.validate()?;
        if self.replicates == 0 {
            return Err("replicates must be at least 1".into());
        }
        if !self.limits.grad_tol.is_finite() || self.limits.grad_tol <= 0.0 {
            return Err(format!(
                "grad_tol must be positive, got {}",
                self.limits.grad_tol
            ));
        }
        if self.perturb.c_lo <= 0.0 || self.perturb.c_hi < self.perturb.c_lo {
            return Err(format!(
                "perturbation clamps must satisfy 0 < c_lo <= c_hi, got [{}, {}]",
                self.perturb.c_lo, self.perturb.c_hi
            ));
        }
        if self.failure_policy.retries > 250 {
            return Err("failure_policy.retries must be at most 250".into());
        }
        Ok(())
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
    Interrupted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunReport {
    pub status: RunStatus,
    /// Total completed iterations, including ones before a resume.
    pub iterations_completed: u64,
    /// Rows emitted by this call.
    pub rows_emitted: u64,
}

/// The optimizer bound to a space, with exclusive ownership of its state.
pub struct Tuner<'a> {
    space: &'a ParameterSpace,
    options: EngineOptions,
    state: TunerState,
}

impl<'a> Tuner<'a> {
    /// Fresh run starting from the configured initial point (default: the
    /// space's default configuration).
    pub fn new(space: &'a ParameterSpace, options: EngineOptions) -> Result<Tuner<'a>, EngineError> {
        options.validate().map_err(EngineError::InvalidOptions)?;
        let theta = match &options.initial_point {
            Some(p) => {
                if p.dim() != space.dim() {
                    return Err(EngineError::InitialPointDimension {
                        expected: space.dim(),
                        got: p.dim(),
                    });
                }
                if !p.in_unit_cube() {
                    return Err(EngineError::InitialPointOutsideCube);
                }
                p.clone()
            }
            None => space.default_point(),
        };
        let rng = rng_for(options.seed, PERTURBATION_STREAM);
        let state = TunerState::new(theta, RngState::capture(&rng));
        Ok(Tuner {
            space,
            options,
            state,
        })
    }

    /// Continue from checkpointed state. Options may differ (typically a
    /// larger budget); the space must be the one the state was created in.
    pub fn resume(
        space: &'a ParameterSpace,
        options: EngineOptions,
        state: TunerState,
    ) -> Result<Tuner<'a>, EngineError> {
        options.validate().map_err(EngineError::InvalidOptions)?;
        if state.theta.dim() != space.dim() {
            return Err(EngineError::InitialPointDimension {
                expected: space.dim(),
                got: state.theta.dim(),
            });
        }
        Ok(Tuner {
            space,
            options,
            state,
        })
    }

    pub fn state(&self) -> &TunerState {
        &self.state
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn space(&self) -> &ParameterSpace {
        self.space
    }

    pub fn decision(&self) -> Decision {
        should_terminate(&self.state, &self.options.limits)
    }

    /// Best configuration observed so far, in raw units.
    pub fn best_config(&self) -> Result<SystemConfig, EngineError> {
        Ok(self.space.map_to_system(&self.state.best_theta)?)
    }

    /// Final (current) configuration, in raw units.
    pub fn current_config(&self) -> Result<SystemConfig, EngineError> {
        Ok(self.space.map_to_system(&self.state.theta)?)
    }

    /// One accepted measurement, applying the retry/fallback policy.
    /// Counts exactly one evaluation slot regardless of retries.
    fn measure(
        &mut self,
        objective: &dyn Objective,
        config: &SystemConfig,
    ) -> Result<f64, EngineError> {
        let ordinal = self.state.eval_count;
        let policy = self.options.failure_policy;
        let mut last_diagnostic = String::new();
        for attempt in 1..=(1 + policy.retries) {
            // Each (ordinal, attempt) pair gets its own stream so retries
            // of a noisy objective are independent draws.
            let mut rng = eval_rng(self.options.seed, ordinal * 256 + u64::from(attempt - 1));
            let mut sample = objective.evaluate(config, &mut rng);
            sample.attempt = attempt;
            if sample.status == ObjectiveStatus::Ok && sample.value.is_finite() {
                self.state.eval_count += 1;
                let worst = self.state.worst_value.get_or_insert(sample.value);
                *worst = worst.max(sample.value);
                return Ok(sample.value);
            }
            last_diagnostic = sample
                .diagnostic
                .clone()
                .unwrap_or_else(|| format!("status {:?}", sample.status));
            log::warn!(
                "evaluation {} attempt {} failed: {}",
                ordinal,
                attempt,
                last_diagnostic
            );
        }
        match policy.fallback {
            FailureFallback::Abort => Err(EngineError::ObjectiveFailed {
                attempts: 1 + policy.retries,
                diagnostic: last_diagnostic,
            }),
            _ => {
                let worst = match self.state.worst_value {
                    Some(w) => w,
                    None => match policy.fallback {
                        FailureFallback::FixedPenalty { .. } => 0.0,
                        _ => {
                            return Err(EngineError::NoPenaltyBaseline {
                                diagnostic: last_diagnostic,
                            })
                        }
                    },
                };
                let penalty = policy
                    .penalty_from(worst)
                    .expect("fallback is a penalty variant");
                log::warn!(
                    "evaluation {} exhausted retries; substituting penalty {}",
                    ordinal,
                    penalty
                );
                self.state.eval_count += 1;
                Ok(penalty)
            }
        }
    }

    /// Run one full iteration: 2K measurements, K estimates, one averaged
    /// projected step. Returns the trace row for the iteration.
    pub fn step(&mut self, objective: &dyn Objective) -> Result<IterationRecord, EngineError> {
        let started = Instant::now();
        let n = self.state.iteration;
        let alpha = self.options.schedule.alpha_at(n);
        let theta = self.state.theta.clone();
        let base_config = self.space.map_to_system(&theta)?;
        let mut pert_rng = self.state.rng.restore()?;

        let replicates = self.options.replicates as usize;
        let mut estimates = Vec::with_capacity(replicates);
        let mut f_perturbed = Vec::with_capacity(replicates);
        for _ in 0..replicates {
            let f_base = self.measure(objective, &base_config)?;
            let pert = gen_perturbation(self.space, &mut pert_rng, &self.options.perturb);
            // The probe is projected into the cube before mapping, but the
            // estimate divides by the unprojected step so it stays
            // well-defined at the boundary.
            let probe_point = theta.offset(pert.signed_step()).project()?;
            let probe_config = self.space.map_to_system(&probe_point)?;
            let f_probe = self.measure(objective, &probe_config)?;
            f_perturbed.push(f_probe);
            estimates.push(estimate_gradient(f_base, f_probe, &pert)?);
        }
        let grad = average_gradient(&estimates)?;
        self.state.rng = RngState::capture(&pert_rng);
        spsa_step(&mut self.state, &grad, alpha, self.options.limits.window)?;

        Ok(IterationRecord {
            iteration: n,
            theta: theta.coords().to_vec(),
            system_config: base_config,
            f_base: grad.f_base,
            f_perturbed,
            grad_norm: grad.norm(),
            alpha,
            eval_count_cumulative: self.state.eval_count,
            best_value_so_far: self.state.best_value.unwrap_or(grad.f_base),
            wall_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn write_checkpoint(&self) -> Result<(), EngineError> {
        let Some(path) = &self.options.checkpoint_path else {
            return Ok(());
        };
        let doc = Checkpoint::new(self.space.clone(), self.options.clone(), self.state.clone());
        if let Err(primary) = checkpoint::save(path, &doc) {
            // State is intact in memory; try one emergency dump next to the
            // configured path before surfacing the failure.
            let emergency = path.with_extension("emergency");
            if let Err(second) = checkpoint::save(&emergency, &doc) {
                log::error!("emergency checkpoint also failed: {second}");
            } else {
                log::error!(
                    "checkpoint failed ({primary}); emergency copy at {}",
                    emergency.display()
                );
            }
            return Err(primary.into());
        }
        Ok(())
    }

    /// Drive the loop until convergence, budget exhaustion, or an external
    /// stop request. Emits one row per iteration through `sink`.
    pub fn run(
        &mut self,
        objective: &dyn Objective,
        sink: &mut dyn TraceSink,
        stop: Option<&AtomicBool>,
    ) -> Result<RunReport, EngineError> {
        let mut rows_emitted = 0u64;
        let status = loop {
            match self.decision() {
                Decision::Converged => break RunStatus::Converged,
                Decision::BudgetExhausted => break RunStatus::BudgetExhausted,
                Decision::Continue => {}
            }
            if stop.is_some_and(|s| s.load(Ordering::SeqCst)) {
                break RunStatus::Interrupted;
            }
            let row = self.step(objective)?;
            sink.record(&row).map_err(EngineError::Trace)?;
            rows_emitted += 1;
            if self.options.checkpoint_every > 0
                && self.state.iteration.is_multiple_of(self.options.checkpoint_every)
            {
                self.write_checkpoint()?;
            }
        };
        self.write_checkpoint()?;
        Ok(RunReport {
            status,
            iterations_completed: self.state.iteration,
            rows_emitted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::synthetic::{synthetic_function, SyntheticObjective};
    use crate::objective::{ObjectiveSample, ObjectiveStatus};
    use crate::space::ParameterSpec;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::AtomicU64;

    fn unit_space(n: usize) -> ParameterSpace {
        ParameterSpace::new(
            (0..n)
                .map(|i| ParameterSpec::real(&format!("x{i}"), 0.0, 1.0, 0.9).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn quadratic_objective(space: &ParameterSpace) -> SyntheticObjective {
        SyntheticObjective::new(
            synthetic_function("quadratic", space.dim(), None).unwrap(),
            0.0,
            space,
        )
    }

    /// Counts evaluations and can fail on request.
    struct FlakyObjective {
        calls: AtomicU64,
        fail_through_call: u64,
        value: f64,
    }

    impl Objective for FlakyObjective {
        fn evaluate(&self, config: &SystemConfig, _rng: &mut ChaCha8Rng) -> ObjectiveSample {
            let call = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
            if call <= self.fail_through_call {
                ObjectiveSample::failed(
                    config.clone(),
                    ObjectiveStatus::Failed,
                    0.0,
                    "synthetic failure".into(),
                )
            } else {
                ObjectiveSample::ok(config.clone(), self.value, 0.0)
            }
        }

        fn reentrant_safe(&self) -> bool {
            true
        }
    }

    #[test]
    fn zero_budget_returns_initial_state_without_evaluations() {
        let space = unit_space(2);
        let objective = quadratic_objective(&space);
        let mut tuner = Tuner::new(&space, EngineOptions::new(1, 0, 2)).unwrap();
        let mut rows = Vec::new();
        let report = tuner.run(&objective, &mut rows, None).unwrap();
        assert_eq!(report.status, RunStatus::BudgetExhausted);
        assert_eq!(tuner.state().eval_count, 0);
        assert!(rows.is_empty());
        assert_eq!(tuner.state().theta, space.default_point());
    }

    #[test]
    fn eval_count_is_twice_replicates_times_iterations() {
        let space = unit_space(3);
        let objective = quadratic_objective(&space);
        let mut options = EngineOptions::new(5, 12, 3);
        options.replicates = 4;
        options.limits.grad_tol = 1e-12; // never converge
        let mut tuner = Tuner::new(&space, options).unwrap();
        let mut rows = Vec::new();
        tuner.run(&objective, &mut rows, None).unwrap();
        assert_eq!(tuner.state().eval_count, 2 * 4 * 12);
        assert_eq!(rows.len(), 12);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.iteration, i as u64);
            assert_eq!(row.eval_count_cumulative, 2 * 4 * (i as u64 + 1));
        }
    }

    #[test]
    fn identical_seeds_produce_identical_traces() {
        let space = unit_space(4);
        let objective = quadratic_objective(&space);
        let run = || {
            let mut tuner = Tuner::new(&space, EngineOptions::new(99, 30, 4)).unwrap();
            let mut rows = Vec::new();
            tuner.run(&objective, &mut rows, None).unwrap();
            rows.iter_mut().for_each(|r| r.wall_ms = 0);
            rows
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn different_seeds_diverge() {
        let space = unit_space(4);
        let objective = quadratic_objective(&space);
        let run = |seed| {
            let mut tuner = Tuner::new(&space, EngineOptions::new(seed, 10, 4)).unwrap();
            let mut rows = Vec::new();
            tuner.run(&objective, &mut rows, None).unwrap();
            rows.last().unwrap().theta.clone()
        };
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn noiseless_quadratic_converges() {
        // Pilot oracle for the engine: 200 iterations at gain 0.05 on a
        // 2-dimensional noiseless quadratic lands below 1e-3.
        let space = ParameterSpace::new(vec![
            ParameterSpec::real("x0", 0.0, 1.0, 0.9).unwrap(),
            ParameterSpec::real("x1", 0.0, 1.0, 0.9).unwrap(),
        ])
        .unwrap();
        let objective = quadratic_objective(&space);
        let mut options = EngineOptions::new(3, 200, 2);
        options.schedule = StepSchedule::constant(0.05);
        options.limits.grad_tol = 1e-12;
        let mut tuner = Tuner::new(&space, options).unwrap();
        let mut rows = Vec::new();
        tuner.run(&objective, &mut rows, None).unwrap();
        let f = synthetic_function("quadratic", 2, None).unwrap();
        let final_value = f.eval(tuner.state().theta.coords());
        assert!(final_value < 1e-3, "final value {final_value}");
    }

    #[test]
    fn failed_evaluations_are_retried_then_succeed() {
        let space = unit_space(1);
        let objective = FlakyObjective {
            calls: AtomicU64::new(0),
            fail_through_call: 1,
            value: 2.0,
        };
        let mut tuner = Tuner::new(&space, EngineOptions::new(1, 1, 1)).unwrap();
        let mut rows = Vec::new();
        tuner.run(&objective, &mut rows, None).unwrap();
        // First call failed, retry succeeded; 2 accepted measurements from
        // 3 launches.
        assert_eq!(objective.calls.load(Ordering::SeqCst), 3);
        assert_eq!(tuner.state().eval_count, 2);
    }

    #[test]
    fn exhausted_retries_substitute_penalty_from_worst() {
        let space = unit_space(1);
        // Succeeds once (worst = 2.0), then fails forever.
        struct OnceThenFail {
            calls: AtomicU64,
        }
        impl Objective for OnceThenFail {
            fn evaluate(&self, config: &SystemConfig, _rng: &mut ChaCha8Rng) -> ObjectiveSample {
                let call = self.calls.fetch_add(1, Ordering::SeqCst);
                if call == 0 {
                    ObjectiveSample::ok(config.clone(), 2.0, 0.0)
                } else {
                    ObjectiveSample::failed(
                        config.clone(),
                        ObjectiveStatus::Failed,
                        0.0,
                        "down".into(),
                    )
                }
            }
        }
        let objective = OnceThenFail {
            calls: AtomicU64::new(0),
        };
        let mut tuner = Tuner::new(&space, EngineOptions::new(1, 1, 1)).unwrap();
        let row = tuner.step(&objective).unwrap();
        // Probe measurement fell back to the penalty 2.0 * 1.5.
        assert_eq!(row.f_perturbed, vec![3.0]);
        assert_eq!(tuner.state().eval_count, 2);
    }

    #[test]
    fn abort_policy_surfaces_objective_failure() {
        let space = unit_space(1);
        let objective = FlakyObjective {
            calls: AtomicU64::new(0),
            fail_through_call: u64::MAX,
            value: 0.0,
        };
        let mut options = EngineOptions::new(1, 5, 1);
        options.failure_policy = FailurePolicy {
            retries: 1,
            fallback: FailureFallback::Abort,
        };
        let mut tuner = Tuner::new(&space, options).unwrap();
        let mut rows = Vec::new();
        let err = tuner.run(&objective, &mut rows, None).unwrap_err();
        assert!(matches!(err, EngineError::ObjectiveFailed { attempts: 2, .. }));
    }

    #[test]
    fn failure_before_any_success_cannot_form_penalty() {
        let space = unit_space(1);
        let objective = FlakyObjective {
            calls: AtomicU64::new(0),
            fail_through_call: u64::MAX,
            value: 0.0,
        };
        let mut tuner = Tuner::new(&space, EngineOptions::new(1, 5, 1)).unwrap();
        let err = tuner.step(&objective).unwrap_err();
        assert!(matches!(err, EngineError::NoPenaltyBaseline { .. }));
    }

    #[test]
    fn stop_flag_interrupts_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ckpt");
        let space = unit_space(2);
        let objective = quadratic_objective(&space);
        let mut options = EngineOptions::new(1, 1000, 2);
        options.checkpoint_path = Some(path.clone());
        let stop = AtomicBool::new(true);
        let mut tuner = Tuner::new(&space, options).unwrap();
        let mut rows = Vec::new();
        let report = tuner.run(&objective, &mut rows, Some(&stop)).unwrap();
        assert_eq!(report.status, RunStatus::Interrupted);
        assert!(path.exists());
    }

    #[test]
    fn split_run_equals_unsplit_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ckpt");
        let space = unit_space(3);
        let objective = quadratic_objective(&space);

        let mut full_options = EngineOptions::new(77, 20, 3);
        full_options.limits.grad_tol = 1e-12;
        let mut full = Tuner::new(&space, full_options.clone()).unwrap();
        let mut full_rows: Vec<IterationRecord> = Vec::new();
        full.run(&objective, &mut full_rows, None).unwrap();

        let mut half_options = full_options.clone();
        half_options.limits.max_iterations = 10;
        half_options.checkpoint_path = Some(path.clone());
        let mut first = Tuner::new(&space, half_options).unwrap();
        let mut split_rows: Vec<IterationRecord> = Vec::new();
        first.run(&objective, &mut split_rows, None).unwrap();

        let loaded = checkpoint::load(&path).unwrap();
        assert_eq!(loaded.state, *first.state());
        let mut resumed_options = full_options.clone();
        resumed_options.checkpoint_path = None;
        let mut second = Tuner::resume(&space, resumed_options, loaded.state).unwrap();
        second.run(&objective, &mut split_rows, None).unwrap();

        let strip = |mut rows: Vec<IterationRecord>| {
            rows.iter_mut().for_each(|r| r.wall_ms = 0);
            rows
        };
        assert_eq!(strip(full_rows), strip(split_rows));
        assert_eq!(full.state(), second.state());
    }

    #[test]
    fn resume_with_spent_budget_does_nothing() {
        let space = unit_space(2);
        let objective = quadratic_objective(&space);
        let mut options = EngineOptions::new(5, 8, 2);
        options.limits.grad_tol = 1e-12;
        let mut tuner = Tuner::new(&space, options.clone()).unwrap();
        let mut rows = Vec::new();
        tuner.run(&objective, &mut rows, None).unwrap();
        let state = tuner.state().clone();
        let mut resumed = Tuner::resume(&space, options, state.clone()).unwrap();
        let mut new_rows = Vec::new();
        let report = resumed.run(&objective, &mut new_rows, None).unwrap();
        assert_eq!(report.status, RunStatus::BudgetExhausted);
        assert_eq!(report.rows_emitted, 0);
        assert_eq!(*resumed.state(), state);
    }

    #[test]
    fn convergence_stops_before_budget() {
        // Constant objective: every gradient estimate is exactly zero, so
        // the window fills with zeros and the spread test fires.
        struct Flat;
        impl Objective for Flat {
            fn evaluate(&self, config: &SystemConfig, _rng: &mut ChaCha8Rng) -> ObjectiveSample {
                ObjectiveSample::ok(config.clone(), 1.0, 0.0)
            }
        }
        let space = unit_space(2);
        let mut tuner = Tuner::new(&space, EngineOptions::new(1, 1000, 2)).unwrap();
        let mut rows = Vec::new();
        let report = tuner.run(&Flat, &mut rows, None).unwrap();
        assert_eq!(report.status, RunStatus::Converged);
        assert_eq!(report.rows_emitted, 5); // exactly the window size
    }

    #[test]
    fn checkpoint_write_failure_aborts_with_diagnostic() {
        let space = unit_space(2);
        let objective = quadratic_objective(&space);
        let mut options = EngineOptions::new(1, 5, 2);
        options.checkpoint_path = Some(PathBuf::from("/proc/1/rootfs/run.ckpt"));
        options.checkpoint_every = 1;
        let mut tuner = Tuner::new(&space, options).unwrap();
        let mut rows = Vec::new();
        let err = tuner.run(&objective, &mut rows, None).unwrap_err();
        assert!(matches!(err, EngineError::Checkpoint(_)));
        // The failed write does not lose the in-memory state or the rows
        // already flushed.
        assert_eq!(tuner.state().iteration, 1);
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn rejects_initial_point_outside_cube() {
        let space = unit_space(2);
        let mut options = EngineOptions::new(1, 10, 2);
        options.initial_point = Some(AlgoPoint::new(vec![0.5, 1.5]));
        assert!(matches!(
            Tuner::new(&space, options),
            Err(EngineError::InitialPointOutsideCube)
        ));
    }

    #[test]
    fn periodic_checkpoints_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ckpt");
        let space = unit_space(2);
        let objective = quadratic_objective(&space);
        let mut options = EngineOptions::new(1, 7, 2);
        options.limits.grad_tol = 1e-12;
        options.checkpoint_path = Some(path.clone());
        options.checkpoint_every = 3;
        let mut tuner = Tuner::new(&space, options).unwrap();
        let mut rows = Vec::new();
        tuner.run(&objective, &mut rows, None).unwrap();
        let doc = checkpoint::load(&path).unwrap();
        assert_eq!(doc.state.iteration, 7);
    }
}
