//! The SPSA optimizer primitives: scaled Bernoulli perturbations, the
//! two-measurement gradient estimate, gradient averaging, the projected
//! iterate update, and termination tests.
//!
//! A perturbation displaces every coordinate at once by `s_i * c_i` with
//! independent signs `s_i ∈ {-1, +1}`. One probe measurement and one base
//! measurement then yield a full gradient estimate
//! `(f(θ+δΔ) - f(θ)) / step_i`, so the cost per estimate is two
//! evaluations regardless of dimension. The per-dimension magnitude
//! `c_i = resolution_i / (max_i - min_i)` (in normalized units) guarantees
//! every discrete parameter moves by at least one raw unit per probe;
//! without clamping this rule gives a real-valued percent knob a
//! full-range flip, so magnitudes are clamped to `[c_lo, c_hi]` unless
//! strict mode is on.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngState;
use crate::space::{AlgoPoint, ParameterSpace, SpaceError};

#[derive(Debug, Error)]
pub enum SpsaError {
    #[error("objective measurement is not finite (base={f_base}, perturbed={f_perturbed})")]
    NonFiniteMeasurement { f_base: f64, f_perturbed: f64 },
    #[error("cannot average an empty list of gradient estimates")]
    EmptyEstimateList,
    #[error("gradient estimates have mismatched dimensions ({0} vs {1})")]
    EstimateDimensionMismatch(usize, usize),
    #[error("gradient has dimension {got}, state has {expected}")]
    GradientDimensionMismatch { expected: usize, got: usize },
    #[error("finite-difference probe leaves the unit cube at coordinate {0}")]
    ProbeOutOfBox(usize),
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Controls for perturbation magnitudes.
///
/// `strict_paper` drops the `[c_lo, c_hi]` clamp and uses the raw
/// `resolution / span` rule, which for integer parameters is exactly the
/// `1 / (max - min)` magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbOptions {
    pub c_lo: f64,
    pub c_hi: f64,
    pub strict_paper: bool,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        PerturbOptions {
            c_lo: 0.01,
            c_hi: 0.25,
            strict_paper: false,
        }
    }
}

/// A signed per-dimension displacement in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    signed_step: Vec<f64>,
    magnitudes: Vec<f64>,
}

impl Perturbation {
    pub fn signed_step(&self) -> &[f64] {
        &self.signed_step
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Build from explicit signs and magnitudes. Used by tests that
    /// enumerate all sign patterns.
    pub fn from_signs(signs: &[i8], magnitudes: &[f64]) -> Perturbation {
        assert_eq!(signs.len(), magnitudes.len());
        Perturbation {
            signed_step: signs
                .iter()
                .zip(magnitudes)
                .map(|(&s, &c)| f64::from(s) * c)
                .collect(),
            magnitudes: magnitudes.to_vec(),
        }
    }
}

/// Per-dimension perturbation magnitudes for a space, in normalized units.
pub fn perturbation_magnitudes(space: &ParameterSpace, opts: &PerturbOptions) -> Vec<f64> {
    space
        .specs()
        .iter()
        .map(|spec| {
            let raw = spec.resolution() / spec.span();
            if opts.strict_paper {
                raw
            } else {
                raw.clamp(opts.c_lo, opts.c_hi)
            }
        })
        .collect()
}

/// Draw one perturbation: independent ±1 signs, each with probability 1/2,
/// scaled by the per-dimension magnitudes.
pub fn gen_perturbation(
    space: &ParameterSpace,
    rng: &mut ChaCha8Rng,
    opts: &PerturbOptions,
) -> Perturbation {
    let magnitudes = perturbation_magnitudes(space, opts);
    let signed_step = magnitudes
        .iter()
        .map(|&c| if rng.gen::<bool>() { c } else { -c })
        .collect();
    Perturbation {
        signed_step,
        magnitudes,
    }
}

/// The gain sequence α_n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSchedule {
    /// α_n = alpha0 for every n.
    Constant { alpha0: f64 },
    /// α_n = alpha0 / (n + 1 + offset)^decay_exponent, with the exponent in
    /// (0.5, 1] so that Σα_n diverges while Σα_n² converges.
    Decaying {
        alpha0: f64,
        decay_exponent: f64,
        offset: f64,
    },
}

impl StepSchedule {
    pub fn constant(alpha0: f64) -> StepSchedule {
        StepSchedule::Constant { alpha0 }
    }

    pub fn alpha_at(&self, n: u64) -> f64 {
        match *self {
            StepSchedule::Constant { alpha0 } => alpha0,
            StepSchedule::Decaying {
                alpha0,
                decay_exponent,
                offset,
            } => alpha0 / ((n as f64) + 1.0 + offset).powf(decay_exponent),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            StepSchedule::Constant { alpha0 } => {
                if alpha0 > 0.0 && alpha0.is_finite() {
                    Ok(())
                } else {
                    Err(format!("alpha0 must be positive, got {alpha0}"))
                }
            }
            StepSchedule::Decaying {
                alpha0,
                decay_exponent,
                offset,
            } => {
                if !(alpha0 > 0.0 && alpha0.is_finite()) {
                    Err(format!("alpha0 must be positive, got {alpha0}"))
                } else if !(decay_exponent > 0.5 && decay_exponent <= 1.0) {
                    Err(format!(
                        "decay_exponent must lie in (0.5, 1], got {decay_exponent}"
                    ))
                } else if offset < 0.0 {
                    Err(format!("offset must be nonnegative, got {offset}"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// A simultaneous-perturbation gradient estimate, possibly averaged over
/// several replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub values: Vec<f64>,
    pub f_base: f64,
    pub f_perturbed: f64,
    pub replicates: u32,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One-sided estimate from a base and a perturbed measurement. Every
/// coordinate shares the numerator; only the divisor changes.
pub fn estimate_gradient(
    f_base: f64,
    f_perturbed: f64,
    pert: &Perturbation,
) -> Result<GradientEstimate, SpsaError> {
    if !f_base.is_finite() || !f_perturbed.is_finite() {
        return Err(SpsaError::NonFiniteMeasurement {
            f_base,
            f_perturbed,
        });
    }
    let diff = f_perturbed - f_base;
    Ok(GradientEstimate {
        values: pert.signed_step.iter().map(|&s| diff / s).collect(),
        f_base,
        f_perturbed,
        replicates: 1,
    })
}

/// Coordinate-wise arithmetic mean of independent estimates taken at the
/// same iterate; averaging reduces estimator variance under noise.
pub fn average_gradient(estimates: &[GradientEstimate]) -> Result<GradientEstimate, SpsaError> {
    let first = estimates.first().ok_or(SpsaError::EmptyEstimateList)?;
    let n = first.values.len();
    for e in estimates {
        if e.values.len() != n {
            return Err(SpsaError::EstimateDimensionMismatch(n, e.values.len()));
        }
    }
    let k = estimates.len() as f64;
    let mut values = vec![0.0; n];
    let mut f_base = 0.0;
    let mut f_perturbed = 0.0;
    for e in estimates {
        for (acc, v) in values.iter_mut().zip(&e.values) {
            *acc += v / k;
        }
        f_base += e.f_base / k;
        f_perturbed += e.f_perturbed / k;
    }
    Ok(GradientEstimate {
        values,
        f_base,
        f_perturbed,
        replicates: estimates.len() as u32,
    })
}

/// Full resumable optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerState {
    /// Completed iterations.
    pub iteration: u64,
    /// Current iterate in the unit cube.
    pub theta: AlgoPoint,
    /// Perturbation generator state.
    pub rng: RngState,
    /// Iterate with the lowest accepted base measurement so far.
    pub best_theta: AlgoPoint,
    /// Lowest accepted base measurement; `None` before the first one.
    pub best_value: Option<f64>,
    /// Highest accepted measurement; feeds the failure-penalty policy.
    pub worst_value: Option<f64>,
    /// Recent averaged-gradient norms, newest last, trimmed to the window.
    pub grad_norm_history: VecDeque<f64>,
    /// Total accepted objective measurements (2 per replicate).
    pub eval_count: u64,
}

impl TunerState {
    pub fn new(theta: AlgoPoint, rng: RngState) -> TunerState {
        TunerState {
            iteration: 0,
            best_theta: theta.clone(),
            theta,
            rng,
            best_value: None,
            worst_value: None,
            grad_norm_history: VecDeque::new(),
            eval_count: 0,
        }
    }
}

/// One projected update: `θ_{n+1} = Γ(θ_n - α · ĝ)`.
///
/// Also advances the iteration counter, pushes the gradient norm into the
/// history window, and refreshes the best-so-far record from the
/// estimate's base measurement (taken at the pre-update iterate).
pub fn spsa_step(
    state: &mut TunerState,
    grad: &GradientEstimate,
    alpha: f64,
    window: usize,
) -> Result<(), SpsaError> {
    if grad.values.len() != state.theta.dim() {
        return Err(SpsaError::GradientDimensionMismatch {
            expected: state.theta.dim(),
            got: grad.values.len(),
        });
    }
    if state.best_value.is_none_or(|b| grad.f_base < b) {
        state.best_value = Some(grad.f_base);
        state.best_theta = state.theta.clone();
    }
    let step: Vec<f64> = grad.values.iter().map(|g| -alpha * g).collect();
    state.theta = state.theta.offset(&step).project()?;
    state.iteration += 1;
    state.grad_norm_history.push_back(grad.norm());
    while state.grad_norm_history.len() > window {
        state.grad_norm_history.pop_front();
    }
    Ok(())
}

/// Iteration and convergence limits for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationLimits {
    pub max_iterations: u64,
    /// Converged when the spread of the last `window` gradient norms drops
    /// below this.
    pub grad_tol: f64,
    pub window: usize,
}

impl TerminationLimits {
    /// Default tolerance `1e-3 * sqrt(n)` and window 5.
    pub fn for_dim(max_iterations: u64, n: usize) -> TerminationLimits {
        TerminationLimits {
            max_iterations,
            grad_tol: 1e-3 * (n as f64).sqrt(),
            window: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    Converged,
    BudgetExhausted,
}

/// Stop when the iteration budget is spent, or when the gradient-norm
/// window is full and its spread is below tolerance. The budget check
/// takes precedence; convergence is never declared on a partial window.
pub fn should_terminate(state: &TunerState, limits: &TerminationLimits) -> Decision {
    if state.iteration >= limits.max_iterations {
        return Decision::BudgetExhausted;
    }
    if limits.window > 0 && state.grad_norm_history.len() >= limits.window {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in state.grad_norm_history.iter().rev().take(limits.window) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < limits.grad_tol {
            return Decision::Converged;
        }
    }
    Decision::Continue
}

/// Reference gradient by one-coordinate-at-a-time differences over the
/// unit cube: coordinate i is `(f(θ + h·e_i) - f(θ)) / h`. Costs exactly
/// n + 1 evaluations, which is what the simultaneous-perturbation estimate
/// avoids. Verification use only.
pub fn finite_difference_oracle<F>(mut f: F, theta: &[f64], h: f64) -> Result<Vec<f64>, SpsaError>
where
    F: FnMut(&[f64]) -> f64,
{
    if !h.is_finite() || h <= 0.0 {
        return Err(SpsaError::BadStep(h));
    }
    for (i, &t) in theta.iter().enumerate() {
        if !(0.0..=1.0).contains(&t) || t + h > 1.0 {
            return Err(SpsaError::ProbeOutOfBox(i));
        }
    }
    let f0 = f(theta);
    let mut grad = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        grad.push((f(&probe) - f0) / h);
        probe[i] = theta[i];
    }
    Ok(grad)
}

/// Every sign pattern for `n` coordinates; 2^n patterns. Test oracle for
/// the exact unbiasedness property on quadratics.
pub fn all_sign_patterns(n: usize) -> Vec<Vec<i8>> {
    (0..(1usize << n))
        .map(|bits| {
            (0..n)
                .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
                .collect()
        })
        .collect()
}
