//! Analytic test functions on the unit cube, each paired with its exact
//! gradient so estimator properties can be checked against a closed form.
//!
//! Raw configs are normalized back into the cube before evaluation, so a
//! synthetic objective composes with any space; on discrete spaces the
//! floor map quantizes the effective input, which is exactly the setting
//! the perturbation-magnitude rule is designed for.

use rand_distr::{Distribution, Normal};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{Objective, ObjectiveError, ObjectiveSample};
use crate::space::{ParameterSpace, SystemConfig};

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// An analytic function together with its exact gradient.
#[derive(Clone)]
pub struct SyntheticFunction {
    name: String,
    eval: EvalFn,
    grad: GradFn,
}

impl SyntheticFunction {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn exact_gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }
}

impl std::fmt::Debug for SyntheticFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SyntheticFunction")
            .field("name", &self.name)
            .finish()
    }
}

/// Names in the builtin catalog.
pub fn builtin_synthetics() -> Vec<&'static str> {
    vec!["quadratic", "rosenbrock", "cross_quadratic", "cubic"]
}

/// Look up a builtin by name for dimension `n`. Only `quadratic` accepts a
/// shift vector (default shift: 0.3 in every coordinate).
pub fn synthetic_function(
    name: &str,
    n: usize,
    shift: Option<&[f64]>,
) -> Result<SyntheticFunction, ObjectiveError> {
    if shift.is_some() && name != "quadratic" {
        return Err(ObjectiveError::ShiftUnsupported {
            function: name.to_string(),
        });
    }
    match name {
        "quadratic" => {
            let a: Vec<f64> = match shift {
                Some(s) if s.len() != n => {
                    return Err(ObjectiveError::ShiftDimension {
                        expected: n,
                        got: s.len(),
                    })
                }
                Some(s) => s.to_vec(),
                None => vec![0.3; n],
            };
            Ok(shifted_quadratic(a))
        }
        "rosenbrock" => {
            if n < 2 {
                return Err(ObjectiveError::DimensionTooSmall {
                    function: name.to_string(),
                    min: 2,
                    got: n,
                });
            }
            Ok(rosenbrock_on_cube())
        }
        "cross_quadratic" => Ok(cross_quadratic(n)),
        "cubic" => Ok(cubic_probe()),
        other => Err(ObjectiveError::UnknownFunction(other.to_string())),
    }
}

/// `f(x) = Σ (x_i - a_i)²`, gradient `2(x - a)`.
pub fn shifted_quadratic(a: Vec<f64>) -> SyntheticFunction {
    let a2 = a.clone();
    SyntheticFunction {
        name: "quadratic".into(),
        eval: Arc::new(move |x| {
            x.iter()
                .zip(&a)
                .map(|(xi, ai)| (xi - ai) * (xi - ai))
                .sum()
        }),
        grad: Arc::new(move |x| x.iter().zip(&a2).map(|(xi, ai)| 2.0 * (xi - ai)).collect()),
    }
}

/// Classic Rosenbrock rescaled onto the cube through `y = 4x - 2`, so the
/// minimum at `y = 1` sits at `x = 0.75`, inside the open cube.
pub fn rosenbrock_on_cube() -> SyntheticFunction {
    let to_y = |x: &[f64]| -> Vec<f64> { x.iter().map(|v| 4.0 * v - 2.0).collect() };
    SyntheticFunction {
        name: "rosenbrock".into(),
        eval: Arc::new(move |x| {
            let y = to_y(x);
            (0..y.len() - 1)
                .map(|i| {
                    let t = y[i + 1] - y[i] * y[i];
                    100.0 * t * t + (1.0 - y[i]) * (1.0 - y[i])
                })
                .sum()
        }),
        grad: Arc::new(move |x| {
            let y = to_y(x);
            let n = y.len();
            let mut g = vec![0.0; n];
            for i in 0..n - 1 {
                let t = y[i + 1] - y[i] * y[i];
                g[i] += -400.0 * t * y[i] - 2.0 * (1.0 - y[i]);
                g[i + 1] += 200.0 * t;
            }
            // Chain rule for the cube rescaling: dy/dx = 4.
            g.iter_mut().for_each(|v| *v *= 4.0);
            g
        }),
    }
}

/// `f(x) = xᵀAx` with the fixed positive-definite matrix
/// `A_ij = 0.5^|i-j|`; gradient `2Ax`. The off-diagonal mass makes every
/// coordinate of a simultaneous-perturbation estimate pick up every other
/// coordinate's cross term, which is what the sign-pattern averaging test
/// must cancel.
pub fn cross_quadratic(n: usize) -> SyntheticFunction {
    let a = Arc::new(kms_matrix(n));
    let a2 = Arc::clone(&a);
    SyntheticFunction {
        name: "cross_quadratic".into(),
        eval: Arc::new(move |x| {
            let mut total = 0.0;
            for i in 0..x.len() {
                for j in 0..x.len() {
                    total += x[i] * a[i][j] * x[j];
                }
            }
            total
        }),
        grad: Arc::new(move |x| {
            (0..x.len())
                .map(|i| 2.0 * (0..x.len()).map(|j| a2[i][j] * x[j]).sum::<f64>())
                .collect()
        }),
    }
}

fn kms_matrix(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| 0.5f64.powi((i as i32 - j as i32).abs())).collect())
        .collect()
}

/// `f(x) = Σ x_i³ + ½ Σ_{i≠j} x_i x_j²`. Third-order terms give the
/// one-sided estimate a genuine O(c²) bias, which the bias-order tests
/// measure directly.
pub fn cubic_probe() -> SyntheticFunction {
    SyntheticFunction {
        name: "cubic".into(),
        eval: Arc::new(|x| {
            let cubes: f64 = x.iter().map(|v| v * v * v).sum();
            let mut cross = 0.0;
            for i in 0..x.len() {
                for j in 0..x.len() {
                    if i != j {
                        cross += x[i] * x[j] * x[j];
                    }
                }
            }
            cubes + 0.5 * cross
        }),
        grad: Arc::new(|x| {
            let sum: f64 = x.iter().sum();
            let sum_sq: f64 = x.iter().map(|v| v * v).sum();
            (0..x.len())
                .map(|k| {
                    3.0 * x[k] * x[k] + 0.5 * (sum_sq - x[k] * x[k])
                        + x[k] * (sum - x[k])
                })
                .collect()
        }),
    }
}

/// Objective adapter: normalizes the raw config into the cube, evaluates
/// the function, and adds Gaussian noise when `noise_sigma > 0`.
pub struct SyntheticObjective {
    function: SyntheticFunction,
    noise_sigma: f64,
    mins: Vec<f64>,
    spans: Vec<f64>,
}

impl SyntheticObjective {
    pub fn new(
        function: SyntheticFunction,
        noise_sigma: f64,
        space: &ParameterSpace,
    ) -> SyntheticObjective {
        SyntheticObjective {
            function,
            noise_sigma,
            mins: space.specs().iter().map(|s| s.min()).collect(),
            spans: space.specs().iter().map(|s| s.span()).collect(),
        }
    }

    pub fn function(&self) -> &SyntheticFunction {
        &self.function
    }

    fn normalized(&self, config: &SystemConfig) -> Vec<f64> {
        config
            .values()
            .iter()
            .zip(self.mins.iter().zip(&self.spans))
            .map(|(v, (min, span))| (v.as_f64() - min) / span)
            .collect()
    }
}

impl Objective for SyntheticObjective {
    fn evaluate(&self, config: &SystemConfig, rng: &mut ChaCha8Rng) -> ObjectiveSample {
        let t = self.normalized(config);
        let mut value = self.function.eval(&t);
        if self.noise_sigma > 0.0 {
            value += Normal::new(0.0, self.noise_sigma).unwrap().sample(rng);
        }
        ObjectiveSample::ok(config.clone(), value, 0.0)
    }

    fn reentrant_safe(&self) -> bool {
        true
    }
}
