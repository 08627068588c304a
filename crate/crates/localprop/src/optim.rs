//! Parameter update rules: SGD, RMSprop and Adam with per-parameter state.
//!
//! Updates arrive in descent convention, so every rule moves parameters
//! against the stored delta:
//!
//! - SGD:     `theta <- theta - lambda * g`
//! - RMSprop: `s <- rho s + (1 - rho) g^2;  theta <- theta - lambda g / (sqrt(s) + eps)`
//! - Adam:    bias-corrected first/second moments, `theta <- theta - lambda m_hat / (sqrt(v_hat) + eps)`
//!
//! Feedback matrices are updated by the same rule whenever the algorithm
//! emits a nonzero feedback delta; frozen feedback (RFA/DFA) arrives as zero
//! deltas and is left untouched by construction.

use ndarray::{Array1, Array2};

use crate::algos::UpdateSet;
use crate::error::{Error, Result};
use crate::net::NetworkParams;

/// Which update rule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimRule {
    Sgd,
    RmsProp,
    Adam,
}

impl std::fmt::Display for OptimRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimRule::Sgd => f.write_str("sgd"),
            OptimRule::RmsProp => f.write_str("rmsprop"),
            OptimRule::Adam => f.write_str("adam"),
        }
    }
}

impl std::str::FromStr for OptimRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimRule::Sgd),
            "rmsprop" => Ok(OptimRule::RmsProp),
            "adam" => Ok(OptimRule::Adam),
            other => Err(format!("unknown optimizer '{other}'")),
        }
    }
}

/// RMSprop decay and epsilon.
pub const RMSPROP_DECAY: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-6;
/// Adam moment decays and epsilon.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Accumulator tensors shaped like the parameter set.
#[derive(Debug, Clone, PartialEq)]
struct Slots {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    feedback: Vec<Array2<f64>>,
}

impl Slots {
    fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            weights: params
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weight.raw_dim()))
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
            feedback: params
                .feedback
                .iter()
                .map(|e| Array2::zeros(e.raw_dim()))
                .collect(),
        }
    }
}

/// Optimizer state: rule, step size, and whatever accumulators the rule
/// needs. Owned by one training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub rule: OptimRule,
    pub step_size: f64,
    steps: u64,
    /// RMSprop squared-gradient EMA / Adam second moment.
    second: Option<Slots>,
    /// Adam first moment.
    first: Option<Slots>,
}

impl OptimState {
    pub fn new(rule: OptimRule, step_size: f64, params: &NetworkParams) -> Self {
        let (first, second) = match rule {
            OptimRule::Sgd => (None, None),
            OptimRule::RmsProp => (None, Some(Slots::zeros_like(params))),
            OptimRule::Adam => (
                Some(Slots::zeros_like(params)),
                Some(Slots::zeros_like(params)),
            ),
        };
        Self {
            rule,
            step_size,
            steps: 0,
            second,
            first,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }
}

fn sgd_tensor<D: ndarray::Dimension>(
    theta: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    lambda: f64,
) {
    theta.zip_mut_with(grad, |t, &g| *t -= lambda * g);
}

fn rmsprop_tensor<D: ndarray::Dimension>(
    theta: &mut ndarray::Array<f64, D>,
    acc: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    lambda: f64,
) {
    acc.zip_mut_with(grad, |s, &g| {
        *s = RMSPROP_DECAY * *s + (1.0 - RMSPROP_DECAY) * g * g
    });
    ndarray::Zip::from(theta)
        .and(&*acc)
        .and(grad)
        .for_each(|t, &s, &g| *t -= lambda * g / (s.sqrt() + RMSPROP_EPS));
}

fn adam_tensor<D: ndarray::Dimension>(
    theta: &mut ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    lambda: f64,
    step: u64,
) {
    let c1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(step as i32);
    m.zip_mut_with(grad, |m, &g| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g);
    v.zip_mut_with(grad, |v, &g| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g);
    ndarray::Zip::from(theta).and(&*m).and(&*v).for_each(|t, &m, &v| {
        let m_hat = m / c1;
        let v_hat = v / c2;
        *t -= lambda * m_hat / (v_hat.sqrt() + ADAM_EPS);
    });
}

/// Apply one update step, consuming and returning the parameters and state.
pub fn apply_update(
    mut state: OptimState,
    mut params: NetworkParams,
    updates: &UpdateSet,
) -> Result<(NetworkParams, OptimState)> {
    if updates.weights.len() != params.layers.len()
        || updates.feedback.len() != params.feedback.len()
    {
        return Err(Error::Dimension(
            "update set does not mirror the parameter set".into(),
        ));
    }
    state.steps += 1;
    let lambda = state.step_size;
    match state.rule {
        OptimRule::Sgd => {
            for (l, layer) in params.layers.iter_mut().enumerate() {
                sgd_tensor(&mut layer.weight, &updates.weights[l], lambda);
                sgd_tensor(&mut layer.bias, &updates.biases[l], lambda);
            }
            for (k, fb) in params.feedback.iter_mut().enumerate() {
                sgd_tensor(fb, &updates.feedback[k], lambda);
            }
        }
        OptimRule::RmsProp => {
            let second = state.second.as_mut().expect("rmsprop state");
            for (l, layer) in params.layers.iter_mut().enumerate() {
                rmsprop_tensor(
                    &mut layer.weight,
                    &mut second.weights[l],
                    &updates.weights[l],
                    lambda,
                );
                rmsprop_tensor(
                    &mut layer.bias,
                    &mut second.biases[l],
                    &updates.biases[l],
                    lambda,
                );
            }
            for (k, fb) in params.feedback.iter_mut().enumerate() {
                rmsprop_tensor(fb, &mut second.feedback[k], &updates.feedback[k], lambda);
            }
        }
        OptimRule::Adam => {
            let step = state.steps;
            let first = state.first.as_mut().expect("adam state");
            let second = state.second.as_mut().expect("adam state");
            for (l, layer) in params.layers.iter_mut().enumerate() {
                adam_tensor(
                    &mut layer.weight,
                    &mut first.weights[l],
                    &mut second.weights[l],
                    &updates.weights[l],
                    lambda,
                    step,
                );
                adam_tensor(
                    &mut layer.bias,
                    &mut first.biases[l],
                    &mut second.biases[l],
                    &updates.biases[l],
                    lambda,
                    step,
                );
            }
            for (k, fb) in params.feedback.iter_mut().enumerate() {
                adam_tensor(
                    fb,
                    &mut first.feedback[k],
                    &mut second.feedback[k],
                    &updates.feedback[k],
                    lambda,
                    step,
                );
            }
        }
    }
    params.assert_finite()?;
    Ok((params, state))
}
