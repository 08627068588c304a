//! Credit-assignment strategies.
//!
//! Each algorithm consumes `(params, batch, labels)` and produces an
//! [`UpdateSet`] plus the per-layer targets/errors it formed along the way.
//! Updates are stored in descent convention: the optimizer computes
//! `theta <- theta - lambda * delta`.

mod backprop;
mod dtp;
mod feedback;
mod lra;

pub use backprop::{backprop_updates, backprop_updates_from_trace};
pub use dtp::{
    adaptive_sigma, dtp_calc_updates, dtp_compute_targets, dtp_noise_pass, DtpBatch, NoisePass,
};
pub use feedback::{dfa_updates, rfa_updates};
pub use lra::{lra_calc_updates, lra_compute_targets};

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::net::{forward, Activation, ForwardTrace, LossFamily, NetworkParams};

/// Identifier for one of the six training strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoId {
    Backprop,
    LraE,
    Dtp,
    DtpSigma,
    Rfa,
    Dfa,
}

impl AlgoId {
    pub const ALL: [AlgoId; 6] = [
        AlgoId::Backprop,
        AlgoId::LraE,
        AlgoId::Dtp,
        AlgoId::DtpSigma,
        AlgoId::Rfa,
        AlgoId::Dfa,
    ];

    /// Whether the strategy trains its feedback matrices (LRA error weights,
    /// DTP decoders) or keeps them frozen (RFA/DFA) / absent (backprop).
    pub fn trains_feedback(&self) -> bool {
        matches!(self, AlgoId::LraE | AlgoId::Dtp | AlgoId::DtpSigma)
    }
}

impl std::fmt::Display for AlgoId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AlgoId::Backprop => "backprop",
            AlgoId::LraE => "lra-e",
            AlgoId::Dtp => "dtp",
            AlgoId::DtpSigma => "dtp-sigma",
            AlgoId::Rfa => "rfa",
            AlgoId::Dfa => "dfa",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AlgoId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "backprop" | "bp" => Ok(AlgoId::Backprop),
            "lra-e" | "lra_e" | "lrae" | "lra" => Ok(AlgoId::LraE),
            "dtp" => Ok(AlgoId::Dtp),
            "dtp-sigma" | "dtp_sigma" | "dtpsigma" => Ok(AlgoId::DtpSigma),
            "rfa" => Ok(AlgoId::Rfa),
            "dfa" => Ok(AlgoId::Dfa),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

/// Which LRA-E update rule to use: V1 keeps the pointwise activation
/// derivative, V2 drops it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LraVariant {
    V1,
    V2,
}

/// DTP target formula. `CanonicalDifference` is `z - g(z) + g(y)`;
/// `PaperLiteral` subtracts the sum of both decodings, `z - (g(z) + g(y))`,
/// exactly as printed in the source description (which loses the fixed-point
/// property), and stays selectable for fidelity experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtpTargetForm {
    CanonicalDifference,
    PaperLiteral,
}

/// Hyperparameters shared by the local-target algorithms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AlgoConfig {
    /// Modulation factor on the projected displacement (LRA-E).
    pub beta: f64,
    /// Error-weight decay factor, `delta E = -gamma (delta W)^T`; below 1 so
    /// error weights move slower than forward weights.
    pub gamma: f64,
    /// DTP-sigma top-pair noise standard deviation.
    pub alpha: f64,
    /// Local loss used for hidden-layer targets.
    pub hidden_loss: LossFamily,
    pub lra_variant: LraVariant,
    pub dtp_target_form: DtpTargetForm,
    /// Lower clamp for the adaptive noise recursion.
    pub sigma_floor: f64,
    /// Step size of the top-layer target correction `y_L = z - step * (z - y)`.
    pub dtp_top_step: f64,
    /// Fixed injection std used by plain DTP.
    pub dtp_fixed_sigma: f64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            gamma: 0.5,
            alpha: 0.01,
            hidden_loss: LossFamily::default_gaussian(),
            lra_variant: LraVariant::V2,
            dtp_target_form: DtpTargetForm::CanonicalDifference,
            sigma_floor: 1e-4,
            dtp_top_step: 0.1,
            dtp_fixed_sigma: 0.01,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.gamma) || self.gamma == 0.0 {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.sigma_floor < 0.0 {
            return Err(Error::Config("sigma_floor must be nonnegative".into()));
        }
        self.hidden_loss.validate()
    }
}

/// Per-layer error vectors, `errors[l]` shaped `[batch, dim(z_l)]`.
#[derive(Debug, Clone)]
pub struct ErrorUnits {
    pub layers: Vec<Array2<f64>>,
}

/// Per-layer target representations, `targets[l]` shaped `[batch, dim(z_l)]`.
/// The top entry holds the output-layer target.
#[derive(Debug, Clone)]
pub struct TargetSet {
    pub layers: Vec<Array2<f64>>,
}

/// Parameter deltas mirroring [`NetworkParams`]: weight and bias deltas for
/// every layer, feedback deltas for every layer above the first (zero
/// matrices for algorithms with fixed or absent feedback).
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSet {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub feedback: Vec<Array2<f64>>,
}

impl UpdateSet {
    pub fn zeros_like(params: &NetworkParams) -> Self {
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

    pub fn assert_finite(&self) -> Result<()> {
        for (l, w) in self.weights.iter().enumerate() {
            if w.iter().any(|v| !v.is_finite()) || self.biases[l].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "updates",
                    layer: l,
                });
            }
        }
        for (i, e) in self.feedback.iter().enumerate() {
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "feedback updates",
                    layer: i + 1,
                });
            }
        }
        Ok(())
    }
}

/// Everything one training step produces besides the updates themselves.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub updates: UpdateSet,
    pub targets: Option<TargetSet>,
    pub errors: Option<ErrorUnits>,
    /// Batch-mean local loss per layer (top entry is the output loss).
    pub local_losses: Vec<f64>,
    /// Batch-mean output loss.
    pub output_loss: f64,
    /// Executed weight-matrix applications per sample inside the
    /// target-generation phase (0 for algorithms that form no targets).
    pub target_matmuls: usize,
}

/// Loss family the output layer is scored with: categorical for a softmax
/// top, the configured hidden family otherwise (toy nets with identity or
/// tanh outputs).
pub fn output_loss_family(params: &NetworkParams, cfg: &AlgoConfig) -> LossFamily {
    if params.layers.last().expect("non-empty").activation == Activation::Softmax {
        LossFamily::Categorical
    } else {
        cfg.hidden_loss
    }
}

/// Exact gradient of the batch output loss with respect to the top
/// pre-activation. For softmax + categorical this is `z - y` (the
/// Jacobian-vector product with `e = -y/z`); for pointwise tops it is
/// `e ⊗ phi'(h)`.
pub fn output_delta(
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<Array2<f64>> {
    let top = params.num_layers() - 1;
    let z = trace.output();
    if params.layers[top].activation == Activation::Softmax {
        Ok(z - labels)
    } else {
        let family = output_loss_family(params, cfg);
        let e = crate::net::error_units(family, labels.view(), z.view())?;
        Ok(e * params.layers[top].activation.derivative(&trace.pre[top]))
    }
}

/// Batch-mean output loss for a trace.
pub fn output_loss(
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<f64> {
    crate::net::local_loss(
        output_loss_family(params, cfg),
        labels.view(),
        trace.output().view(),
    )
}

/// Batch-averaged weight delta `delta^T x / batch` plus the matching bias
/// delta (column means of the per-sample deltas).
pub(crate) fn averaged_layer_update(
    delta: &Array2<f64>,
    input: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let batch = delta.nrows() as f64;
    let dw = delta.t().dot(input) / batch;
    let dc = delta.mean_axis(Axis(0)).expect("non-empty batch");
    (dw, dc)
}

/// Run one credit-assignment step with the given strategy.
///
/// `noise_seed` only matters for the DTP family; everything else is a pure
/// function of `(params, x, labels, cfg)`.
pub fn step(
    algo: AlgoId,
    params: &NetworkParams,
    x: &Array2<f64>,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
    noise_seed: u64,
) -> Result<StepOutput> {
    cfg.validate()?;
    let trace = forward(params, x)?;
    step_from_trace(algo, params, &trace, labels, cfg, noise_seed)
}

/// Like [`step`] but reusing an existing forward trace (the angle diagnostic
/// evaluates two algorithms on the same trace).
pub fn step_from_trace(
    algo: AlgoId,
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
    noise_seed: u64,
) -> Result<StepOutput> {
    let out_loss = output_loss(params, trace, labels, cfg)?;
    match algo {
        AlgoId::Backprop => {
            let updates = backprop_updates_from_trace(params, trace, labels, cfg)?;
            Ok(StepOutput {
                updates,
                targets: None,
                errors: None,
                local_losses: vec![0.0; params.num_layers() - 1]
                    .into_iter()
                    .chain([out_loss])
                    .collect(),
                output_loss: out_loss,
                target_matmuls: 0,
            })
        }
        AlgoId::LraE => {
            let (targets, errors) = lra_compute_targets(params, trace, labels, cfg)?;
            let updates = lra_calc_updates(params, trace, &errors, labels, cfg)?;
            let local_losses = layer_local_losses(params, trace, &targets, cfg, out_loss)?;
            Ok(StepOutput {
                updates,
                targets: Some(targets),
                errors: Some(errors),
                local_losses,
                output_loss: out_loss,
                // one error-weight projection per hidden target
                target_matmuls: params.num_layers() - 1,
            })
        }
        AlgoId::Dtp | AlgoId::DtpSigma => {
            let batch = DtpBatch::compute(algo, params, trace, labels, cfg, noise_seed)?;
            let local_losses = layer_local_losses(params, trace, &batch.targets, cfg, out_loss)?;
            let updates = dtp_calc_updates(params, trace, &batch, labels, cfg)?;
            Ok(StepOutput {
                updates,
                target_matmuls: batch.target_matmuls,
                targets: Some(batch.targets),
                errors: None,
                local_losses,
                output_loss: out_loss,
            })
        }
        AlgoId::Rfa => {
            let updates = rfa_updates(params, trace, labels, cfg)?;
            Ok(StepOutput {
                updates,
                targets: None,
                errors: None,
                local_losses: vec![0.0; params.num_layers() - 1]
                    .into_iter()
                    .chain([out_loss])
                    .collect(),
                output_loss: out_loss,
                target_matmuls: 0,
            })
        }
        AlgoId::Dfa => {
            let updates = dfa_updates(params, trace, labels, cfg)?;
            Ok(StepOutput {
                updates,
                targets: None,
                errors: None,
                local_losses: vec![0.0; params.num_layers() - 1]
                    .into_iter()
                    .chain([out_loss])
                    .collect(),
                output_loss: out_loss,
                target_matmuls: 0,
            })
        }
    }
}

/// Batch-mean local loss per layer given a target set: hidden layers use the
/// configured hidden family, the top layer reports the output loss.
pub fn layer_local_losses(
    params: &NetworkParams,
    trace: &ForwardTrace,
    targets: &TargetSet,
    cfg: &AlgoConfig,
    out_loss: f64,
) -> Result<Vec<f64>> {
    let top = params.num_layers() - 1;
    let mut losses = Vec::with_capacity(params.num_layers());
    for l in 0..top {
        losses.push(crate::net::local_loss(
            cfg.hidden_loss,
            targets.layers[l].view(),
            trace.post[l].view(),
        )?);
    }
    losses.push(out_loss);
    Ok(losses)
}
