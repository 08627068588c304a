//! Difference target propagation and its adaptive-noise variant.
//!
//! Feedback matrices act as decoders `g_l(v) = phi_{l-1}(E_l v)` learning the
//! inverse of the layer map `f_l(u) = phi_l(W_l u + c_l)`. Targets propagate
//! down through difference-corrected decodings; decoders train on
//! reconstructions of noise-corrupted activations. The sigma variant adapts
//! each pair's injection std from the local-loss recursion; plain DTP uses a
//! fixed std.
//!
//! The top weight layer trains on the output loss directly (its "local loss"
//! is the global objective); hidden layers differentiate their own gaussian
//! local loss only, so no gradient ever chains across layers.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    averaged_layer_update, output_delta, AlgoConfig, AlgoId, DtpTargetForm, TargetSet, UpdateSet,
};
use crate::error::{Error, Result};
use crate::net::{error_units, local_loss, ForwardTrace, LossFamily, NetworkParams};

/// One encode/decode cycle on a noise-corrupted activation, everything the
/// decoder update needs.
#[derive(Debug, Clone)]
pub struct NoisePass {
    /// `y_hat^{l-1} = z^{l-1} + eps`.
    pub corrupted: Array2<f64>,
    /// `z_hat^{l-1} = phi_{l-1}(E_l phi_l(W_l y_hat + c_l))`.
    pub reconstruction: Array2<f64>,
    /// Re-encoded activity `phi_l(W_l y_hat + c_l)`.
    pub reencoded: Array2<f64>,
    /// Decoder pre-activation `reencoded . E_l^T`.
    pub decoder_pre: Array2<f64>,
    pub sigma: f64,
}

/// Decode through pair `l`: `phi_{l-1}(v . E_l^T)`.
fn decode(params: &NetworkParams, l: usize, v: &Array2<f64>) -> Array2<f64> {
    let pre = v.dot(&params.feedback_for(l).t());
    params.layers[l - 1].activation.apply(&pre)
}

/// Top-down difference-corrected targets. The top target takes a small step
/// along the output-loss direction, `y_top = z_top - step * (z_top - y)`;
/// each pair below decodes twice (once from the activation, once from the
/// target above).
pub fn dtp_compute_targets(
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<TargetSet> {
    let top = params.num_layers() - 1;
    if labels.dim() != trace.output().dim() {
        return Err(Error::Dimension(format!(
            "labels shape {:?} vs output shape {:?}",
            labels.dim(),
            trace.output().dim()
        )));
    }
    let mut targets: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); top + 1];
    targets[top] = trace.output() - &((trace.output() - labels) * cfg.dtp_top_step);
    for l in (1..=top).rev() {
        let from_activation = decode(params, l, &trace.post[l]);
        let from_target = decode(params, l, &targets[l]);
        targets[l - 1] = match cfg.dtp_target_form {
            DtpTargetForm::CanonicalDifference => {
                &trace.post[l - 1] - &from_activation + &from_target
            }
            DtpTargetForm::PaperLiteral => &trace.post[l - 1] - &(from_activation + from_target),
        };
    }
    Ok(TargetSet { layers: targets })
}

/// Corrupt `z^{l-1}` with zero-mean gaussian noise of std `sigma` and run the
/// encode/decode cycle. Deterministic for a fixed seed; `sigma = 0` returns
/// the clean activation exactly.
pub fn dtp_noise_pass(
    params: &NetworkParams,
    trace: &ForwardTrace,
    l: usize,
    sigma: f64,
    seed: u64,
) -> Result<NoisePass> {
    assert!(l >= 1 && l < params.num_layers(), "pair index out of range");
    let clean = &trace.post[l - 1];
    let corrupted = if sigma == 0.0 {
        clean.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        clean.mapv(|v| v + normal.sample(&mut rng))
    };
    let layer = &params.layers[l];
    let mut encoded_pre = corrupted.dot(&layer.weight.t());
    encoded_pre += &layer.bias;
    let reencoded = layer.activation.apply(&encoded_pre);
    let decoder_pre = reencoded.dot(&params.feedback_for(l).t());
    let reconstruction = params.layers[l - 1].activation.apply(&decoder_pre);
    if reconstruction.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "noise-pass reconstruction",
            layer: l,
        });
    }
    Ok(NoisePass {
        corrupted,
        reconstruction,
        reencoded,
        decoder_pre,
        sigma,
    })
}

/// Per-pair injection stds from the local-loss recursion: the top pair gets
/// `alpha`, each pair below subtracts its own loss from the std above,
/// clamped at `floor` (the raw recursion can go negative).
///
/// `pair_losses` and the returned stds are ordered by pair index `1..L-1`
/// ascending (last entry = top pair).
pub fn adaptive_sigma(pair_losses: &[f64], alpha: f64, floor: f64) -> Vec<f64> {
    let n = pair_losses.len();
    let mut sigmas = vec![alpha; n];
    for k in (0..n.saturating_sub(1)).rev() {
        sigmas[k] = (sigmas[k + 1] - pair_losses[k]).max(floor);
    }
    sigmas
}

/// All per-batch DTP quantities: targets, pair losses, injection stds and
/// noise passes, plus the executed target-phase matmul tally.
#[derive(Debug, Clone)]
pub struct DtpBatch {
    pub targets: TargetSet,
    /// Flipped-argument local loss per pair (prediction = target from above,
    /// target = clean activation), ascending pair order.
    pub pair_losses: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub noise: Vec<NoisePass>,
    /// Two decodings plus one noise-pass encode/decode cycle per pair.
    pub target_matmuls: usize,
}

impl DtpBatch {
    pub fn compute(
        algo: AlgoId,
        params: &NetworkParams,
        trace: &ForwardTrace,
        labels: &Array2<f64>,
        cfg: &AlgoConfig,
        noise_seed: u64,
    ) -> Result<Self> {
        if !matches!(cfg.hidden_loss, LossFamily::Gaussian { .. }) {
            return Err(Error::Config(
                "DTP local losses are gaussian; configure hidden_loss accordingly".into(),
            ));
        }
        let top = params.num_layers() - 1;
        let targets = dtp_compute_targets(params, trace, labels, cfg)?;
        let mut pair_losses = Vec::with_capacity(top);
        for l in 1..=top {
            pair_losses.push(local_loss(
                cfg.hidden_loss,
                trace.post[l - 1].view(),
                targets.layers[l - 1].view(),
            )?);
        }
        let sigmas = match algo {
            AlgoId::DtpSigma => adaptive_sigma(&pair_losses, cfg.alpha, cfg.sigma_floor),
            _ => vec![cfg.dtp_fixed_sigma; top],
        };
        let noise = (1..=top)
            .map(|l| {
                let seed = crate::net::derive_seed(noise_seed, 0xd7b, l as u64);
                dtp_noise_pass(params, trace, l, sigmas[l - 1], seed)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            targets,
            pair_losses,
            sigmas,
            noise,
            target_matmuls: 4 * top,
        })
    }
}

/// Updates from the per-layer losses: the top layer descends the output
/// loss; hidden layer `l` differentiates its gaussian loss against its own
/// target; decoder `E_l` differentiates the reconstruction loss with the
/// arguments flipped (prediction = reconstruction, target = corrupted
/// activation). No gradient crosses a layer boundary.
pub fn dtp_calc_updates(
    params: &NetworkParams,
    trace: &ForwardTrace,
    batch: &DtpBatch,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<UpdateSet> {
    let top = params.num_layers() - 1;
    let mut updates = UpdateSet::zeros_like(params);

    let top_delta = output_delta(params, trace, labels, cfg)?;
    let (dw, dc) = averaged_layer_update(&top_delta, trace.input_to(top));
    updates.weights[top] = dw;
    updates.biases[top] = dc;

    for l in 0..top {
        let e = error_units(
            cfg.hidden_loss,
            batch.targets.layers[l].view(),
            trace.post[l].view(),
        )?;
        let delta = e * params.layers[l].activation.derivative(&trace.pre[l]);
        let (dw, dc) = averaged_layer_update(&delta, trace.input_to(l));
        updates.weights[l] = dw;
        updates.biases[l] = dc;
    }

    for l in 1..=top {
        let pass = &batch.noise[l - 1];
        let e = error_units(
            cfg.hidden_loss,
            pass.corrupted.view(),
            pass.reconstruction.view(),
        )?;
        let gated = e * params.layers[l - 1].activation.derivative(&pass.decoder_pre);
        let b = gated.nrows() as f64;
        updates.feedback[l - 1] = gated.t().dot(&pass.reencoded) / b;
    }

    updates.assert_finite()?;
    Ok(updates)
}
