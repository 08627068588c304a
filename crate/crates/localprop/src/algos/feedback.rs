//! Feedback alignment: fixed random feedback in place of weight transposes.
//!
//! RFA runs the backprop recursion with each backward operator `W_l^T`
//! replaced by a frozen random matrix of the same shape. DFA skips the
//! recursion entirely and projects the output delta straight onto every
//! hidden layer through frozen direct-feedback matrices. Neither ever
//! updates its feedback.

use ndarray::Array2;

use super::{averaged_layer_update, output_delta, AlgoConfig, UpdateSet};
use crate::error::{Error, Result};
use crate::net::{FeedbackTopology, ForwardTrace, NetworkParams};

/// Backprop with `W_l^T` replaced by the frozen feedback matrix `B_l` in the
/// backward sweep. Feedback deltas are zero.
pub fn rfa_updates(
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<UpdateSet> {
    if params.topology != FeedbackTopology::Layerwise {
        return Err(Error::Config(
            "RFA needs layerwise feedback (transpose-shaped)".into(),
        ));
    }
    let top = params.num_layers() - 1;
    let mut updates = UpdateSet::zeros_like(params);
    let mut delta = output_delta(params, trace, labels, cfg)?;
    for l in (0..=top).rev() {
        let (dw, dc) = averaged_layer_update(&delta, trace.input_to(l));
        updates.weights[l] = dw;
        updates.biases[l] = dc;
        if l > 0 {
            let grad_z = delta.dot(&params.feedback_for(l).t());
            delta = grad_z * params.layers[l - 1].activation.derivative(&trace.pre[l - 1]);
        }
    }
    updates.assert_finite()?;
    Ok(updates)
}

/// Direct feedback alignment: hidden delta `(e_out . D_l^T) ⊗ phi'(h_l)`,
/// output layer exactly as backprop.
pub fn dfa_updates(
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<UpdateSet> {
    if params.topology != FeedbackTopology::Direct {
        return Err(Error::Config(
            "DFA needs direct feedback (hidden-to-output shaped)".into(),
        ));
    }
    let top = params.num_layers() - 1;
    let mut updates = UpdateSet::zeros_like(params);
    let out_delta = output_delta(params, trace, labels, cfg)?;
    let (dw, dc) = averaged_layer_update(&out_delta, trace.input_to(top));
    updates.weights[top] = dw;
    updates.biases[top] = dc;
    for l in 0..top {
        let projected = out_delta.dot(&params.direct_feedback_for(l).t());
        let delta = projected * params.layers[l].activation.derivative(&trace.pre[l]);
        let (dw, dc) = averaged_layer_update(&delta, trace.input_to(l));
        updates.weights[l] = dw;
        updates.biases[l] = dc;
    }
    updates.assert_finite()?;
    Ok(updates)
}
