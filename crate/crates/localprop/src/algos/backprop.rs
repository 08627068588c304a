//! Plain backprop baseline: the exact gradient of the batch-mean output loss.

use ndarray::Array2;

use super::{averaged_layer_update, output_delta, AlgoConfig, UpdateSet};
use crate::error::Result;
use crate::net::{forward, ForwardTrace, NetworkParams};

/// Exact gradient of the batch-mean output loss. Feedback deltas are zero.
pub fn backprop_updates(
    params: &NetworkParams,
    x: &Array2<f64>,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<UpdateSet> {
    let trace = forward(params, x)?;
    backprop_updates_from_trace(params, &trace, labels, cfg)
}

pub fn backprop_updates_from_trace(
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<UpdateSet> {
    let top = params.num_layers() - 1;
    let mut updates = UpdateSet::zeros_like(params);
    let mut delta = output_delta(params, trace, labels, cfg)?;
    for l in (0..=top).rev() {
        let (dw, dc) = averaged_layer_update(&delta, trace.input_to(l));
        updates.weights[l] = dw;
        updates.biases[l] = dc;
        if l > 0 {
            let grad_z = delta.dot(&params.layers[l].weight);
            delta = grad_z * params.layers[l - 1].activation.derivative(&trace.pre[l - 1]);
        }
    }
    updates.assert_finite()?;
    Ok(updates)
}
