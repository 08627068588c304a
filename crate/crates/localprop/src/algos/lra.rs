//! Error-driven local representation alignment.
//!
//! Targets sweep top-down: the layer-`l` error units are projected through
//! that layer's error weights and subtracted (scaled by `beta`) from the
//! pre-activation below, then squashed back through the nonlinearity:
//!
//! ```text
//! y^{l-1} = phi_{l-1}( h^{l-1} - beta * E_l e_l )
//! e_{l-1} = d loss(y^{l-1}, z^{l-1}) / d z^{l-1}
//! ```
//!
//! Updates are local: `dW_l = delta_l z_{l-1}^T`, `dE_l = -gamma dW_l^T`,
//! where `delta_l` keeps (V1) or drops (V2) the activation derivative.

use ndarray::Array2;

use super::{
    averaged_layer_update, output_delta, output_loss_family, AlgoConfig, ErrorUnits, LraVariant,
    TargetSet, UpdateSet,
};
use crate::error::Result;
use crate::net::{error_units, ForwardTrace, NetworkParams};

/// Top-down target/error sweep.
pub fn lra_compute_targets(
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<(TargetSet, ErrorUnits)> {
    let num_layers = params.num_layers();
    let top = num_layers - 1;
    let mut targets: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); num_layers];
    let mut errors: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); num_layers];

    targets[top] = labels.clone();
    errors[top] = error_units(
        output_loss_family(params, cfg),
        labels.view(),
        trace.output().view(),
    )?;

    for l in (1..=top).rev() {
        let feedback = params.feedback_for(l);
        // displacement into the pre-activation below: E_l e_l
        let displacement = errors[l].dot(&feedback.t());
        let shifted = &trace.pre[l - 1] - &(displacement * cfg.beta);
        let target = params.layers[l - 1].activation.apply(&shifted);
        errors[l - 1] = error_units(cfg.hidden_loss, target.view(), trace.post[l - 1].view())?;
        targets[l - 1] = target;
    }

    Ok((TargetSet { layers: targets }, ErrorUnits { layers: errors }))
}

/// Local updates from the error sweep. The output layer uses the exact
/// output-loss delta (`z - y` under softmax + categorical); hidden layers use
/// `e ⊗ phi'(h)` (V1) or plain `e` (V2).
pub fn lra_calc_updates(
    params: &NetworkParams,
    trace: &ForwardTrace,
    errors: &ErrorUnits,
    labels: &Array2<f64>,
    cfg: &AlgoConfig,
) -> Result<UpdateSet> {
    let top = params.num_layers() - 1;
    let mut updates = UpdateSet::zeros_like(params);
    for l in 0..=top {
        let delta = if l == top {
            output_delta(params, trace, labels, cfg)?
        } else {
            match cfg.lra_variant {
                LraVariant::V1 => {
                    debug_assert!(params.layers[l].activation.is_pointwise());
                    &errors.layers[l] * &params.layers[l].activation.derivative(&trace.pre[l])
                }
                LraVariant::V2 => errors.layers[l].clone(),
            }
        };
        let (dw, dc) = averaged_layer_update(&delta, trace.input_to(l));
        if l > 0 {
            updates.feedback[l - 1] = dw.t().mapv(|v| -cfg.gamma * v);
        }
        updates.weights[l] = dw;
        updates.biases[l] = dc;
    }
    updates.assert_finite()?;
    Ok(updates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::output_loss;
    use crate::net::{forward, init_params, Activation, InitScheme, LayerSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_net(activations: [Activation; 3]) -> NetworkParams {
        let specs = vec![
            LayerSpec::new(2, 3, activations[0]),
            LayerSpec::new(3, 3, activations[1]),
            LayerSpec::new(3, 2, activations[2]),
        ];
        init_params(&specs, InitScheme::Gaussian { variance: 0.05 }, 17).unwrap()
    }

    #[test]
    fn zero_output_error_fixes_every_target() {
        // identity top with gaussian loss: feeding the exact output as label
        // zeroes e_L, so every target equals the forward post-activation.
        let params = toy_net([Activation::Tanh, Activation::Tanh, Activation::Identity]);
        let x = array![[0.25, -0.5]];
        let trace = forward(&params, &x).unwrap();
        let labels = trace.output().clone();
        let cfg = AlgoConfig::default();
        let (targets, errors) = lra_compute_targets(&params, &trace, &labels, &cfg).unwrap();
        for l in 0..3 {
            assert_eq!(targets.layers[l], trace.post[l], "target at layer {l}");
            assert!(errors.layers[l].iter().all(|&e| e == 0.0));
        }
        let updates = lra_calc_updates(&params, &trace, &errors, &labels, &cfg).unwrap();
        assert!(updates.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(updates.feedback.iter().all(|e| e.iter().all(|&v| v == 0.0)));
        assert_abs_diff_eq!(
            output_loss(&params, &trace, &labels, &cfg).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_beta_reproduces_forward_activations() {
        let params = toy_net([Activation::Tanh, Activation::Tanh, Activation::Softmax]);
        let x = array![[0.3, 0.7], [-0.2, 0.1]];
        let trace = forward(&params, &x).unwrap();
        let labels = array![[1.0, 0.0], [0.0, 1.0]];
        let cfg = AlgoConfig {
            beta: 0.0,
            ..AlgoConfig::default()
        };
        let (targets, errors) = lra_compute_targets(&params, &trace, &labels, &cfg).unwrap();
        for l in 0..2 {
            for (t, z) in targets.layers[l].iter().zip(trace.post[l].iter()) {
                assert_abs_diff_eq!(t, z, epsilon = 1e-15);
            }
            assert!(errors.layers[l].iter().all(|&e| e == 0.0));
        }
    }

    #[test]
    fn v1_equals_v2_under_identity_activations() {
        let params = toy_net([Activation::Identity, Activation::Identity, Activation::Identity]);
        let x = array![[0.4, -0.3]];
        let labels = array![[0.2, 0.9]];
        let trace = forward(&params, &x).unwrap();
        let mut cfg = AlgoConfig::default();
        let (_, errors) = lra_compute_targets(&params, &trace, &labels, &cfg).unwrap();
        cfg.lra_variant = LraVariant::V1;
        let v1 = lra_calc_updates(&params, &trace, &errors, &labels, &cfg).unwrap();
        cfg.lra_variant = LraVariant::V2;
        let v2 = lra_calc_updates(&params, &trace, &errors, &labels, &cfg).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn feedback_delta_is_negative_gamma_transpose_exactly() {
        let params = toy_net([Activation::Tanh, Activation::Tanh, Activation::Softmax]);
        let x = array![[0.9, -0.1], [0.3, 0.3]];
        let labels = array![[1.0, 0.0], [0.0, 1.0]];
        let trace = forward(&params, &x).unwrap();
        let cfg = AlgoConfig::default();
        let (_, errors) = lra_compute_targets(&params, &trace, &labels, &cfg).unwrap();
        let updates = lra_calc_updates(&params, &trace, &errors, &labels, &cfg).unwrap();
        for l in 1..3 {
            let expected = updates.weights[l].t().mapv(|v| -cfg.gamma * v);
            assert_eq!(updates.feedback[l - 1], expected, "Eq-8 identity at layer {l}");
        }
    }

    #[test]
    fn hidden_targets_stay_in_activation_range() {
        let params = toy_net([Activation::Tanh, Activation::Tanh, Activation::Softmax]);
        let x = array![[5.0, -8.0]];
        let labels = array![[1.0, 0.0]];
        let trace = forward(&params, &x).unwrap();
        let (targets, _) =
            lra_compute_targets(&params, &trace, &labels, &AlgoConfig::default()).unwrap();
        for l in 0..2 {
            assert!(targets.layers[l].iter().all(|&t| (-1.0..=1.0).contains(&t)));
        }
    }
}
