//! Network parameterization and deterministic forward propagation.
//!
//! A network is a stack of dense layers `h^l = z^{l-1} W_l^T + c_l`,
//! `z^l = phi_l(h^l)`, with an optional set of feedback matrices attached to
//! every layer above the first. Depending on the training algorithm those
//! matrices act as error weights (LRA-E), decoder weights (DTP), or frozen
//! random feedback (RFA/DFA).
//!
//! Layers are indexed `0..L`. Batches are row-major: one sample per row.

mod init;
mod loss;

pub use init::{derive_seed, init_params, init_params_with_topology, InitScheme};
pub use loss::{error_units, error_units_rows, local_loss, local_loss_rows, LossFamily};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Probability floor applied to softmax outputs before they feed logs or
/// divisions; `e = -y/z` is singular at `z -> 0`.
pub const PROB_FLOOR: f64 = 1e-8;

/// Elementwise (or row-wise, for softmax) nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Softmax,
    Identity,
}

impl Activation {
    /// Apply the activation to a batch of pre-activations.
    pub fn apply(&self, pre: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Tanh => pre.mapv(f64::tanh),
            Activation::Identity => pre.clone(),
            Activation::Softmax => {
                let mut out = pre.clone();
                for mut row in out.rows_mut() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum: f64 = row.sum();
                    row.mapv_inplace(|v| (v / sum).max(PROB_FLOOR));
                }
                out
            }
        }
    }

    /// Elementwise derivative evaluated at the pre-activation.
    ///
    /// Softmax has no pointwise derivative; callers that hit this case are
    /// expected to use the exact `z - y` output delta instead (see the algos
    /// module), so this panics to flag a programming error.
    pub fn derivative(&self, pre: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Tanh => pre.mapv(|v| {
                let t = v.tanh();
                1.0 - t * t
            }),
            Activation::Identity => Array2::ones(pre.raw_dim()),
            Activation::Softmax => {
                panic!("softmax has no pointwise derivative; use the z - y output delta")
            }
        }
    }

    pub fn is_pointwise(&self) -> bool {
        !matches!(self, Activation::Softmax)
    }
}

/// Shape and nonlinearity of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }
}

/// Validate a layer stack: dims at least 1, adjacent shapes consistent,
/// softmax only at the top.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for (l, spec) in specs.iter().enumerate() {
        if spec.input_dim == 0 || spec.output_dim == 0 {
            return Err(Error::Config(format!("layer {l} has a zero dimension")));
        }
        if spec.activation == Activation::Softmax && l + 1 != specs.len() {
            return Err(Error::Config(format!(
                "softmax is only permitted at the topmost layer, found at layer {l}"
            )));
        }
        if l > 0 && specs[l - 1].output_dim != spec.input_dim {
            return Err(Error::Dimension(format!(
                "layer {} output dim {} does not match layer {l} input dim {}",
                l - 1,
                specs[l - 1].output_dim,
                spec.input_dim
            )));
        }
    }
    Ok(())
}

/// How feedback matrices are shaped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackTopology {
    /// One matrix per layer `l >= 1`, shaped `[input_dim(l), output_dim(l)]`
    /// (the transpose shape of `W_l`). Used by LRA-E, DTP and RFA.
    Layerwise,
    /// One matrix per hidden layer `l <= L-2`, shaped
    /// `[output_dim(l), output_dim(L-1)]`: projects the output error straight
    /// onto that layer. Used by DFA.
    Direct,
}

/// Weights and bias of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `[output_dim, input_dim]`, row-major.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Full parameter set: forward layers plus the feedback stack.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
    /// `feedback[l - 1]` belongs to layer `l` (layerwise topology) or to
    /// hidden layer `l - 1` (direct topology). The first forward layer never
    /// owns feedback.
    pub feedback: Vec<Array2<f64>>,
    pub topology: FeedbackTopology,
}

impl NetworkParams {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.nrows()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec::new(l.weight.ncols(), l.weight.nrows(), l.activation))
            .collect()
    }

    /// Feedback matrix attached to layer `l` (layerwise topology only).
    pub fn feedback_for(&self, l: usize) -> &Array2<f64> {
        assert!(l >= 1, "layer 0 has no feedback weights");
        &self.feedback[l - 1]
    }

    /// Direct-feedback matrix for hidden layer `l` (direct topology only).
    pub fn direct_feedback_for(&self, l: usize) -> &Array2<f64> {
        assert!(l < self.num_layers() - 1, "output layer has no direct feedback");
        &self.feedback[l]
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.weight.iter().any(|v| !v.is_finite())
                || layer.bias.iter().any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite {
                    context: "parameters",
                    layer: l,
                });
            }
        }
        for (i, fb) in self.feedback.iter().enumerate() {
            if fb.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "feedback weights",
                    layer: i + 1,
                });
            }
        }
        Ok(())
    }
}

/// Pre- and post-activations of every layer for one mini-batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Array2<f64>,
    /// `pre[l]`: `[batch, output_dim(l)]`.
    pub pre: Vec<Array2<f64>>,
    /// `post[l] = phi_l(pre[l])`.
    pub post: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn num_layers(&self) -> usize {
        self.pre.len()
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    /// Post-activation feeding layer `l`: the input batch for `l = 0`.
    pub fn input_to(&self, l: usize) -> &Array2<f64> {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }

    /// Network output (top post-activation).
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("non-empty trace")
    }
}

/// Deterministic forward pass: pure function of `(params, x)`.
pub fn forward(params: &NetworkParams, x: &Array2<f64>) -> Result<ForwardTrace> {
    if x.ncols() != params.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} columns, layer 0 expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    let mut pre = Vec::with_capacity(params.num_layers());
    let mut post = Vec::with_capacity(params.num_layers());
    let mut current = x.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut h = current.dot(&layer.weight.t());
        h += &layer.bias;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "pre-activation",
                layer: l,
            });
        }
        let z = layer.activation.apply(&h);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "post-activation",
                layer: l,
            });
        }
        current = z.clone();
        pre.push(h);
        post.push(z);
    }
    Ok(ForwardTrace {
        input: x.clone(),
        pre,
        post,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn identity_net(dim: usize) -> NetworkParams {
        NetworkParams {
            layers: vec![LayerParams {
                weight: Array2::eye(dim),
                bias: Array1::zeros(dim),
                activation: Activation::Identity,
            }],
            feedback: vec![],
            topology: FeedbackTopology::Layerwise,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let params = identity_net(2);
        let x = array![[0.3, -0.2]];
        let trace = forward(&params, &x).unwrap();
        assert_eq!(trace.output(), &x);
    }

    #[test]
    fn uniform_softmax_on_zero_logits() {
        let params = NetworkParams {
            layers: vec![LayerParams {
                weight: Array2::zeros((3, 3)),
                bias: Array1::zeros(3),
                activation: Activation::Softmax,
            }],
            feedback: vec![],
            topology: FeedbackTopology::Layerwise,
        };
        let trace = forward(&params, &array![[1.0, 2.0, 3.0]]).unwrap();
        for &p in trace.output().iter() {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_respect_floor() {
        let pre = array![[50.0, -50.0, 0.0], [1e3, -1e3, 2.0]];
        let z = Activation::Softmax.apply(&pre);
        for row in z.rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
            for &p in row {
                assert!(p >= PROB_FLOOR);
            }
        }
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let params = identity_net(2);
        let err = forward(&params, &array![[1.0, 2.0, 3.0]]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn forward_flags_nonfinite_layer() {
        let mut params = identity_net(2);
        params.layers[0].weight[[0, 0]] = f64::INFINITY;
        let err = forward(&params, &array![[1.0, 1.0]]).unwrap_err();
        match err {
            Error::NonFinite { layer, .. } => assert_eq!(layer, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn softmax_only_allowed_on_top() {
        let specs = vec![
            LayerSpec::new(2, 3, Activation::Softmax),
            LayerSpec::new(3, 2, Activation::Tanh),
        ];
        assert!(validate_specs(&specs).is_err());
    }

    #[test]
    fn tanh_outputs_stay_inside_open_interval() {
        let pre = array![[-4.0, 0.0, 4.0]];
        let z = Activation::Tanh.apply(&pre);
        for &v in z.iter() {
            assert!(v > -1.0 && v < 1.0);
        }
    }
}
