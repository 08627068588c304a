//! Weight initializers.
//!
//! Feedback matrices receive the same scheme as the forward weights, drawn
//! independently. Biases start at zero. Everything is a pure function of the
//! seed: same seed, bit-identical parameters.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{validate_specs, FeedbackTopology, LayerParams, LayerSpec, NetworkParams};
use crate::error::Result;

/// Initialization scheme for weight matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Zero-mean gaussian entries with the given variance.
    Gaussian { variance: f64 },
    /// Glorot-style uniform on `[-sqrt(6/(fan_in+fan_out)), +sqrt(...)]`.
    FanInFanOut,
    /// Random semi-orthogonal matrix (QR of a gaussian draw, sign-corrected).
    Orthogonal,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Gaussian { variance: 0.05 }
    }
}

impl std::fmt::Display for InitScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitScheme::Gaussian { variance } => write!(f, "gaussian({variance})"),
            InitScheme::FanInFanOut => write!(f, "glorot"),
            InitScheme::Orthogonal => write!(f, "orthogonal"),
        }
    }
}

impl std::str::FromStr for InitScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "g" | "gaussian" => Ok(InitScheme::Gaussian { variance: 0.05 }),
            "gloro" | "glorot" | "fan-in-fan-out" | "faninfanout" => Ok(InitScheme::FanInFanOut),
            "ortho" | "orthogonal" => Ok(InitScheme::Orthogonal),
            other => Err(format!("unknown init scheme '{other}'")),
        }
    }
}

fn draw_matrix(rows: usize, cols: usize, scheme: InitScheme, rng: &mut ChaCha8Rng) -> Array2<f64> {
    match scheme {
        InitScheme::Gaussian { variance } => {
            let normal = Normal::new(0.0, variance.sqrt()).expect("positive variance");
            let data: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
            Array2::from_shape_vec((rows, cols), data).expect("shape matches data")
        }
        InitScheme::FanInFanOut => {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let uniform = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
            let data: Vec<f64> = (0..rows * cols).map(|_| uniform.sample(rng)).collect();
            Array2::from_shape_vec((rows, cols), data).expect("shape matches data")
        }
        InitScheme::Orthogonal => {
            let gaussian = draw_matrix(
                rows.max(cols),
                rows.min(cols),
                InitScheme::Gaussian { variance: 1.0 },
                rng,
            );
            let q = thin_qr_orthonormal(&gaussian);
            if rows >= cols {
                q
            } else {
                q.t().to_owned()
            }
        }
    }
}

/// Thin Q factor of a Householder QR, sign-corrected so the decomposition is
/// unique (diagonal of R forced positive). Input must satisfy rows >= cols;
/// the returned matrix has orthonormal columns.
fn thin_qr_orthonormal(a: &Array2<f64>) -> Array2<f64> {
    let (m, n) = a.dim();
    assert!(m >= n, "thin QR expects rows >= cols");
    let mut r = a.clone();
    // Householder vectors, one per column.
    let mut vs: Vec<Array1<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = Array1::zeros(m - k);
        for i in k..m {
            v[i - k] = r[[i, k]];
        }
        let alpha = -v[0].signum() * v.dot(&v).sqrt();
        v[0] -= alpha;
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            v.mapv_inplace(|x| x / norm);
        }
        // Apply the reflector H = I - 2 v v^T to the trailing block of R.
        for j in k..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i - k] * r[[i, j]];
            }
            for i in k..m {
                r[[i, j]] -= 2.0 * v[i - k] * dot;
            }
        }
        vs.push(v);
    }
    // Accumulate Q (thin): apply reflectors in reverse to the first n columns
    // of the identity.
    let mut q = Array2::zeros((m, n));
    for j in 0..n {
        q[[j, j]] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &vs[k];
        for j in 0..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i - k] * q[[i, j]];
            }
            for i in k..m {
                q[[i, j]] -= 2.0 * v[i - k] * dot;
            }
        }
    }
    // Sign correction: column j flips with the sign of R[j, j].
    for j in 0..n {
        if r[[j, j]] < 0.0 {
            for i in 0..m {
                q[[i, j]] = -q[[i, j]];
            }
        }
    }
    q
}

/// Shapes of the feedback stack for a layer stack under a topology.
pub(crate) fn feedback_shapes(specs: &[LayerSpec], topology: FeedbackTopology) -> Vec<(usize, usize)> {
    match topology {
        FeedbackTopology::Layerwise => specs[1..]
            .iter()
            .map(|s| (s.input_dim, s.output_dim))
            .collect(),
        FeedbackTopology::Direct => {
            let out = specs.last().expect("non-empty").output_dim;
            specs[..specs.len() - 1]
                .iter()
                .map(|s| (s.output_dim, out))
                .collect()
        }
    }
}

/// Initialize forward and feedback weights with layerwise feedback (the shape
/// used by LRA-E, DTP and RFA).
pub fn init_params(specs: &[LayerSpec], scheme: InitScheme, seed: u64) -> Result<NetworkParams> {
    init_params_with_topology(specs, scheme, seed, FeedbackTopology::Layerwise)
}

/// Initialize with an explicit feedback topology (DFA wants `Direct`).
pub fn init_params_with_topology(
    specs: &[LayerSpec],
    scheme: InitScheme,
    seed: u64,
    topology: FeedbackTopology,
) -> Result<NetworkParams> {
    validate_specs(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = specs
        .iter()
        .map(|spec| LayerParams {
            weight: draw_matrix(spec.output_dim, spec.input_dim, scheme, &mut rng),
            bias: Array1::zeros(spec.output_dim),
            activation: spec.activation,
        })
        .collect();
    let feedback = feedback_shapes(specs, topology)
        .into_iter()
        .map(|(rows, cols)| draw_matrix(rows, cols, scheme, &mut rng))
        .collect();
    Ok(NetworkParams {
        layers,
        feedback,
        topology,
    })
}

/// Deterministic per-purpose sub-seed, so init/shuffle/noise streams never
/// collide even when the user passes the same base seed for each.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 over the mixed words
    let mut x = base
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stream.rotate_left(17))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;

    fn toy_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::new(4, 5, Activation::Tanh),
            LayerSpec::new(5, 3, Activation::Softmax),
        ]
    }

    #[test]
    fn same_seed_same_params_different_seed_differs() {
        let a = init_params(&toy_specs(), InitScheme::default(), 7).unwrap();
        let b = init_params(&toy_specs(), InitScheme::default(), 7).unwrap();
        let c = init_params(&toy_specs(), InitScheme::default(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn biases_start_at_zero_and_first_layer_has_no_feedback() {
        let p = init_params(&toy_specs(), InitScheme::default(), 1).unwrap();
        assert!(p.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(p.feedback.len(), 1);
        assert_eq!(p.feedback[0].dim(), (5, 3));
    }

    #[test]
    fn gaussian_empirical_variance_close_to_requested() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = draw_matrix(100, 100, InitScheme::Gaussian { variance: 0.05 }, &mut rng);
        let mean = m.mean().unwrap();
        let var = m.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
        assert!(
            (0.045..=0.055).contains(&var),
            "empirical variance {var} outside [0.045, 0.055]"
        );
    }

    #[test]
    fn fan_in_fan_out_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (rows, cols) = (64, 32);
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let m = draw_matrix(rows, cols, InitScheme::FanInFanOut, &mut rng);
        assert!(m.iter().all(|&v| (-bound..=bound).contains(&v)));
        // and actually uses the range, not a narrower one
        assert!(m.iter().any(|&v| v.abs() > 0.8 * bound));
    }

    #[test]
    fn orthogonal_square_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = draw_matrix(16, 16, InitScheme::Orthogonal, &mut rng);
        let prod = m.t().dot(&m);
        for ((i, j), &v) in prod.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!(
                (v - expect).abs() < 1e-8,
                "W^T W [{i},{j}] = {v}, expected {expect}"
            );
        }
    }

    #[test]
    fn orthogonal_rectangular_is_semi_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // tall: orthonormal columns
        let tall = draw_matrix(9, 4, InitScheme::Orthogonal, &mut rng);
        let ptall = tall.t().dot(&tall);
        // wide: orthonormal rows
        let wide = draw_matrix(4, 9, InitScheme::Orthogonal, &mut rng);
        let pwide = wide.dot(&wide.t());
        for p in [ptall, pwide] {
            for ((i, j), &v) in p.indexed_iter() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn direct_topology_projects_output_dim() {
        let specs = vec![
            LayerSpec::new(4, 6, Activation::Tanh),
            LayerSpec::new(6, 5, Activation::Tanh),
            LayerSpec::new(5, 3, Activation::Softmax),
        ];
        let p =
            init_params_with_topology(&specs, InitScheme::default(), 2, FeedbackTopology::Direct)
                .unwrap();
        assert_eq!(p.feedback.len(), 2);
        assert_eq!(p.feedback[0].dim(), (6, 3));
        assert_eq!(p.feedback[1].dim(), (5, 3));
    }
}
