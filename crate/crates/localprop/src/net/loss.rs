//! Local loss families and their error units.
//!
//! Every layer that owns a target measures its mismatch with one of three
//! per-sample losses; the error unit is the derivative of that sample's loss
//! with respect to the post-activation:
//!
//! - categorical: `L = -sum_i y_i ln z_i`, `e = -y / z`
//! - gaussian:    `L = 1/(2 s^2) sum_i (y_i - z_i)^2`, `e = -(y - z) / s^2`
//! - cauchy:      `L = sum_i ln(1 + (y_i - z_i)^2)`, `e = -2 (y - z) / (1 + (y - z)^2)`
//!
//! Batch reduction is the mean over rows.

use ndarray::{Array1, Array2, ArrayView2, Zip};

use super::PROB_FLOOR;
use crate::error::{Error, Result};

/// Loss family for a layer's local objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Categorical,
    Gaussian { variance: f64 },
    Cauchy,
}

impl LossFamily {
    /// The fixed-variance gaussian used for hidden targets, `s^2 = 1/2`,
    /// whose error unit is `-2 (y - z)`.
    pub fn default_gaussian() -> Self {
        LossFamily::Gaussian { variance: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if let LossFamily::Gaussian { variance } = self {
            if *variance <= 0.0 {
                return Err(Error::Config(format!(
                    "gaussian loss variance must be positive, got {variance}"
                )));
            }
        }
        Ok(())
    }
}

fn check_shapes(target: &ArrayView2<f64>, z: &ArrayView2<f64>) -> Result<()> {
    if target.dim() != z.dim() {
        return Err(Error::Dimension(format!(
            "target shape {:?} vs prediction shape {:?}",
            target.dim(),
            z.dim()
        )));
    }
    Ok(())
}

/// Clip probabilities at the floor, rejecting inputs the clip cannot repair
/// (non-finite entries would otherwise slip through `f64::max`).
fn clipped_categorical_probs(z: &ArrayView2<f64>) -> Result<Array2<f64>> {
    if z.iter().any(|&v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "categorical probabilities",
            layer: 0,
        });
    }
    let clipped = z.mapv(|v| v.max(PROB_FLOOR));
    if clipped.iter().any(|&v| v <= 0.0) {
        return Err(Error::NonFinite {
            context: "categorical probabilities",
            layer: 0,
        });
    }
    Ok(clipped)
}

/// Per-sample losses, one entry per batch row.
pub fn local_loss_rows(
    family: LossFamily,
    target: ArrayView2<f64>,
    z: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    check_shapes(&target, &z)?;
    let rows = target.nrows();
    let mut out = Array1::zeros(rows);
    match family {
        LossFamily::Categorical => {
            let clipped = clipped_categorical_probs(&z)?;
            for r in 0..rows {
                let mut s = 0.0;
                for (c, &y) in target.row(r).iter().enumerate() {
                    if y != 0.0 {
                        s -= y * clipped[[r, c]].ln();
                    }
                }
                out[r] = s;
            }
        }
        LossFamily::Gaussian { variance } => {
            for r in 0..rows {
                let mut s = 0.0;
                for (c, &y) in target.row(r).iter().enumerate() {
                    let d = y - z[[r, c]];
                    s += d * d;
                }
                out[r] = s / (2.0 * variance);
            }
        }
        LossFamily::Cauchy => {
            for r in 0..rows {
                let mut s = 0.0;
                for (c, &y) in target.row(r).iter().enumerate() {
                    let d = y - z[[r, c]];
                    s += (1.0 + d * d).ln();
                }
                out[r] = s;
            }
        }
    }
    Ok(out)
}

/// Batch-mean local loss.
pub fn local_loss(family: LossFamily, target: ArrayView2<f64>, z: ArrayView2<f64>) -> Result<f64> {
    let rows = local_loss_rows(family, target, z)?;
    Ok(rows.mean().unwrap_or(0.0))
}

/// Error units for a whole batch: same shape as `z`, row `r` holding the
/// gradient of row `r`'s loss with respect to `z[r]`.
pub fn error_units_rows(
    family: LossFamily,
    target: ArrayView2<f64>,
    z: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_shapes(&target, &z)?;
    let out = match family {
        LossFamily::Categorical => {
            let clipped = clipped_categorical_probs(&z)?;
            let mut e = Array2::zeros(z.raw_dim());
            Zip::from(&mut e)
                .and(&target)
                .and(&clipped)
                .for_each(|e, &y, &p| *e = -y / p);
            e
        }
        LossFamily::Gaussian { variance } => {
            let mut e = Array2::zeros(z.raw_dim());
            Zip::from(&mut e)
                .and(&target)
                .and(&z)
                .for_each(|e, &y, &p| *e = -(y - p) / variance);
            e
        }
        LossFamily::Cauchy => {
            let mut e = Array2::zeros(z.raw_dim());
            Zip::from(&mut e)
                .and(&target)
                .and(&z)
                .for_each(|e, &y, &p| {
                    let d = y - p;
                    *e = -2.0 * d / (1.0 + d * d);
                });
            e
        }
    };
    Ok(out)
}

/// Alias kept close to the single-sample wording used around the crate.
pub fn error_units(
    family: LossFamily,
    target: ArrayView2<f64>,
    z: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    error_units_rows(family, target, z)
}
