//! Reconstruction objectives for the spatial autoencoders.
//!
//! Both losses sum over every element of a sample and average over the batch.

use super::{MaskProbabilities, SketchImage, SketchProbabilities};
use crate::error::{Error, Result};

/// Probability clamp applied before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;

/// Squared error between probability fields (targets are usually one-hot).
pub fn mask_reconstruction_loss(targets: &[MaskProbabilities], recon: &[MaskProbabilities]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if targets.len() != recon.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            actual: recon.len(),
            context: "mask loss batch",
        });
    }
    let mut total = 0.0;
    for (x, xh) in targets.iter().zip(recon) {
        if x.height() != xh.height() || x.width() != xh.width() || x.num_classes() != xh.num_classes() {
            return Err(Error::ShapeMismatch {
                expected: (x.height(), x.width()),
                actual: (xh.height(), xh.width()),
            });
        }
        total += x
            .probs()
            .iter()
            .zip(xh.probs())
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>();
    }
    Ok(total / targets.len() as f64)
}

/// Binary cross-entropy with predictions clamped to `[ε, 1-ε]`.
pub fn sketch_reconstruction_loss(targets: &[SketchImage], recon: &[SketchProbabilities]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if targets.len() != recon.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            actual: recon.len(),
            context: "sketch loss batch",
        });
    }
    let mut total = 0.0;
    for (x, xh) in targets.iter().zip(recon) {
        if x.shape() != xh.shape() {
            return Err(Error::ShapeMismatch {
                expected: x.shape(),
                actual: xh.shape(),
            });
        }
        total += x
            .pixels()
            .iter()
            .zip(xh.probs())
            .map(|(&t, &p)| bce_term(t as f64, p as f64))
            .sum::<f64>();
    }
    Ok(total / targets.len() as f64)
}

pub(crate) fn bce_term(target: f64, p: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}
