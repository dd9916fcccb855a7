//! Latent regression objective: squared-difference term plus a weighted
//! direction (1 − cosine) term.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_slices, l2_norm};
use crate::error::{ensure_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_dir: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_dir: 10.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_dir >= 0.0 && self.lambda_dir.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_dir must be a finite non-negative number, got {}",
                self.lambda_dir
            )));
        }
        Ok(())
    }
}

/// Mean over coordinates of the squared difference.
pub fn loss_abs(w: &[f64], w_hat: &[f64]) -> Result<f64> {
    ensure_dim(w.len(), w_hat.len(), "loss_abs operands")?;
    if w.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let s: f64 = w.iter().zip(w_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / w.len() as f64)
}

/// `1 − cos(w, ŵ)`.
pub fn loss_dir(w: &[f64], w_hat: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_slices(w, w_hat)?)
}

/// Batch mean of `loss_abs` plus `λ` times batch mean of `loss_dir`.
pub fn loss_total(pairs: &[(&[f64], &[f64])], weights: LossWeights) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = pairs.len() as f64;
    let mut abs = 0.0;
    let mut dir = 0.0;
    for (w, wh) in pairs {
        abs += loss_abs(w, wh)?;
        dir += loss_dir(w, wh)?;
    }
    Ok(abs / n + weights.lambda_dir * dir / n)
}

/// Which terms a batch loss includes; used to check each gradient on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terms {
    Both,
    AbsOnly,
    DirOnly,
}

/// Batch loss over rows of `(target, prediction)` matrices and its gradient
/// with respect to the predictions.
pub fn batch_loss_and_grad(
    target: &Array2<f64>,
    pred: &Array2<f64>,
    weights: LossWeights,
    terms: Terms,
) -> Result<(f64, Array2<f64>)> {
    if target.dim() != pred.dim() {
        return Err(Error::ShapeMismatch {
            expected: target.dim(),
            actual: pred.dim(),
        });
    }
    let (n, d) = target.dim();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let (nf, df) = (n as f64, d as f64);
    let use_abs = terms != Terms::DirOnly;
    let use_dir = terms != Terms::AbsOnly;
    let mut grad = Array2::<f64>::zeros((n, d));
    let mut total = 0.0;
    for i in 0..n {
        let w = target.row(i);
        let wh = pred.row(i);
        let (w, wh) = (w.as_slice().expect("row"), wh.as_slice().expect("row"));
        if use_abs {
            total += loss_abs(w, wh)? / nf;
            for j in 0..d {
                grad[[i, j]] += 2.0 * (wh[j] - w[j]) / (df * nf);
            }
        }
        if use_dir {
            let (nw, nh) = (l2_norm(w), l2_norm(wh));
            if nw == 0.0 || nh == 0.0 {
                return Err(Error::ZeroNorm("direction loss operand"));
            }
            let cos = w.iter().zip(wh).map(|(a, b)| a * b).sum::<f64>() / (nw * nh);
            total += weights.lambda_dir * (1.0 - cos) / nf;
            let k = weights.lambda_dir / nf;
            for j in 0..d {
                let dcos = w[j] / (nw * nh) - cos * wh[j] / (nh * nh);
                grad[[i, j]] -= k * dcos;
            }
        }
    }
    Ok((total, grad))
}
