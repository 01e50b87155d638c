//! Open-set training objectives with analytic gradients.
//!
//! Cross entropy is averaged over points. The pseudo loss appends the
//! uncertainty output as an extra column `C` of the logits.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the pseudo loss in the total.
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha: 0.001 }
    }
}

/// Softmax of a row with max subtraction.
pub fn softmax_row<R: Real>(row: ArrayView1<'_, R>) -> Array1<R> {
    let max = row.iter().copied().fold(R::neg_infinity(), R::max);
    let exps: Array1<R> = row.mapv(|v| (v - max).exp());
    let sum: R = exps.iter().copied().sum();
    exps / sum
}

/// Mean cross entropy and its gradient for integer targets.
fn cross_entropy<R: Real>(logits: &Array2<R>, labels: &[i32]) -> Result<(R, Array2<R>)> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for {n} rows", labels.len())));
    }
    if n == 0 {
        return Err(Error::ShapeMismatch("no rows".into()));
    }
    let inv_n = R::one() / R::lit(n as f64);
    let mut grad = Array2::zeros((n, c));
    let mut total = R::zero();
    for (i, &label) in labels.iter().enumerate() {
        if label < 0 || label as usize >= c {
            return Err(Error::ClassLabelOutOfRange { row: i, label: label as i64, classes: c });
        }
        let row = logits.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row: i });
        }
        let max = row.iter().copied().fold(R::neg_infinity(), R::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<R>().ln();
        total += lse - row[label as usize];
        for k in 0..c {
            let p = (row[k] - lse).exp();
            let target = if k == label as usize { R::one() } else { R::zero() };
            grad[[i, k]] = (p - target) * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

/// Closed-set cross entropy; returns `(loss, d loss / d logits)`.
pub fn closed_set_loss<R: Real>(logits: &Array2<R>, labels: &[i32]) -> Result<(R, Array2<R>)> {
    cross_entropy(logits, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLossOutput<R> {
    pub loss: R,
    pub grad_logits: Array2<R>,
    pub grad_u: Vec<R>,
}

/// Cross entropy over `[logits | u_scores]` against pseudo labels in `[0, C]`.
pub fn pseudo_loss<R: Real>(
    logits: &Array2<R>,
    u_scores: &[R],
    pseudo_labels: &[i32],
) -> Result<PseudoLossOutput<R>> {
    let (n, c) = logits.dim();
    if u_scores.len() != n {
        return Err(Error::ShapeMismatch(format!("{} uncertainty values for {n} rows", u_scores.len())));
    }
    let joined = Array2::from_shape_fn((n, c + 1), |(i, k)| if k < c { logits[[i, k]] } else { u_scores[i] });
    let (loss, grad) = cross_entropy(&joined, pseudo_labels)?;
    let grad_logits = grad.slice(ndarray::s![.., ..c]).to_owned();
    let grad_u = grad.column(c).to_vec();
    Ok(PseudoLossOutput { loss, grad_logits, grad_u })
}

/// `closed + alpha * pseudo`.
pub fn total_oss_loss<R: Real>(closed: R, pseudo: R, config: &LossConfig) -> R {
    closed + R::lit(config.alpha) * pseudo
}
