//! ACCDOA regression loss: plain mean squared error over every output
//! coordinate, which folds detection (vector norm) and localisation
//! (vector direction) into one objective.

use crate::{Result, SeldError};
use ndarray::Array4;

/// MSE over all `batch x frames x K x 3` elements, plus its gradient with
/// respect to the prediction: `2 (p - t) / N`.
pub fn accdoa_mse_loss(pred: &Array4<f64>, target: &Array4<f64>) -> Result<(f64, Array4<f64>)> {
    if pred.dim() != target.dim() {
        return Err(SeldError::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n = pred.len() as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(SeldError::NonFinite("loss".into()));
    }
    let grad = diff.mapv(|d| 2.0 * d / n);
    Ok((loss, grad))
}
