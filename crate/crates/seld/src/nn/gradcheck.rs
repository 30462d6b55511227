//! Central-difference gradient checking against the hand-written backward
//! passes. The checker works on the flat parameter vector exposed by
//! [`ParamSet`], so every layer and the full network share one harness.

use super::param::{self, ParamSet};

/// Compare analytic gradients with central differences on the given flat
/// coordinates. `loss_fn` must run forward and backward, accumulating
/// gradients into the model, and return the scalar loss.
///
/// Returns the maximum relative error over the checked coordinates, with
/// relative error `|a - n| / max(1e-8, |a| + |n|)`.
pub fn max_rel_error<M, F>(model: &mut M, mut loss_fn: F, coords: &[usize], eps: f64) -> f64
where
    M: ParamSet + ?Sized,
    F: FnMut(&mut M) -> f64,
{
    param::zero_grads(model);
    let _ = loss_fn(model);
    let analytic = param::grads_flat(model);
    let base = param::get_flat(model);

    let mut worst = 0.0f64;
    for &i in coords {
        let mut plus = base.clone();
        plus[i] += eps;
        param::set_flat(model, &plus);
        param::zero_grads(model);
        let lp = loss_fn(model);

        let mut minus = base.clone();
        minus[i] -= eps;
        param::set_flat(model, &minus);
        param::zero_grads(model);
        let lm = loss_fn(model);

        let numeric = (lp - lm) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    param::set_flat(model, &base);
    param::zero_grads(model);
    worst
}

/// Deterministically spread `n` coordinates over a parameter space of size
/// `total`.
pub fn spread_coords(total: usize, n: usize) -> Vec<usize> {
    assert!(total > 0);
    let n = n.min(total);
    (0..n).map(|i| i * total / n).collect()
}
