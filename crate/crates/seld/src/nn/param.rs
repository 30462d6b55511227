//! Named-parameter plumbing: every learnable tensor in the network is
//! reachable through [`ParamSet::visit`], which gives optimizers,
//! checkpointing and gradient checking one flat, stably-ordered view of
//! the model.

/// Callback target for parameter traversal. Receives the parameter name,
/// its shape, the value buffer and the gradient buffer.
pub trait ParamVisitor {
    fn visit(&mut self, name: &str, shape: &[usize], value: &mut [f64], grad: &mut [f64]);
}

impl<F: FnMut(&str, &[usize], &mut [f64], &mut [f64])> ParamVisitor for F {
    fn visit(&mut self, name: &str, shape: &[usize], value: &mut [f64], grad: &mut [f64]) {
        self(name, shape, value, grad)
    }
}

/// Callback target for non-learnable state traversal (batch-norm running
/// statistics). Kept separate from [`ParamVisitor`] so optimizers and
/// gradient checks never touch buffers that have no gradient.
pub trait StateVisitor {
    fn visit(&mut self, name: &str, value: &mut [f64]);
}

impl<F: FnMut(&str, &mut [f64])> StateVisitor for F {
    fn visit(&mut self, name: &str, value: &mut [f64]) {
        self(name, value)
    }
}

/// Anything holding learnable parameters. Traversal order is fixed by the
/// implementation and must be deterministic: it defines the flattened
/// index space.
pub trait ParamSet {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor);

    /// Traverse non-learnable state buffers. Layers without state keep the
    /// default no-op; containers forward to their children.
    fn visit_state(&mut self, _prefix: &str, _v: &mut dyn StateVisitor) {}
}

/// Total number of scalar parameters.
pub fn param_count<M: ParamSet + ?Sized>(model: &mut M) -> usize {
    let mut n = 0;
    model.visit("", &mut |_: &str, _: &[usize], value: &mut [f64], _: &mut [f64]| {
        n += value.len();
    });
    n
}

/// Copy all parameter values into one flat vector, traversal order.
pub fn get_flat<M: ParamSet + ?Sized>(model: &mut M) -> Vec<f64> {
    let mut out = Vec::new();
    model.visit("", &mut |_: &str, _: &[usize], value: &mut [f64], _: &mut [f64]| {
        out.extend_from_slice(value);
    });
    out
}

/// Overwrite all parameter values from a flat vector.
pub fn set_flat<M: ParamSet + ?Sized>(model: &mut M, flat: &[f64]) {
    let mut offset = 0;
    model.visit("", &mut |_: &str, _: &[usize], value: &mut [f64], _: &mut [f64]| {
        value.copy_from_slice(&flat[offset..offset + value.len()]);
        offset += value.len();
    });
    assert_eq!(offset, flat.len(), "flat parameter vector length mismatch");
}

/// Copy all gradients into one flat vector, traversal order.
pub fn grads_flat<M: ParamSet + ?Sized>(model: &mut M) -> Vec<f64> {
    let mut out = Vec::new();
    model.visit("", &mut |_: &str, _: &[usize], _: &mut [f64], grad: &mut [f64]| {
        out.extend_from_slice(grad);
    });
    out
}

/// Zero every gradient buffer.
pub fn zero_grads<M: ParamSet + ?Sized>(model: &mut M) {
    model.visit("", &mut |_: &str, _: &[usize], _: &mut [f64], grad: &mut [f64]| {
        grad.fill(0.0);
    });
}

/// Parameter names in traversal order (one entry per tensor).
pub fn param_names<M: ParamSet + ?Sized>(model: &mut M) -> Vec<String> {
    let mut out = Vec::new();
    model.visit("", &mut |name: &str, _: &[usize], _: &mut [f64], _: &mut [f64]| {
        out.push(name.to_string());
    });
    out
}

/// Copy all state buffers into one flat vector, traversal order.
pub fn get_state_flat<M: ParamSet + ?Sized>(model: &mut M) -> Vec<f64> {
    let mut out = Vec::new();
    model.visit_state("", &mut |_: &str, value: &mut [f64]| {
        out.extend_from_slice(value);
    });
    out
}

/// Overwrite all state buffers from a flat vector.
pub fn set_state_flat<M: ParamSet + ?Sized>(model: &mut M, flat: &[f64]) {
    let mut offset = 0;
    model.visit_state("", &mut |_: &str, value: &mut [f64]| {
        value.copy_from_slice(&flat[offset..offset + value.len()]);
        offset += value.len();
    });
    assert_eq!(offset, flat.len(), "flat state vector length mismatch");
}

/// Join a visitation prefix with a local name.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
