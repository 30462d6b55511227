//! Basic differentiable layers: 2-D convolution, batch normalization,
//! dense, activations and max pooling. Every layer caches what its
//! backward pass needs during forward; backward consumes the cache,
//! accumulates parameter gradients and returns the input gradient.

use super::param::{join, ParamSet, ParamVisitor, StateVisitor};
use crate::par;
use ndarray::{Array1, Array2, Array4, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Train/eval switch; affects batch normalization only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// 2-D convolution with stride 1 and same-padding (odd kernels).
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// out_channels x in_channels x kh x kw
    pub weight: Array4<f64>,
    pub w_grad: Array4<f64>,
    pub bias: Array1<f64>,
    pub b_grad: Array1<f64>,
    cache_x: Option<Array4<f64>>,
}

impl Conv2d {
    pub fn new(out_ch: usize, in_ch: usize, kh: usize, kw: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kh % 2 == 1 && kw % 2 == 1, "same-padding needs odd kernels");
        let fan_in = (in_ch * kh * kw) as f64;
        let scale = (2.0 / fan_in).sqrt();
        let weight = Array4::from_shape_fn((out_ch, in_ch, kh, kw), |_| {
            (rng.random::<f64>() * 2.0 - 1.0) * scale
        });
        Conv2d {
            w_grad: Array4::zeros(weight.dim()),
            weight,
            bias: Array1::zeros(out_ch),
            b_grad: Array1::zeros(out_ch),
            cache_x: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (batch, in_ch, h, w) = x.dim();
        let (oc, ic, kh, kw) = self.weight.dim();
        assert_eq!(in_ch, ic, "conv input channel mismatch");
        let (ph, pw) = (kh / 2, kw / 2);

        // the frequency axis is contiguous, so the kernel is applied as
        // shifted row AXPYs which the compiler can vectorize
        let x_std = x.as_standard_layout();
        let xs = x_std.as_slice().expect("standard layout");
        let ws = self.weight.as_slice().expect("standard layout");

        let planes: Vec<Vec<f64>> = par::map_indexed(batch, |b| {
            let mut out = vec![0.0; oc * h * w];
            for o in 0..oc {
                let plane = &mut out[o * h * w..(o + 1) * h * w];
                let bias = self.bias[o];
                for v in plane.iter_mut() {
                    *v = bias;
                }
                for c in 0..ic {
                    for dh in 0..kh {
                        let wrow = &ws[((o * ic + c) * kh + dh) * kw..][..kw];
                        for t in 0..h {
                            let ti = t as isize + dh as isize - ph as isize;
                            if ti < 0 || ti >= h as isize {
                                continue;
                            }
                            let xrow = &xs[((b * ic + c) * h + ti as usize) * w..][..w];
                            let orow = &mut plane[t * w..(t + 1) * w];
                            for (dw, &wv) in wrow.iter().enumerate() {
                                let shift = dw as isize - pw as isize;
                                if shift >= 0 {
                                    let s = shift as usize;
                                    for f in 0..w - s {
                                        orow[f] += wv * xrow[f + s];
                                    }
                                } else {
                                    let s = (-shift) as usize;
                                    for f in s..w {
                                        orow[f] += wv * xrow[f - s];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            out
        });
        let flat: Vec<f64> = planes.into_iter().flatten().collect();
        let y = Array4::from_shape_vec((batch, oc, h, w), flat).expect("conv output shape");
        self.cache_x = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let x = self.cache_x.take().expect("forward before backward");
        let (batch, ic, h, w) = x.dim();
        let (oc, _, kh, kw) = self.weight.dim();
        let (ph, pw) = (kh / 2, kw / 2);

        let x_std = x.as_standard_layout();
        let xs = x_std.as_slice().expect("standard layout");
        let dy_std = dy.as_standard_layout();
        let dys = dy_std.as_slice().expect("standard layout");
        let ws = self.weight.as_slice().expect("standard layout");
        let n_w = oc * ic * kh * kw;

        // per-batch dx and weight-gradient contributions, reduced after
        let results: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = par::map_indexed(batch, |b| {
            let mut dx = vec![0.0; ic * h * w];
            let mut dw_acc = vec![0.0; n_w];
            let mut db_acc = vec![0.0; oc];
            for o in 0..oc {
                for t in 0..h {
                    let grow = &dys[((b * oc + o) * h + t) * w..][..w];
                    db_acc[o] += grow.iter().sum::<f64>();
                    for c in 0..ic {
                        for dh in 0..kh {
                            let ti = t as isize + dh as isize - ph as isize;
                            if ti < 0 || ti >= h as isize {
                                continue;
                            }
                            let xrow = &xs[((b * ic + c) * h + ti as usize) * w..][..w];
                            let wbase = ((o * ic + c) * kh + dh) * kw;
                            let dxrow = &mut dx[(c * h + ti as usize) * w..][..w];
                            for dwk in 0..kw {
                                let shift = dwk as isize - pw as isize;
                                let wv = ws[wbase + dwk];
                                // fi = f + shift; pairs (g[f], x[fi]) drive
                                // both the weight and the input gradient
                                let mut dot = 0.0;
                                if shift >= 0 {
                                    let s = shift as usize;
                                    for f in 0..w - s {
                                        let g = grow[f];
                                        dot += g * xrow[f + s];
                                        dxrow[f + s] += g * wv;
                                    }
                                } else {
                                    let s = (-shift) as usize;
                                    for f in s..w {
                                        let g = grow[f];
                                        dot += g * xrow[f - s];
                                        dxrow[f - s] += g * wv;
                                    }
                                }
                                dw_acc[wbase + dwk] += dot;
                            }
                        }
                    }
                }
            }
            (dx, dw_acc, db_acc)
        });

        let mut dx_flat = Vec::with_capacity(batch * ic * h * w);
        let wg = self.w_grad.as_slice_mut().expect("standard layout");
        let bg = self.b_grad.as_slice_mut().expect("standard layout");
        for (dxb, dwb, dbb) in results {
            dx_flat.extend_from_slice(&dxb);
            for (a, v) in wg.iter_mut().zip(dwb) {
                *a += v;
            }
            for (a, v) in bg.iter_mut().zip(dbb) {
                *a += v;
            }
        }
        Array4::from_shape_vec((batch, ic, h, w), dx_flat).expect("conv dx shape")
    }
}

impl ParamSet for Conv2d {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        let shape = self.weight.shape().to_vec();
        v.visit(
            &join(prefix, "weight"),
            &shape,
            self.weight.as_slice_mut().unwrap(),
            self.w_grad.as_slice_mut().unwrap(),
        );
        let blen = self.bias.len();
        v.visit(
            &join(prefix, "bias"),
            &[blen],
            self.bias.as_slice_mut().unwrap(),
            self.b_grad.as_slice_mut().unwrap(),
        );
    }
}

/// Per-channel batch normalization over (batch, time, freq).
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Array1<f64>,
    pub gamma_grad: Array1<f64>,
    pub beta: Array1<f64>,
    pub beta_grad: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Array4<f64>,
    inv_std: Array1<f64>,
    mode: Mode,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Array1::ones(channels),
            gamma_grad: Array1::zeros(channels),
            beta: Array1::zeros(channels),
            beta_grad: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let (batch, ch, h, w) = x.dim();
        assert_eq!(ch, self.gamma.len(), "batchnorm channel mismatch");
        let n = (batch * h * w) as f64;

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = Array1::zeros(ch);
                let mut var = Array1::zeros(ch);
                for c in 0..ch {
                    let view = x.index_axis(Axis(1), c);
                    let m = view.sum() / n;
                    let v = view.iter().map(|&xi| (xi - m) * (xi - m)).sum::<f64>() / n;
                    mean[c] = m;
                    var[c] = v;
                }
                for c in 0..ch {
                    self.running_mean[c] =
                        (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean[c];
                    self.running_var[c] =
                        (1.0 - self.momentum) * self.running_var[c] + self.momentum * var[c];
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };

        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let mut x_hat = x.clone();
        for c in 0..ch {
            let (m, s) = (mean[c], inv_std[c]);
            x_hat
                .index_axis_mut(Axis(1), c)
                .mapv_inplace(|xi| (xi - m) * s);
        }
        let mut y = x_hat.clone();
        for c in 0..ch {
            let (g, b) = (self.gamma[c], self.beta[c]);
            y.index_axis_mut(Axis(1), c).mapv_inplace(|xh| g * xh + b);
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            mode,
        });
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let BnCache {
            x_hat,
            inv_std,
            mode,
        } = self.cache.take().expect("forward before backward");
        let (batch, ch, h, w) = dy.dim();
        let n = (batch * h * w) as f64;

        let mut dx = Array4::zeros(dy.dim());
        for c in 0..ch {
            let dy_c = dy.index_axis(Axis(1), c);
            let xh_c = x_hat.index_axis(Axis(1), c);
            let sum_dy: f64 = dy_c.sum();
            let sum_dy_xh: f64 = dy_c.iter().zip(xh_c.iter()).map(|(a, b)| a * b).sum();
            self.beta_grad[c] += sum_dy;
            self.gamma_grad[c] += sum_dy_xh;

            let g = self.gamma[c] * inv_std[c];
            let mut dx_c = dx.index_axis_mut(Axis(1), c);
            match mode {
                Mode::Train => {
                    let mean_dy = sum_dy / n;
                    let mean_dy_xh = sum_dy_xh / n;
                    ndarray::Zip::from(&mut dx_c)
                        .and(&dy_c)
                        .and(&xh_c)
                        .for_each(|d, &dyi, &xhi| {
                            *d = g * (dyi - mean_dy - xhi * mean_dy_xh);
                        });
                }
                Mode::Eval => {
                    ndarray::Zip::from(&mut dx_c).and(&dy_c).for_each(|d, &dyi| {
                        *d = g * dyi;
                    });
                }
            }
        }
        dx
    }
}

impl ParamSet for BatchNorm2d {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        let n = self.gamma.len();
        v.visit(
            &join(prefix, "gamma"),
            &[n],
            self.gamma.as_slice_mut().unwrap(),
            self.gamma_grad.as_slice_mut().unwrap(),
        );
        v.visit(
            &join(prefix, "beta"),
            &[n],
            self.beta.as_slice_mut().unwrap(),
            self.beta_grad.as_slice_mut().unwrap(),
        );
    }

    fn visit_state(&mut self, prefix: &str, v: &mut dyn StateVisitor) {
        v.visit(
            &join(prefix, "running_mean"),
            self.running_mean.as_slice_mut().unwrap(),
        );
        v.visit(
            &join(prefix, "running_var"),
            self.running_var.as_slice_mut().unwrap(),
        );
    }
}

/// Fully connected layer on (rows x in) matrices.
#[derive(Debug, Clone)]
pub struct Dense {
    /// out x in
    pub weight: Array2<f64>,
    pub w_grad: Array2<f64>,
    pub bias: Array1<f64>,
    pub b_grad: Array1<f64>,
    cache_x: Option<Array2<f64>>,
}

impl Dense {
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = (2.0 / in_dim as f64).sqrt();
        let weight =
            Array2::from_shape_fn((out_dim, in_dim), |_| (rng.random::<f64>() * 2.0 - 1.0) * scale);
        Dense {
            w_grad: Array2::zeros(weight.dim()),
            weight,
            bias: Array1::zeros(out_dim),
            b_grad: Array1::zeros(out_dim),
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let y = x.dot(&self.weight.t()) + &self.bias;
        self.cache_x = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache_x.take().expect("forward before backward");
        self.w_grad += &dy.t().dot(&x);
        self.b_grad += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }

    /// Forward without caching, for inference-only paths.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Re-arm the backward cache with a known input activation.
    pub fn cache_prime(&mut self, x: &Array2<f64>) {
        self.cache_x = Some(x.clone());
    }
}

impl ParamSet for Dense {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        let shape = self.weight.shape().to_vec();
        v.visit(
            &join(prefix, "weight"),
            &shape,
            self.weight.as_slice_mut().unwrap(),
            self.w_grad.as_slice_mut().unwrap(),
        );
        let n = self.bias.len();
        v.visit(
            &join(prefix, "bias"),
            &[n],
            self.bias.as_slice_mut().unwrap(),
            self.b_grad.as_slice_mut().unwrap(),
        );
    }
}

/// ReLU with cached mask.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Array4<f64>>,
}

impl Relu {
    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        dy * &self.mask.take().expect("forward before backward")
    }
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Non-overlapping max pooling over (time, freq) with window (pt, pf).
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub pool_t: usize,
    pub pool_f: usize,
    cache: Option<(Vec<(usize, usize)>, (usize, usize, usize, usize))>,
}

impl MaxPool2d {
    pub fn new(pool_t: usize, pool_f: usize) -> Self {
        assert!(pool_t >= 1 && pool_f >= 1);
        MaxPool2d {
            pool_t,
            pool_f,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (batch, ch, h, w) = x.dim();
        assert!(
            h % self.pool_t == 0 && w % self.pool_f == 0,
            "pool window ({}, {}) must divide input ({h}, {w})",
            self.pool_t,
            self.pool_f
        );
        let (oh, ow) = (h / self.pool_t, w / self.pool_f);
        let mut y = Array4::zeros((batch, ch, oh, ow));
        let mut argmax = vec![(0usize, 0usize); batch * ch * oh * ow];
        let mut idx = 0;
        for b in 0..batch {
            for c in 0..ch {
                for t in 0..oh {
                    for f in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_pos = (0, 0);
                        for dt in 0..self.pool_t {
                            for df in 0..self.pool_f {
                                let (ti, fi) = (t * self.pool_t + dt, f * self.pool_f + df);
                                let v = x[[b, c, ti, fi]];
                                if v > best {
                                    best = v;
                                    best_pos = (ti, fi);
                                }
                            }
                        }
                        y[[b, c, t, f]] = best;
                        argmax[idx] = best_pos;
                        idx += 1;
                    }
                }
            }
        }
        self.cache = Some((argmax, (batch, ch, h, w)));
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let (argmax, (batch, ch, h, w)) = self.cache.take().expect("forward before backward");
        let (_, _, oh, ow) = dy.dim();
        let mut dx = Array4::zeros((batch, ch, h, w));
        let mut idx = 0;
        for b in 0..batch {
            for c in 0..ch {
                for t in 0..oh {
                    for f in 0..ow {
                        let (ti, fi) = argmax[idx];
                        dx[[b, c, ti, fi]] += dy[[b, c, t, f]];
                        idx += 1;
                    }
                }
            }
        }
        dx
    }
}
