//! Squeeze-excitation blocks and the Conv-StandardPOST residual block.
//!
//! * cSE: global-average-pool -> dense C -> C/ratio -> ReLU -> dense back
//!   to C -> sigmoid, gating each channel.
//! * sSE: 1x1 convolution to a single map -> sigmoid, gating each (time,
//!   freq) position across all channels.
//! * scSE: element-wise sum of the two recalibrated maps; with all gate
//!   parameters zero both gates are 0.5 and the block is exactly the
//!   identity.
//! * Conv-StandardPOST: two 3x3 conv+BN stages, a projection shortcut when
//!   channel counts differ, ReLU after the residual sum, and the scSE
//!   module applied after ("POST") the sum.

use super::layers::{sigmoid, BatchNorm2d, Conv2d, Dense, Mode, Relu};
use super::param::{join, ParamSet, ParamVisitor, StateVisitor};
use ndarray::{Array1, Array2, Array4, Axis};
use rand_chacha::ChaCha8Rng;

/// Channel squeeze-excitation.
#[derive(Debug, Clone)]
pub struct CseBlock {
    pub fc1: Dense,
    pub fc2: Dense,
    cache: Option<CseCache>,
}

#[derive(Debug, Clone)]
struct CseCache {
    x: Array4<f64>,
    pooled: Array2<f64>,
    hidden: Array2<f64>,
    gates: Array2<f64>,
}

impl CseBlock {
    /// `ratio` must divide `channels`; the bottleneck width is
    /// `channels / ratio`.
    pub fn new(channels: usize, ratio: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(
            ratio >= 1 && channels % ratio == 0,
            "ratio {ratio} must divide channel count {channels}"
        );
        CseBlock {
            fc1: Dense::new(channels / ratio, channels, rng),
            fc2: Dense::new(channels, channels / ratio, rng),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (batch, ch, h, w) = x.dim();
        let n = (h * w) as f64;
        let mut pooled = Array2::zeros((batch, ch));
        for b in 0..batch {
            for c in 0..ch {
                pooled[[b, c]] = x.index_axis(Axis(0), b).index_axis(Axis(0), c).sum() / n;
            }
        }
        let pre1 = self.fc1.forward(&pooled);
        let hidden = pre1.mapv(|v| v.max(0.0));
        let pre2 = self.fc2.forward(&hidden);
        let gates = pre2.mapv(sigmoid);

        let mut y = x.clone();
        for b in 0..batch {
            for c in 0..ch {
                let g = gates[[b, c]];
                y.index_axis_mut(Axis(0), b)
                    .index_axis_mut(Axis(0), c)
                    .mapv_inplace(|v| v * g);
            }
        }
        self.cache = Some(CseCache {
            x: x.clone(),
            pooled,
            hidden,
            gates,
        });
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let CseCache {
            x,
            pooled,
            hidden,
            gates,
        } = self.cache.take().expect("forward before backward");
        let (batch, ch, h, w) = x.dim();
        let n = (h * w) as f64;

        // direct path through the multiplication
        let mut dx = Array4::zeros(x.dim());
        let mut dgates = Array2::zeros((batch, ch));
        for b in 0..batch {
            for c in 0..ch {
                let g = gates[[b, c]];
                let mut acc = 0.0;
                for t in 0..h {
                    for f in 0..w {
                        let d = dy[[b, c, t, f]];
                        dx[[b, c, t, f]] = d * g;
                        acc += d * x[[b, c, t, f]];
                    }
                }
                dgates[[b, c]] = acc;
            }
        }

        // gate path: sigmoid -> fc2 -> relu -> fc1 -> pool
        let dpre2 = &dgates * &gates.mapv(|g| g * (1.0 - g));
        // re-prime dense caches with the activations seen in forward
        self.fc2.cache_prime(&hidden);
        let dhidden = self.fc2.backward(&dpre2);
        let dpre1 = dhidden * hidden.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        self.fc1.cache_prime(&pooled);
        let dpooled = self.fc1.backward(&dpre1);

        for b in 0..batch {
            for c in 0..ch {
                let spread = dpooled[[b, c]] / n;
                for t in 0..h {
                    for f in 0..w {
                        dx[[b, c, t, f]] += spread;
                    }
                }
            }
        }
        dx
    }
}

impl ParamSet for CseBlock {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        self.fc1.visit(&join(prefix, "fc1"), v);
        self.fc2.visit(&join(prefix, "fc2"), v);
    }
}

/// Spatial squeeze-excitation.
#[derive(Debug, Clone)]
pub struct SseBlock {
    /// 1x1 convolution weights, one per input channel.
    pub weight: Array1<f64>,
    pub w_grad: Array1<f64>,
    pub bias: f64,
    pub b_grad: f64,
    cache: Option<(Array4<f64>, ndarray::Array3<f64>)>,
}

impl SseBlock {
    pub fn new(channels: usize, rng: &mut ChaCha8Rng) -> Self {
        use rand::Rng;
        let scale = (2.0 / channels as f64).sqrt();
        SseBlock {
            weight: Array1::from_shape_fn(channels, |_| (rng.random::<f64>() * 2.0 - 1.0) * scale),
            w_grad: Array1::zeros(channels),
            bias: 0.0,
            b_grad: 0.0,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (batch, ch, h, w) = x.dim();
        let mut gates = ndarray::Array3::zeros((batch, h, w));
        for b in 0..batch {
            for t in 0..h {
                for f in 0..w {
                    let mut acc = self.bias;
                    for c in 0..ch {
                        acc += self.weight[c] * x[[b, c, t, f]];
                    }
                    gates[[b, t, f]] = sigmoid(acc);
                }
            }
        }
        let mut y = x.clone();
        for b in 0..batch {
            for c in 0..ch {
                for t in 0..h {
                    for f in 0..w {
                        y[[b, c, t, f]] *= gates[[b, t, f]];
                    }
                }
            }
        }
        self.cache = Some((x.clone(), gates));
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let (x, gates) = self.cache.take().expect("forward before backward");
        let (batch, ch, h, w) = x.dim();
        let mut dx = Array4::zeros(x.dim());
        for b in 0..batch {
            for t in 0..h {
                for f in 0..w {
                    let g = gates[[b, t, f]];
                    let mut dg = 0.0;
                    for c in 0..ch {
                        let d = dy[[b, c, t, f]];
                        dx[[b, c, t, f]] = d * g;
                        dg += d * x[[b, c, t, f]];
                    }
                    let dpre = dg * g * (1.0 - g);
                    self.b_grad += dpre;
                    for c in 0..ch {
                        self.w_grad[c] += dpre * x[[b, c, t, f]];
                        dx[[b, c, t, f]] += dpre * self.weight[c];
                    }
                }
            }
        }
        dx
    }
}

impl ParamSet for SseBlock {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        let n = self.weight.len();
        v.visit(
            &join(prefix, "weight"),
            &[n],
            self.weight.as_slice_mut().unwrap(),
            self.w_grad.as_slice_mut().unwrap(),
        );
        let mut bias = [self.bias];
        let mut bgrad = [self.b_grad];
        v.visit(&join(prefix, "bias"), &[1], &mut bias, &mut bgrad);
        self.bias = bias[0];
        self.b_grad = bgrad[0];
    }
}

/// Concurrent spatial and channel squeeze-excitation: cSE(x) + sSE(x).
#[derive(Debug, Clone)]
pub struct ScseBlock {
    pub cse: CseBlock,
    pub sse: SseBlock,
}

impl ScseBlock {
    pub fn new(channels: usize, ratio: usize, rng: &mut ChaCha8Rng) -> Self {
        ScseBlock {
            cse: CseBlock::new(channels, ratio, rng),
            sse: SseBlock::new(channels, rng),
        }
    }

    /// Zero all gate parameters, turning the block into the exact identity.
    pub fn zero_gates(&mut self) {
        self.cse.fc1.weight.fill(0.0);
        self.cse.fc1.bias.fill(0.0);
        self.cse.fc2.weight.fill(0.0);
        self.cse.fc2.bias.fill(0.0);
        self.sse.weight.fill(0.0);
        self.sse.bias = 0.0;
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Array4<f64> {
        self.cse.forward(x) + self.sse.forward(x)
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        self.cse.backward(dy) + self.sse.backward(dy)
    }
}

impl ParamSet for ScseBlock {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        self.cse.visit(&join(prefix, "cse"), v);
        self.sse.visit(&join(prefix, "sse"), v);
    }
}

/// Residual conv block with post-sum scSE recalibration.
#[derive(Debug, Clone)]
pub struct ConvStandardPost {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    /// 1x1 conv + BN projection when input channels differ from n_filters.
    pub shortcut: Option<(Conv2d, BatchNorm2d)>,
    pub scse: ScseBlock,
    relu_mid: Relu,
    relu_out: Relu,
}

impl ConvStandardPost {
    pub fn new(in_channels: usize, n_filters: usize, ratio: usize, rng: &mut ChaCha8Rng) -> Self {
        let shortcut = if in_channels == n_filters {
            None
        } else {
            Some((
                Conv2d::new(n_filters, in_channels, 1, 1, rng),
                BatchNorm2d::new(n_filters),
            ))
        };
        ConvStandardPost {
            conv1: Conv2d::new(n_filters, in_channels, 3, 3, rng),
            bn1: BatchNorm2d::new(n_filters),
            conv2: Conv2d::new(n_filters, n_filters, 3, 3, rng),
            bn2: BatchNorm2d::new(n_filters),
            shortcut,
            scse: ScseBlock::new(n_filters, ratio, rng),
            relu_mid: Relu::default(),
            relu_out: Relu::default(),
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let main = self.conv1.forward(x);
        let main = self.bn1.forward(&main, mode);
        let main = self.relu_mid.forward(&main);
        let main = self.conv2.forward(&main);
        let main = self.bn2.forward(&main, mode);
        let short = match &mut self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(x);
                bn.forward(&s, mode)
            }
            None => x.clone(),
        };
        let summed = self.relu_out.forward(&(main + short));
        self.scse.forward(&summed)
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let dsum = self.relu_out.backward(&self.scse.backward(dy));
        // shortcut branch
        let dshort = match &mut self.shortcut {
            Some((conv, bn)) => {
                let d = bn.backward(&dsum);
                conv.backward(&d)
            }
            None => dsum.clone(),
        };
        // main branch
        let d = self.bn2.backward(&dsum);
        let d = self.conv2.backward(&d);
        let d = self.relu_mid.backward(&d);
        let d = self.bn1.backward(&d);
        let dmain = self.conv1.backward(&d);
        dmain + dshort
    }
}

impl ParamSet for ConvStandardPost {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        self.conv1.visit(&join(prefix, "conv1"), v);
        self.bn1.visit(&join(prefix, "bn1"), v);
        self.conv2.visit(&join(prefix, "conv2"), v);
        self.bn2.visit(&join(prefix, "bn2"), v);
        if let Some((conv, bn)) = &mut self.shortcut {
            conv.visit(&join(prefix, "proj_conv"), v);
            bn.visit(&join(prefix, "proj_bn"), v);
        }
        self.scse.visit(&join(prefix, "scse"), v);
    }

    fn visit_state(&mut self, prefix: &str, v: &mut dyn StateVisitor) {
        self.bn1.visit_state(&join(prefix, "bn1"), v);
        self.bn2.visit_state(&join(prefix, "bn2"), v);
        if let Some((_, bn)) = &mut self.shortcut {
            bn.visit_state(&join(prefix, "proj_bn"), v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(77)
    }

    fn random_x(dim: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn(dim, |_| r.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn cse_zero_weights_gate_half() {
        let mut cse = CseBlock::new(4, 1, &mut rng());
        cse.fc1.weight.fill(0.0);
        cse.fc1.bias.fill(0.0);
        cse.fc2.weight.fill(0.0);
        cse.fc2.bias.fill(0.0);
        let x = random_x((2, 4, 3, 3), 1);
        let y = cse.forward(&x);
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((b - 0.5 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn cse_zero_channel_stays_zero() {
        let mut cse = CseBlock::new(4, 2, &mut rng());
        let mut x = random_x((1, 4, 3, 3), 2);
        x.index_axis_mut(Axis(1), 2).fill(0.0);
        let y = cse.forward(&x);
        assert!(y.index_axis(Axis(1), 2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cse_gates_bound_output() {
        let mut cse = CseBlock::new(4, 1, &mut rng());
        let x = random_x((2, 4, 3, 3), 3);
        let y = cse.forward(&x);
        for (a, b) in x.iter().zip(y.iter()) {
            assert!(b.abs() <= a.abs() + 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "must divide")]
    fn cse_rejects_non_divisor_ratio() {
        CseBlock::new(4, 3, &mut rng());
    }

    #[test]
    fn sse_zero_weights_gate_half() {
        let mut sse = SseBlock::new(4, &mut rng());
        sse.weight.fill(0.0);
        sse.bias = 0.0;
        let x = random_x((2, 4, 3, 3), 4);
        let y = sse.forward(&x);
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((b - 0.5 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn sse_gate_broadcasts_over_channels() {
        let mut sse = SseBlock::new(3, &mut rng());
        let x = random_x((1, 3, 2, 2), 5);
        let y = sse.forward(&x);
        // per position, the scaling factor must be the same for all channels
        for t in 0..2 {
            for f in 0..2 {
                let g0 = y[[0, 0, t, f]] / x[[0, 0, t, f]];
                for c in 1..3 {
                    let g = y[[0, c, t, f]] / x[[0, c, t, f]];
                    assert!((g - g0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn scse_zero_gates_is_exact_identity() {
        let mut scse = ScseBlock::new(4, 1, &mut rng());
        scse.zero_gates();
        let x = random_x((2, 4, 3, 3), 6);
        let y = scse.forward(&x);
        assert_eq!(x, y);
    }

    #[test]
    fn scse_zero_input_zero_output() {
        let mut scse = ScseBlock::new(4, 2, &mut rng());
        let x = Array4::zeros((1, 4, 3, 3));
        let y = scse.forward(&x);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scse_ratio_extremes_construct_and_run() {
        // ratio = 1: bottleneck width equals channel count
        let mut a = ScseBlock::new(8, 1, &mut rng());
        assert_eq!(a.cse.fc1.weight.dim(), (8, 8));
        // ratio = n_filters: bottleneck width 1
        let mut b = ScseBlock::new(8, 8, &mut rng());
        assert_eq!(b.cse.fc1.weight.dim(), (1, 8));
        let x = random_x((1, 8, 2, 2), 7);
        a.forward(&x);
        b.forward(&x);
    }

    #[test]
    fn conv_standard_post_zero_params_passes_shortcut() {
        let mut block = ConvStandardPost::new(4, 4, 1, &mut rng());
        // zero out everything learnable except BN scale (left at 1)
        block.conv1.weight.fill(0.0);
        block.conv1.bias.fill(0.0);
        block.conv2.weight.fill(0.0);
        block.conv2.bias.fill(0.0);
        block.scse.zero_gates();
        let x = random_x((1, 4, 4, 4), 8);
        let y = block.forward(&x, Mode::Eval);
        // identity shortcut + zero main path + identity scSE = relu(x)
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((b - a.max(0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn conv_standard_post_zero_input_zero_output() {
        let mut block = ConvStandardPost::new(7, 8, 1, &mut rng());
        block.conv1.bias.fill(0.0);
        block.conv2.bias.fill(0.0);
        if let Some((conv, _)) = &mut block.shortcut {
            conv.bias.fill(0.0);
        }
        let x = Array4::zeros((1, 7, 4, 4));
        let y = block.forward(&x, Mode::Eval);
        assert!(y.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn conv_standard_post_output_channel_count() {
        let mut block = ConvStandardPost::new(7, 16, 1, &mut rng());
        let x = random_x((2, 7, 10, 8), 9);
        let y = block.forward(&x, Mode::Train);
        assert_eq!(y.dim(), (2, 16, 10, 8));
    }
}
