//! The scSE-augmented SELD CRNN: three Conv-StandardPOST blocks with
//! pooling, two bidirectional GRU layers and two dense layers ending in a
//! tanh-squashed ACCDOA output of K x 3 values per label frame.

use super::gru::BiGru;
use super::layers::{Dense, MaxPool2d, Mode};
use super::param::{join, ParamSet, ParamVisitor, StateVisitor};
use super::se::ConvStandardPost;
use crate::{Result, SeldError};
use ndarray::{Array2, Array3, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// 7 (FOA), 10 (MIC) or 17 (FOA-MIC).
    pub n_input_channels: usize,
    pub n_filters: usize,
    /// cSE bottleneck ratio; must divide n_filters.
    pub ratio: usize,
    pub num_classes: usize,
    pub time_pools: [usize; 3],
    pub freq_pools: [usize; 3],
    /// GRU units per direction.
    pub rnn_units: usize,
    pub rnn_layers: usize,
    pub fc_units: usize,
    /// Mel bands of the input features.
    pub n_mels: usize,
}

impl NetworkConfig {
    /// Paper-scale defaults: 64 filters, ratio 1, pooling mapping the
    /// 20 ms feature rate onto the 100 ms label rate.
    pub fn baseline(n_input_channels: usize) -> Self {
        NetworkConfig {
            n_input_channels,
            n_filters: 64,
            ratio: 1,
            num_classes: crate::accdoa::DEFAULT_NUM_CLASSES,
            time_pools: [5, 1, 1],
            freq_pools: [4, 4, 2],
            rnn_units: 128,
            rnn_layers: 2,
            fc_units: 128,
            n_mels: crate::features::N_MELS,
        }
    }

    /// Desk-scale defaults: 16 filters, smaller recurrent state.
    pub fn desk(n_input_channels: usize) -> Self {
        NetworkConfig {
            n_filters: 16,
            rnn_units: 32,
            fc_units: 32,
            ..NetworkConfig::baseline(n_input_channels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![7, 10, 17].contains(&self.n_input_channels) {
            return Err(SeldError::InvalidInput(format!(
                "n_input_channels must be 7, 10 or 17, got {}",
                self.n_input_channels
            )));
        }
        if self.ratio == 0 || self.n_filters % self.ratio != 0 {
            return Err(SeldError::InvalidInput(format!(
                "ratio {} must divide n_filters {}",
                self.ratio, self.n_filters
            )));
        }
        let freq_out = self.freq_pools.iter().product::<usize>();
        if freq_out == 0 || self.n_mels % freq_out != 0 {
            return Err(SeldError::InvalidInput(format!(
                "freq pools {:?} must divide n_mels {}",
                self.freq_pools, self.n_mels
            )));
        }
        if self.rnn_layers == 0 {
            return Err(SeldError::InvalidInput("need at least one GRU layer".into()));
        }
        Ok(())
    }

    /// Feature frames consumed per label frame.
    pub fn time_pool_product(&self) -> usize {
        self.time_pools.iter().product()
    }

    /// Flattened channel*freq dimension entering the recurrent stack.
    pub fn rnn_input_dim(&self) -> usize {
        self.n_filters * (self.n_mels / self.freq_pools.iter().product::<usize>())
    }
}

/// The full network. Parameter traversal order is fixed by field order,
/// which defines the flattened index space used for gradient checking and
/// checkpointing.
#[derive(Debug, Clone)]
pub struct SeldNet {
    pub cfg: NetworkConfig,
    pub blocks: Vec<ConvStandardPost>,
    pools: Vec<MaxPool2d>,
    pub grus: Vec<BiGru>,
    pub fc1: Dense,
    pub fc_out: Dense,
    cache: Option<NetCache>,
}

struct NetCache {
    batch: usize,
    label_frames: usize,
    pre_tanh: Array2<f64>,
    fc1_rows: usize,
}

impl std::fmt::Debug for NetCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NetCache").finish_non_exhaustive()
    }
}

impl Clone for NetCache {
    fn clone(&self) -> Self {
        NetCache {
            batch: self.batch,
            label_frames: self.label_frames,
            pre_tanh: self.pre_tanh.clone(),
            fc1_rows: self.fc1_rows,
        }
    }
}

impl SeldNet {
    pub fn new(cfg: NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(3);
        let mut in_ch = cfg.n_input_channels;
        for _ in 0..3 {
            blocks.push(ConvStandardPost::new(in_ch, cfg.n_filters, cfg.ratio, &mut rng));
            in_ch = cfg.n_filters;
        }
        let pools = (0..3)
            .map(|i| MaxPool2d::new(cfg.time_pools[i], cfg.freq_pools[i]))
            .collect();
        let mut grus = Vec::with_capacity(cfg.rnn_layers);
        let mut rnn_in = cfg.rnn_input_dim();
        for _ in 0..cfg.rnn_layers {
            grus.push(BiGru::new(cfg.rnn_units, rnn_in, &mut rng));
            rnn_in = 2 * cfg.rnn_units;
        }
        let fc1 = Dense::new(cfg.fc_units, rnn_in, &mut rng);
        let fc_out = Dense::new(3 * cfg.num_classes, cfg.fc_units, &mut rng);
        Ok(SeldNet {
            cfg,
            blocks,
            pools,
            grus,
            fc1,
            fc_out,
            cache: None,
        })
    }

    /// Forward pass. Input: batch x channels x feature-frames x mels.
    /// Output: batch x label-frames x K x 3, all values in (-1, 1).
    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Result<Array4<f64>> {
        let (batch, ch, t_in, f_in) = x.dim();
        if ch != self.cfg.n_input_channels {
            return Err(SeldError::ShapeMismatch(format!(
                "network expects {} input channels, got {ch}",
                self.cfg.n_input_channels
            )));
        }
        if f_in != self.cfg.n_mels {
            return Err(SeldError::ShapeMismatch(format!(
                "network expects {} mel bands, got {f_in}",
                self.cfg.n_mels
            )));
        }
        if t_in % self.cfg.time_pool_product() != 0 {
            return Err(SeldError::ShapeMismatch(format!(
                "frame count {t_in} not divisible by time pooling {}",
                self.cfg.time_pool_product()
            )));
        }

        let mut h = x.clone();
        for i in 0..3 {
            h = self.blocks[i].forward(&h, mode);
            h = self.pools[i].forward(&h);
        }
        let (_, c_out, t_out, f_out) = h.dim();

        // collapse (channels, freq) per time step: batch x time x (c*f)
        let mut seq = Array3::zeros((batch, t_out, c_out * f_out));
        for b in 0..batch {
            for t in 0..t_out {
                for c in 0..c_out {
                    for f in 0..f_out {
                        seq[[b, t, c * f_out + f]] = h[[b, c, t, f]];
                    }
                }
            }
        }

        for gru in &mut self.grus {
            seq = gru.forward(&seq);
        }

        // time-distributed dense layers
        let rows = batch * t_out;
        let dim = seq.dim().2;
        let flat = seq
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, dim))
            .expect("standard-layout sequence");
        let hidden = self.fc1.forward(&flat);
        let pre_tanh = self.fc_out.forward(&hidden);
        let out_flat = pre_tanh.mapv(f64::tanh);

        let k = self.cfg.num_classes;
        let mut out = Array4::zeros((batch, t_out, k, 3));
        for b in 0..batch {
            for t in 0..t_out {
                let row = b * t_out + t;
                for c in 0..k {
                    for a in 0..3 {
                        out[[b, t, c, a]] = out_flat[[row, 3 * c + a]];
                    }
                }
            }
        }
        self.cache = Some(NetCache {
            batch,
            label_frames: t_out,
            pre_tanh,
            fc1_rows: rows,
        });
        Ok(out)
    }

    /// Backward pass from the loss gradient on the ACCDOA output.
    pub fn backward(&mut self, dout: &Array4<f64>) -> Array4<f64> {
        let NetCache {
            batch,
            label_frames,
            pre_tanh,
            fc1_rows,
        } = self.cache.take().expect("forward before backward");
        let k = self.cfg.num_classes;

        let mut dflat = Array2::zeros((fc1_rows, 3 * k));
        for b in 0..batch {
            for t in 0..label_frames {
                let row = b * label_frames + t;
                for c in 0..k {
                    for a in 0..3 {
                        dflat[[row, 3 * c + a]] = dout[[b, t, c, a]];
                    }
                }
            }
        }
        // through tanh
        let dpre = &dflat * &pre_tanh.mapv(|v| 1.0 - v.tanh() * v.tanh());
        let dhidden = self.fc_out.backward(&dpre);
        let dseq_flat = self.fc1.backward(&dhidden);

        let dim = dseq_flat.dim().1;
        let mut dseq = dseq_flat
            .into_shape_with_order((batch, label_frames, dim))
            .expect("contiguous");
        for gru in self.grus.iter_mut().rev() {
            dseq = gru.backward(&dseq);
        }

        // un-collapse into batch x channels x time x freq
        let c_out = self.cfg.n_filters;
        let f_out = self.cfg.n_mels / self.cfg.freq_pools.iter().product::<usize>();
        let mut dh = Array4::zeros((batch, c_out, label_frames, f_out));
        for b in 0..batch {
            for t in 0..label_frames {
                for c in 0..c_out {
                    for f in 0..f_out {
                        dh[[b, c, t, f]] = dseq[[b, t, c * f_out + f]];
                    }
                }
            }
        }

        let mut d = dh;
        for i in (0..3).rev() {
            d = self.pools[i].backward(&d);
            d = self.blocks[i].backward(&d);
        }
        d
    }

    /// Inference on a single feature tensor (channels x frames x mels),
    /// trimming trailing frames that do not fill a label frame.
    pub fn infer(&mut self, features: &Array3<f64>) -> Result<Array3<f64>> {
        let (ch, t, f) = features.dim();
        let tp = self.cfg.time_pool_product();
        let t_use = (t / tp) * tp;
        if t_use == 0 {
            return Err(SeldError::InvalidInput(format!(
                "too few frames ({t}) for time pooling {tp}"
            )));
        }
        let mut x = Array4::zeros((1, ch, t_use, f));
        for c in 0..ch {
            for ti in 0..t_use {
                for fi in 0..f {
                    x[[0, c, ti, fi]] = features[[c, ti, fi]];
                }
            }
        }
        let y = self.forward(&x, Mode::Eval)?;
        self.cache = None;
        Ok(y.index_axis(Axis(0), 0).to_owned())
    }
}

impl ParamSet for SeldNet {
    fn visit(&mut self, prefix: &str, v: &mut dyn ParamVisitor) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit(&join(prefix, &format!("block{i}")), v);
        }
        for (i, gru) in self.grus.iter_mut().enumerate() {
            gru.visit(&join(prefix, &format!("gru{i}")), v);
        }
        self.fc1.visit(&join(prefix, "fc1"), v);
        self.fc_out.visit(&join(prefix, "fc_out"), v);
    }

    fn visit_state(&mut self, prefix: &str, v: &mut dyn StateVisitor) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit_state(&join(prefix, &format!("block{i}")), v);
        }
    }
}
