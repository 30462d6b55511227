//! Multichannel spatial-audio feature extraction.
//!
//! Two front-ends share one time-frequency layout (frames x mel bands):
//!
//! * MIC (4-channel array recording): 4 log-mel maps + 6 GCC-PHAT maps,
//!   one per microphone pair in lexicographic order = 10 channels.
//! * FOA (first-order ambisonics, ACN/SN3D): 4 log-mel maps + 3 intensity
//!   maps = 7 channels.
//!
//! Concatenating both extractions of the same scene gives the 17-channel
//! FOA-MIC tensor.

mod gcc;
mod intensity;
mod stft;

pub use gcc::{gcc_phat_pair, PHAT_GUARD};
pub use intensity::{foa_intensity, INTENSITY_GUARD};
pub use stft::{hann_window, logmel, stft, MelFilterbank, StftConfig, WindowKind};

use crate::{Result, SeldError};
use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex;

/// Pipeline sample rate; other rates are rejected at the WAV boundary.
pub const SAMPLE_RATE: u32 = 24_000;
/// Mel bands per feature map (and GCC lag columns after padding).
pub const N_MELS: usize = 64;
/// Additive floor on mel power before the log.
pub const LOG_FLOOR: f64 = 1e-10;

/// Microphone pairs for the 6 GCC-PHAT maps, in fixed lexicographic order.
pub const MIC_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Input audio format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatTag {
    /// Raw 4-channel microphone array.
    Mic4,
    /// First-order ambisonics, channels ordered (W, X, Y, Z).
    Foa,
}

/// A multichannel audio clip.
#[derive(Debug, Clone)]
pub struct AudioClip {
    /// channels x time.
    pub samples: Array2<f64>,
    pub sample_rate: u32,
    pub format_tag: FormatTag,
}

impl AudioClip {
    pub fn new(samples: Array2<f64>, sample_rate: u32, format_tag: FormatTag) -> Result<Self> {
        if samples.dim().0 != 4 {
            return Err(SeldError::InvalidInput(format!(
                "{format_tag:?} clip must have exactly 4 channels, got {}",
                samples.dim().0
            )));
        }
        if sample_rate == 0 {
            return Err(SeldError::InvalidInput("sample_rate must be positive".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
            format_tag,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.dim().1
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.row(c).to_vec()
    }
}

/// Which front-end produced a feature tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceTag {
    Mic,
    Foa,
    FoaMic,
}

impl SourceTag {
    pub fn n_channels(self) -> usize {
        match self {
            SourceTag::Mic => 10,
            SourceTag::Foa => 7,
            SourceTag::FoaMic => 17,
        }
    }

    pub fn to_u8(self) -> u8 {
        match self {
            SourceTag::Mic => 0,
            SourceTag::Foa => 1,
            SourceTag::FoaMic => 2,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(SourceTag::Mic),
            1 => Ok(SourceTag::Foa),
            2 => Ok(SourceTag::FoaMic),
            _ => Err(SeldError::InvalidInput(format!("unknown source tag {v}"))),
        }
    }
}

/// Stacked 2-D feature maps: feature_channels x frames x n_mels.
#[derive(Debug, Clone)]
pub struct FeatureTensor {
    pub data: Array3<f64>,
    pub source_tag: SourceTag,
}

impl FeatureTensor {
    pub fn new(data: Array3<f64>, source_tag: SourceTag) -> Result<Self> {
        if data.dim().0 != source_tag.n_channels() {
            return Err(SeldError::ShapeMismatch(format!(
                "{source_tag:?} features must have {} channels, got {}",
                source_tag.n_channels(),
                data.dim().0
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SeldError::NonFinite("feature tensor".into()));
        }
        Ok(FeatureTensor { data, source_tag })
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_frames(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_mels(&self) -> usize {
        self.data.dim().2
    }
}

fn stft_all_channels(clip: &AudioClip, cfg: &StftConfig) -> Result<Vec<Array2<Complex<f64>>>> {
    (0..4).map(|c| stft(&clip.channel(c), cfg)).collect()
}

/// Number of GCC lags used before padding to `n_mels` columns: the largest
/// odd count not exceeding `n_mels`.
fn gcc_lag_count(n_mels: usize) -> usize {
    if n_mels % 2 == 0 {
        n_mels - 1
    } else {
        n_mels
    }
}

/// Extract the feature tensor for a clip: 10 channels for MIC, 7 for FOA.
pub fn extract_features(
    clip: &AudioClip,
    cfg: &StftConfig,
    fb: &MelFilterbank,
) -> Result<FeatureTensor> {
    let specs = stft_all_channels(clip, cfg)?;
    let n_frames = specs[0].dim().0;
    let n_mels = fb.n_mels;

    match clip.format_tag {
        FormatTag::Mic4 => {
            let mut data = Array3::zeros((10, n_frames, n_mels));
            for (c, spec) in specs.iter().enumerate() {
                let lm = logmel(spec, fb, LOG_FLOOR)?;
                data.index_axis_mut(ndarray::Axis(0), c).assign(&lm);
            }
            let n_lags = gcc_lag_count(n_mels);
            for (p, &(i, j)) in MIC_PAIRS.iter().enumerate() {
                let g = gcc_phat_pair(&specs[i], &specs[j], n_lags)?;
                let mut plane = data.index_axis_mut(ndarray::Axis(0), 4 + p);
                for t in 0..n_frames {
                    for l in 0..n_lags {
                        plane[[t, l]] = g[[t, l]];
                    }
                    // columns n_lags..n_mels stay zero-padded
                }
            }
            FeatureTensor::new(data, SourceTag::Mic)
        }
        FormatTag::Foa => {
            let mut data = Array3::zeros((7, n_frames, n_mels));
            for (c, spec) in specs.iter().enumerate() {
                let lm = logmel(spec, fb, LOG_FLOOR)?;
                data.index_axis_mut(ndarray::Axis(0), c).assign(&lm);
            }
            let iv = foa_intensity(&specs[0], &specs[1], &specs[2], &specs[3], fb)?;
            for c in 0..3 {
                data.index_axis_mut(ndarray::Axis(0), 4 + c)
                    .assign(&iv.index_axis(ndarray::Axis(0), c));
            }
            FeatureTensor::new(data, SourceTag::Foa)
        }
    }
}

/// Stack the FOA and MIC extractions of one scene into the 17-channel
/// FOA-MIC tensor (FOA channels first).
pub fn concat_foa_mic(foa: &FeatureTensor, mic: &FeatureTensor) -> Result<FeatureTensor> {
    if foa.source_tag != SourceTag::Foa || mic.source_tag != SourceTag::Mic {
        return Err(SeldError::InvalidInput(
            "concat_foa_mic expects (FOA, MIC) tensors in that order".into(),
        ));
    }
    if foa.n_frames() != mic.n_frames() || foa.n_mels() != mic.n_mels() {
        return Err(SeldError::ShapeMismatch(format!(
            "FOA {:?} vs MIC {:?}",
            foa.data.dim(),
            mic.data.dim()
        )));
    }
    let mut data = Array3::zeros((17, foa.n_frames(), foa.n_mels()));
    for c in 0..7 {
        data.index_axis_mut(ndarray::Axis(0), c)
            .assign(&foa.data.index_axis(ndarray::Axis(0), c));
    }
    for c in 0..10 {
        data.index_axis_mut(ndarray::Axis(0), 7 + c)
            .assign(&mic.data.index_axis(ndarray::Axis(0), c));
    }
    FeatureTensor::new(data, SourceTag::FoaMic)
}

/// Per-feature-channel standardization statistics, computed on training
/// folds and stored alongside checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Identity statistics (mean 0, std 1) for `n` channels.
    pub fn identity(n: usize) -> Self {
        ChannelStats {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Compute per-channel mean and standard deviation over a set of
    /// tensors (all elements of a channel pooled across tensors).
    pub fn compute(tensors: &[FeatureTensor]) -> Result<Self> {
        let first = tensors
            .first()
            .ok_or_else(|| SeldError::InvalidInput("no tensors for stats".into()))?;
        let n_ch = first.n_channels();
        let mut sum = vec![0.0; n_ch];
        let mut sum_sq = vec![0.0; n_ch];
        let mut count = vec![0usize; n_ch];
        for t in tensors {
            if t.n_channels() != n_ch {
                return Err(SeldError::ShapeMismatch(
                    "channel count differs across tensors".into(),
                ));
            }
            for c in 0..n_ch {
                for &v in t.data.index_axis(ndarray::Axis(0), c).iter() {
                    sum[c] += v;
                    sum_sq[c] += v * v;
                    count[c] += 1;
                }
            }
        }
        let mean: Vec<f64> = (0..n_ch).map(|c| sum[c] / count[c] as f64).collect();
        let std = (0..n_ch)
            .map(|c| {
                let var = sum_sq[c] / count[c] as f64 - mean[c] * mean[c];
                var.max(1e-12).sqrt()
            })
            .collect();
        Ok(ChannelStats { mean, std })
    }

    /// Standardize a tensor in place: `(x - mean) / std` per channel.
    pub fn apply(&self, tensor: &mut FeatureTensor) -> Result<()> {
        if tensor.n_channels() != self.mean.len() {
            return Err(SeldError::ShapeMismatch(format!(
                "stats cover {} channels, tensor has {}",
                self.mean.len(),
                tensor.n_channels()
            )));
        }
        for c in 0..self.mean.len() {
            let (m, s) = (self.mean[c], self.std[c]);
            tensor
                .data
                .index_axis_mut(ndarray::Axis(0), c)
                .mapv_inplace(|v| (v - m) / s);
        }
        Ok(())
    }
}
