//! Short-time Fourier transform and mel filterbank construction.

use crate::{Result, SeldError};
use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

/// Window function; only Hann is used by this pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
}

/// STFT analysis parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub window_size: usize,
    pub hop_size: usize,
    pub window_kind: WindowKind,
}

impl StftConfig {
    pub fn new(fft_size: usize, window_size: usize, hop_size: usize) -> Result<Self> {
        if window_size > fft_size {
            return Err(SeldError::InvalidInput(format!(
                "window_size {window_size} exceeds fft_size {fft_size}"
            )));
        }
        if hop_size == 0 || hop_size > window_size {
            return Err(SeldError::InvalidInput(format!(
                "hop_size {hop_size} must be in 1..={window_size}"
            )));
        }
        Ok(StftConfig {
            fft_size,
            window_size,
            hop_size,
            window_kind: WindowKind::Hann,
        })
    }

    /// DCASE-style defaults at 24 kHz: 1024 FFT, 40 ms window, 20 ms hop.
    pub fn default_24k() -> Self {
        StftConfig::new(1024, 960, 480).expect("valid constants")
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.window_size {
            0
        } else {
            (n_samples - self.window_size) / self.hop_size + 1
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// One-sided STFT of a single channel: frames x (fft_size/2 + 1).
///
/// Frame `t` covers samples `[t*hop, t*hop + window)`.
pub fn stft(samples: &[f64], cfg: &StftConfig) -> Result<Array2<Complex<f64>>> {
    if samples.len() < cfg.window_size {
        return Err(SeldError::InvalidInput(format!(
            "input of {} samples is shorter than one window ({})",
            samples.len(),
            cfg.window_size
        )));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(SeldError::NonFinite("stft input".into()));
    }
    let window = hann_window(cfg.window_size);
    let n_frames = cfg.n_frames(samples.len());
    let n_bins = cfg.n_bins();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);

    let mut out = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for t in 0..n_frames {
        let start = t * cfg.hop_size;
        for i in 0..cfg.fft_size {
            buf[i] = if i < cfg.window_size {
                Complex::new(samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            out[[t, k]] = buf[k];
        }
    }
    Ok(out)
}

/// Triangular mel filterbank, HTK mel scale, spanning 0 Hz to Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub sample_rate: u32,
    pub fft_size: usize,
    /// n_mels x (fft_size/2 + 1), all weights >= 0.
    pub weights: Array2<f64>,
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl MelFilterbank {
    pub fn new(n_mels: usize, sample_rate: u32, fft_size: usize) -> Result<Self> {
        if n_mels == 0 || sample_rate == 0 || fft_size == 0 {
            return Err(SeldError::InvalidInput(
                "mel filterbank dimensions must be positive".into(),
            ));
        }
        let n_bins = fft_size / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        // n_mels + 2 edge points, uniformly spaced on the mel scale
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;

        let mut weights = Array2::zeros((n_mels, n_bins));
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                weights[[m, k]] = w;
            }
        }
        Ok(MelFilterbank {
            n_mels,
            sample_rate,
            fft_size,
            weights,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// Log mel-band power: `out[t, m] = ln(sum_k fb[m, k] |spec[t, k]|^2 + floor)`.
pub fn logmel(spec: &Array2<Complex<f64>>, fb: &MelFilterbank, floor: f64) -> Result<Array2<f64>> {
    let (n_frames, n_bins) = spec.dim();
    if n_bins != fb.n_bins() {
        return Err(SeldError::ShapeMismatch(format!(
            "spectrogram has {n_bins} bins, filterbank expects {}",
            fb.n_bins()
        )));
    }
    let mut out = Array2::zeros((n_frames, fb.n_mels));
    for t in 0..n_frames {
        for m in 0..fb.n_mels {
            let mut acc = 0.0;
            for k in 0..n_bins {
                let w = fb.weights[[m, k]];
                if w > 0.0 {
                    acc += w * spec[[t, k]].norm_sqr();
                }
            }
            out[[t, m]] = (acc + floor).ln();
        }
    }
    Ok(out)
}
