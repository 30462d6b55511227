//! GCC-PHAT: generalized cross-correlation with phase transform.

use crate::{Result, SeldError};
use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

/// Cross-spectrum bins below this magnitude are zeroed instead of
/// PHAT-normalized.
pub const PHAT_GUARD: f64 = 1e-12;

/// Per-frame GCC-PHAT between two one-sided spectrograms.
///
/// `n_lags` must be odd; the output columns hold the center lags ordered
/// `[-(n_lags-1)/2, ..., +(n_lags-1)/2]`. Sign convention: a positive lag
/// peak means channel `j` lags channel `i` (j received the signal later).
pub fn gcc_phat_pair(
    spec_i: &Array2<Complex<f64>>,
    spec_j: &Array2<Complex<f64>>,
    n_lags: usize,
) -> Result<Array2<f64>> {
    if spec_i.dim() != spec_j.dim() {
        return Err(SeldError::ShapeMismatch(format!(
            "spectrogram shapes differ: {:?} vs {:?}",
            spec_i.dim(),
            spec_j.dim()
        )));
    }
    if n_lags % 2 == 0 {
        return Err(SeldError::InvalidInput(format!(
            "n_lags must be odd, got {n_lags}"
        )));
    }
    let (n_frames, n_bins) = spec_i.dim();
    let fft_size = (n_bins - 1) * 2;
    let max_lag = (n_lags - 1) / 2;
    if max_lag >= fft_size / 2 {
        return Err(SeldError::InvalidInput(format!(
            "n_lags {n_lags} too large for fft size {fft_size}"
        )));
    }

    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(fft_size);
    let mut out = Array2::zeros((n_frames, n_lags));
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    for t in 0..n_frames {
        for k in 0..n_bins {
            let r = spec_i[[t, k]].conj() * spec_j[[t, k]];
            let mag = r.norm();
            buf[k] = if mag < PHAT_GUARD {
                Complex::new(0.0, 0.0)
            } else {
                r / mag
            };
        }
        // Hermitian mirror for a real lag-domain result
        for k in 1..n_bins - 1 {
            buf[fft_size - k] = buf[k].conj();
        }
        ifft.process(&mut buf);
        for (col, lag) in (-(max_lag as isize)..=max_lag as isize).enumerate() {
            let idx = lag.rem_euclid(fft_size as isize) as usize;
            out[[t, col]] = buf[idx].re / fft_size as f64;
        }
    }
    Ok(out)
}
