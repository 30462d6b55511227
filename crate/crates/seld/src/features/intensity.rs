//! First-order ambisonic acoustic intensity features.

use super::stft::MelFilterbank;
use crate::{Result, SeldError};
use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex;

/// Relative floor added to the per-band norm when normalizing.
pub const INTENSITY_GUARD: f64 = 1e-8;

/// Mel-band active intensity vectors from the four FOA spectrograms
/// (ACN order W, X, Y, Z; SN3D normalization).
///
/// Per TF bin the active intensity is `Re(conj(W) * [X, Y, Z])`. Each
/// Cartesian component is aggregated over mel bands, then every band's
/// 3-vector is divided by its norm plus a fraction of the band energy so
/// outputs land in [-1, 1]. Output shape: 3 x frames x n_mels.
pub fn foa_intensity(
    spec_w: &Array2<Complex<f64>>,
    spec_x: &Array2<Complex<f64>>,
    spec_y: &Array2<Complex<f64>>,
    spec_z: &Array2<Complex<f64>>,
    fb: &MelFilterbank,
) -> Result<Array3<f64>> {
    let dim = spec_w.dim();
    for (name, s) in [("X", spec_x), ("Y", spec_y), ("Z", spec_z)] {
        if s.dim() != dim {
            return Err(SeldError::ShapeMismatch(format!(
                "FOA channel {name} shape {:?} differs from W {:?}",
                s.dim(),
                dim
            )));
        }
    }
    let (n_frames, n_bins) = dim;
    if n_bins != fb.n_bins() {
        return Err(SeldError::ShapeMismatch(format!(
            "spectrogram has {n_bins} bins, filterbank expects {}",
            fb.n_bins()
        )));
    }

    let mut out = Array3::zeros((3, n_frames, fb.n_mels));
    for t in 0..n_frames {
        for m in 0..fb.n_mels {
            let mut ivec = [0.0f64; 3];
            let mut energy = 0.0;
            for k in 0..n_bins {
                let w = fb.weights[[m, k]];
                if w == 0.0 {
                    continue;
                }
                let cw = spec_w[[t, k]].conj();
                ivec[0] += w * (cw * spec_x[[t, k]]).re;
                ivec[1] += w * (cw * spec_y[[t, k]]).re;
                ivec[2] += w * (cw * spec_z[[t, k]]).re;
                energy += w
                    * (spec_w[[t, k]].norm_sqr()
                        + spec_x[[t, k]].norm_sqr()
                        + spec_y[[t, k]].norm_sqr()
                        + spec_z[[t, k]].norm_sqr());
            }
            let norm = (ivec[0] * ivec[0] + ivec[1] * ivec[1] + ivec[2] * ivec[2]).sqrt();
            let denom = norm + energy * INTENSITY_GUARD;
            if denom > 0.0 {
                for c in 0..3 {
                    out[[c, t, m]] = ivec[c] / denom;
                }
            }
        }
    }
    Ok(out)
}
