//! RIFF/WAVE input and output for 4-channel 24 kHz clips.
//!
//! Accepts PCM 16-bit and 32-bit float; anything else (including other
//! sample rates, resampling is out of scope) is rejected.

use crate::features::{AudioClip, FormatTag, SAMPLE_RATE};
use crate::{Result, SeldError};
use ndarray::Array2;
use std::path::Path;

/// Read a 4-channel 24 kHz WAV file.
pub fn read_wav(path: &Path, format_tag: FormatTag) -> Result<AudioClip> {
    let display = path.display().to_string();
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| SeldError::corrupt(&display, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 4 {
        return Err(SeldError::UnsupportedAudio(format!(
            "{display}: expected 4 channels, found {}",
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(SeldError::UnsupportedAudio(format!(
            "{display}: expected {SAMPLE_RATE} Hz, found {} (resampling unsupported)",
            spec.sample_rate
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SeldError::corrupt(&display, e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SeldError::corrupt(&display, e.to_string()))?,
        (fmt, bits) => {
            return Err(SeldError::UnsupportedAudio(format!(
                "{display}: unsupported sample format {fmt:?}/{bits} bits"
            )))
        }
    };
    let n = interleaved.len() / 4;
    let samples = Array2::from_shape_fn((4, n), |(c, t)| interleaved[t * 4 + c]);
    AudioClip::new(samples, SAMPLE_RATE, format_tag)
}

/// Write a clip as 32-bit float WAV.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let display = path.display().to_string();
    let spec = hound::WavSpec {
        channels: 4,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| SeldError::corrupt(&display, e.to_string()))?;
    let n = clip.n_samples();
    for t in 0..n {
        for c in 0..4 {
            writer
                .write_sample(clip.samples[[c, t]] as f32)
                .map_err(|e| SeldError::corrupt(&display, e.to_string()))?;
        }
    }
    writer
        .finalize()
        .map_err(|e| SeldError::corrupt(&display, e.to_string()))?;
    Ok(())
}
