//! Glue between the on-disk corpus and the network: feature extraction per
//! scene, feature-file naming, and assembling normalized training samples
//! with ACCDOA targets.

use super::corpus::{foa_wav_path, metadata_path, mic_wav_path};
use super::metadata::read_metadata;
use super::wav::read_wav;
use crate::accdoa::{self, EventList};
use crate::features::{
    concat_foa_mic, extract_features, ChannelStats, FeatureTensor, FormatTag, MelFilterbank,
    SourceTag, StftConfig, N_MELS, SAMPLE_RATE,
};
use crate::nn::train::TrainSample;
use crate::{par, Result, SeldError};
use ndarray::Array3;
use std::path::{Path, PathBuf};

/// Feature frames per label frame: 50 Hz feature rate onto the 10 Hz
/// label rate.
pub const FRAMES_PER_LABEL: usize = 5;

pub fn source_tag_from_str(s: &str) -> Result<SourceTag> {
    match s {
        "mic" => Ok(SourceTag::Mic),
        "foa" => Ok(SourceTag::Foa),
        "foa-mic" | "foamic" => Ok(SourceTag::FoaMic),
        other => Err(SeldError::InvalidInput(format!(
            "unknown feature format '{other}' (expected mic|foa|foa-mic)"
        ))),
    }
}

fn tag_suffix(tag: SourceTag) -> &'static str {
    match tag {
        SourceTag::Mic => "mic",
        SourceTag::Foa => "foa",
        SourceTag::FoaMic => "foamic",
    }
}

pub fn feature_path(dir: &Path, name: &str, tag: SourceTag) -> PathBuf {
    dir.join(format!("{name}.{}.ft", tag_suffix(tag)))
}

/// Extract the requested feature tensor for one scene from its WAV(s).
pub fn extract_scene(dir: &Path, name: &str, tag: SourceTag) -> Result<FeatureTensor> {
    let cfg = StftConfig::default_24k();
    let fb = MelFilterbank::new(N_MELS, SAMPLE_RATE, cfg.fft_size)?;
    let foa = || -> Result<FeatureTensor> {
        let clip = read_wav(&foa_wav_path(dir, name), FormatTag::Foa)?;
        extract_features(&clip, &cfg, &fb)
    };
    let mic = || -> Result<FeatureTensor> {
        let clip = read_wav(&mic_wav_path(dir, name), FormatTag::Mic4)?;
        extract_features(&clip, &cfg, &fb)
    };
    match tag {
        SourceTag::Foa => foa(),
        SourceTag::Mic => mic(),
        SourceTag::FoaMic => concat_foa_mic(&foa()?, &mic()?),
    }
}

/// ACCDOA target for a clip spanning `n_label_frames`. Records beyond the
/// last full label frame (the clip tail lost to STFT framing) are dropped.
pub fn target_from_events(
    events: &EventList,
    n_label_frames: usize,
    num_classes: usize,
) -> Result<Array3<f64>> {
    let kept = EventList::new(
        events
            .records
            .iter()
            .copied()
            .filter(|r| r.frame_index < n_label_frames)
            .collect(),
    );
    let frames = accdoa::encode(&kept, n_label_frames, num_classes)?;
    let mut out = Array3::zeros((n_label_frames, num_classes, 3));
    for (f, frame) in frames.iter().enumerate() {
        for (k, v) in frame.vectors.iter().enumerate() {
            for a in 0..3 {
                out[[f, k, a]] = v[a];
            }
        }
    }
    Ok(out)
}

/// Build one training sample from an extracted feature tensor plus the
/// scene metadata, normalizing with `stats` and trimming the feature
/// frames to whole label frames.
pub fn sample_from_tensor(
    dir: &Path,
    name: &str,
    mut tensor: FeatureTensor,
    stats: &ChannelStats,
    num_classes: usize,
) -> Result<TrainSample> {
    stats.apply(&mut tensor)?;
    let (ch, t, f) = tensor.data.dim();
    let n_label = t / FRAMES_PER_LABEL;
    if n_label == 0 {
        return Err(SeldError::InvalidInput(format!(
            "scene {name}: {t} feature frames is less than one label frame"
        )));
    }
    let t_use = n_label * FRAMES_PER_LABEL;
    let mut features = Array3::zeros((ch, t_use, f));
    features.assign(&tensor.data.slice(ndarray::s![.., ..t_use, ..]));

    let events = read_metadata(&metadata_path(dir, name))?;
    let target = target_from_events(&events, n_label, num_classes)?;
    Ok(TrainSample { features, target })
}

/// Load pre-extracted feature files for the given scenes into samples, in
/// parallel when the `parallel` feature is enabled.
pub fn load_samples(
    dir: &Path,
    names: &[String],
    tag: SourceTag,
    stats: &ChannelStats,
    num_classes: usize,
) -> Result<Vec<TrainSample>> {
    par::map_indexed(names.len(), |i| {
        let name = &names[i];
        let tensor = crate::io::read_features(&feature_path(dir, name, tag))?;
        sample_from_tensor(dir, name, tensor, stats, num_classes)
    })
    .into_iter()
    .collect()
}

/// Channel statistics over pre-extracted feature files (training folds).
pub fn stats_over_files(dir: &Path, names: &[String], tag: SourceTag) -> Result<ChannelStats> {
    let tensors: Result<Vec<FeatureTensor>> = names
        .iter()
        .map(|n| crate::io::read_features(&feature_path(dir, n, tag)))
        .collect();
    ChannelStats::compute(&tensors?)
}
