//! On-disk corpus generation: WAV scenes + metadata CSVs + fold manifest.

use super::metadata::write_metadata;
use super::synth::{
    class_band_hz, synth_scene_foa, synth_scene_mic, ArrayGeometry, SceneEvent, SceneSpec,
    SourceKind,
};
use super::{make_folds, Stage};
use crate::accdoa::DEFAULT_NUM_CLASSES;
use crate::{par, Result, SeldError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Which audio format(s) each scene is rendered to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Foa,
    Mic,
    Both,
}

impl std::str::FromStr for CorpusFormat {
    type Err = SeldError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "foa" => Ok(CorpusFormat::Foa),
            "mic" => Ok(CorpusFormat::Mic),
            "both" => Ok(CorpusFormat::Both),
            other => Err(SeldError::InvalidInput(format!(
                "unknown corpus format '{other}' (expected foa|mic|both)"
            ))),
        }
    }
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub n_scenes: usize,
    pub fold_count: usize,
    pub duration_s: f64,
    pub max_events_per_scene: usize,
    pub num_classes: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub format: CorpusFormat,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_scenes: 80,
            fold_count: 8,
            duration_s: 10.0,
            max_events_per_scene: 2,
            num_classes: DEFAULT_NUM_CLASSES,
            snr_db: 30.0,
            seed: 7,
            format: CorpusFormat::Foa,
        }
    }
}

/// Maps each scene basename to its fold index (folds are 1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub entries: Vec<(String, usize)>,
}

impl CorpusManifest {
    pub const FILE_NAME: &'static str = "fold_manifest.csv";

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(Self::FILE_NAME);
        let display = path.display().to_string();
        let mut f = std::fs::File::create(&path).map_err(|e| SeldError::io(&display, e))?;
        for (name, fold) in &self.entries {
            writeln!(f, "{name},{fold}").map_err(|e| SeldError::io(&display, e))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE_NAME);
        let display = path.display().to_string();
        let text = std::fs::read_to_string(&path).map_err(|e| SeldError::io(&display, e))?;
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (name, fold) = line.split_once(',').ok_or_else(|| SeldError::Parse {
                line: idx + 1,
                msg: "expected 'filename,fold_index'".into(),
            })?;
            let fold = fold.trim().parse::<usize>().map_err(|_| SeldError::Parse {
                line: idx + 1,
                msg: format!("fold index '{fold}' is not an integer"),
            })?;
            entries.push((name.trim().to_string(), fold));
        }
        Ok(CorpusManifest { entries })
    }

    /// Basenames belonging to the given stage split.
    pub fn split(&self, stage: Stage) -> (Vec<String>, Vec<String>, Vec<String>) {
        let folds = make_folds(stage);
        let pick = |set: &std::collections::BTreeSet<usize>| {
            self.entries
                .iter()
                .filter(|(_, f)| set.contains(f))
                .map(|(n, _)| n.clone())
                .collect::<Vec<_>>()
        };
        (
            pick(&folds.train_folds),
            pick(&folds.val_folds),
            pick(&folds.test_folds),
        )
    }
}

/// Draw a random scene description. Every event is a noise burst confined
/// to its class band so classes stay identifiable from timbre alone.
pub fn random_scene_spec(cfg: &GeneratorConfig, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_events = rng.random_range(1..=cfg.max_events_per_scene);
    let events = (0..n_events)
        .map(|_| {
            let class_index = rng.random_range(0..cfg.num_classes);
            let onset = rng.random_range(0.0..cfg.duration_s * 0.5);
            let max_len = (cfg.duration_s - onset).min(cfg.duration_s * 0.6);
            let len = rng.random_range((0.5 * max_len).max(0.4)..=max_len);
            let (lo, hi) = class_band_hz(class_index);
            SceneEvent {
                class_index,
                onset_s: onset,
                offset_s: (onset + len).min(cfg.duration_s),
                azimuth_deg: rng.random_range(-180..180) as f64,
                elevation_deg: rng.random_range(-60..=60) as f64,
                source_kind: SourceKind::NoiseBurst {
                    band_lo_hz: lo,
                    band_hi_hz: hi,
                },
                snr_db: cfg.snr_db,
            }
        })
        .collect();
    SceneSpec {
        duration_s: cfg.duration_s,
        events,
        seed,
    }
}

fn scene_seed(master: u64, index: usize) -> u64 {
    // splitmix-style spread so per-scene streams are independent
    let mut z = master ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn scene_basename(index: usize) -> String {
    format!("scene_{index:04}")
}

pub fn foa_wav_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.foa.wav"))
}

pub fn mic_wav_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.mic.wav"))
}

pub fn metadata_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.csv"))
}

/// Generate a corpus on disk: one (or two) WAVs and one metadata CSV per
/// scene plus a `fold_manifest.csv`. Reproducible from the config seed;
/// scene `i` lands in fold `(i % fold_count) + 1`.
pub fn make_corpus(cfg: &GeneratorConfig, out_dir: &Path) -> Result<CorpusManifest> {
    if cfg.n_scenes == 0 {
        return Err(SeldError::InvalidInput("n_scenes must be positive".into()));
    }
    if cfg.fold_count == 0 {
        return Err(SeldError::InvalidInput("fold_count must be positive".into()));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| SeldError::io(out_dir.display().to_string(), e))?;
    let geom = ArrayGeometry::default();

    let results: Vec<Result<()>> = par::map_indexed(cfg.n_scenes, |i| {
        let name = scene_basename(i);
        let spec = random_scene_spec(cfg, scene_seed(cfg.seed, i));
        let mut labels = None;
        if matches!(cfg.format, CorpusFormat::Foa | CorpusFormat::Both) {
            let (clip, ev) = synth_scene_foa(&spec)?;
            super::wav::write_wav(&foa_wav_path(out_dir, &name), &clip)?;
            labels = Some(ev);
        }
        if matches!(cfg.format, CorpusFormat::Mic | CorpusFormat::Both) {
            let (clip, ev) = synth_scene_mic(&spec, &geom)?;
            super::wav::write_wav(&mic_wav_path(out_dir, &name), &clip)?;
            labels.get_or_insert(ev);
        }
        write_metadata(&labels.expect("at least one format"), &metadata_path(out_dir, &name))
    });
    for r in results {
        r?;
    }

    let manifest = CorpusManifest {
        entries: (0..cfg.n_scenes)
            .map(|i| (scene_basename(i), (i % cfg.fold_count) + 1))
            .collect(),
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}
