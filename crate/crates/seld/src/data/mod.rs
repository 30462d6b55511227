//! Synthetic spatial scenes with exactly known labels, metadata I/O and the
//! cross-validation fold protocol.
//!
//! The generator is the verification oracle for the whole pipeline: every
//! scene is rendered from a closed-form plane-wave model (ambisonic
//! encoding for FOA, fractional-delay propagation for the microphone
//! array), so the reference event list is exact by construction.

mod corpus;
pub mod dataset;
mod metadata;
mod synth;
mod wav;

pub use corpus::{
    foa_wav_path, make_corpus, metadata_path, mic_wav_path, scene_basename, CorpusFormat,
    CorpusManifest, GeneratorConfig,
};
pub use metadata::{read_metadata, write_metadata};
pub use synth::{
    class_band_hz, synth_scene_foa, synth_scene_mic, ArrayGeometry, SceneEvent, SceneSpec,
    SourceKind, SPEED_OF_SOUND,
};
pub use wav::{read_wav, write_wav};

use crate::{Result, SeldError};
use std::collections::BTreeSet;

/// Experiment stage from the challenge protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Development,
    Evaluation,
}

impl std::str::FromStr for Stage {
    type Err = SeldError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "development" | "dev" => Ok(Stage::Development),
            "evaluation" | "eval" => Ok(Stage::Evaluation),
            other => Err(SeldError::InvalidInput(format!("unknown stage '{other}'"))),
        }
    }
}

/// Which folds feed training, validation and testing for a stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub stage: Stage,
    pub train_folds: BTreeSet<usize>,
    pub val_folds: BTreeSet<usize>,
    pub test_folds: BTreeSet<usize>,
}

/// The fold protocol: development trains on folds 3-6, validates on 2 and
/// tests on 1; evaluation trains on 2-6, validates on 1 and tests on 7-8.
pub fn make_folds(stage: Stage) -> FoldAssignment {
    let set = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
    match stage {
        Stage::Development => FoldAssignment {
            stage,
            train_folds: set(&[3, 4, 5, 6]),
            val_folds: set(&[2]),
            test_folds: set(&[1]),
        },
        Stage::Evaluation => FoldAssignment {
            stage,
            train_folds: set(&[2, 3, 4, 5, 6]),
            val_folds: set(&[1]),
            test_folds: set(&[7, 8]),
        },
    }
}
