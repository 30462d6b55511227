//! Sound event localisation and detection (SELD) pipeline.
//!
//! The crate covers the full chain needed to detect and localise sound
//! events in 4-channel spatial audio:
//!
//! * [`features`] — STFT / log-mel / GCC-PHAT / FOA intensity feature
//!   extraction producing the 10- (MIC), 7- (FOA) or 17-channel (FOA-MIC)
//!   tensors the network consumes.
//! * [`accdoa`] — activity-coupled Cartesian DOA encoding and decoding
//!   between discrete event lists and per-frame regression targets.
//! * [`nn`] — a small f64 tensor framework with hand-written forward and
//!   backward passes for the scSE-augmented convolutional-recurrent
//!   network, the ACCDOA regression loss, Adam, and the training loop.
//! * [`metrics`] — location-dependent detection scores (ER20, F20) and
//!   class-dependent localisation scores (LE, LR).
//! * [`data`] — a synthetic spatial-scene generator with exactly known
//!   labels, DCASE-format metadata I/O, and the cross-validation fold
//!   protocol.
//! * [`io`] — binary containers for feature files and checkpoints.
//!
//! With the default `parallel` feature the batch-level inner loops run on
//! rayon; without it everything falls back to sequential iteration.

pub mod accdoa;
pub mod data;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod par;

pub use error::SeldError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SeldError>;
