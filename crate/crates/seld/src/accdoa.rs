//! Activity-coupled Cartesian DOA (ACCDOA) encoding and decoding.
//!
//! Each class gets one 3-vector per label frame: a unit direction vector
//! when the class is active and the zero vector when it is not. Detection
//! and localisation therefore share one regression target, and decoding is
//! a norm threshold followed by a Cartesian-to-spherical conversion.

use crate::{Result, SeldError};

/// Default number of target classes (DCASE 2021 task 3); configurable
/// everywhere it is consumed.
pub const DEFAULT_NUM_CLASSES: usize = 12;

/// Label frame rate in Hz: one ACCDOA frame per 100 ms.
pub const LABEL_RATE_HZ: f64 = 10.0;

/// One discrete event observation: a class active in one label frame with
/// a direction of arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub frame_index: usize,
    pub class_index: usize,
    pub track_index: usize,
    /// Degrees, in [-180, 180).
    pub azimuth_deg: f64,
    /// Degrees, in [-90, 90].
    pub elevation_deg: f64,
}

/// A list of event records; the currency between metadata files, the
/// ACCDOA codec and the evaluation metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventList {
    pub records: Vec<EventRecord>,
}

impl EventList {
    pub fn new(records: Vec<EventRecord>) -> Self {
        EventList { records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Highest frame index present, or None when empty.
    pub fn max_frame(&self) -> Option<usize> {
        self.records.iter().map(|r| r.frame_index).max()
    }
}

/// Per-frame network target/output: one Cartesian 3-vector per class.
#[derive(Debug, Clone, PartialEq)]
pub struct AccdoaFrame {
    /// Row-major K x 3.
    pub vectors: Vec<[f64; 3]>,
}

impl AccdoaFrame {
    pub fn zeros(num_classes: usize) -> Self {
        AccdoaFrame {
            vectors: vec![[0.0; 3]; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.vectors.len()
    }
}

/// Decoding configuration.
#[derive(Debug, Clone, Copy)]
pub struct DecodeConfig {
    /// Vector-norm threshold for declaring a class active; strictly in (0, 1).
    pub activity_threshold: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            activity_threshold: 0.5,
        }
    }
}

impl DecodeConfig {
    pub fn new(activity_threshold: f64) -> Result<Self> {
        if !(activity_threshold > 0.0 && activity_threshold < 1.0) {
            return Err(SeldError::InvalidInput(format!(
                "activity_threshold must be in (0, 1), got {activity_threshold}"
            )));
        }
        Ok(DecodeConfig { activity_threshold })
    }
}

/// Spherical angles (degrees) to a unit Cartesian vector.
///
/// Azimuth is counterclockwise from +x in the horizontal plane, elevation
/// positive upward: `(cos el cos az, cos el sin az, sin el)`.
pub fn sph_to_cart(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
    let az = azimuth_deg.to_radians();
    let el = elevation_deg.to_radians();
    [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
}

/// Unit (or any nonzero) Cartesian vector back to `(azimuth_deg, elevation_deg)`.
///
/// Azimuth lands in [-180, 180); at the poles azimuth is 0 by convention.
pub fn cart_to_sph(v: [f64; 3]) -> Result<(f64, f64)> {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if norm == 0.0 {
        return Err(SeldError::InvalidInput(
            "cannot convert zero vector to angles".into(),
        ));
    }
    let el = (v[2] / norm).clamp(-1.0, 1.0).asin().to_degrees();
    let horiz = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let mut az = if horiz == 0.0 {
        0.0
    } else {
        v[1].atan2(v[0]).to_degrees()
    };
    if az >= 180.0 {
        az -= 360.0;
    }
    Ok((az, el))
}

/// Encode an event list into per-frame ACCDOA targets.
///
/// When several tracks of one class are active in the same frame the lowest
/// track index wins; plain ACCDOA carries a single vector per class.
pub fn encode(events: &EventList, n_frames: usize, num_classes: usize) -> Result<Vec<AccdoaFrame>> {
    let mut frames = vec![AccdoaFrame::zeros(num_classes); n_frames];
    // (frame, class) -> winning track index
    let mut winner: Vec<Option<usize>> = vec![None; n_frames * num_classes];
    for rec in &events.records {
        if rec.frame_index >= n_frames {
            return Err(SeldError::InvalidInput(format!(
                "frame index {} out of range (n_frames = {})",
                rec.frame_index, n_frames
            )));
        }
        if rec.class_index >= num_classes {
            return Err(SeldError::InvalidInput(format!(
                "class index {} out of range (K = {})",
                rec.class_index, num_classes
            )));
        }
        let slot = rec.frame_index * num_classes + rec.class_index;
        match winner[slot] {
            Some(t) if t <= rec.track_index => continue,
            _ => {
                winner[slot] = Some(rec.track_index);
                frames[rec.frame_index].vectors[rec.class_index] =
                    sph_to_cart(rec.azimuth_deg, rec.elevation_deg);
            }
        }
    }
    Ok(frames)
}

/// Decode per-frame ACCDOA vectors back into discrete events.
///
/// A class is emitted for a frame iff its vector norm exceeds the activity
/// threshold; the DOA comes from the vector direction and the track index
/// is always 0.
pub fn decode(frames: &[AccdoaFrame], cfg: &DecodeConfig) -> EventList {
    let mut records = Vec::new();
    for (f, frame) in frames.iter().enumerate() {
        for (k, v) in frame.vectors.iter().enumerate() {
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if norm > cfg.activity_threshold {
                // nonzero norm, conversion cannot fail
                let (az, el) = cart_to_sph(*v).expect("nonzero vector");
                records.push(EventRecord {
                    frame_index: f,
                    class_index: k,
                    track_index: 0,
                    azimuth_deg: az,
                    elevation_deg: el,
                });
            }
        }
    }
    EventList::new(records)
}
