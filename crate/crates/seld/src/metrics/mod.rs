//! Location-dependent SELD evaluation metrics.
//!
//! Detection is scored with an error rate and F-score that only count a
//! prediction as correct when its angular error stays below a spatial
//! threshold (20 degrees by default). Localisation is scored with the
//! class-dependent localisation error (mean angular error over
//! class-matched pairs, threshold-independent) and localisation recall
//! (fraction of reference instances that got a class match).
//!
//! Scoring pools label frames into 1-second segments. Within a segment and
//! class, each track contributes one instance whose DOA is the normalized
//! frame-wise mean of its per-frame DOA vectors; reference and predicted
//! instances are then matched with the Hungarian algorithm on angular
//! distance.

mod hungarian;

pub use hungarian::hungarian;

use crate::accdoa::{sph_to_cart, EventList};
use crate::{par, Result, SeldError};
use std::collections::BTreeMap;

/// Default spatial threshold in degrees.
pub const DEFAULT_SPATIAL_THRESHOLD_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy)]
pub struct ThresholdConfig {
    pub spatial_threshold_deg: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            spatial_threshold_deg: DEFAULT_SPATIAL_THRESHOLD_DEG,
        }
    }
}

impl ThresholdConfig {
    pub fn new(spatial_threshold_deg: f64) -> Result<Self> {
        if !(spatial_threshold_deg > 0.0 && spatial_threshold_deg <= 180.0) {
            return Err(SeldError::InvalidInput(format!(
                "spatial threshold must be in (0, 180], got {spatial_threshold_deg}"
            )));
        }
        Ok(ThresholdConfig {
            spatial_threshold_deg,
        })
    }
}

/// Aggregate error counts across all segments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub n_ref: usize,
}

/// The four location-dependent scores plus the raw counts behind them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Error rate at the spatial threshold; >= 0, lower is better.
    pub er20: f64,
    /// F-score at the spatial threshold, in [0, 1].
    pub f20: f64,
    /// Class-dependent localisation error in degrees, [0, 180].
    pub le_cd: f64,
    /// Class-dependent localisation recall, in [0, 1].
    pub lr_cd: f64,
    pub counts: ErrorCounts,
    /// True when F20 had a zero denominator (no refs and no preds).
    pub degenerate_f: bool,
}

impl MetricsReport {
    /// Aggregate selection score: mean(ER, 1-F, LE/180, 1-LR), lower is better.
    pub fn seld_score(&self) -> f64 {
        (self.er20 + (1.0 - self.f20) + self.le_cd / 180.0 + (1.0 - self.lr_cd)) / 4.0
    }

    /// Machine-readable CSV row in report column order: ER20, F20 (%), LE (deg), LR (%).
    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{:.1},{:.1},{:.1}",
            self.er20,
            self.f20 * 100.0,
            self.le_cd,
            self.lr_cd * 100.0
        )
    }

    /// Human-readable table, same column order as the CSV row.
    pub fn table(&self) -> String {
        format!(
            "  ER20    F20     LE      LR\n  {:<7.3} {:<6.1}% {:<5.1}deg {:<6.1}%",
            self.er20,
            self.f20 * 100.0,
            self.le_cd,
            self.lr_cd * 100.0
        )
    }
}

/// Angular distance between two unit vectors, in degrees.
pub fn angular_distance(u: [f64; 3], v: [f64; 3]) -> Result<f64> {
    for (name, w) in [("first", u), ("second", v)] {
        let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if (n - 1.0).abs() > 1e-4 {
            return Err(SeldError::InvalidInput(format!(
                "{name} vector is not unit norm (|v| = {n})"
            )));
        }
    }
    let dot = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).clamp(-1.0, 1.0);
    Ok(dot.acos().to_degrees())
}

/// Result of matching the instances of one class within one segment.
#[derive(Debug, Clone, Default)]
pub struct InstanceMatch {
    /// (ref index, pred index, angular error in degrees).
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_refs: Vec<usize>,
    pub unmatched_preds: Vec<usize>,
}

/// Minimum-total-angular-distance one-to-one matching between reference and
/// predicted DOA vectors of one class.
pub fn match_class_instances(refs: &[[f64; 3]], preds: &[[f64; 3]]) -> Result<InstanceMatch> {
    if refs.is_empty() || preds.is_empty() {
        return Ok(InstanceMatch {
            pairs: Vec::new(),
            unmatched_refs: (0..refs.len()).collect(),
            unmatched_preds: (0..preds.len()).collect(),
        });
    }
    let mut cost = vec![vec![0.0; preds.len()]; refs.len()];
    for (i, r) in refs.iter().enumerate() {
        for (j, p) in preds.iter().enumerate() {
            cost[i][j] = angular_distance(*r, *p)?;
        }
    }
    let assignment = hungarian(&cost);
    let mut ref_used = vec![false; refs.len()];
    let mut pred_used = vec![false; preds.len()];
    let mut pairs = Vec::with_capacity(assignment.len());
    for (r, p) in assignment {
        ref_used[r] = true;
        pred_used[p] = true;
        pairs.push((r, p, cost[r][p]));
    }
    Ok(InstanceMatch {
        pairs,
        unmatched_refs: (0..refs.len()).filter(|&i| !ref_used[i]).collect(),
        unmatched_preds: (0..preds.len()).filter(|&j| !pred_used[j]).collect(),
    })
}

/// Pooled instances of one (segment, class) cell: one mean DOA per track.
fn pool_instances(events: &EventList, frames_per_segment: usize) -> BTreeMap<(usize, usize), Vec<[f64; 3]>> {
    // (segment, class) -> track -> summed DOA
    let mut acc: BTreeMap<(usize, usize), BTreeMap<usize, ([f64; 3], usize)>> = BTreeMap::new();
    for rec in &events.records {
        let seg = rec.frame_index / frames_per_segment;
        let v = sph_to_cart(rec.azimuth_deg, rec.elevation_deg);
        let entry = acc
            .entry((seg, rec.class_index))
            .or_default()
            .entry(rec.track_index)
            .or_insert(([0.0; 3], 0));
        for i in 0..3 {
            entry.0[i] += v[i];
        }
        entry.1 += 1;
    }
    acc.into_iter()
        .map(|(key, tracks)| {
            let instances = tracks
                .into_values()
                .map(|(sum, n)| {
                    let mean = [sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64];
                    let norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
                    if norm > 0.0 {
                        [mean[0] / norm, mean[1] / norm, mean[2] / norm]
                    } else {
                        // antipodal frames cancelled out; fall back to +x
                        [1.0, 0.0, 0.0]
                    }
                })
                .collect();
            (key, instances)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct SegmentTally {
    tp: usize,
    fp: usize,
    fn_: usize,
    n_ref: usize,
    matched: usize,
    err_sum: f64,
}

/// Score predictions against references.
///
/// `label_rate_hz` must be a positive integer frame rate shared by both
/// lists; segments span `label_rate_hz` label frames (one second).
pub fn score_segments(
    reference: &EventList,
    predicted: &EventList,
    cfg: &ThresholdConfig,
    label_rate_hz: usize,
) -> Result<MetricsReport> {
    if label_rate_hz == 0 {
        return Err(SeldError::InvalidInput("label rate must be positive".into()));
    }
    let ref_pool = pool_instances(reference, label_rate_hz);
    let pred_pool = pool_instances(predicted, label_rate_hz);

    // union of segments touched by either list
    let mut segments: Vec<usize> = ref_pool
        .keys()
        .chain(pred_pool.keys())
        .map(|&(seg, _)| seg)
        .collect();
    segments.sort_unstable();
    segments.dedup();

    let empty: Vec<[f64; 3]> = Vec::new();
    let tallies: Vec<Result<SegmentTally>> = par::map_indexed(segments.len(), |si| {
        let seg = segments[si];
        let mut classes: Vec<usize> = ref_pool
            .range((seg, 0)..=(seg, usize::MAX))
            .chain(pred_pool.range((seg, 0)..=(seg, usize::MAX)))
            .map(|(&(_, k), _)| k)
            .collect();
        classes.sort_unstable();
        classes.dedup();

        let mut t = SegmentTally::default();
        for k in classes {
            let refs = ref_pool.get(&(seg, k)).unwrap_or(&empty);
            let preds = pred_pool.get(&(seg, k)).unwrap_or(&empty);
            t.n_ref += refs.len();
            let m = match_class_instances(refs, preds)?;
            for &(_, _, err) in &m.pairs {
                t.matched += 1;
                t.err_sum += err;
                if err <= cfg.spatial_threshold_deg {
                    t.tp += 1;
                } else {
                    // spatially wrong detection: a false detection and a
                    // missed reference at the same time
                    t.fp += 1;
                    t.fn_ += 1;
                }
            }
            t.fp += m.unmatched_preds.len();
            t.fn_ += m.unmatched_refs.len();
        }
        Ok(t)
    });

    let mut counts = ErrorCounts::default();
    let mut matched = 0usize;
    let mut err_sum = 0.0;
    for t in tallies {
        let t = t?;
        counts.tp += t.tp;
        counts.fp += t.fp;
        counts.fn_ += t.fn_;
        counts.substitutions += t.fp.min(t.fn_);
        counts.deletions += t.fn_.saturating_sub(t.fp);
        counts.insertions += t.fp.saturating_sub(t.fn_);
        counts.n_ref += t.n_ref;
        matched += t.matched;
        err_sum += t.err_sum;
    }

    let er20 = (counts.substitutions + counts.deletions + counts.insertions) as f64
        / counts.n_ref.max(1) as f64;
    let f_den = 2 * counts.tp + counts.fp + counts.fn_;
    let degenerate_f = f_den == 0;
    let f20 = if degenerate_f {
        0.0
    } else {
        2.0 * counts.tp as f64 / f_den as f64
    };
    let le_cd = if matched > 0 { err_sum / matched as f64 } else { 180.0 };
    let lr_cd = if counts.n_ref > 0 {
        matched as f64 / counts.n_ref as f64
    } else {
        0.0
    };

    Ok(MetricsReport {
        er20,
        f20,
        le_cd,
        lr_cd,
        counts,
        degenerate_f,
    })
}
