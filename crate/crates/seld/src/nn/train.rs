//! Training loop: Adam on the ACCDOA MSE, model selection on the
//! validation SELD score, learning-rate halving after a stale streak and
//! early stopping after a longer one.

use super::adam::Adam;
use super::layers::Mode;
use super::loss::accdoa_mse_loss;
use super::model::SeldNet;
use super::param;
use crate::accdoa::{self, AccdoaFrame, DecodeConfig};
use crate::metrics::{score_segments, MetricsReport, ThresholdConfig};
use crate::{Result, SeldError};
use ndarray::{Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One training example: normalized features (channels x frames x mels)
/// and the ACCDOA target (label frames x K x 3).
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: Array3<f64>,
    pub target: Array3<f64>,
}

/// Optimization schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub initial_lr: f64,
    /// Multiplier applied to the learning rate after `patience_decay`
    /// epochs without validation improvement.
    pub lr_decay: f64,
    pub patience_decay: usize,
    /// Stop after this many epochs without improvement. Must exceed
    /// `patience_decay` so at least one decay happens before stopping.
    pub patience_stop: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Shuffling seed.
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            initial_lr: 1e-3,
            lr_decay: 0.5,
            patience_decay: 15,
            patience_stop: 30,
            batch_size: 8,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(SeldError::InvalidInput(
                "learning rate must be positive and decay in (0, 1)".into(),
            ));
        }
        if self.patience_decay == 0 || self.patience_stop <= self.patience_decay {
            return Err(SeldError::InvalidInput(format!(
                "need 0 < patience_decay ({}) < patience_stop ({})",
                self.patience_decay, self.patience_stop
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(SeldError::InvalidInput(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_er: f64,
    pub val_f: f64,
    pub val_le: f64,
    pub val_lr: f64,
    pub seld_score: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str =
        "epoch,lr,train_loss,val_loss,val_ER,val_F,val_LE,val_LR,seld_score";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6e},{:.6},{:.6},{:.4},{:.4},{:.2},{:.4},{:.4}",
            self.epoch,
            self.lr,
            self.train_loss,
            self.val_loss,
            self.val_er,
            self.val_f,
            self.val_le,
            self.val_lr,
            self.seld_score
        )
    }
}

/// What the schedule demands after observing one validation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAction {
    /// New best score: snapshot the parameters.
    Improved,
    Continue,
    /// Stale for `patience_decay` epochs: multiply the lr by `lr_decay`.
    DecayLr,
    /// Stale for `patience_stop` epochs: end training.
    Stop,
}

/// Patience state machine shared by the training loop and its tests.
#[derive(Debug, Clone)]
pub struct ScheduleTracker {
    patience_decay: usize,
    patience_stop: usize,
    best: f64,
    stale: usize,
}

impl ScheduleTracker {
    pub fn new(schedule: &TrainSchedule) -> Self {
        ScheduleTracker {
            patience_decay: schedule.patience_decay,
            patience_stop: schedule.patience_stop,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn observe(&mut self, score: f64) -> ScheduleAction {
        if score < self.best {
            self.best = score;
            self.stale = 0;
            return ScheduleAction::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience_stop {
            ScheduleAction::Stop
        } else if self.stale == self.patience_decay {
            ScheduleAction::DecayLr
        } else {
            ScheduleAction::Continue
        }
    }
}

/// Result of a training run. `best_params` is the flat parameter vector of
/// the epoch with the lowest validation SELD score, `best_state` the
/// batch-norm running statistics captured at the same epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_params: Vec<f64>,
    pub best_state: Vec<f64>,
    pub best_score: f64,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    /// Load the best-epoch parameters and state back into a model.
    pub fn apply_best(&self, net: &mut SeldNet) {
        param::set_flat(net, &self.best_params);
        param::set_state_flat(net, &self.best_state);
    }
}

/// Convert a label-frame output (frames x K x 3) into ACCDOA frames.
pub fn frames_from_array(out: &Array3<f64>) -> Vec<AccdoaFrame> {
    let (n_frames, k, _) = out.dim();
    (0..n_frames)
        .map(|f| AccdoaFrame {
            vectors: (0..k)
                .map(|c| [out[[f, c, 0]], out[[f, c, 1]], out[[f, c, 2]]])
                .collect(),
        })
        .collect()
}

fn stack_batch(samples: &[&TrainSample]) -> (Array4<f64>, Array4<f64>) {
    let (ch, t, f) = samples[0].features.dim();
    let (lt, k, _) = samples[0].target.dim();
    let mut x = Array4::zeros((samples.len(), ch, t, f));
    let mut y = Array4::zeros((samples.len(), lt, k, 3));
    for (b, s) in samples.iter().enumerate() {
        x.index_axis_mut(Axis(0), b).assign(&s.features);
        y.index_axis_mut(Axis(0), b).assign(&s.target);
    }
    (x, y)
}

/// Validation metrics for the current parameters: mean loss plus the DCASE
/// report over the decoded predictions of every sample.
pub fn evaluate(
    net: &mut SeldNet,
    samples: &[TrainSample],
    decode_cfg: &DecodeConfig,
) -> Result<(f64, MetricsReport)> {
    let threshold = ThresholdConfig::default();
    let mut loss_sum = 0.0;
    let mut ref_records = Vec::new();
    let mut pred_records = Vec::new();
    let mut frame_base = 0usize;
    for s in samples {
        let (ch, t, f) = s.features.dim();
        let mut x = Array4::zeros((1, ch, t, f));
        x.index_axis_mut(Axis(0), 0).assign(&s.features);
        let mut y = Array4::zeros((1, s.target.dim().0, s.target.dim().1, 3));
        y.index_axis_mut(Axis(0), 0).assign(&s.target);
        let pred = net.forward(&x, Mode::Eval)?;
        let (loss, _) = accdoa_mse_loss(&pred, &y)?;
        loss_sum += loss;

        let pred3 = pred.index_axis(Axis(0), 0).to_owned();
        let decoded = accdoa::decode(&frames_from_array(&pred3), decode_cfg);
        let truth = accdoa::decode(&frames_from_array(&s.target), decode_cfg);
        // offset frames so clips never share pooling segments
        let n_frames = s.target.dim().0;
        for mut r in decoded.records {
            r.frame_index += frame_base;
            pred_records.push(r);
        }
        for mut r in truth.records {
            r.frame_index += frame_base;
            ref_records.push(r);
        }
        frame_base += n_frames.next_multiple_of(10);
    }
    let report = score_segments(
        &accdoa::EventList::new(ref_records),
        &accdoa::EventList::new(pred_records),
        &threshold,
        crate::accdoa::LABEL_RATE_HZ as usize,
    )?;
    Ok((loss_sum / samples.len().max(1) as f64, report))
}

/// Run the full training loop. Logs one row per epoch through `on_epoch`
/// (e.g. for console output) and returns the best parameters found.
pub fn train(
    net: &mut SeldNet,
    schedule: &TrainSchedule,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    decode_cfg: &DecodeConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    schedule.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(SeldError::InvalidInput(
            "training and validation sets must be non-empty".into(),
        ));
    }

    let mut opt = Adam::new(schedule.initial_lr);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best_params = param::get_flat(net);
    let mut best_state = param::get_state_flat(net);
    let mut best_score = f64::INFINITY;
    let mut best_epoch = 0;
    let mut tracker = ScheduleTracker::new(schedule);
    let mut log = Vec::new();

    for epoch in 1..=schedule.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(schedule.batch_size) {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (x, y) = stack_batch(&batch);
            let pred = net.forward(&x, Mode::Train)?;
            let (loss, grad) = accdoa_mse_loss(&pred, &y)?;
            param::zero_grads(net);
            net.backward(&grad);
            opt.step(net);
            train_loss += loss;
            n_batches += 1;
        }
        train_loss /= n_batches as f64;

        let (val_loss, report) = evaluate(net, val_set, decode_cfg)?;
        let score = report.seld_score();
        let row = EpochLog {
            epoch,
            lr: opt.lr,
            train_loss,
            val_loss,
            val_er: report.er20,
            val_f: report.f20,
            val_le: report.le_cd,
            val_lr: report.lr_cd,
            seld_score: score,
        };
        on_epoch(&row);
        log.push(row);

        match tracker.observe(score) {
            ScheduleAction::Improved => {
                best_score = score;
                best_epoch = epoch;
                best_params = param::get_flat(net);
                best_state = param::get_state_flat(net);
            }
            ScheduleAction::Continue => {}
            ScheduleAction::DecayLr => opt.lr *= schedule.lr_decay,
            ScheduleAction::Stop => break,
        }
    }

    Ok(TrainOutcome {
        best_params,
        best_state,
        best_score,
        best_epoch,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::NetworkConfig;
    use rand::prelude::*;

    fn tiny_net(seed: u64) -> SeldNet {
        let cfg = NetworkConfig {
            n_input_channels: 7,
            n_filters: 4,
            ratio: 1,
            num_classes: 2,
            time_pools: [5, 1, 1],
            freq_pools: [2, 2, 2],
            rnn_units: 4,
            rnn_layers: 1,
            fc_units: 8,
            n_mels: 8,
        };
        SeldNet::new(cfg, seed).unwrap()
    }

    fn toy_sample(seed: u64) -> TrainSample {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        // class 0 active pointing +x when the features carry a positive
        // bias, class 1 pointing +z when negative
        let positive = seed % 2 == 0;
        let bias = if positive { 1.0 } else { -1.0 };
        let features = Array3::from_shape_fn((7, 10, 8), |_| {
            bias + (r.random::<f64>() - 0.5) * 0.1
        });
        let mut target = Array3::zeros((2, 2, 3));
        for f in 0..2 {
            if positive {
                target[[f, 0, 0]] = 1.0;
            } else {
                target[[f, 1, 2]] = 1.0;
            }
        }
        TrainSample { features, target }
    }

    #[test]
    fn schedule_validation() {
        assert!(TrainSchedule::default().validate().is_ok());
        let mut s = TrainSchedule::default();
        s.patience_stop = s.patience_decay;
        assert!(s.validate().is_err());
        let mut s = TrainSchedule::default();
        s.lr_decay = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn loss_decreases_on_toy_task() {
        let mut net = tiny_net(3);
        let train_set: Vec<TrainSample> = (0..8).map(toy_sample).collect();
        let val_set: Vec<TrainSample> = (100..104).map(toy_sample).collect();
        let schedule = TrainSchedule {
            max_epochs: 30,
            batch_size: 4,
            initial_lr: 5e-3,
            ..TrainSchedule::default()
        };
        let out = train(
            &mut net,
            &schedule,
            &train_set,
            &val_set,
            &DecodeConfig::default(),
            |_| {},
        )
        .unwrap();
        let first = out.log.first().unwrap().train_loss;
        let last = out.log.last().unwrap().train_loss;
        assert!(
            last < 0.5 * first,
            "train loss did not drop: {first} -> {last}"
        );
        assert!(out.best_score <= out.log[0].seld_score + 1e-12);
    }

    #[test]
    fn tracker_decays_then_stops_on_constant_score() {
        let schedule = TrainSchedule {
            patience_decay: 3,
            patience_stop: 6,
            ..TrainSchedule::default()
        };
        let mut tracker = ScheduleTracker::new(&schedule);
        assert_eq!(tracker.observe(0.5), ScheduleAction::Improved);
        assert_eq!(tracker.observe(0.5), ScheduleAction::Continue);
        assert_eq!(tracker.observe(0.5), ScheduleAction::Continue);
        assert_eq!(tracker.observe(0.5), ScheduleAction::DecayLr);
        assert_eq!(tracker.observe(0.5), ScheduleAction::Continue);
        assert_eq!(tracker.observe(0.5), ScheduleAction::Continue);
        assert_eq!(tracker.observe(0.5), ScheduleAction::Stop);
    }

    #[test]
    fn tracker_resets_on_improvement() {
        let schedule = TrainSchedule {
            patience_decay: 2,
            patience_stop: 4,
            ..TrainSchedule::default()
        };
        let mut tracker = ScheduleTracker::new(&schedule);
        assert_eq!(tracker.observe(0.5), ScheduleAction::Improved);
        assert_eq!(tracker.observe(0.6), ScheduleAction::Continue);
        assert_eq!(tracker.observe(0.4), ScheduleAction::Improved);
        assert_eq!(tracker.observe(0.4), ScheduleAction::Continue); // tie is stale
        assert_eq!(tracker.observe(0.45), ScheduleAction::DecayLr);
        assert_eq!(tracker.observe(0.45), ScheduleAction::Continue);
        assert_eq!(tracker.observe(0.45), ScheduleAction::Stop);
    }

    #[test]
    fn default_schedule_matches_reference_settings() {
        let s = TrainSchedule::default();
        assert_eq!(s.initial_lr, 1e-3);
        assert_eq!(s.lr_decay, 0.5);
        assert_eq!(s.patience_decay, 15);
        assert_eq!(s.patience_stop, 30);
        assert_eq!(s.batch_size, 8);
    }

    #[test]
    fn epoch_log_csv_shape() {
        let row = EpochLog {
            epoch: 3,
            lr: 1e-3,
            train_loss: 0.1,
            val_loss: 0.2,
            val_er: 0.5,
            val_f: 0.6,
            val_le: 12.0,
            val_lr: 0.7,
            seld_score: 0.4,
        };
        let csv = row.csv_row();
        let fields: Vec<&str> = csv.split(',').collect();
        assert_eq!(fields.len(), EpochLog::CSV_HEADER.split(',').count());
        assert_eq!(fields[0], "3");
    }
}
