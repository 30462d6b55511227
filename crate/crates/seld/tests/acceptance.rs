//! Acceptance gate: nine ordered pass/fail checks covering analytic
//! gradients, the scSE identity anchor, feature-extraction oracles, metric
//! and codec equivalence, the training schedule, learning sanity, a full
//! end-to-end desk experiment and the fold protocol.
//!
//! Each criterion prints one verdict line (run with `--nocapture` to see
//! them as they complete); the test fails at the end if any criterion
//! failed.

use ndarray::{Array2, Array3, Array4};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use seld::accdoa::{
    decode, encode, sph_to_cart, DecodeConfig, EventList, EventRecord, DEFAULT_NUM_CLASSES,
    LABEL_RATE_HZ,
};
use seld::data::dataset::{extract_scene, sample_from_tensor};
use seld::data::{
    make_corpus, make_folds, synth_scene_foa, synth_scene_mic, CorpusFormat, GeneratorConfig,
    SceneEvent, SceneSpec, SourceKind, Stage,
};
use seld::features::{
    concat_foa_mic, extract_features, foa_intensity, gcc_phat_pair, stft, ChannelStats,
    FeatureTensor, MelFilterbank, SourceTag, StftConfig, N_MELS, SAMPLE_RATE,
};
use seld::metrics::{angular_distance, score_segments, ThresholdConfig};
use seld::nn::gradcheck::{max_rel_error, spread_coords};
use seld::nn::gru::BiGru;
use seld::nn::layers::Mode;
use seld::nn::param;
use seld::nn::se::{ConvStandardPost, CseBlock, ScseBlock, SseBlock};
use seld::nn::train::{evaluate, TrainSample};
use seld::nn::{accdoa_mse_loss, train, Adam, NetworkConfig, SeldNet, TrainSchedule};
use seld::par;
use std::time::Instant;

const LABEL_RATE: usize = LABEL_RATE_HZ as usize;

#[derive(Default)]
struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn check(&mut self, index: usize, name: &str, ok: bool, detail: &str) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {index} ({name}): {verdict} [{detail}]");
        if !ok {
            self.failures.push(format!("{index} ({name}): {detail}"));
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand4(dim: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
    let mut r = rng(seed);
    Array4::from_shape_fn(dim, |_| r.random::<f64>() * 2.0 - 1.0)
}

fn rand3(dim: (usize, usize, usize), seed: u64) -> Array3<f64> {
    let mut r = rng(seed);
    Array3::from_shape_fn(dim, |_| r.random::<f64>() * 2.0 - 1.0)
}

fn weighted_sum4(y: &Array4<f64>, w: &Array4<f64>) -> f64 {
    y.iter().zip(w.iter()).map(|(a, b)| a * b).sum()
}

fn scratch_dir(label: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("seld-acceptance-{label}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

// ---------------------------------------------------------------------------
// criterion 1: analytic gradients vs central differences
// ---------------------------------------------------------------------------

fn criterion_gradients(gate: &mut Gate) {
    let start = Instant::now();
    let mut worst_block = 0.0f64;

    let track = |err: f64, worst: &mut f64| *worst = worst.max(err);

    // cSE
    {
        let mut block = CseBlock::new(4, 2, &mut rng(10));
        let x = rand4((2, 4, 3, 3), 11);
        let w = rand4((2, 4, 3, 3), 12);
        let n = param::param_count(&mut block);
        let err = max_rel_error(
            &mut block,
            |m| {
                let y = m.forward(&x);
                m.backward(&w);
                weighted_sum4(&y, &w)
            },
            &spread_coords(n, n),
            1e-5,
        );
        track(err, &mut worst_block);
    }
    // sSE
    {
        let mut block = SseBlock::new(4, &mut rng(13));
        let x = rand4((2, 4, 3, 3), 14);
        let w = rand4((2, 4, 3, 3), 15);
        let n = param::param_count(&mut block);
        let err = max_rel_error(
            &mut block,
            |m| {
                let y = m.forward(&x);
                m.backward(&w);
                weighted_sum4(&y, &w)
            },
            &spread_coords(n, n),
            1e-5,
        );
        track(err, &mut worst_block);
    }
    // scSE
    {
        let mut block = ScseBlock::new(4, 1, &mut rng(16));
        let x = rand4((2, 4, 3, 3), 17);
        let w = rand4((2, 4, 3, 3), 18);
        let n = param::param_count(&mut block);
        let err = max_rel_error(
            &mut block,
            |m| {
                let y = m.forward(&x);
                m.backward(&w);
                weighted_sum4(&y, &w)
            },
            &spread_coords(n, n),
            1e-5,
        );
        track(err, &mut worst_block);
    }
    // Conv-StandardPOST (eval-mode BN so running stats are constants)
    {
        let mut block = ConvStandardPost::new(3, 4, 2, &mut rng(19));
        let x = rand4((2, 3, 5, 4), 20);
        let w = rand4((2, 4, 5, 4), 21);
        let n = param::param_count(&mut block);
        let err = max_rel_error(
            &mut block,
            |m| {
                let y = m.forward(&x, Mode::Eval);
                m.backward(&w);
                weighted_sum4(&y, &w)
            },
            &spread_coords(n, 120),
            1e-5,
        );
        track(err, &mut worst_block);
    }
    // bidirectional GRU
    {
        let mut gru = BiGru::new(3, 4, &mut rng(22));
        let x = rand3((2, 5, 4), 23);
        let w = rand3((2, 5, 6), 24);
        let n = param::param_count(&mut gru);
        let err = max_rel_error(
            &mut gru,
            |m| {
                let y = m.forward(&x);
                m.backward(&w);
                y.iter().zip(w.iter()).map(|(a, b)| a * b).sum()
            },
            &spread_coords(n, n),
            1e-5,
        );
        track(err, &mut worst_block);
    }

    // full network, 50 sampled coordinates
    let net_err = {
        let cfg = NetworkConfig {
            n_input_channels: 7,
            n_filters: 4,
            ratio: 2,
            num_classes: 3,
            time_pools: [5, 1, 1],
            freq_pools: [2, 2, 2],
            rnn_units: 4,
            rnn_layers: 2,
            fc_units: 6,
            n_mels: 8,
        };
        let mut net = SeldNet::new(cfg, 25).unwrap();
        let x = rand4((2, 7, 10, 8), 26);
        let target = rand4((2, 2, 3, 3), 27).mapv(|v| v * 0.8);
        let n = param::param_count(&mut net);
        max_rel_error(
            &mut net,
            |m| {
                let y = m.forward(&x, Mode::Eval).unwrap();
                let (loss, grad) = accdoa_mse_loss(&y, &target).unwrap();
                m.backward(&grad);
                loss
            },
            &spread_coords(n, 50),
            1e-5,
        )
    };

    let elapsed = start.elapsed().as_secs_f64();
    gate.check(
        1,
        "gradient correctness",
        worst_block < 1e-4 && net_err < 1e-3 && elapsed < 120.0,
        &format!("block err {worst_block:.2e}, net err {net_err:.2e}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// criterion 2: scSE identity anchor
// ---------------------------------------------------------------------------

fn criterion_scse_identity(gate: &mut Gate) {
    let mut block = ScseBlock::new(8, 2, &mut rng(30));
    block.zero_gates();
    let x = rand4((3, 8, 5, 6), 31);
    let y = block.forward(&x);
    let exact = y.iter().zip(x.iter()).all(|(a, b)| a == b);
    gate.check(
        2,
        "scSE identity anchor",
        exact,
        &format!("{} elements compared bitwise", x.len()),
    );
}

// ---------------------------------------------------------------------------
// criterion 3: feature-extraction oracles
// ---------------------------------------------------------------------------

fn uniform_noise(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect()
}

fn criterion_feature_oracles(gate: &mut Gate) {
    let cfg = StftConfig::default_24k();

    // (a) GCC-PHAT integer delays at 20 dB SNR
    let mut gcc_ok = true;
    let mut gcc_detail = String::from("all delays exact");
    let mut r = rng(40);
    'outer: for d in -10isize..=10 {
        let x = uniform_noise(SAMPLE_RATE as usize, 1.0, &mut r);
        let mut y = vec![0.0; x.len()];
        for n in 0..x.len() as isize {
            let m = n - d;
            if m >= 0 && (m as usize) < x.len() {
                y[n as usize] = x[m as usize];
            }
        }
        // 20 dB SNR: independent noise at 1/10 the signal amplitude
        let nx = uniform_noise(x.len(), 0.1, &mut r);
        let ny = uniform_noise(x.len(), 0.1, &mut r);
        let xn: Vec<f64> = x.iter().zip(&nx).map(|(a, b)| a + b).collect();
        let yn: Vec<f64> = y.iter().zip(&ny).map(|(a, b)| a + b).collect();

        let si = stft(&xn, &cfg).unwrap();
        let sj = stft(&yn, &cfg).unwrap();
        let gcc = gcc_phat_pair(&si, &sj, 63).unwrap();
        let (n_frames, n_lags) = gcc.dim();
        let max_lag = (n_lags - 1) / 2;
        // skip the edge frames where the delayed channel ramps in/out
        for t in 1..n_frames - 1 {
            let col = (0..n_lags)
                .max_by(|&a, &b| gcc[[t, a]].total_cmp(&gcc[[t, b]]))
                .unwrap();
            let got = col as isize - max_lag as isize;
            if got != d {
                gcc_ok = false;
                gcc_detail = format!("delay {d}, frame {t}: argmax {got}");
                break 'outer;
            }
        }
    }

    // (b) FOA intensity DOA within 1 degree at 30 dB SNR
    let fb = MelFilterbank::new(N_MELS, SAMPLE_RATE, cfg.fft_size).unwrap();
    let mut doa_ok = true;
    let mut worst_doa = 0.0f64;
    let mut r = rng(41);
    for _ in 0..12 {
        let az = r.random::<f64>() * 360.0 - 180.0;
        let el = r.random::<f64>() * 160.0 - 80.0;
        let truth = sph_to_cart(az, el);
        let s = uniform_noise(SAMPLE_RATE as usize, 1.0, &mut r);
        let (gx, gy, gz) = (
            el.to_radians().cos() * az.to_radians().cos(),
            el.to_radians().cos() * az.to_radians().sin(),
            el.to_radians().sin(),
        );
        // SN3D plane-wave encoding plus per-channel noise 30 dB down
        let noise_scale = 10f64.powf(-30.0 / 20.0);
        let chans: Vec<Vec<f64>> = [1.0, gx, gy, gz]
            .iter()
            .map(|&g| {
                let n = uniform_noise(s.len(), noise_scale, &mut r);
                s.iter().zip(&n).map(|(v, e)| v * g + e).collect()
            })
            .collect();
        let specs: Vec<Array2<Complex<f64>>> =
            chans.iter().map(|c| stft(c, &cfg).unwrap()).collect();
        let i = foa_intensity(&specs[0], &specs[1], &specs[2], &specs[3], &fb).unwrap();

        // energy-weighted mean intensity over all (frame, band) cells
        let (_, n_frames, n_mels) = i.dim();
        let mut acc = [0.0f64; 3];
        for t in 0..n_frames {
            for m in 0..n_mels {
                let mut e = 0.0;
                for k in 0..fb.n_bins() {
                    e += fb.weights[[m, k]] * specs[0][[t, k]].norm_sqr();
                }
                for c in 0..3 {
                    acc[c] += e * i[[c, t, m]];
                }
            }
        }
        let norm = (acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt();
        let est = [acc[0] / norm, acc[1] / norm, acc[2] / norm];
        let err = angular_distance(est, truth).unwrap();
        worst_doa = worst_doa.max(err);
        if err >= 1.0 {
            doa_ok = false;
        }
    }

    // (c) channel counts 10 / 7 / 17
    let spec = SceneSpec {
        duration_s: 1.0,
        events: vec![SceneEvent {
            class_index: 0,
            onset_s: 0.1,
            offset_s: 0.9,
            azimuth_deg: 30.0,
            elevation_deg: 10.0,
            source_kind: SourceKind::broadband(),
            snr_db: 30.0,
        }],
        seed: 42,
    };
    let (foa_clip, _) = synth_scene_foa(&spec).unwrap();
    let (mic_clip, _) =
        synth_scene_mic(&spec, &seld::data::ArrayGeometry::default_tetrahedron()).unwrap();
    let foa = extract_features(&foa_clip, &cfg, &fb).unwrap();
    let mic = extract_features(&mic_clip, &cfg, &fb).unwrap();
    let both = concat_foa_mic(&foa, &mic).unwrap();
    let counts_ok = mic.n_channels() == 10 && foa.n_channels() == 7 && both.n_channels() == 17;

    gate.check(
        3,
        "feature-extraction oracles",
        gcc_ok && doa_ok && counts_ok,
        &format!(
            "gcc: {gcc_detail}; doa worst {worst_doa:.3} deg; channels mic {} foa {} both {}",
            mic.n_channels(),
            foa.n_channels(),
            both.n_channels()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 4: metrics vs brute-force permutation scorer
// ---------------------------------------------------------------------------

/// Minimum-total-cost injective assignment by exhaustive enumeration.
fn brute_force_min_cost(cost: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let nr = cost.len();
    let np = if nr == 0 { 0 } else { cost[0].len() };
    if nr == 0 || np == 0 {
        return Vec::new();
    }
    let m = nr.min(np);
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    // enumerate which refs participate when refs outnumber preds, then all
    // injective maps from the chosen side into the other
    fn recurse(
        cost: &[Vec<f64>],
        row: usize,
        used: &mut Vec<bool>,
        picked: &mut Vec<(usize, usize)>,
        m: usize,
        total: f64,
        best: &mut Option<(f64, Vec<(usize, usize)>)>,
    ) {
        let nr = cost.len();
        if picked.len() == m {
            if best.as_ref().is_none_or(|(t, _)| total < *t) {
                *best = Some((total, picked.clone()));
            }
            return;
        }
        if row >= nr {
            return;
        }
        // rows may be skipped only when refs outnumber preds
        let remaining_rows = nr - row;
        let needed = m - picked.len();
        if remaining_rows > needed {
            recurse(cost, row + 1, used, picked, m, total, best);
        }
        for p in 0..cost[row].len() {
            if !used[p] {
                used[p] = true;
                picked.push((row, p));
                recurse(cost, row + 1, used, picked, m, total + cost[row][p], best);
                picked.pop();
                used[p] = false;
            }
        }
    }
    let mut used = vec![false; np];
    let mut picked = Vec::new();
    recurse(cost, 0, &mut used, &mut picked, m, 0.0, &mut best);
    let (_, pairs) = best.unwrap();
    pairs.into_iter().map(|(r, p)| (r, p, cost[r][p])).collect()
}

fn criterion_metrics_oracle(gate: &mut Gate) {
    let threshold = ThresholdConfig::default();
    let mut r = rng(50);
    let mut ok = true;
    let mut detail = String::from("1000 instances exact");

    for case in 0..1000 {
        let nr = r.random_range(1..=6usize);
        let np = r.random_range(0..=6usize);
        let dir = |r: &mut ChaCha8Rng| {
            (
                r.random::<f64>() * 360.0 - 180.0,
                r.random::<f64>() * 170.0 - 85.0,
            )
        };
        let mk = |n: usize, r: &mut ChaCha8Rng| -> Vec<EventRecord> {
            (0..n)
                .map(|i| {
                    let (az, el) = dir(r);
                    EventRecord {
                        frame_index: 0,
                        class_index: 0,
                        track_index: i,
                        azimuth_deg: az,
                        elevation_deg: el,
                    }
                })
                .collect()
        };
        let refs = mk(nr, &mut r);
        let preds = mk(np, &mut r);

        let report = score_segments(
            &EventList::new(refs.clone()),
            &EventList::new(preds.clone()),
            &threshold,
            LABEL_RATE,
        )
        .unwrap();

        // independent brute-force scorer
        let rvecs: Vec<[f64; 3]> = refs
            .iter()
            .map(|e| sph_to_cart(e.azimuth_deg, e.elevation_deg))
            .collect();
        let pvecs: Vec<[f64; 3]> = preds
            .iter()
            .map(|e| sph_to_cart(e.azimuth_deg, e.elevation_deg))
            .collect();
        let cost: Vec<Vec<f64>> = rvecs
            .iter()
            .map(|u| pvecs.iter().map(|v| angular_distance(*u, *v).unwrap()).collect())
            .collect();
        let pairs = brute_force_min_cost(&cost);
        let matched = pairs.len();
        let tp = pairs.iter().filter(|&&(_, _, e)| e <= 20.0).count();
        let over = matched - tp;
        let fp = over + (np - matched);
        let fn_ = over + (nr - matched);
        let s = fp.min(fn_);
        let d = fn_ - s;
        let i = fp - s;
        let er = (s + d + i) as f64 / nr as f64;
        let f_den = 2 * tp + fp + fn_;
        let f = if f_den == 0 { 0.0 } else { 2.0 * tp as f64 / f_den as f64 };
        let le = if matched > 0 {
            pairs.iter().map(|&(_, _, e)| e).sum::<f64>() / matched as f64
        } else {
            180.0
        };
        let lr = matched as f64 / nr as f64;

        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        if !(close(report.er20, er)
            && close(report.f20, f)
            && close(report.le_cd, le)
            && close(report.lr_cd, lr))
        {
            ok = false;
            detail = format!(
                "case {case} (nr {nr}, np {np}): got ER {} F {} LE {} LR {}, want {er} {f} {le} {lr}",
                report.er20, report.f20, report.le_cd, report.lr_cd
            );
            break;
        }
    }

    // hand-computed 25-degree substitution: one ref, one pred, same class,
    // 25 degrees apart -> ER 1, F 0, LE 25, LR 1
    let reference = EventList::new(vec![EventRecord {
        frame_index: 0,
        class_index: 0,
        track_index: 0,
        azimuth_deg: 0.0,
        elevation_deg: 0.0,
    }]);
    let predicted = EventList::new(vec![EventRecord {
        frame_index: 0,
        class_index: 0,
        track_index: 0,
        azimuth_deg: 25.0,
        elevation_deg: 0.0,
    }]);
    let rep = score_segments(&reference, &predicted, &threshold, LABEL_RATE).unwrap();
    let sub_ok = rep.er20 == 1.0
        && rep.f20 == 0.0
        && (rep.le_cd - 25.0).abs() < 1e-9
        && rep.lr_cd == 1.0;
    if !sub_ok {
        ok = false;
        detail = format!(
            "25-degree case: ER {} F {} LE {} LR {}",
            rep.er20, rep.f20, rep.le_cd, rep.lr_cd
        );
    }

    gate.check(4, "metrics oracle equivalence", ok, &detail);
}

// ---------------------------------------------------------------------------
// criterion 5: ACCDOA codec round trip
// ---------------------------------------------------------------------------

fn criterion_codec_round_trip(gate: &mut Gate) {
    let decode_cfg = DecodeConfig::default();
    let mut r = rng(60);
    let mut ok = true;
    let mut detail = String::from("1000 round trips, angles < 1e-6 deg");

    'outer: for case in 0..1000 {
        let mut records = Vec::new();
        for frame in 0..10usize {
            for class in 0..DEFAULT_NUM_CLASSES {
                if r.random::<f64>() < 0.3 {
                    records.push(EventRecord {
                        frame_index: frame,
                        class_index: class,
                        track_index: 0,
                        azimuth_deg: r.random::<f64>() * 360.0 - 180.0,
                        elevation_deg: r.random::<f64>() * 170.0 - 85.0,
                    });
                }
            }
        }
        let events = EventList::new(records.clone());
        let frames = encode(&events, 10, DEFAULT_NUM_CLASSES).unwrap();
        let decoded = decode(&frames, &decode_cfg);
        if decoded.len() != records.len() {
            ok = false;
            detail = format!(
                "case {case}: {} records in, {} out",
                records.len(),
                decoded.len()
            );
            break;
        }
        for (orig, dec) in records.iter().zip(decoded.records.iter()) {
            let daz = (orig.azimuth_deg - dec.azimuth_deg).rem_euclid(360.0);
            let daz = daz.min(360.0 - daz);
            let del = (orig.elevation_deg - dec.elevation_deg).abs();
            if orig.frame_index != dec.frame_index
                || orig.class_index != dec.class_index
                || daz >= 1e-6
                || del >= 1e-6
            {
                ok = false;
                detail = format!("case {case}: az err {daz:.2e}, el err {del:.2e}");
                break 'outer;
            }
        }
    }

    gate.check(5, "ACCDOA codec round trip", ok, &detail);
}

// ---------------------------------------------------------------------------
// criterion 6: training schedule conformance
// ---------------------------------------------------------------------------

fn criterion_schedule(gate: &mut Gate) {
    // all-zero parameters keep the output identically zero (batch-norm
    // scale included), so the validation score is frozen and every epoch
    // after the first counts as stale
    let cfg = NetworkConfig {
        n_input_channels: 7,
        n_filters: 4,
        ratio: 2,
        num_classes: 3,
        time_pools: [5, 1, 1],
        freq_pools: [2, 2, 2],
        rnn_units: 4,
        rnn_layers: 2,
        fc_units: 6,
        n_mels: 8,
    };
    let mut net = SeldNet::new(cfg, 70).unwrap();
    let n = param::param_count(&mut net);
    param::set_flat(&mut net, &vec![0.0; n]);

    let samples: Vec<TrainSample> = (0..4)
        .map(|i| TrainSample {
            features: rand3((7, 10, 8), 71 + i),
            target: rand3((2, 3, 3), 81 + i).mapv(|v| v * 0.5),
        })
        .collect();

    let lr0 = 1e-12; // negligible updates: the model stays frozen
    let schedule = TrainSchedule {
        initial_lr: lr0,
        max_epochs: 100,
        batch_size: 2,
        seed: 70,
        ..TrainSchedule::default()
    };
    let outcome = train(
        &mut net,
        &schedule,
        &samples,
        &samples,
        &DecodeConfig::default(),
        |_| {},
    )
    .unwrap();

    let rows = outcome.log.len();
    let decay_at_17 = outcome.log.get(15).map(|r| r.lr) == Some(lr0)
        && outcome.log.get(16).map(|r| r.lr) == Some(lr0 * 0.5)
        && outcome.log.iter().skip(16).all(|r| r.lr == lr0 * 0.5);
    let ok = rows == 31 && decay_at_17 && outcome.best_epoch == 1;
    gate.check(
        6,
        "training schedule conformance",
        ok,
        &format!(
            "{rows} epochs (want 31), lr halved at epoch 17: {decay_at_17}, best epoch {}",
            outcome.best_epoch
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 7: learning sanity (overfit 20 scenes)
// ---------------------------------------------------------------------------

fn extract_split(
    dir: &std::path::Path,
    names: &[String],
) -> (Vec<FeatureTensor>, ChannelStats) {
    let tensors: Vec<FeatureTensor> = par::map_indexed(names.len(), |i| {
        extract_scene(dir, &names[i], SourceTag::Foa)
    })
    .into_iter()
    .collect::<Result<_, _>>()
    .unwrap();
    let stats = ChannelStats::compute(&tensors).unwrap();
    (tensors, stats)
}

fn samples_from(
    dir: &std::path::Path,
    names: &[String],
    tensors: Vec<FeatureTensor>,
    stats: &ChannelStats,
) -> Vec<TrainSample> {
    names
        .iter()
        .zip(tensors)
        .map(|(name, t)| sample_from_tensor(dir, name, t, stats, DEFAULT_NUM_CLASSES).unwrap())
        .collect()
}

fn criterion_overfit(gate: &mut Gate) {
    let start = Instant::now();
    let dir = scratch_dir("overfit");
    let gen = GeneratorConfig {
        n_scenes: 20,
        fold_count: 8,
        duration_s: 1.0,
        max_events_per_scene: 1,
        num_classes: DEFAULT_NUM_CLASSES,
        snr_db: 30.0,
        seed: 3,
        format: CorpusFormat::Foa,
    };
    let manifest = make_corpus(&gen, &dir).unwrap();
    let names: Vec<String> = manifest.entries.iter().map(|(n, _)| n.clone()).collect();
    let (tensors, stats) = extract_split(&dir, &names);
    let samples = samples_from(&dir, &names, tensors, &stats);

    let cfg = NetworkConfig {
        ratio: 1,
        ..NetworkConfig::desk(7)
    };
    let mut net = SeldNet::new(cfg, 7).unwrap();
    let mut opt = Adam::new(5e-3);

    // full-batch loop with an early exit once the loss has collapsed
    let (_, t, f) = samples[0].features.dim();
    let mut x = Array4::zeros((samples.len(), 7, t, f));
    let (lt, k, _) = samples[0].target.dim();
    let mut target = Array4::zeros((samples.len(), lt, k, 3));
    for (b, s) in samples.iter().enumerate() {
        x.index_axis_mut(ndarray::Axis(0), b).assign(&s.features);
        target.index_axis_mut(ndarray::Axis(0), b).assign(&s.target);
    }

    let mut first_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    let mut epochs_used = 0;
    for epoch in 1..=200 {
        let y = net.forward(&x, Mode::Train).unwrap();
        let (loss, grad) = accdoa_mse_loss(&y, &target).unwrap();
        param::zero_grads(&mut net);
        net.backward(&grad);
        opt.step(&mut net);
        if epoch == 1 {
            first_loss = loss;
        }
        final_loss = loss;
        epochs_used = epoch;
        if loss < 0.1 * first_loss {
            break;
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let _ = std::fs::remove_dir_all(&dir);
    let ok = final_loss < 0.1 * first_loss && epochs_used <= 200 && elapsed < 600.0;
    gate.check(
        7,
        "learning sanity",
        ok,
        &format!(
            "loss {first_loss:.5} -> {final_loss:.5} in {epochs_used} epochs, {elapsed:.0}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 8: end-to-end desk experiment
// ---------------------------------------------------------------------------

fn criterion_end_to_end(gate: &mut Gate) {
    let start = Instant::now();
    let dir = scratch_dir("desk");
    let gen = GeneratorConfig {
        n_scenes: 640,
        fold_count: 8,
        duration_s: 1.0,
        max_events_per_scene: 1,
        num_classes: DEFAULT_NUM_CLASSES,
        snr_db: 30.0,
        seed: 11,
        format: CorpusFormat::Foa,
    };
    let manifest = make_corpus(&gen, &dir).unwrap();
    let (train_names, val_names, test_names) = manifest.split(Stage::Development);

    let (train_tensors, stats) = extract_split(&dir, &train_names);
    let train_set = samples_from(&dir, &train_names, train_tensors, &stats);
    let (val_tensors, _) = extract_split(&dir, &val_names);
    let val_set = samples_from(&dir, &val_names, val_tensors, &stats);
    let (test_tensors, _) = extract_split(&dir, &test_names);
    let test_set = samples_from(&dir, &test_names, test_tensors, &stats);

    let cfg = NetworkConfig {
        ratio: 1,
        ..NetworkConfig::desk(7)
    };
    let mut net = SeldNet::new(cfg, 1).unwrap();
    let schedule = TrainSchedule {
        initial_lr: 5e-3,
        max_epochs: 25,
        seed: 1,
        ..TrainSchedule::default()
    };
    let outcome = train(
        &mut net,
        &schedule,
        &train_set,
        &val_set,
        &DecodeConfig::default(),
        |_| {},
    )
    .unwrap();
    outcome.apply_best(&mut net);
    let (_, report) = evaluate(&mut net, &test_set, &DecodeConfig::default()).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    let _ = std::fs::remove_dir_all(&dir);
    let ok = report.f20 > 0.5 && report.le_cd < 20.0 && elapsed < 900.0;
    gate.check(
        8,
        "end-to-end desk experiment",
        ok,
        &format!(
            "test F20 {:.1}% (> 50), LE {:.1} deg (< 20), ER {:.3}, LR {:.1}%, {elapsed:.0}s",
            report.f20 * 100.0,
            report.le_cd,
            report.er20,
            report.lr_cd * 100.0
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 9: fold protocol
// ---------------------------------------------------------------------------

fn criterion_folds(gate: &mut Gate) {
    let dev = make_folds(Stage::Development);
    let eval_stage = make_folds(Stage::Evaluation);
    let ok = dev.train_folds == [3, 4, 5, 6].into_iter().collect()
        && dev.val_folds == [2].into_iter().collect()
        && dev.test_folds == [1].into_iter().collect()
        && eval_stage.train_folds == [2, 3, 4, 5, 6].into_iter().collect()
        && eval_stage.val_folds == [1].into_iter().collect()
        && eval_stage.test_folds == [7, 8].into_iter().collect();
    gate.check(
        9,
        "fold protocol",
        ok,
        "dev 3-6/2/1, eval 2-6/1/7-8",
    );
}

#[test]
fn acceptance() {
    let mut gate = Gate::default();
    criterion_gradients(&mut gate);
    criterion_scse_identity(&mut gate);
    criterion_feature_oracles(&mut gate);
    criterion_metrics_oracle(&mut gate);
    criterion_codec_round_trip(&mut gate);
    criterion_schedule(&mut gate);
    criterion_overfit(&mut gate);
    criterion_end_to_end(&mut gate);
    criterion_folds(&mut gate);
    assert!(
        gate.failures.is_empty(),
        "acceptance criteria failed:\n{}",
        gate.failures.join("\n")
    );
}
