//! Command-line front end: corpus synthesis, feature extraction, training
//! and evaluation.

use clap::{Args, Parser, Subcommand};
use seld::accdoa::DecodeConfig;
use seld::data::dataset::{
    extract_scene, feature_path, load_samples, source_tag_from_str, stats_over_files,
};
use seld::data::{make_folds, CorpusFormat, CorpusManifest, GeneratorConfig, Stage};
use seld::features::SourceTag;
use seld::io::{read_checkpoint, write_checkpoint, Checkpoint};
use seld::metrics::score_segments;
use seld::nn::model::{NetworkConfig, SeldNet};
use seld::nn::train::{evaluate, train, EpochLog, TrainSchedule};
use seld::nn::Adam;
use seld::{Result, SeldError};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable giving the default corpus directory.
const CORPUS_ENV: &str = "SELD_CORPUS_DIR";

#[derive(Parser)]
#[command(name = "seld", version, about = "Sound event localisation and detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArg {
    /// Corpus directory (falls back to $SELD_CORPUS_DIR).
    #[arg(long, env = CORPUS_ENV)]
    corpus: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with exact labels.
    Synth {
        /// Number of scenes to render (at least 1).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        scenes: u64,
        /// Number of cross-validation folds.
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
        folds: u64,
        /// Master seed; the corpus is reproducible from it.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Audio format(s) to render: foa, mic or both.
        #[arg(long, default_value = "foa")]
        format: String,
        /// Scene length in seconds.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Maximum simultaneous events per scene.
        #[arg(long, default_value_t = 2)]
        max_events: usize,
        /// Event SNR against the diffuse noise floor, in dB.
        #[arg(long, default_value_t = 30.0)]
        snr: f64,
    },
    /// Extract feature tensors for every scene in a corpus.
    Extract {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Feature front-end: mic, foa or foa-mic.
        #[arg(long, default_value = "foa")]
        format: String,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Train the CRNN on extracted features.
    Train {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Feature front-end: mic, foa or foa-mic.
        #[arg(long, default_value = "foa")]
        format: String,
        /// Fold protocol stage: development or evaluation.
        #[arg(long, default_value = "development")]
        stage: String,
        #[arg(long, default_value_t = 50)]
        max_epochs: usize,
        /// Initial learning rate.
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// cSE bottleneck ratio (must divide the filter count).
        #[arg(long, default_value_t = 1)]
        ratio: usize,
        /// Convolutional filter count.
        #[arg(long, default_value_t = 16)]
        filters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV log path.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or the label oracle) on the test folds.
    Eval {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Trained checkpoint; omit with --oracle.
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Fold protocol stage: development or evaluation.
        #[arg(long, default_value = "development")]
        stage: String,
        /// Score the reference labels against themselves (pipeline check).
        #[arg(long, default_value_t = false)]
        oracle: bool,
        /// Feature front-end, only used with --oracle.
        #[arg(long, default_value = "foa")]
        format: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            scenes,
            folds,
            seed,
            out,
            format,
            duration,
            max_events,
            snr,
        } => cmd_synth(scenes, folds, seed, &out, &format, duration, max_events, snr),
        Command::Extract {
            corpus,
            format,
            jobs,
        } => cmd_extract(&corpus.corpus, &format, jobs),
        Command::Train {
            corpus,
            format,
            stage,
            max_epochs,
            lr,
            ratio,
            filters,
            seed,
            out,
            log,
        } => cmd_train(
            &corpus.corpus,
            &format,
            &stage,
            max_epochs,
            lr,
            ratio,
            filters,
            seed,
            &out,
            log.as_deref(),
        ),
        Command::Eval {
            corpus,
            checkpoint,
            stage,
            oracle,
            format,
        } => cmd_eval(&corpus.corpus, checkpoint.as_deref(), &stage, oracle, &format),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    scenes: u64,
    folds: u64,
    seed: u64,
    out: &Path,
    format: &str,
    duration: f64,
    max_events: usize,
    snr: f64,
) -> Result<()> {
    let cfg = GeneratorConfig {
        n_scenes: scenes as usize,
        fold_count: folds as usize,
        duration_s: duration,
        max_events_per_scene: max_events,
        snr_db: snr,
        seed,
        format: format.parse::<CorpusFormat>()?,
        ..GeneratorConfig::default()
    };
    let manifest = seld::data::make_corpus(&cfg, out)?;
    println!(
        "wrote {} scenes across {} folds to {}",
        manifest.entries.len(),
        folds,
        out.display()
    );
    Ok(())
}

fn configure_jobs(jobs: usize) {
    #[cfg(feature = "parallel")]
    if jobs > 0 {
        // ignore failure: the global pool can only be set once
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}

fn cmd_extract(corpus: &Path, format: &str, jobs: usize) -> Result<()> {
    configure_jobs(jobs);
    let tag = source_tag_from_str(format)?;
    let manifest = CorpusManifest::read(corpus)?;
    let names: Vec<&String> = manifest.entries.iter().map(|(n, _)| n).collect();
    let results: Vec<(String, Result<()>)> = seld::par::map_indexed(names.len(), |i| {
        let name = names[i];
        let r = extract_scene(corpus, name, tag)
            .and_then(|t| seld::io::write_features(&feature_path(corpus, name, tag), &t));
        (name.clone(), r)
    });
    let mut failures = 0usize;
    for (name, r) in &results {
        if let Err(e) = r {
            eprintln!("{name}: {e}");
            failures += 1;
        }
    }
    println!(
        "extracted {} of {} scenes ({format})",
        results.len() - failures,
        results.len()
    );
    if failures > 0 {
        return Err(SeldError::InvalidInput(format!(
            "{failures} scene(s) failed extraction"
        )));
    }
    Ok(())
}

fn split_for_stage(corpus: &Path, stage_str: &str) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
    let stage: Stage = stage_str.parse()?;
    let manifest = CorpusManifest::read(corpus)?;
    let (train, val, test) = manifest.split(stage);
    let folds = make_folds(stage);
    for (part, list, wanted) in [
        ("training", &train, &folds.train_folds),
        ("validation", &val, &folds.val_folds),
        ("test", &test, &folds.test_folds),
    ] {
        if list.is_empty() {
            return Err(SeldError::InvalidInput(format!(
                "no scenes in the {part} folds {wanted:?}; regenerate the corpus with enough folds"
            )));
        }
    }
    Ok((train, val, test))
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    corpus: &Path,
    format: &str,
    stage: &str,
    max_epochs: usize,
    lr: f64,
    ratio: usize,
    filters: usize,
    seed: u64,
    out: &Path,
    log_path: Option<&Path>,
) -> Result<()> {
    let tag = source_tag_from_str(format)?;
    let (train_names, val_names, _) = split_for_stage(corpus, stage)?;

    let stats = stats_over_files(corpus, &train_names, tag)?;
    let num_classes = seld::accdoa::DEFAULT_NUM_CLASSES;
    let train_set = load_samples(corpus, &train_names, tag, &stats, num_classes)?;
    let val_set = load_samples(corpus, &val_names, tag, &stats, num_classes)?;

    let cfg = NetworkConfig {
        n_filters: filters,
        ratio,
        ..NetworkConfig::desk(tag.n_channels())
    };
    let mut net = SeldNet::new(cfg.clone(), seed)?;
    let schedule = TrainSchedule {
        max_epochs,
        initial_lr: lr,
        seed,
        ..TrainSchedule::default()
    };

    let mut log_file = match log_path {
        Some(p) => {
            let mut f = std::fs::File::create(p)
                .map_err(|e| SeldError::io(p.display().to_string(), e))?;
            writeln!(f, "{}", EpochLog::CSV_HEADER)
                .map_err(|e| SeldError::io(p.display().to_string(), e))?;
            Some(f)
        }
        None => None,
    };
    let outcome = train(
        &mut net,
        &schedule,
        &train_set,
        &val_set,
        &DecodeConfig::default(),
        |row| {
            println!(
                "epoch {:3}  lr {:.2e}  train {:.5}  val {:.5}  seld {:.4}",
                row.epoch, row.lr, row.train_loss, row.val_loss, row.seld_score
            );
            if let Some(f) = &mut log_file {
                let _ = writeln!(f, "{}", row.csv_row());
            }
        },
    )?;

    outcome.apply_best(&mut net);
    let ckpt = Checkpoint::capture(cfg, &mut net, stats, None::<&Adam>);
    write_checkpoint(out, &ckpt)?;
    println!(
        "best epoch {} (seld score {:.4}); checkpoint written to {}",
        outcome.best_epoch,
        outcome.best_score,
        out.display()
    );
    Ok(())
}

fn tag_for_channels(n: usize) -> Result<SourceTag> {
    match n {
        7 => Ok(SourceTag::Foa),
        10 => Ok(SourceTag::Mic),
        17 => Ok(SourceTag::FoaMic),
        other => Err(SeldError::InvalidInput(format!(
            "checkpoint has {other} input channels"
        ))),
    }
}

fn cmd_eval(
    corpus: &Path,
    checkpoint: Option<&Path>,
    stage: &str,
    oracle: bool,
    format: &str,
) -> Result<()> {
    let (_, _, test_names) = split_for_stage(corpus, stage)?;

    let report = if oracle {
        // score the reference labels against themselves; anything but a
        // perfect score means the pipeline itself is broken
        let mut refs = Vec::new();
        let mut frame_base = 0usize;
        for name in &test_names {
            let events = seld::data::read_metadata(&seld::data::metadata_path(corpus, name))?;
            let span = events.max_frame().map_or(0, |m| m + 1).next_multiple_of(10);
            for mut r in events.records {
                r.frame_index += frame_base;
                refs.push(r);
            }
            frame_base += span;
        }
        let list = seld::accdoa::EventList::new(refs);
        let _ = format; // oracle mode never touches feature files
        score_segments(
            &list,
            &list,
            &seld::metrics::ThresholdConfig::default(),
            seld::accdoa::LABEL_RATE_HZ as usize,
        )?
    } else {
        let path = checkpoint.expect("clap enforces --checkpoint without --oracle");
        let ckpt = read_checkpoint(path)?;
        let tag = tag_for_channels(ckpt.config.n_input_channels)?;
        let mut net = SeldNet::new(ckpt.config.clone(), 0)?;
        ckpt.restore(&mut net)?;
        let test_set = load_samples(
            corpus,
            &test_names,
            tag,
            &ckpt.stats,
            ckpt.config.num_classes,
        )?;
        let (_, report) = evaluate(&mut net, &test_set, &DecodeConfig::default())?;
        report
    };

    println!("ER20   F20    LE_CD  LR_CD  SELD");
    println!(
        "{:<6.3} {:<6.1} {:<6.1} {:<6.1} {:.4}",
        report.er20,
        report.f20 * 100.0,
        report.le_cd,
        report.lr_cd * 100.0,
        report.seld_score()
    );
    Ok(())
}
