//! Binary containers: extracted feature tensors (`SELDFT01`) and model
//! checkpoints (`SELDCP01`). Both are little-endian and fully
//! self-describing, so a reader can reject truncated or mislabeled files
//! with a useful message.

use crate::features::{ChannelStats, FeatureTensor, SourceTag};
use crate::nn::adam::{Adam, AdamState};
use crate::nn::model::NetworkConfig;
use crate::nn::param::ParamSet;
use crate::{Result, SeldError};
use ndarray::Array3;
use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const FEATURE_MAGIC: &[u8; 8] = b"SELDFT01";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SELDCP01";

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<_, 4>(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<_, 8>(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<_, 8>(r)?))
}

fn write_string<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_string<R: Read>(r: &mut R, path: &str) -> Result<String> {
    let len = read_u32(r).map_err(|e| SeldError::io(path, e))? as usize;
    if len > 1 << 20 {
        return Err(SeldError::corrupt(path, format!("string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| SeldError::io(path, e))?;
    String::from_utf8(buf).map_err(|_| SeldError::corrupt(path, "non-UTF8 string"))
}

/// Write a feature tensor: magic, channels/frames/mels as u32, the source
/// tag byte, then row-major f32 samples.
pub fn write_features(path: &Path, tensor: &FeatureTensor) -> Result<()> {
    let p = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| SeldError::io(&p, e))?;
    let mut w = BufWriter::new(file);
    let inner = |w: &mut BufWriter<std::fs::File>| -> std::io::Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        write_u32(w, tensor.n_channels() as u32)?;
        write_u32(w, tensor.n_frames() as u32)?;
        write_u32(w, tensor.n_mels() as u32)?;
        w.write_all(&[tensor.source_tag.to_u8()])?;
        for &v in tensor.data.iter() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.flush()
    };
    inner(&mut w).map_err(|e| SeldError::io(&p, e))
}

pub fn read_features(path: &Path) -> Result<FeatureTensor> {
    let p = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| SeldError::io(&p, e))?;
    let mut r = BufReader::new(file);

    let magic = read_exact::<_, 8>(&mut r).map_err(|e| SeldError::io(&p, e))?;
    if &magic != FEATURE_MAGIC {
        return Err(SeldError::corrupt(&p, "bad magic, not a feature file"));
    }
    let channels = read_u32(&mut r).map_err(|e| SeldError::io(&p, e))? as usize;
    let frames = read_u32(&mut r).map_err(|e| SeldError::io(&p, e))? as usize;
    let mels = read_u32(&mut r).map_err(|e| SeldError::io(&p, e))? as usize;
    let tag_byte = read_exact::<_, 1>(&mut r).map_err(|e| SeldError::io(&p, e))?[0];
    let source_tag = SourceTag::from_u8(tag_byte)
        .map_err(|_| SeldError::corrupt(&p, format!("unknown source tag {tag_byte}")))?;
    if channels != source_tag.n_channels() {
        return Err(SeldError::corrupt(
            &p,
            format!(
                "channel count {channels} inconsistent with tag {source_tag:?} ({})",
                source_tag.n_channels()
            ),
        ));
    }
    let n = channels
        .checked_mul(frames)
        .and_then(|v| v.checked_mul(mels))
        .ok_or_else(|| SeldError::corrupt(&p, "element count overflow"))?;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| SeldError::corrupt(&p, "truncated feature payload"))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| SeldError::io(&p, e))? != 0 {
        return Err(SeldError::corrupt(&p, "trailing bytes after payload"));
    }
    let mut data = Array3::zeros((channels, frames, mels));
    for (i, v) in data.iter_mut().enumerate() {
        *v = f32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
    }
    FeatureTensor::new(data, source_tag)
}

/// Everything needed to resume or apply a trained model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    /// Named parameter tensors (shape + values), traversal order.
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
    /// Per-channel input normalization, stored alongside the weights so
    /// inference uses the exact training statistics.
    pub stats: ChannelStats,
    /// Adam moments keyed by parameter name, empty for inference-only use.
    pub adam: BTreeMap<String, AdamState>,
    pub adam_step: u64,
    pub adam_lr: f64,
}

impl Checkpoint {
    /// Snapshot the current parameters of a model.
    pub fn capture<M: ParamSet>(
        config: NetworkConfig,
        model: &mut M,
        stats: ChannelStats,
        opt: Option<&Adam>,
    ) -> Self {
        let mut tensors = Vec::new();
        model.visit(
            "",
            &mut |name: &str, shape: &[usize], value: &mut [f64], _: &mut [f64]| {
                tensors.push((name.to_string(), shape.to_vec(), value.to_vec()));
            },
        );
        // batch-norm running statistics ride along as ordinary tensors;
        // without them a restored model normalizes with the init values
        model.visit_state("", &mut |name: &str, value: &mut [f64]| {
            tensors.push((name.to_string(), vec![value.len()], value.to_vec()));
        });
        Checkpoint {
            config,
            tensors,
            stats,
            adam: opt.map(|o| o.state.clone()).unwrap_or_default(),
            adam_step: opt.map(|o| o.step).unwrap_or(0),
            adam_lr: opt.map(|o| o.lr).unwrap_or(0.0),
        }
    }

    /// Load the stored tensors into a model with the same architecture.
    pub fn restore<M: ParamSet>(&self, model: &mut M) -> Result<()> {
        let by_name: BTreeMap<&str, &(String, Vec<usize>, Vec<f64>)> =
            self.tensors.iter().map(|t| (t.0.as_str(), t)).collect();
        let mut missing = Vec::new();
        let mut applied = 0usize;
        model.visit(
            "",
            &mut |name: &str, shape: &[usize], value: &mut [f64], _: &mut [f64]| {
                match by_name.get(name) {
                    Some((_, s, vals)) if s == shape && vals.len() == value.len() => {
                        value.copy_from_slice(vals);
                        applied += 1;
                    }
                    Some(_) => missing.push(format!("{name} (shape mismatch)")),
                    None => missing.push(name.to_string()),
                }
            },
        );
        model.visit_state("", &mut |name: &str, value: &mut [f64]| {
            match by_name.get(name) {
                Some((_, _, vals)) if vals.len() == value.len() => {
                    value.copy_from_slice(vals);
                    applied += 1;
                }
                Some(_) => missing.push(format!("{name} (shape mismatch)")),
                None => missing.push(name.to_string()),
            }
        });
        if !missing.is_empty() {
            return Err(SeldError::InvalidInput(format!(
                "checkpoint does not match model: {}",
                missing.join(", ")
            )));
        }
        if applied != self.tensors.len() {
            return Err(SeldError::InvalidInput(format!(
                "checkpoint has {} tensors, model consumed {applied}",
                self.tensors.len()
            )));
        }
        Ok(())
    }

    /// Rebuild an optimizer carrying the stored moments.
    pub fn optimizer(&self) -> Adam {
        let mut opt = Adam::new(if self.adam_lr > 0.0 { self.adam_lr } else { 1e-3 });
        opt.state = self.adam.clone();
        opt.step = self.adam_step;
        opt
    }
}

fn write_config<W: Write>(w: &mut W, cfg: &NetworkConfig) -> std::io::Result<()> {
    for v in [
        cfg.n_input_channels,
        cfg.n_filters,
        cfg.ratio,
        cfg.num_classes,
        cfg.time_pools[0],
        cfg.time_pools[1],
        cfg.time_pools[2],
        cfg.freq_pools[0],
        cfg.freq_pools[1],
        cfg.freq_pools[2],
        cfg.rnn_units,
        cfg.rnn_layers,
        cfg.fc_units,
        cfg.n_mels,
    ] {
        write_u32(w, v as u32)?;
    }
    Ok(())
}

fn read_config<R: Read>(r: &mut R, path: &str) -> Result<NetworkConfig> {
    let mut vals = [0usize; 14];
    for v in vals.iter_mut() {
        *v = read_u32(r).map_err(|e| SeldError::io(path, e))? as usize;
    }
    let cfg = NetworkConfig {
        n_input_channels: vals[0],
        n_filters: vals[1],
        ratio: vals[2],
        num_classes: vals[3],
        time_pools: [vals[4], vals[5], vals[6]],
        freq_pools: [vals[7], vals[8], vals[9]],
        rnn_units: vals[10],
        rnn_layers: vals[11],
        fc_units: vals[12],
        n_mels: vals[13],
    };
    cfg.validate()
        .map_err(|e| SeldError::corrupt(path, format!("bad network config: {e}")))?;
    Ok(cfg)
}

fn write_named_f64s<W: Write>(
    w: &mut W,
    entries: &[(String, Vec<usize>, Vec<f64>)],
) -> std::io::Result<()> {
    write_u32(w, entries.len() as u32)?;
    for (name, shape, vals) in entries {
        write_string(w, name)?;
        write_u32(w, shape.len() as u32)?;
        for &d in shape {
            write_u32(w, d as u32)?;
        }
        write_u64(w, vals.len() as u64)?;
        for &v in vals {
            write_f64(w, v)?;
        }
    }
    Ok(())
}

fn read_named_f64s<R: Read>(r: &mut R, path: &str) -> Result<Vec<(String, Vec<usize>, Vec<f64>)>> {
    let count = read_u32(r).map_err(|e| SeldError::io(path, e))? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name = read_string(r, path)?;
        let rank = read_u32(r).map_err(|e| SeldError::io(path, e))? as usize;
        if rank > 8 {
            return Err(SeldError::corrupt(path, format!("tensor rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r).map_err(|e| SeldError::io(path, e))? as usize);
        }
        let n = read_u64(r).map_err(|e| SeldError::io(path, e))? as usize;
        if shape.iter().product::<usize>() != n {
            return Err(SeldError::corrupt(
                path,
                format!("tensor {name}: shape {shape:?} vs length {n}"),
            ));
        }
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            vals.push(read_f64(r).map_err(|_| SeldError::corrupt(path, "truncated tensor"))?);
        }
        out.push((name, shape, vals));
    }
    Ok(out)
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let p = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| SeldError::io(&p, e))?;
    let mut w = BufWriter::new(file);
    let inner = |w: &mut BufWriter<std::fs::File>| -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        write_config(w, &ckpt.config)?;
        write_named_f64s(w, &ckpt.tensors)?;
        // normalization statistics ride along as two named vectors
        let n = ckpt.stats.mean.len();
        let norm = vec![
            ("norm.mean".to_string(), vec![n], ckpt.stats.mean.clone()),
            ("norm.std".to_string(), vec![n], ckpt.stats.std.clone()),
        ];
        write_named_f64s(w, &norm)?;
        write_u64(w, ckpt.adam_step)?;
        write_f64(w, ckpt.adam_lr)?;
        let moments: Vec<(String, Vec<usize>, Vec<f64>)> = ckpt
            .adam
            .iter()
            .flat_map(|(name, s)| {
                [
                    (format!("{name}.m"), vec![s.m.len()], s.m.clone()),
                    (format!("{name}.v"), vec![s.v.len()], s.v.clone()),
                ]
            })
            .collect();
        write_named_f64s(w, &moments)?;
        w.flush()
    };
    inner(&mut w).map_err(|e| SeldError::io(&p, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let p = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| SeldError::io(&p, e))?;
    let mut r = BufReader::new(file);

    let magic = read_exact::<_, 8>(&mut r).map_err(|e| SeldError::io(&p, e))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(SeldError::corrupt(&p, "bad magic, not a checkpoint"));
    }
    let config = read_config(&mut r, &p)?;
    let tensors = read_named_f64s(&mut r, &p)?;
    let norm = read_named_f64s(&mut r, &p)?;
    let mut stats = ChannelStats::identity(config.n_input_channels);
    for (name, _, vals) in norm {
        match name.as_str() {
            "norm.mean" => stats.mean = vals,
            "norm.std" => stats.std = vals,
            other => return Err(SeldError::corrupt(&p, format!("unknown norm tensor {other}"))),
        }
    }
    if stats.mean.len() != stats.std.len() {
        return Err(SeldError::corrupt(&p, "norm mean/std length mismatch"));
    }
    let adam_step = read_u64(&mut r).map_err(|e| SeldError::io(&p, e))?;
    let adam_lr = read_f64(&mut r).map_err(|e| SeldError::io(&p, e))?;
    let moments = read_named_f64s(&mut r, &p)?;
    let mut adam: BTreeMap<String, AdamState> = BTreeMap::new();
    for (name, _, vals) in moments {
        let (base, kind) = name
            .rsplit_once('.')
            .ok_or_else(|| SeldError::corrupt(&p, format!("bad moment name {name}")))?;
        let entry = adam.entry(base.to_string()).or_insert_with(|| AdamState {
            m: Vec::new(),
            v: Vec::new(),
        });
        match kind {
            "m" => entry.m = vals,
            "v" => entry.v = vals,
            _ => return Err(SeldError::corrupt(&p, format!("bad moment name {name}"))),
        }
    }
    Ok(Checkpoint {
        config,
        tensors,
        stats,
        adam,
        adam_step,
        adam_lr,
    })
}
