//! Single-file checkpoint archive.
//!
//! Layout: an 8-byte magic, a little-endian u64 header length, a JSON header
//! (config snapshot in canonical key-value text, counters, tensor directory),
//! then the raw f64 payload. Training checkpoints carry distillation heads
//! and optimizer state; inference checkpoints are stripped.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Arr;

use super::optim::AdamWState;
use super::TrainConfig;

const MAGIC: &[u8; 8] = b"DSVMCKP1";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    config_text: String,
    epoch: usize,
    best_metric: f64,
    best_epoch: usize,
    rng_seed: u64,
    norm_stats: Option<NormStats>,
    opt_step: Option<u64>,
    has_heads: bool,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub cfg: TrainConfig,
    pub model_params: ParamSet,
    /// Present on training checkpoints, stripped for inference.
    pub head_params: Option<ParamSet>,
    pub opt: Option<AdamWState>,
    /// Completed epochs.
    pub epoch: usize,
    pub best_metric: f64,
    pub best_epoch: usize,
    pub norm_stats: Option<NormStats>,
}

impl Checkpoint {
    /// Drop training-only state (heads, optimizer).
    pub fn strip_for_inference(mut self) -> Checkpoint {
        self.head_params = None;
        self.opt = None;
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = Vec::new();
        let mut payload: Vec<u8> = Vec::new();
        let push_arr = |group: &str, name: &str, arr: &Arr, entries: &mut Vec<TensorEntry>, payload: &mut Vec<u8>| {
            entries.push(TensorEntry {
                group: group.to_string(),
                name: name.to_string(),
                shape: arr.shape().to_vec(),
                offset: payload.len() as u64,
            });
            for v in arr.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        };
        for (name, arr) in self.model_params.iter() {
            push_arr("model", name, arr, &mut entries, &mut payload);
        }
        if let Some(heads) = &self.head_params {
            for (name, arr) in heads.iter() {
                push_arr("heads", name, arr, &mut entries, &mut payload);
            }
        }
        if let Some(opt) = &self.opt {
            for (i, arr) in opt.m.iter().enumerate() {
                push_arr("opt_m", &format!("m{i}"), arr, &mut entries, &mut payload);
            }
            for (i, arr) in opt.v.iter().enumerate() {
                push_arr("opt_v", &format!("v{i}"), arr, &mut entries, &mut payload);
            }
        }
        let header = Header {
            config: self.cfg.clone(),
            config_text: self.cfg.to_canonical_text(),
            epoch: self.epoch,
            best_metric: self.best_metric,
            best_epoch: self.best_epoch,
            rng_seed: self.cfg.seed,
            norm_stats: self.norm_stats.clone(),
            opt_step: self.opt.as_ref().map(|o| o.step),
            has_heads: self.head_params.is_some(),
            tensors: entries,
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| Error::Checkpoint(format!("header serialization: {e}")))?;
        let tmp = path.with_extension("ckpt.tmp");
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(MAGIC)?;
            f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
            f.write_all(&header_bytes)?;
            f.write_all(&payload)?;
            f.sync_all()
        };
        write().map_err(|e| Error::io(tmp.display().to_string(), e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if bytes.len() < 16 || &bytes[0..8] != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint archive",
                path.display()
            )));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        if bytes.len() < 16 + header_len {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let payload = &bytes[16 + header_len..];
        let read_arr = |entry: &TensorEntry| -> Result<Arr> {
            let n: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + n * 8;
            if end > payload.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} out of bounds",
                    entry.name
                )));
            }
            let data: Vec<f64> = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            Ok(Arr::from_vec(&entry.shape, data))
        };
        let mut model_params = ParamSet::default();
        let mut head_params = ParamSet::default();
        let mut opt_m = Vec::new();
        let mut opt_v = Vec::new();
        for entry in &header.tensors {
            let arr = read_arr(entry)?;
            match entry.group.as_str() {
                "model" => {
                    model_params.push(entry.name.clone(), arr);
                }
                "heads" => {
                    head_params.push(entry.name.clone(), arr);
                }
                "opt_m" => opt_m.push(arr),
                "opt_v" => opt_v.push(arr),
                other => {
                    return Err(Error::Checkpoint(format!("unknown tensor group {other}")))
                }
            }
        }
        let opt = header.opt_step.map(|step| AdamWState { step, m: opt_m, v: opt_v });
        Ok(Checkpoint {
            cfg: header.config,
            model_params,
            head_params: if header.has_heads { Some(head_params) } else { None },
            opt,
            epoch: header.epoch,
            best_metric: header.best_metric,
            best_epoch: header.best_epoch,
            norm_stats: header.norm_stats,
        })
    }
}
