//! Training, evaluation, ablation and complexity accounting.

mod checkpoint;
mod complexity;
mod optim;

pub use checkpoint::Checkpoint;
pub use complexity::{
    complexity_report, count_parameters, estimate_flops, ComparisonRow, ComplexityReport,
    REFERENCE_FIGURES,
};
pub use optim::{adamw_step, cosine_lr, cosine_lr_mode, AdamWConfig, AdamWState, LrMode};

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{augment, preprocess, AugmentConfig, Sample};
use crate::distill::{DistillConfig, DistillHeads, ProjSpatialMode, PyramidSpec};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate_reports, binary_report, confusion_counts, multiclass_report, ConfusionCounts,
    DatasetReport,
};
use crate::network::{Model, ModelConfig, SkipMode};
use crate::objectives::{bcedice_from_logits_graph, cedice_graph, total_graph, LossWeights};
use crate::rng::Rng;
use crate::tensor::{Arr, Graph};

const KEY_SHUFFLE: u64 = 0x5348;
const KEY_AUG: u64 = 0x4147;
const HEAD_SEED_SALT: u64 = 0x48454144;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub t_max: usize,
    pub eta_min: f64,
    pub mode: LrMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { t_max: 50, eta_min: 1e-5, mode: LrMode::Periodic }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub distill: DistillConfig,
    pub loss: LossWeights,
    pub augment: AugmentConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub scheduler: SchedulerConfig,
    pub seed: u64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
}

impl TrainConfig {
    /// Desk-scale defaults: 20 epochs, batch 8, 64x64 inputs.
    pub fn desk() -> TrainConfig {
        TrainConfig {
            model: ModelConfig::desk(),
            distill: DistillConfig::default(),
            loss: LossWeights::default(),
            augment: AugmentConfig::default(),
            epochs: 20,
            batch_size: 8,
            base_lr: 1e-3,
            weight_decay: 1e-2,
            scheduler: SchedulerConfig::default(),
            seed: 0,
            grad_clip: 0.0,
        }
    }

    /// Copy the distillation weights into the loss weights (single source of
    /// truth for alpha/beta).
    pub fn normalized(&self) -> TrainConfig {
        let mut out = self.clone();
        out.loss.alpha = out.distill.alpha;
        out.loss.beta = out.distill.beta;
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.distill.validate()?;
        self.loss.validate()?;
        self.augment.validate()?;
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.base_lr > self.scheduler.eta_min && self.scheduler.eta_min > 0.0) {
            return Err(Error::Config(
                "base_lr must exceed scheduler.eta_min, both positive".into(),
            ));
        }
        if self.scheduler.t_max < 1 {
            return Err(Error::Config("scheduler.t_max must be >= 1".into()));
        }
        Ok(())
    }

    /// Canonical key=value snapshot, sorted by key.
    pub fn to_canonical_text(&self) -> String {
        let mut kv = self.to_kv();
        kv.sort();
        kv.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let list = |v: &[usize]| {
            v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        };
        let rot = |v: &[u16]| {
            v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        };
        vec![
            ("model.in_channels".into(), self.model.in_channels.to_string()),
            ("model.num_classes".into(), self.model.num_classes.to_string()),
            ("model.base_dim".into(), self.model.base_dim.to_string()),
            ("model.levels".into(), self.model.levels.to_string()),
            ("model.encoder_depths".into(), list(&self.model.encoder_depths)),
            ("model.decoder_depths".into(), list(&self.model.decoder_depths)),
            ("model.patch_size".into(), self.model.patch_size.to_string()),
            ("model.state_dim".into(), self.model.state_dim.to_string()),
            ("model.expand".into(), self.model.expand.to_string()),
            ("model.input_size".into(), self.model.input_size.to_string()),
            (
                "model.skip_mode".into(),
                match self.model.skip_mode {
                    SkipMode::Add => "add".into(),
                    SkipMode::Concat => "concat".into(),
                },
            ),
            ("distill.alpha".into(), self.distill.alpha.to_string()),
            ("distill.beta".into(), self.distill.beta.to_string()),
            ("distill.teacher_detach".into(), self.distill.teacher_detach.to_string()),
            (
                "distill.proj_spatial_mode".into(),
                match self.distill.proj_spatial_mode {
                    ProjSpatialMode::LearnedLinear => "learned_linear".into(),
                    ProjSpatialMode::Interpolation => "interpolation".into(),
                },
            ),
            (
                "distill.decoder_students_from_level1".into(),
                self.distill.decoder_students_from_level1.to_string(),
            ),
            ("loss.lambda1".into(), self.loss.lambda1.to_string()),
            ("loss.lambda2".into(), self.loss.lambda2.to_string()),
            ("loss.eps_clamp".into(), self.loss.eps_clamp.to_string()),
            ("loss.dice_smooth".into(), self.loss.dice_smooth.to_string()),
            (
                "augment.flip_horizontal_p".into(),
                self.augment.flip_horizontal_p.to_string(),
            ),
            (
                "augment.flip_vertical_p".into(),
                self.augment.flip_vertical_p.to_string(),
            ),
            ("augment.rotation_p".into(), self.augment.rotation_p.to_string()),
            (
                "augment.rotation_choices".into(),
                rot(&self.augment.rotation_choices),
            ),
            ("train.epochs".into(), self.epochs.to_string()),
            ("train.batch_size".into(), self.batch_size.to_string()),
            ("train.base_lr".into(), self.base_lr.to_string()),
            ("train.weight_decay".into(), self.weight_decay.to_string()),
            ("train.seed".into(), self.seed.to_string()),
            ("train.grad_clip".into(), self.grad_clip.to_string()),
            ("scheduler.t_max".into(), self.scheduler.t_max.to_string()),
            ("scheduler.eta_min".into(), self.scheduler.eta_min.to_string()),
            (
                "scheduler.mode".into(),
                match self.scheduler.mode {
                    LrMode::Periodic => "periodic".into(),
                    LrMode::Clamp => "clamp".into(),
                },
            ),
        ]
    }

    /// Apply one key=value override. Unknown keys are hard errors.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value {value:?} for {what}"));
        macro_rules! parse {
            ($t:ty) => {
                value.parse::<$t>().map_err(|_| bad(key))?
            };
        }
        let parse_list = |value: &str| -> Result<Vec<usize>> {
            value
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| bad(key)))
                .collect()
        };
        match key {
            "model.in_channels" => self.model.in_channels = parse!(usize),
            "model.num_classes" => self.model.num_classes = parse!(usize),
            "model.base_dim" => self.model.base_dim = parse!(usize),
            "model.levels" => self.model.levels = parse!(usize),
            "model.encoder_depths" => self.model.encoder_depths = parse_list(value)?,
            "model.decoder_depths" => self.model.decoder_depths = parse_list(value)?,
            "model.patch_size" => self.model.patch_size = parse!(usize),
            "model.state_dim" => self.model.state_dim = parse!(usize),
            "model.expand" => self.model.expand = parse!(usize),
            "model.input_size" => self.model.input_size = parse!(usize),
            "model.skip_mode" => {
                self.model.skip_mode = match value {
                    "add" => SkipMode::Add,
                    "concat" => SkipMode::Concat,
                    _ => return Err(bad(key)),
                }
            }
            "distill.alpha" => self.distill.alpha = parse!(f64),
            "distill.beta" => self.distill.beta = parse!(f64),
            "distill.teacher_detach" => self.distill.teacher_detach = parse!(bool),
            "distill.proj_spatial_mode" => {
                self.distill.proj_spatial_mode = match value {
                    "learned_linear" => ProjSpatialMode::LearnedLinear,
                    "interpolation" => ProjSpatialMode::Interpolation,
                    _ => return Err(bad(key)),
                }
            }
            "distill.decoder_students_from_level1" => {
                self.distill.decoder_students_from_level1 = parse!(bool)
            }
            "loss.lambda1" => self.loss.lambda1 = parse!(f64),
            "loss.lambda2" => self.loss.lambda2 = parse!(f64),
            "loss.eps_clamp" => self.loss.eps_clamp = parse!(f64),
            "loss.dice_smooth" => self.loss.dice_smooth = parse!(f64),
            "augment.flip_horizontal_p" => self.augment.flip_horizontal_p = parse!(f64),
            "augment.flip_vertical_p" => self.augment.flip_vertical_p = parse!(f64),
            "augment.rotation_p" => self.augment.rotation_p = parse!(f64),
            "augment.rotation_choices" => {
                self.augment.rotation_choices = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse::<u16>().map_err(|_| bad(key)))
                    .collect::<Result<_>>()?
            }
            "train.epochs" => self.epochs = parse!(usize),
            "train.batch_size" => self.batch_size = parse!(usize),
            "train.base_lr" => self.base_lr = parse!(f64),
            "train.weight_decay" => self.weight_decay = parse!(f64),
            "train.seed" => self.seed = parse!(u64),
            "train.grad_clip" => self.grad_clip = parse!(f64),
            "scheduler.t_max" => self.scheduler.t_max = parse!(usize),
            "scheduler.eta_min" => self.scheduler.eta_min = parse!(f64),
            "scheduler.mode" => {
                self.scheduler.mode = match value {
                    "periodic" => LrMode::Periodic,
                    "clamp" => LrMode::Clamp,
                    _ => return Err(bad(key)),
                }
            }
            other => {
                return Err(Error::Config(format!("unknown configuration key {other:?}")))
            }
        }
        Ok(())
    }

    /// Parse a key=value config file body over the current values.
    pub fn apply_text(&mut self, body: &str) -> Result<()> {
        for (lineno, raw) in body.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected key = value, got {raw:?}",
                    lineno + 1
                )));
            };
            self.apply_kv(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub l_seg: f64,
    pub l_proj: f64,
    pub l_prog: f64,
    pub l_total: f64,
}

impl StepRecord {
    pub fn csv_header() -> &'static str {
        "step,epoch,lr,l_seg,l_proj,l_prog,l_total"
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.epoch, self.lr, self.l_seg, self.l_proj, self.l_prog, self.l_total
        )
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(StepRecord::csv_header());
        out.push('\n');
        for s in &self.steps {
            out.push_str(&s.csv_line());
            out.push('\n');
        }
        out
    }
}

pub struct TrainOutcome {
    /// Checkpoint of the best validation epoch (heads and optimizer included).
    pub best: Checkpoint,
    /// Checkpoint after the final epoch (resumable).
    pub last: Checkpoint,
    pub log: TrainLog,
    /// Validation report of the best epoch.
    pub best_report: DatasetReport,
    /// Checksum of the initial model parameters (ablation isolation).
    pub init_model_checksum: u64,
    /// Hash of the first epoch's batch order and sample ids.
    pub first_batch_hash: u64,
}

fn seg_loss_graph(
    g: &Graph,
    logits: &crate::tensor::Tensor,
    sample: &Sample,
    k: usize,
    w: &LossWeights,
) -> crate::tensor::Tensor {
    if k == 1 {
        let target = Arr::from_vec(
            &[sample.mask.len(), 1],
            sample.mask.iter().map(|&v| (v > 0) as u8 as f64).collect(),
        );
        let t = g.leaf(target);
        bcedice_from_logits_graph(logits, &t, w)
    } else {
        let targets: Vec<usize> = sample.mask.iter().map(|&v| v as usize).collect();
        cedice_graph(logits, &targets, k, w)
    }
}

fn ensure_finite(name: &str, v: f64, step: u64, epoch: usize) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite(format!(
            "{name} = {v} at step {step} (epoch {epoch})"
        )));
    }
    Ok(v)
}

/// Train on the given splits. `out_dir`, when set, receives config.txt,
/// train_log.csv, summary.json, best.ckpt and last.ckpt. Resuming from a
/// checkpoint reproduces the uninterrupted run bitwise.
pub fn train(
    cfg: &TrainConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    out_dir: Option<&Path>,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    let cfg = cfg.normalized();
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let k = cfg.model.num_classes;
    let stats = match &resume {
        Some(c) => c.norm_stats.clone().unwrap_or_else(|| crate::data::compute_stats(train_set)),
        None => crate::data::compute_stats(train_set),
    };
    let spec = PyramidSpec {
        base_dim: cfg.model.base_dim,
        input_size: cfg.model.input_size,
        levels: cfg.model.levels,
    };

    let (mut model, mut heads, mut opt, start_epoch, mut best_metric, mut best_epoch) =
        match resume {
            Some(c) => {
                let model = Model::from_params(cfg.model.clone(), c.model_params)?;
                let head_params = c.head_params.ok_or_else(|| {
                    Error::Checkpoint("cannot resume from an inference checkpoint".into())
                })?;
                let heads = DistillHeads::from_params(spec, cfg.distill, head_params)?;
                let opt = c.opt.ok_or_else(|| {
                    Error::Checkpoint("checkpoint lacks optimizer state".into())
                })?;
                (model, heads, opt, c.epoch, c.best_metric, c.best_epoch)
            }
            None => {
                let model = Model::init(cfg.model.clone(), cfg.seed)?;
                let heads =
                    DistillHeads::init(spec, cfg.distill, cfg.seed.wrapping_add(HEAD_SEED_SALT))?;
                let shapes: Vec<&Arr> = model
                    .params
                    .iter()
                    .map(|(_, a)| a)
                    .chain(heads.params.iter().map(|(_, a)| a))
                    .collect();
                let opt = AdamWState::new(&shapes);
                (model, heads, opt, 0usize, f64::NEG_INFINITY, 0usize)
            }
        };
    let init_model_checksum = model.params.checksum();
    if start_epoch >= cfg.epochs {
        return Err(Error::Config(format!(
            "nothing to do: checkpoint at epoch {start_epoch}, target {}",
            cfg.epochs
        )));
    }

    let pre_train: Vec<Sample> = train_set
        .iter()
        .map(|s| preprocess(s, cfg.model.input_size, Some(&stats)))
        .collect();
    let pre_val: Vec<Sample> = val_set
        .iter()
        .map(|s| preprocess(s, cfg.model.input_size, Some(&stats)))
        .collect();

    let adamw = AdamWConfig { weight_decay: cfg.weight_decay, ..Default::default() };
    let n_model = model.params.len();
    let n_total = n_model + heads.params.len();

    let mut log = TrainLog::default();
    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
            let cfg_path = dir.join("config.txt");
            fs::write(&cfg_path, cfg.to_canonical_text())
                .map_err(|e| Error::io(cfg_path.display().to_string(), e))?;
            let path = dir.join("train_log.csv");
            let fresh = start_epoch == 0 || !path.exists();
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            if fresh {
                writeln!(f, "{}", StepRecord::csv_header())
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
            }
            Some(f)
        }
        None => None,
    };

    let mut best: Option<(Checkpoint, DatasetReport)> = None;
    let mut first_batch_hash = 0u64;
    let mut step: u64 = (start_epoch * train_set.len().div_ceil(cfg.batch_size)) as u64;
    let started = std::time::Instant::now();

    for epoch in start_epoch..cfg.epochs {
        let lr = cosine_lr_mode(
            epoch,
            cfg.scheduler.t_max,
            cfg.base_lr,
            cfg.scheduler.eta_min,
            cfg.scheduler.mode,
        );
        let mut order: Vec<usize> = (0..pre_train.len()).collect();
        Rng::derive(cfg.seed, &[KEY_SHUFFLE, epoch as u64]).shuffle(&mut order);
        if epoch == start_epoch {
            let mut h = Rng::hash_str("batch-order");
            for &i in &order {
                h ^= Rng::hash_str(&pre_train[i].id).wrapping_add(i as u64);
                h = h.rotate_left(13).wrapping_mul(0x9E3779B97F4A7C15);
            }
            first_batch_hash = h;
        }
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_acc: Vec<Arr> = model
                .params
                .iter()
                .map(|(_, a)| Arr::zeros(a.shape()))
                .chain(heads.params.iter().map(|(_, a)| Arr::zeros(a.shape())))
                .collect();
            let (mut seg_sum, mut proj_sum, mut prog_sum, mut total_sum) = (0.0, 0.0, 0.0, 0.0);
            for &i in batch {
                let mut aug_rng = Rng::derive(
                    cfg.seed,
                    &[KEY_AUG, epoch as u64, Rng::hash_str(&pre_train[i].id)],
                );
                let sample = augment(&pre_train[i], &cfg.augment, &mut aug_rng);
                let g = Graph::new();
                let model_bp = model.params.bind(&g);
                let head_bp = heads.params.bind(&g);
                let (fwd, _) = model.forward_with(&g, &sample.image, &model_bp)?;
                let seg = seg_loss_graph(&g, &fwd.logits, &sample, k, &cfg.loss);
                let (proj, _) = heads.projection_loss_graph(&fwd.pyramid, &head_bp);
                let (prog, _) = heads.progressive_loss_graph(&fwd.pyramid, &head_bp);
                let total = total_graph(&seg, &proj, &prog, &cfg.loss);
                seg_sum += ensure_finite("l_seg", seg.item(), step, epoch)?;
                proj_sum += ensure_finite("l_proj", proj.item(), step, epoch)?;
                prog_sum += ensure_finite("l_prog", prog.item(), step, epoch)?;
                total_sum += ensure_finite("l_total", total.item(), step, epoch)?;
                let mut grads = g.backward(&total);
                for (slot, t) in grad_acc.iter_mut().zip(
                    (0..n_model)
                        .map(|j| model_bp.t(j))
                        .chain((0..heads.params.len()).map(|j| head_bp.t(j))),
                ) {
                    if let Some(ga) = grads.take(t) {
                        slot.axpy(1.0, &ga);
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for gslot in &mut grad_acc {
                *gslot = gslot.scale(scale);
            }
            if cfg.grad_clip > 0.0 {
                let norm: f64 = grad_acc
                    .iter()
                    .map(|a| a.data().iter().map(|v| v * v).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > cfg.grad_clip {
                    let s = cfg.grad_clip / norm;
                    for gslot in &mut grad_acc {
                        *gslot = gslot.scale(s);
                    }
                }
            }
            {
                let mut refs: Vec<&mut Arr> = Vec::with_capacity(n_total);
                let (mp, hp) = (&mut model.params, &mut heads.params);
                refs.extend(mp.arrays_mut().iter_mut());
                refs.extend(hp.arrays_mut().iter_mut());
                adamw_step(&adamw, &mut opt, &mut refs, &grad_acc, lr);
            }
            let record = StepRecord {
                step,
                epoch,
                lr,
                l_seg: seg_sum * scale,
                l_proj: proj_sum * scale,
                l_prog: prog_sum * scale,
                l_total: total_sum * scale,
            };
            if let Some(f) = log_file.as_mut() {
                writeln!(f, "{}", record.csv_line())
                    .map_err(|e| Error::io("train_log.csv", e))?;
            }
            log.steps.push(record);
            step += 1;
        }

        let report = evaluate_model(&model, &pre_val, k, None)?;
        let metric = if k == 1 { report.mean.miou } else { report.mean.dsc };
        let snapshot = |epoch_done: usize, best_metric: f64, best_epoch: usize| Checkpoint {
            cfg: cfg.clone(),
            model_params: model.params.clone(),
            head_params: Some(heads.params.clone()),
            opt: Some(opt.clone()),
            epoch: epoch_done,
            best_metric,
            best_epoch,
            norm_stats: Some(stats.clone()),
        };
        if metric > best_metric {
            best_metric = metric;
            best_epoch = epoch + 1;
            let b = snapshot(epoch + 1, best_metric, best_epoch);
            if let Some(dir) = out_dir {
                b.save(&dir.join("best.ckpt"))?;
            }
            best = Some((b, report.clone()));
        }
        if let Some(dir) = out_dir {
            snapshot(epoch + 1, best_metric, best_epoch).save(&dir.join("last.ckpt"))?;
        }
    }

    let (best_ckpt, best_report) = best.ok_or_else(|| {
        Error::NonFinite("no epoch produced a finite validation metric".into())
    })?;
    let last = Checkpoint {
        cfg: cfg.clone(),
        model_params: model.params.clone(),
        head_params: Some(heads.params.clone()),
        opt: Some(opt.clone()),
        epoch: cfg.epochs,
        best_metric,
        best_epoch,
        norm_stats: Some(stats.clone()),
    };
    if let Some(dir) = out_dir {
        let summary = serde_json::json!({
            "epochs_run": cfg.epochs - start_epoch,
            "steps": log.steps.len(),
            "best_metric": best_metric,
            "best_epoch": best_epoch,
            "wall_time_s": started.elapsed().as_secs_f64(),
        });
        let path = dir.join("summary.json");
        fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary"))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(TrainOutcome {
        best: best_ckpt,
        last,
        log,
        best_report,
        init_model_checksum,
        first_batch_hash,
    })
}

/// Predicted mask for one already-preprocessed sample.
pub fn predict_mask(model: &Model, sample: &Sample, k: usize) -> Result<Vec<u8>> {
    let out = model.forward(&sample.image)?;
    let hw = sample.h * sample.w;
    Ok(if k == 1 {
        out.logits.data().iter().map(|&v| (v > 0.0) as u8).collect()
    } else {
        let mut mask = vec![0u8; hw];
        for (p, m) in mask.iter_mut().enumerate() {
            let mut best_c = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for c in 0..k {
                let v = out.logits.data()[c * hw + p];
                if v > best_v {
                    best_v = v;
                    best_c = c;
                }
            }
            *m = best_c as u8;
        }
        mask
    })
}

/// Evaluate a model on preprocessed samples. `raw_masks`, when given,
/// supplies ground truth at original resolution paired by index.
pub fn evaluate_model(
    model: &Model,
    samples: &[Sample],
    k: usize,
    _spacing: Option<(f64, f64)>,
) -> Result<DatasetReport> {
    let mut per_image = Vec::with_capacity(samples.len());
    let mut pooled = ConfusionCounts::default();
    for s in samples {
        let pred = predict_mask(model, s, k)?;
        let report = if k == 1 {
            let gt: Vec<u8> = s.mask.iter().map(|&v| (v > 0) as u8).collect();
            pooled.add(&confusion_counts(&pred, &gt)?);
            binary_report(&pred, &gt, s.h, s.w)?
        } else {
            multiclass_report(&pred, &s.mask, s.h, s.w, k)?
        };
        per_image.push((s.id.clone(), report));
    }
    Ok(aggregate_reports(
        per_image,
        if k == 1 { Some(pooled) } else { None },
    ))
}

/// Evaluate a checkpoint on raw samples (preprocessing applied here).
pub fn evaluate(ckpt: &Checkpoint, samples: &[Sample]) -> Result<DatasetReport> {
    let model = Model::from_params(ckpt.cfg.model.clone(), ckpt.model_params.clone())?;
    let k = ckpt.cfg.model.num_classes;
    let pre: Vec<Sample> = samples
        .iter()
        .map(|s| preprocess(s, ckpt.cfg.model.input_size, ckpt.norm_stats.as_ref()))
        .collect();
    evaluate_model(&model, &pre, k, None)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CellStat {
    pub mean: f64,
    pub std: f64,
}

impl CellStat {
    fn over(values: &[f64]) -> CellStat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        CellStat { mean, std: var.sqrt() }
    }

    pub fn render(&self, multi_seed: bool) -> String {
        if multi_seed {
            format!("{:.4}±{:.4}", self.mean, self.std)
        } else {
            format!("{:.4}", self.mean)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub alpha: f64,
    pub beta: f64,
    /// miou, dsc, acc, spe, sen, avg
    pub cells: Vec<CellStat>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    pub seeds: Vec<u64>,
    /// Initial model checksums agreed across the four configurations.
    pub shared_init_verified: bool,
    /// First-epoch batch order agreed across the four configurations.
    pub shared_order_verified: bool,
}

pub const ABLATION_METRIC_COLUMNS: [&str; 6] = ["miou", "dsc", "acc", "spe", "sen", "avg"];

impl AblationResult {
    pub fn to_csv(&self) -> String {
        let multi = self.seeds.len() > 1;
        let mut out = String::from("config,alpha,beta");
        for c in ABLATION_METRIC_COLUMNS {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{},{}", row.label, row.alpha, row.beta));
            for cell in &row.cells {
                out.push(',');
                out.push_str(&cell.render(multi));
            }
            out.push('\n');
        }
        out
    }
}

/// Train the four (alpha, beta) configurations with shared initial weights
/// and data order, evaluating each best checkpoint on the validation split.
pub fn run_ablation(
    cfg: &TrainConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<AblationResult> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let base = cfg.normalized();
    let (alpha, beta) = (base.distill.alpha, base.distill.beta);
    if alpha == 0.0 && beta == 0.0 {
        return Err(Error::Config(
            "ablation needs nonzero distillation weights to vary".into(),
        ));
    }
    let variants: [(&str, f64, f64); 4] = [
        ("baseline", 0.0, 0.0),
        ("proj", alpha, 0.0),
        ("prog", 0.0, beta),
        ("both", alpha, beta),
    ];
    let mut metric_runs: Vec<Vec<[f64; 6]>> = vec![Vec::new(); 4];
    let mut shared_init = true;
    let mut shared_order = true;
    for &seed in seeds {
        let mut checksums = Vec::new();
        let mut orders = Vec::new();
        for (vi, &(_, a, b)) in variants.iter().enumerate() {
            let mut vcfg = base.clone();
            vcfg.seed = seed;
            vcfg.distill.alpha = a;
            vcfg.distill.beta = b;
            let vcfg = vcfg.normalized();
            let run_dir = out_dir.map(|d| d.join(format!("{}_seed{seed}", variants[vi].0)));
            let outcome = train(&vcfg, train_set, val_set, run_dir.as_deref(), None)?;
            checksums.push(outcome.init_model_checksum);
            orders.push(outcome.first_batch_hash);
            let m = &outcome.best_report.mean;
            let avg = (m.miou + m.dsc + m.acc + m.spe + m.sen) / 5.0;
            metric_runs[vi].push([m.miou, m.dsc, m.acc, m.spe, m.sen, avg]);
        }
        shared_init &= checksums.windows(2).all(|w| w[0] == w[1]);
        shared_order &= orders.windows(2).all(|w| w[0] == w[1]);
    }
    let rows = variants
        .iter()
        .zip(metric_runs)
        .map(|(&(label, a, b), runs)| {
            let cells = (0..6)
                .map(|col| CellStat::over(&runs.iter().map(|r| r[col]).collect::<Vec<_>>()))
                .collect();
            AblationRow { label: label.to_string(), alpha: a, beta: b, cells }
        })
        .collect();
    let result = AblationResult {
        rows,
        seeds: seeds.to_vec(),
        shared_init_verified: shared_init,
        shared_order_verified: shared_order,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = dir.join("ablation.csv");
        fs::write(&path, result.to_csv())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(result)
}
