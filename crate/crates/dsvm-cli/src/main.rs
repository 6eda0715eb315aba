//! Command-line entry point: dataset synthesis, training, evaluation,
//! prediction overlays, ablation, and complexity reporting.
//!
//! Configuration layers: built-in desk defaults, then an optional key=value
//! config file, then repeated `--set key=value` flags. Unknown keys are hard
//! errors. Artifacts land under `--out` (default `$DSVM_OUT_ROOT` or
//! `./runs`).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dsvm_core::data::{
    generate_synthetic, load_dataset, load_or_compute_stats, preprocess, write_image_png,
    write_mask_png, Sample, ShapeFamily, SynthConfig,
};
use dsvm_core::engine::{
    complexity_report, evaluate, run_ablation, train, Checkpoint, TrainConfig,
};
use dsvm_core::metrics::{boundary_pixels, report_csv, report_json};
use dsvm_core::network::{Model, ModelConfig};
use dsvm_core::tensor::Arr;

#[derive(Parser)]
#[command(
    name = "dsvm",
    about = "Vision-Mamba U-Net with dual self-distillation: data synthesis, training, evaluation, ablation, complexity",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Key=value config file applied over the desk defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Individual overrides, e.g. --set train.epochs=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed override (same as --set train.seed=N).
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch override (same as --set train.epochs=N).
    #[arg(long)]
    epochs: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::desk();
        if let Some(path) = &self.config {
            let body = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_text(&body)?;
        }
        for pair in &self.set {
            let Some((k, v)) = pair.split_once('=') else {
                bail!("--set expects key=value, got {pair:?}");
            };
            cfg.apply_kv(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.epochs = epochs;
        }
        Ok(cfg.normalized())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic shapes dataset.
    Synth {
        /// Target dataset directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training samples.
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Validation samples.
        #[arg(long, default_value_t = 16)]
        n_val: usize,
        /// Test samples.
        #[arg(long, default_value_t = 0)]
        n_test: usize,
        /// Square image size (divisible by 32).
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// 2 for binary masks, higher for multi-class.
        #[arg(long, default_value_t = 2)]
        classes: usize,
        /// Gaussian pixel noise level.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Shape family: ellipses, polygons or mixed.
        #[arg(long, default_value = "mixed")]
        shapes: String,
        /// Overwrite an existing non-empty target.
        #[arg(long, default_value_t = false)]
        force: bool,
    },
    /// Train on a dataset directory (train/ and val/ splits).
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset root (as produced by `synth`).
        #[arg(long)]
        data: PathBuf,
        /// Output directory for logs and checkpoints.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Dataset class count when no manifest is present.
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Write predicted masks and boundary overlays for a split.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Train the four (alpha, beta) ablation configurations.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated seeds, e.g. 0,1,2.
        #[arg(long, default_value = "0")]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Report parameter counts and FLOPs without training.
    Complexity {
        /// Preset: desk (C=16, 64x64) or paper (C=96, 256x256).
        #[arg(long, default_value = "desk")]
        preset: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_root() -> PathBuf {
    std::env::var_os("DSVM_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn resolve_out(out: Option<PathBuf>, sub: &str) -> PathBuf {
    out.unwrap_or_else(|| out_root().join(sub))
}

fn write_atomic(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, body).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Dataset class count: explicit flag wins, then the synth manifest,
/// then binary.
fn dataset_classes(root: &Path, flag: Option<usize>) -> Result<usize> {
    if let Some(k) = flag {
        if k < 2 {
            bail!("--classes must be >= 2");
        }
        return Ok(k);
    }
    let manifest = root.join("manifest.json");
    if manifest.exists() {
        let text = fs::read_to_string(&manifest)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", manifest.display()))?;
        if let Some(k) = value
            .get("config")
            .and_then(|c| c.get("num_classes"))
            .and_then(|v| v.as_u64())
        {
            return Ok(k as usize);
        }
    }
    Ok(2)
}

fn model_classes(dataset_classes: usize) -> usize {
    if dataset_classes <= 2 { 1 } else { dataset_classes }
}

fn load_split(root: &Path, split: &str, classes: usize) -> Result<Vec<Sample>> {
    let samples = load_dataset(root, split, classes, None)?;
    if samples.is_empty() {
        bail!("no samples found under {}/{split}", root.display());
    }
    Ok(samples)
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { out, seed, n, n_val, n_test, size, classes, noise, shapes, force } => {
            let out = resolve_out(out, "synthetic");
            if out.exists() && out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false) {
                if !force {
                    bail!(
                        "{} exists and is not empty; pass --force to overwrite",
                        out.display()
                    );
                }
                fs::remove_dir_all(&out)
                    .with_context(|| format!("clearing {}", out.display()))?;
            }
            let shape_family = match shapes.as_str() {
                "ellipses" => ShapeFamily::Ellipses,
                "polygons" => ShapeFamily::Polygons,
                "mixed" => ShapeFamily::Mixed,
                other => bail!("unknown shape family {other:?}"),
            };
            let cfg = SynthConfig {
                n_samples: n,
                size,
                num_classes: classes,
                shape_family,
                noise,
                seed,
            };
            let mut splits = vec![("train", n)];
            if n_val > 0 {
                splits.push(("val", n_val));
            }
            if n_test > 0 {
                splits.push(("test", n_test));
            }
            generate_synthetic(&out, &splits, &cfg)?;
            println!("wrote {} ({} train / {} val / {} test)", out.display(), n, n_val, n_test);
            println!("manifest: {}", out.join("manifest.json").display());
        }
        Command::Train { cfg, data, out, resume, classes } => {
            let mut tc = cfg.resolve()?;
            let k = dataset_classes(&data, classes)?;
            tc.model.num_classes = model_classes(k);
            let train_set = load_split(&data, "train", k)?;
            let val_set = load_split(&data, "val", k)?;
            // cache the normalization statistics alongside the dataset
            let _ = load_or_compute_stats(&data, &train_set)?;
            let out = resolve_out(out, "train");
            let resume_ckpt = match resume {
                Some(path) => Some(Checkpoint::load(&path)?),
                None => None,
            };
            let outcome = train(&tc, &train_set, &val_set, Some(&out), resume_ckpt)?;
            println!(
                "trained {} epochs; best {} {:.4} at epoch {}",
                tc.epochs,
                if tc.model.num_classes == 1 { "mIoU" } else { "DSC" },
                outcome.best.best_metric,
                outcome.best.best_epoch
            );
            println!("checkpoints: {}", out.display());
        }
        Command::Eval { checkpoint, data, split, out, classes } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let k = dataset_classes(&data, classes)?;
            if model_classes(k) != ckpt.cfg.model.num_classes {
                bail!(
                    "checkpoint was trained for {} output classes but the dataset has {k}",
                    ckpt.cfg.model.num_classes
                );
            }
            let samples = load_split(&data, &split, k)?;
            let report = evaluate(&ckpt, &samples)?;
            let out = resolve_out(out, "eval");
            write_atomic(&out.join("metrics.csv"), &report_csv(&report))?;
            write_atomic(&out.join("metrics.json"), &report_json(&report))?;
            let m = &report.mean;
            println!(
                "mean over {} images: mIoU {:.4} DSC {:.4} Acc {:.4} Spe {:.4} Sen {:.4}",
                report.per_image.len(),
                m.miou,
                m.dsc,
                m.acc,
                m.spe,
                m.sen
            );
            if let Some(hd) = m.hd95 {
                println!("mean HD95 {hd:.4} ({} undefined)", report.hd95_undefined);
            }
            if let Some(per_class) = &m.per_class {
                for pc in per_class {
                    let hd = pc
                        .hd95
                        .map(|v| format!("{v:.3}"))
                        .unwrap_or_else(|| "-".into());
                    println!("  class {}: DSC {:.4} HD95 {hd}", pc.class, pc.dsc);
                }
            }
            println!("wrote {}", out.join("metrics.csv").display());
        }
        Command::Predict { checkpoint, data, split, out, classes } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let k = dataset_classes(&data, classes)?;
            let model_k = ckpt.cfg.model.num_classes;
            if model_classes(k) != model_k {
                bail!(
                    "checkpoint was trained for {} output classes but the dataset has {k}",
                    model_k
                );
            }
            let samples = load_split(&data, &split, k)?;
            let model = Model::from_params(ckpt.cfg.model.clone(), ckpt.model_params.clone())?;
            let out = resolve_out(out, "predict");
            fs::create_dir_all(out.join("masks"))?;
            fs::create_dir_all(out.join("overlays"))?;
            for s in &samples {
                let pre = preprocess(s, ckpt.cfg.model.input_size, ckpt.norm_stats.as_ref());
                let mask = dsvm_core::engine::predict_mask(&model, &pre, model_k)?;
                write_mask_png(
                    &out.join("masks").join(format!("{}.png", s.id)),
                    &mask,
                    pre.h,
                    pre.w,
                    model_k == 1,
                )?;
                // overlay: prediction boundary in red, ground truth in green
                let display = preprocess(s, ckpt.cfg.model.input_size, None);
                let mut overlay = display.image.clone();
                paint_boundary(&mut overlay, &mask, pre.h, pre.w, [1.0, 0.1, 0.1]);
                let gt: Vec<u8> = pre.mask.iter().map(|&v| (v > 0) as u8).collect();
                paint_boundary(&mut overlay, &gt, pre.h, pre.w, [0.1, 1.0, 0.1]);
                write_image_png(
                    &out.join("overlays").join(format!("{}.png", s.id)),
                    &overlay,
                )?;
            }
            println!("wrote {} predictions to {}", samples.len(), out.display());
        }
        Command::Ablate { cfg, data, seeds, out, classes } => {
            let mut tc = cfg.resolve()?;
            let k = dataset_classes(&data, classes)?;
            tc.model.num_classes = model_classes(k);
            let seeds: Vec<u64> = seeds
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<u64>().context("parsing --seeds"))
                .collect::<Result<_>>()?;
            let train_set = load_split(&data, "train", k)?;
            let val_set = load_split(&data, "val", k)?;
            let out = resolve_out(out, "ablation");
            let result = run_ablation(&tc, &train_set, &val_set, &seeds, Some(&out))?;
            print!("{}", result.to_csv());
            if !result.shared_init_verified || !result.shared_order_verified {
                bail!("ablation runs diverged in initialization or data order");
            }
            println!("wrote {}", out.join("ablation.csv").display());
        }
        Command::Complexity { preset, cfg, out } => {
            let mut tc = cfg.resolve()?;
            match preset.as_str() {
                "desk" => {}
                "paper" => {
                    tc.model = ModelConfig {
                        num_classes: tc.model.num_classes,
                        ..ModelConfig::paper_scale()
                    };
                }
                other => bail!("unknown preset {other:?} (expected desk or paper)"),
            }
            let report = complexity_report(&tc.model, &tc.distill)?;
            print!("{}", report.render());
            let out = resolve_out(out, "complexity");
            write_atomic(
                &out.join("complexity.json"),
                &serde_json::to_string_pretty(&report)?,
            )?;
            println!("wrote {}", out.join("complexity.json").display());
        }
    }
    Ok(())
}

/// Blend boundary pixels of a mask into an RGB image.
fn paint_boundary(image: &mut Arr, mask: &[u8], h: usize, w: usize, color: [f64; 3]) {
    for (i, j) in boundary_pixels(mask, h, w) {
        for (ch, &c) in color.iter().enumerate() {
            let v = &mut image.data_mut()[ch * h * w + i * w + j];
            *v = 0.25 * *v + 0.75 * c;
        }
    }
}
