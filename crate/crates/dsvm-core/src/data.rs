//! Dataset handling: a deterministic synthetic-shapes generator, PNG
//! directory ingestion, geometric augmentation, and preprocessing.
//!
//! Directory layout: `<root>/<split>/images/*.png` and
//! `<root>/<split>/masks/*.png` with matching file names. Masks are 8-bit
//! single channel: 0/255 for binary tasks, class indices for multi-class.
//! The generator writes the same layout plus a `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Arr;

#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    /// (channels, h, w), values in [0, 1] as loaded; standardization happens
    /// in [`preprocess`].
    pub image: Arr,
    /// h*w class indices (0/1 for binary).
    pub mask: Vec<u8>,
    pub h: usize,
    pub w: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub flip_horizontal_p: f64,
    pub flip_vertical_p: f64,
    pub rotation_p: f64,
    /// Right-angle choices keep masks exactly label-preserving.
    pub rotation_choices: Vec<u16>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_horizontal_p: 0.5,
            flip_vertical_p: 0.5,
            rotation_p: 0.5,
            rotation_choices: vec![90, 180, 270],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("flip_horizontal_p", self.flip_horizontal_p),
            ("flip_vertical_p", self.flip_vertical_p),
            ("rotation_p", self.rotation_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.rotation_choices.iter().any(|&a| ![90, 180, 270].contains(&a)) {
            return Err(Error::Config("rotation choices must be right angles".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Ellipses,
    Polygons,
    Mixed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub size: usize,
    pub num_classes: usize,
    pub shape_family: ShapeFamily,
    /// Gaussian pixel noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 64,
            size: 64,
            num_classes: 2,
            shape_family: ShapeFamily::Mixed,
            noise: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if self.size == 0 || self.size % 32 != 0 {
            return Err(Error::Config(format!("size {} must be divisible by 32", self.size)));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::Config("noise must lie in [0, 0.5]".into()));
        }
        Ok(())
    }
}

enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, rot: f64 },
    Polygon { pts: Vec<(f64, f64)> },
}

/// Radius range as a fraction of image size. The first shape in every image
/// is drawn from the large range so each sample carries one dominant
/// structure; extra shapes may be smaller.
const R_LARGE: (f64, f64) = (0.20, 0.34);
const R_SMALL: (f64, f64) = (0.12, 0.30);

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Ellipse { cx, cy, rx, ry, rot } => {
                let (dx, dy) = (x - cx, y - cy);
                let (c, s) = (rot.cos(), rot.sin());
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Polygon { pts } => {
                // even-odd rule
                let mut inside = false;
                let n = pts.len();
                for i in 0..n {
                    let (x1, y1) = pts[i];
                    let (x2, y2) = pts[(i + 1) % n];
                    if (y1 > y) != (y2 > y) {
                        let xin = x1 + (y - y1) / (y2 - y1) * (x2 - x1);
                        if x < xin {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }
}

fn random_shape(rng: &mut Rng, size: f64, family: ShapeFamily, range: (f64, f64)) -> Shape {
    let use_ellipse = match family {
        ShapeFamily::Ellipses => true,
        ShapeFamily::Polygons => false,
        ShapeFamily::Mixed => rng.uniform() < 0.5,
    };
    let cx = rng.uniform_in(0.25 * size, 0.75 * size);
    let cy = rng.uniform_in(0.25 * size, 0.75 * size);
    if use_ellipse {
        Shape::Ellipse {
            cx,
            cy,
            rx: rng.uniform_in(range.0 * size, range.1 * size),
            ry: rng.uniform_in(range.0 * size, range.1 * size),
            rot: rng.uniform_in(0.0, std::f64::consts::PI),
        }
    } else {
        let sides = 3 + rng.below(3);
        let base = rng.uniform_in(0.0, std::f64::consts::TAU);
        let pts = (0..sides)
            .map(|k| {
                let ang = base + k as f64 / sides as f64 * std::f64::consts::TAU;
                let r = rng.uniform_in((range.0 + 0.02) * size, (range.1 + 0.02) * size);
                (cx + r * ang.cos(), cy + r * ang.sin())
            })
            .collect();
        Shape::Polygon { pts }
    }
}

/// One synthetic sample: shaded background, 1-3 shapes with exact raster
/// masks, Gaussian pixel noise on the image only.
pub fn synth_sample(cfg: &SynthConfig, split: &str, index: usize) -> Sample {
    let size = cfg.size;
    let mut rng = Rng::derive(cfg.seed, &[Rng::hash_str(split), index as u64]);
    loop {
        let mut mask = vec![0u8; size * size];
        // 1-3 shapes, weighted toward fewer
        let roll = rng.uniform();
        let n_shapes = 1 + (roll > 0.5) as usize + (roll > 0.85) as usize;
        let shapes: Vec<(Shape, u8)> = (0..n_shapes)
            .map(|i| {
                let class = 1 + rng.below(cfg.num_classes - 1) as u8;
                let range = if i == 0 { R_LARGE } else { R_SMALL };
                (random_shape(&mut rng, size as f64, cfg.shape_family, range), class)
            })
            .collect();
        for i in 0..size {
            for j in 0..size {
                let (y, x) = (i as f64 + 0.5, j as f64 + 0.5);
                for (shape, class) in &shapes {
                    if shape.contains(x, y) {
                        mask[i * size + j] = *class;
                    }
                }
            }
        }
        let fg = mask.iter().filter(|&&v| v > 0).count() as f64 / (size * size) as f64;
        if !(0.02..=0.6).contains(&fg) {
            continue; // resample until the foreground fraction contract holds
        }
        let base: Vec<f64> = (0..3).map(|_| rng.uniform_in(0.08, 0.3)).collect();
        let grad: Vec<f64> = (0..3).map(|_| rng.uniform_in(-0.1, 0.1)).collect();
        let fills: Vec<Vec<f64>> = shapes
            .iter()
            .map(|_| (0..3).map(|_| rng.uniform_in(0.65, 0.95)).collect())
            .collect();
        let mut image = Arr::zeros(&[3, size, size]);
        for i in 0..size {
            for j in 0..size {
                let t = (i + j) as f64 / (2 * size) as f64;
                let m = mask[i * size + j];
                for ch in 0..3 {
                    let mut v = base[ch] + grad[ch] * t;
                    if m > 0 {
                        // last drawn shape wins the mask; color by its fill
                        let (mut fill, mut found) = (0usize, false);
                        for (s, (shape, _)) in shapes.iter().enumerate() {
                            let (y, x) = (i as f64 + 0.5, j as f64 + 0.5);
                            if shape.contains(x, y) {
                                fill = s;
                                found = true;
                            }
                        }
                        if found {
                            v = fills[fill][ch];
                        }
                    }
                    let noisy = v + rng.normal() * cfg.noise;
                    image.data_mut()[ch * size * size + i * size + j] = noisy.clamp(0.0, 1.0);
                }
            }
        }
        return Sample {
            id: format!("{index:04}"),
            image,
            mask,
            h: size,
            w: size,
        };
    }
}

/// Write `splits` of synthetic data under `root`, plus a manifest. A given
/// (seed, split, index) always produces the same bytes on disk.
pub fn generate_synthetic(root: &Path, splits: &[(&str, usize)], cfg: &SynthConfig) -> Result<()> {
    cfg.validate()?;
    for &(split, n) in splits {
        let img_dir = root.join(split).join("images");
        let mask_dir = root.join(split).join("masks");
        fs::create_dir_all(&img_dir).map_err(|e| Error::io(img_dir.display().to_string(), e))?;
        fs::create_dir_all(&mask_dir).map_err(|e| Error::io(mask_dir.display().to_string(), e))?;
        for i in 0..n {
            let sample = synth_sample(cfg, split, i);
            write_image_png(&img_dir.join(format!("{}.png", sample.id)), &sample.image)?;
            write_mask_png(
                &mask_dir.join(format!("{}.png", sample.id)),
                &sample.mask,
                sample.h,
                sample.w,
                cfg.num_classes <= 2,
            )?;
        }
    }
    let manifest = root.join("manifest.json");
    let body = serde_json::json!({
        "config": cfg,
        "splits": splits.iter().map(|(s, n)| (s.to_string(), n)).collect::<Vec<_>>(),
    });
    fs::write(&manifest, serde_json::to_string_pretty(&body).expect("manifest"))
        .map_err(|e| Error::io(manifest.display().to_string(), e))?;
    Ok(())
}

pub fn write_image_png(path: &Path, image: &Arr) -> Result<()> {
    let shape = image.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if c != 3 {
        return Err(Error::Contract("write_image_png expects 3 channels".into()));
    }
    let mut buf = vec![0u8; h * w * 3];
    for i in 0..h * w {
        for ch in 0..3 {
            buf[i * 3 + ch] = (image.data()[ch * h * w + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    let img = image::RgbImage::from_raw(w as u32, h as u32, buf).expect("sized buffer");
    img.save(path)
        .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))
}

pub fn write_mask_png(path: &Path, mask: &[u8], h: usize, w: usize, binary: bool) -> Result<()> {
    let buf: Vec<u8> = if binary {
        mask.iter().map(|&v| if v > 0 { 255 } else { 0 }).collect()
    } else {
        mask.to_vec()
    };
    let img = image::GrayImage::from_raw(w as u32, h as u32, buf).expect("sized buffer");
    img.save(path)
        .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))
}

fn load_image_png(path: &Path) -> Result<(Arr, usize, usize)> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Arr::zeros(&[3, h, w]);
    for (i, px) in img.pixels().enumerate() {
        for ch in 0..3 {
            out.data_mut()[ch * h * w + i] = px.0[ch] as f64 / 255.0;
        }
    }
    Ok((out, h, w))
}

fn load_mask_png(path: &Path, num_classes: usize) -> Result<(Vec<u8>, usize, usize)> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<u8> = if num_classes <= 2 {
        img.pixels().map(|p| (p.0[0] > 127) as u8).collect()
    } else {
        let vals: Vec<u8> = img.pixels().map(|p| p.0[0]).collect();
        if let Some(&bad) = vals.iter().find(|&&v| v as usize >= num_classes) {
            return Err(Error::Data(format!(
                "{}: mask value {bad} out of range for {num_classes} classes",
                path.display()
            )));
        }
        vals
    };
    Ok((data, h, w))
}

/// Load a split directory, sorted by id. Images and masks are paired by file
/// stem; any image without a mask is an error listing the offending ids.
/// When `target_size` is given, mismatched samples are resized (bilinear
/// image, nearest mask).
pub fn load_dataset(
    root: &Path,
    split: &str,
    num_classes: usize,
    target_size: Option<usize>,
) -> Result<Vec<Sample>> {
    let img_dir = root.join(split).join("images");
    let mask_dir = root.join(split).join("masks");
    if !img_dir.is_dir() {
        return Err(Error::Data(format!("missing directory {}", img_dir.display())));
    }
    let mut names: Vec<PathBuf> = fs::read_dir(&img_dir)
        .map_err(|e| Error::io(img_dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "png").unwrap_or(false))
        .collect();
    names.sort();
    if names.is_empty() {
        eprintln!("warning: no images found under {}", img_dir.display());
        return Ok(Vec::new());
    }
    let missing: Vec<String> = names
        .iter()
        .filter(|p| !mask_dir.join(p.file_name().expect("file name")).exists())
        .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "missing masks for ids: {}",
            missing.join(", ")
        )));
    }
    let mut out = Vec::with_capacity(names.len());
    for path in names {
        let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let (image, h, w) = load_image_png(&path)?;
        let (mask, mh, mw) = load_mask_png(&mask_dir.join(path.file_name().unwrap()), num_classes)?;
        let mut sample = Sample { id, image, mask, h, w };
        let want = target_size.unwrap_or(h.max(mh));
        if h != mh || w != mw || target_size.map(|t| t != h || t != w).unwrap_or(false) {
            if h != mh || w != mw {
                sample.h = h;
                sample.w = w;
                sample.mask = resize_mask_nearest(&sample.mask, mh, mw, h, w);
            }
            if target_size.is_some() && (sample.h != want || sample.w != want) {
                sample = resize_sample(&sample, want);
            }
        }
        out.push(sample);
    }
    Ok(out)
}

fn resize_mask_nearest(mask: &[u8], h: usize, w: usize, oh: usize, ow: usize) -> Vec<u8> {
    let mut out = vec![0u8; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            let si = (((i as f64 + 0.5) * h as f64 / oh as f64) as usize).min(h - 1);
            let sj = (((j as f64 + 0.5) * w as f64 / ow as f64) as usize).min(w - 1);
            out[i * ow + j] = mask[si * w + sj];
        }
    }
    out
}

fn resize_image_bilinear(image: &Arr, oh: usize, ow: usize) -> Arr {
    let shape = image.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut out = Arr::zeros(&[c, oh, ow]);
    let coord = |o: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let src = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
            .max(0.0)
            .min((n_in - 1) as f64);
        let lo = src.floor() as usize;
        (lo, (lo + 1).min(n_in - 1), src - lo as f64)
    };
    for i in 0..oh {
        let (i0, i1, wi) = coord(i, oh, h);
        for j in 0..ow {
            let (j0, j1, wj) = coord(j, ow, w);
            for ch in 0..c {
                let at = |y: usize, x: usize| image.data()[ch * h * w + y * w + x];
                let v = (1.0 - wi) * ((1.0 - wj) * at(i0, j0) + wj * at(i0, j1))
                    + wi * ((1.0 - wj) * at(i1, j0) + wj * at(i1, j1));
                out.data_mut()[ch * oh * ow + i * ow + j] = v;
            }
        }
    }
    out
}

/// Resize a sample to `size` x `size` (bilinear image, nearest mask).
pub fn resize_sample(sample: &Sample, size: usize) -> Sample {
    Sample {
        id: sample.id.clone(),
        image: resize_image_bilinear(&sample.image, size, size),
        mask: resize_mask_nearest(&sample.mask, sample.h, sample.w, size, size),
        h: size,
        w: size,
    }
}

/// Identical geometric transform on image and mask; mask labels are moved,
/// never interpolated.
pub fn augment(sample: &Sample, cfg: &AugmentConfig, rng: &mut Rng) -> Sample {
    let mut out = sample.clone();
    if rng.uniform() < cfg.flip_horizontal_p {
        out = flip_h(&out);
    }
    if rng.uniform() < cfg.flip_vertical_p {
        out = flip_v(&out);
    }
    if !cfg.rotation_choices.is_empty() && rng.uniform() < cfg.rotation_p {
        let angle = cfg.rotation_choices[rng.below(cfg.rotation_choices.len())];
        let quarter_turns = (angle / 90) as usize;
        for _ in 0..quarter_turns {
            out = rot90(&out);
        }
    }
    out
}

fn remap(sample: &Sample, oh: usize, ow: usize, f: impl Fn(usize, usize) -> (usize, usize)) -> Sample {
    let shape = sample.image.shape();
    let c = shape[0];
    let (h, w) = (sample.h, sample.w);
    let mut image = Arr::zeros(&[c, oh, ow]);
    let mut mask = vec![0u8; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            let (si, sj) = f(i, j);
            mask[i * ow + j] = sample.mask[si * w + sj];
            for ch in 0..c {
                image.data_mut()[ch * oh * ow + i * ow + j] =
                    sample.image.data()[ch * h * w + si * w + sj];
            }
        }
    }
    Sample { id: sample.id.clone(), image, mask, h: oh, w: ow }
}

pub fn flip_h(s: &Sample) -> Sample {
    let w = s.w;
    remap(s, s.h, s.w, move |i, j| (i, w - 1 - j))
}

pub fn flip_v(s: &Sample) -> Sample {
    let h = s.h;
    remap(s, s.h, s.w, move |i, j| (h - 1 - i, j))
}

/// Counter-clockwise quarter turn.
pub fn rot90(s: &Sample) -> Sample {
    let w = s.w;
    remap(s, s.w, s.h, move |i, j| (j, w - 1 - i))
}

/// Per-channel normalization statistics, computed from the training split
/// and cached alongside the dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn compute_stats(samples: &[Sample]) -> NormStats {
    let c = samples.first().map(|s| s.image.shape()[0]).unwrap_or(3);
    let mut mean = vec![0.0; c];
    let mut sq = vec![0.0; c];
    let mut count = vec![0.0; c];
    for s in samples {
        let hw = s.h * s.w;
        for ch in 0..c {
            let plane = &s.image.data()[ch * hw..(ch + 1) * hw];
            mean[ch] += plane.iter().sum::<f64>();
            sq[ch] += plane.iter().map(|v| v * v).sum::<f64>();
            count[ch] += hw as f64;
        }
    }
    let mut std = vec![0.0; c];
    for ch in 0..c {
        mean[ch] /= count[ch].max(1.0);
        std[ch] = (sq[ch] / count[ch].max(1.0) - mean[ch] * mean[ch]).max(0.0).sqrt();
    }
    NormStats { mean, std }
}

pub fn stats_cache_path(root: &Path) -> PathBuf {
    root.join("norm_stats.json")
}

pub fn load_or_compute_stats(root: &Path, train: &[Sample]) -> Result<NormStats> {
    let path = stats_cache_path(root);
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        return serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("bad stats cache {}: {e}", path.display())));
    }
    let stats = compute_stats(train);
    fs::write(&path, serde_json::to_string_pretty(&stats).expect("stats"))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(stats)
}

/// Resize to the target, then standardize each channel with the dataset
/// statistics. Channels with (near-)zero variance are left unstandardized.
pub fn preprocess(sample: &Sample, target_size: usize, stats: Option<&NormStats>) -> Sample {
    let mut s = if sample.h != target_size || sample.w != target_size {
        resize_sample(sample, target_size)
    } else {
        sample.clone()
    };
    if let Some(stats) = stats {
        let hw = s.h * s.w;
        let c = s.image.shape()[0];
        for ch in 0..c {
            if stats.std[ch] < 1e-8 {
                eprintln!(
                    "warning: channel {ch} has zero variance; skipping standardization"
                );
                continue;
            }
            let (m, sd) = (stats.mean[ch], stats.std[ch]);
            for v in &mut s.image.data_mut()[ch * hw..(ch + 1) * hw] {
                *v = (*v - m) / sd;
            }
        }
    }
    s
}
