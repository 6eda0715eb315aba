//! The U-shaped segmentation network: patch embedding, four VSS encoder
//! levels, four VSS decoder levels with additive skips, and a final
//! projection back to full-resolution per-pixel logits.
//!
//! Level l (1-based) carries features of shape
//! (2^(l-1) * C) x (H / 2^(l+1)) x (W / 2^(l+1)); the forward pass exposes
//! all eight level features for the distillation losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{AllocSink, Bound, CountSink, Init, ParamSet, ParamSink};
use crate::rng::Rng;
use crate::ssm::{vss_block_graph, VssBlockCfg, VssBlockIdx};
use crate::ssm::{block_perms, ScanPerms, NORM_EPS};
use crate::tensor::rearrange::{depth_to_space_indices, space_to_depth_indices};
use crate::tensor::{Arr, Graph, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipMode {
    /// Element-wise addition (channel widths match by the shape contract).
    Add,
    /// Channel concatenation followed by a 1x1 reduction.
    Concat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Patch embedding width C.
    pub base_dim: usize,
    /// Number of encoder/decoder levels M (fixed at 4).
    pub levels: usize,
    pub encoder_depths: Vec<usize>,
    /// Blocks per decoder stage, deepest stage first.
    pub decoder_depths: Vec<usize>,
    pub patch_size: usize,
    /// SSM state size N.
    pub state_dim: usize,
    /// Channel expansion ratio E inside each block.
    pub expand: usize,
    /// Square input size (H = W).
    pub input_size: usize,
    pub skip_mode: SkipMode,
}

impl ModelConfig {
    /// Desk-scale defaults: trainable on a CPU in minutes.
    pub fn desk() -> ModelConfig {
        ModelConfig {
            in_channels: 3,
            num_classes: 1,
            base_dim: 16,
            levels: 4,
            encoder_depths: vec![2, 2, 2, 2],
            decoder_depths: vec![2, 2, 2, 1],
            patch_size: 4,
            state_dim: 16,
            expand: 2,
            input_size: 64,
            skip_mode: SkipMode::Add,
        }
    }

    /// Reference-scale preset used for complexity accounting.
    pub fn paper_scale() -> ModelConfig {
        ModelConfig {
            base_dim: 96,
            input_size: 256,
            ..ModelConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels != 4 {
            return Err(Error::Config(format!("levels must be 4, got {}", self.levels)));
        }
        if self.patch_size != 4 {
            return Err(Error::Config(format!(
                "patch_size must be 4, got {}",
                self.patch_size
            )));
        }
        let div = 1usize << (self.levels + 1);
        if self.input_size == 0 || self.input_size % div != 0 {
            return Err(Error::Config(format!(
                "input_size {} must be divisible by {div}",
                self.input_size
            )));
        }
        if self.base_dim == 0 || self.base_dim % 4 != 0 {
            return Err(Error::Config(format!(
                "base_dim {} must be a positive multiple of 4",
                self.base_dim
            )));
        }
        if self.encoder_depths.len() != self.levels
            || self.decoder_depths.len() != self.levels
            || self.encoder_depths.iter().chain(&self.decoder_depths).any(|&d| d == 0)
        {
            return Err(Error::Config(
                "encoder/decoder depths must list one positive count per level".into(),
            ));
        }
        if self.num_classes == 0 || self.in_channels == 0 {
            return Err(Error::Config("num_classes and in_channels must be >= 1".into()));
        }
        if self.state_dim == 0 || self.expand == 0 {
            return Err(Error::Config("state_dim and expand must be >= 1".into()));
        }
        Ok(())
    }

    /// Channel width at level l (1-based).
    pub fn dim_at(&self, level: usize) -> usize {
        self.base_dim << (level - 1)
    }

    /// Grid side length at level l (1-based).
    pub fn grid_at(&self, level: usize) -> usize {
        self.input_size >> (level + 1)
    }

    pub fn block_cfg(&self, level: usize) -> VssBlockCfg {
        VssBlockCfg::new(self.dim_at(level), self.expand, self.state_dim)
    }

    /// Decoder stage depth at level l (decoder_depths is deepest-first).
    pub fn decoder_depth_at(&self, level: usize) -> usize {
        self.decoder_depths[self.levels - level]
    }
}

#[derive(Clone, Debug)]
struct NormIdx {
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Debug)]
struct PatchEmbedIdx {
    w: usize,
    b: usize,
    norm: NormIdx,
}

#[derive(Clone, Debug)]
struct MergeIdx {
    norm: NormIdx,
    reduce: usize,
}

#[derive(Clone, Debug)]
struct ExpandIdx {
    expand: usize,
    norm: NormIdx,
}

#[derive(Clone, Debug)]
struct FinalProjIdx {
    expand: usize,
    norm: NormIdx,
    head_w: usize,
    head_b: usize,
}

#[derive(Clone, Debug)]
struct Arch {
    patch_embed: PatchEmbedIdx,
    enc_stages: Vec<Vec<VssBlockIdx>>,
    /// merge after encoder level l (1..=3), index l-1.
    merges: Vec<MergeIdx>,
    dec_stages: Vec<Vec<VssBlockIdx>>,
    /// expand from level l+1 to l (l = 3, 2, 1), index l-1.
    expands: Vec<ExpandIdx>,
    /// concat-skip reductions per level 1..=3 (index l-1), Concat mode only.
    skip_reduce: Vec<Option<usize>>,
    final_proj: FinalProjIdx,
}

fn build_arch(cfg: &ModelConfig, sink: &mut dyn ParamSink) -> Arch {
    let c = cfg.base_dim;
    let pe_in = cfg.in_channels * cfg.patch_size * cfg.patch_size;
    let lin = |fan_in: usize| Init::Normal((1.0 / fan_in as f64).sqrt());
    let patch_embed = PatchEmbedIdx {
        w: sink.add("patch_embed.proj.w".into(), &[c, pe_in], lin(pe_in)),
        b: sink.add("patch_embed.proj.b".into(), &[c], Init::Zeros),
        norm: NormIdx {
            gamma: sink.add("patch_embed.norm.gamma".into(), &[c], Init::Ones),
            beta: sink.add("patch_embed.norm.beta".into(), &[c], Init::Zeros),
        },
    };
    let mut enc_stages = Vec::new();
    for l in 1..=cfg.levels {
        let bc = cfg.block_cfg(l);
        let mut blocks = Vec::new();
        for i in 0..cfg.encoder_depths[l - 1] {
            blocks.push(VssBlockIdx::build(
                sink,
                &format!("encoder.stage{l}.block{i}"),
                &bc,
            ));
        }
        enc_stages.push(blocks);
    }
    let mut merges = Vec::new();
    for l in 1..=cfg.levels - 1 {
        let d = cfg.dim_at(l);
        merges.push(MergeIdx {
            norm: NormIdx {
                gamma: sink.add(format!("encoder.merge{l}.norm.gamma"), &[4 * d], Init::Ones),
                beta: sink.add(format!("encoder.merge{l}.norm.beta"), &[4 * d], Init::Zeros),
            },
            reduce: sink.add(format!("encoder.merge{l}.reduce.w"), &[2 * d, 4 * d], lin(4 * d)),
        });
    }
    let mut dec_stages = Vec::new();
    for l in 1..=cfg.levels {
        let bc = cfg.block_cfg(l);
        let mut blocks = Vec::new();
        for i in 0..cfg.decoder_depth_at(l) {
            blocks.push(VssBlockIdx::build(
                sink,
                &format!("decoder.stage{l}.block{i}"),
                &bc,
            ));
        }
        dec_stages.push(blocks);
    }
    let mut expands = Vec::new();
    for l in 1..=cfg.levels - 1 {
        // produces level-l features from level l+1
        let d_hi = cfg.dim_at(l + 1);
        expands.push(ExpandIdx {
            expand: sink.add(format!("decoder.expand{l}.w"), &[2 * d_hi, d_hi], lin(d_hi)),
            norm: NormIdx {
                gamma: sink.add(format!("decoder.expand{l}.norm.gamma"), &[d_hi / 2], Init::Ones),
                beta: sink.add(format!("decoder.expand{l}.norm.beta"), &[d_hi / 2], Init::Zeros),
            },
        });
    }
    let mut skip_reduce = Vec::new();
    for l in 1..=cfg.levels - 1 {
        let d = cfg.dim_at(l);
        skip_reduce.push(match cfg.skip_mode {
            SkipMode::Add => None,
            SkipMode::Concat => Some(sink.add(
                format!("decoder.skip{l}.reduce.w"),
                &[d, 2 * d],
                lin(2 * d),
            )),
        });
    }
    // 4x spatial expansion keeping C channels at full resolution, then a
    // 1x1 classification head
    let final_proj = FinalProjIdx {
        expand: sink.add("final_proj.expand.w".into(), &[16 * c, c], lin(c)),
        norm: NormIdx {
            gamma: sink.add("final_proj.norm.gamma".into(), &[c], Init::Ones),
            beta: sink.add("final_proj.norm.beta".into(), &[c], Init::Zeros),
        },
        head_w: sink.add("final_proj.head.w".into(), &[cfg.num_classes, c], lin(c)),
        head_b: sink.add("final_proj.head.b".into(), &[cfg.num_classes], Init::Zeros),
    };
    Arch {
        patch_embed,
        enc_stages,
        merges,
        dec_stages,
        expands,
        skip_reduce,
        final_proj,
    }
}

/// Record the model's parameter names and shapes without allocating.
pub fn shape_census(cfg: &ModelConfig) -> Result<CountSink> {
    cfg.validate()?;
    let mut sink = CountSink::default();
    build_arch(cfg, &mut sink);
    Ok(sink)
}

/// One level feature inside the graph: tokens plus its grid size.
#[derive(Clone)]
pub struct LevelFeature {
    pub tokens: Tensor,
    pub grid: usize,
    pub dim: usize,
}

/// All 2M level features, graph-attached (used by the distillation losses).
pub struct TokenPyramid {
    /// index l-1 holds level l
    pub enc: Vec<LevelFeature>,
    /// index l-1 holds level l
    pub dec: Vec<LevelFeature>,
}

/// Result of a graph forward pass.
pub struct GraphForward {
    /// (H*W, K) logits in token order.
    pub logits: Tensor,
    pub pyramid: TokenPyramid,
}

/// Feature pyramid as plain arrays, shaped per the level contract.
#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    /// [f_1 .. f_M], each (2^(l-1) C, H/2^(l+1), W/2^(l+1))
    pub encoder_feats: Vec<Arr>,
    /// [f_M .. f_1] (deep to shallow)
    pub decoder_feats: Vec<Arr>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// (K, H, W)
    pub logits: Arr,
    pub pyramid: FeaturePyramid,
}

/// The model: configuration, named parameters and precomputed index maps.
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamSet,
    arch: Arch,
    /// scan permutations per level, at the block inner width
    perms: Vec<ScanPerms>,
}

impl Model {
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Model> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let mut sink = AllocSink::new(&mut rng);
        let arch = build_arch(&cfg, &mut sink);
        let params = sink.set;
        let perms = (1..=cfg.levels)
            .map(|l| block_perms(cfg.grid_at(l), cfg.grid_at(l), cfg.block_cfg(l).inner_dim()))
            .collect();
        Ok(Model { cfg, params, arch, perms })
    }

    /// Rebuild the architecture around an existing parameter set (checkpoint
    /// load). The set must have been produced by the same config.
    pub fn from_params(cfg: ModelConfig, params: ParamSet) -> Result<Model> {
        let model = Model::init(cfg, 0)?;
        if model.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch: config wants {}, checkpoint has {}",
                model.params.len(),
                params.len()
            )));
        }
        for i in 0..params.len() {
            if model.params.name(i) != params.name(i)
                || model.params.get(i).shape() != params.get(i).shape()
            {
                return Err(Error::Checkpoint(format!(
                    "parameter {} mismatch: {} {:?} vs {} {:?}",
                    i,
                    model.params.name(i),
                    model.params.get(i).shape(),
                    params.name(i),
                    params.get(i).shape()
                )));
            }
        }
        Ok(Model { params, ..model })
    }

    /// Full forward pass on one (in_channels, H, W) image, recording onto `g`.
    pub fn forward_graph(&self, g: &Graph, image: &Arr) -> Result<GraphForward> {
        let cfg = &self.cfg;
        let hw = cfg.input_size;
        if image.shape() != [cfg.in_channels, hw, hw] {
            return Err(Error::Contract(format!(
                "image shape {:?}, expected [{}, {hw}, {hw}]",
                image.shape(),
                cfg.in_channels
            )));
        }
        let bp = self.params.bind(g);
        self.forward_with(g, image, &bp).map(|(fwd, _)| fwd)
    }

    /// Forward against an existing binding; also returns the binding so the
    /// caller can read parameter gradients after backward.
    pub fn forward_with<'b>(
        &self,
        g: &Graph,
        image: &Arr,
        bp: &'b Bound,
    ) -> Result<(GraphForward, &'b Bound)> {
        let cfg = &self.cfg;
        let hw = cfg.input_size;
        if image.shape() != [cfg.in_channels, hw, hw] {
            return Err(Error::Contract(format!(
                "image shape {:?}, expected [{}, {hw}, {hw}]",
                image.shape(),
                cfg.in_channels
            )));
        }
        if !image.all_finite() {
            return Err(Error::Contract("image contains non-finite values".into()));
        }
        let tokens0 = g.leaf(map_to_tokens(image));
        let x = self.embed_tokens(&tokens0, bp);

        // encoder; raw stage outputs feed skips and the next stage, the
        // pyramid exposes direction-normalized views
        let mut enc_raw: Vec<Tensor> = Vec::with_capacity(cfg.levels);
        let mut enc: Vec<LevelFeature> = Vec::with_capacity(cfg.levels);
        let mut cur = x;
        for l in 1..=cfg.levels {
            let grid = cfg.grid_at(l);
            let bc = cfg.block_cfg(l);
            for idx in &self.arch.enc_stages[l - 1] {
                cur = vss_block_graph(&cur, grid, grid, &bc, idx, bp, &self.perms[l - 1]);
            }
            enc_raw.push(cur.clone());
            enc.push(LevelFeature {
                tokens: feature_norm(&cur),
                grid,
                dim: cfg.dim_at(l),
            });
            if l < cfg.levels {
                cur = self.merge_tokens(&cur, l, grid, bp);
            }
        }

        // decoder, deep to shallow
        let mut dec: Vec<Option<LevelFeature>> = vec![None; cfg.levels];
        let mut d = enc_raw[cfg.levels - 1].clone();
        for l in (1..=cfg.levels).rev() {
            let grid = cfg.grid_at(l);
            let bc = cfg.block_cfg(l);
            if l < cfg.levels {
                d = self.expand_tokens(&d, l, bp);
                d = match cfg.skip_mode {
                    SkipMode::Add => d.add(&enc_raw[l - 1]),
                    SkipMode::Concat => {
                        let cat = d.concat_cols(&enc_raw[l - 1]);
                        let w = self.arch.skip_reduce[l - 1].expect("concat reduce");
                        cat.linear(bp.t(w), None)
                    }
                };
            }
            for idx in &self.arch.dec_stages[l - 1] {
                d = vss_block_graph(&d, grid, grid, &bc, idx, bp, &self.perms[l - 1]);
            }
            dec[l - 1] = Some(LevelFeature {
                tokens: feature_norm(&d),
                grid,
                dim: cfg.dim_at(l),
            });
        }
        let dec: Vec<LevelFeature> = dec.into_iter().map(|f| f.expect("decoder level")).collect();

        // final projection from the raw level-1 stream: 4x spatial
        // expansion then 1x1 head
        let f_grid = cfg.grid_at(1);
        let fp = &self.arch.final_proj;
        let expanded = d.linear(bp.t(fp.expand), None);
        let d2s = std::rc::Rc::new(depth_to_space_indices(f_grid, f_grid, cfg.base_dim, 4));
        let up = expanded.gather(&[hw * hw, cfg.base_dim], d2s);
        let normed = up.layer_norm(bp.t(fp.norm.gamma), bp.t(fp.norm.beta), NORM_EPS);
        let logits = normed.linear(bp.t(fp.head_w), Some(bp.t(fp.head_b)));

        Ok((GraphForward { logits, pyramid: TokenPyramid { enc, dec } }, bp))
    }

    fn embed_tokens(&self, tokens0: &Tensor, bp: &Bound) -> Tensor {
        let cfg = &self.cfg;
        let hw = cfg.input_size;
        let pe = &self.arch.patch_embed;
        let s2d = std::rc::Rc::new(space_to_depth_indices(hw, hw, cfg.in_channels, 4));
        let patches = tokens0.gather(
            &[hw * hw / 16, cfg.in_channels * 16],
            s2d,
        );
        patches
            .linear(bp.t(pe.w), Some(bp.t(pe.b)))
            .layer_norm(bp.t(pe.norm.gamma), bp.t(pe.norm.beta), NORM_EPS)
    }

    fn merge_tokens(&self, x: &Tensor, level: usize, grid: usize, bp: &Bound) -> Tensor {
        let d = self.cfg.dim_at(level);
        let m = &self.arch.merges[level - 1];
        let s2d = std::rc::Rc::new(space_to_depth_indices(grid, grid, d, 2));
        x.gather(&[grid * grid / 4, 4 * d], s2d)
            .layer_norm(bp.t(m.norm.gamma), bp.t(m.norm.beta), NORM_EPS)
            .linear(bp.t(m.reduce), None)
    }

    /// Expand level l+1 tokens to level l width/resolution.
    fn expand_tokens(&self, x: &Tensor, level: usize, bp: &Bound) -> Tensor {
        let cfg = &self.cfg;
        let d_hi = cfg.dim_at(level + 1);
        let grid_hi = cfg.grid_at(level + 1);
        let e = &self.arch.expands[level - 1];
        let wide = x.linear(bp.t(e.expand), None);
        let d2s = std::rc::Rc::new(depth_to_space_indices(grid_hi, grid_hi, d_hi / 2, 2));
        wide.gather(&[grid_hi * grid_hi * 4, d_hi / 2], d2s)
            .layer_norm(bp.t(e.norm.gamma), bp.t(e.norm.beta), NORM_EPS)
    }

    /// Plain-array forward returning logits and the feature pyramid.
    pub fn forward(&self, image: &Arr) -> Result<ForwardOutput> {
        let g = Graph::new();
        let fwd = self.forward_graph(&g, image)?;
        let hw = self.cfg.input_size;
        let logits = tokens_to_map(&fwd.logits.value(), hw, hw);
        if !logits.all_finite() {
            return Err(Error::NonFinite("logits".into()));
        }
        let enc = fwd
            .pyramid
            .enc
            .iter()
            .map(|f| tokens_to_map(&f.tokens.value(), f.grid, f.grid))
            .collect();
        let dec = fwd
            .pyramid
            .dec
            .iter()
            .rev()
            .map(|f| tokens_to_map(&f.tokens.value(), f.grid, f.grid))
            .collect();
        Ok(ForwardOutput {
            logits,
            pyramid: FeaturePyramid { encoder_feats: enc, decoder_feats: dec },
        })
    }

    /// Patch embedding alone: (in, H, W) -> (C, H/4, W/4).
    pub fn patch_embed(&self, image: &Arr) -> Result<Arr> {
        let shape = image.shape();
        if shape.len() != 3 || shape[0] != self.cfg.in_channels {
            return Err(Error::Config(format!(
                "patch_embed expects ({}, H, W), got {shape:?}",
                self.cfg.in_channels
            )));
        }
        let (h, w) = (shape[1], shape[2]);
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!(
                "patch_embed needs H, W divisible by 4, got {h}x{w}"
            )));
        }
        let g = Graph::new();
        let bp = self.params.bind(&g);
        let tokens0 = g.leaf(map_to_tokens(image));
        let pe = &self.arch.patch_embed;
        let s2d = std::rc::Rc::new(space_to_depth_indices(h, w, self.cfg.in_channels, 4));
        let out = tokens0
            .gather(&[h * w / 16, self.cfg.in_channels * 16], s2d)
            .linear(bp.t(pe.w), Some(bp.t(pe.b)))
            .layer_norm(bp.t(pe.norm.gamma), bp.t(pe.norm.beta), NORM_EPS);
        Ok(tokens_to_map(&out.value(), h / 4, w / 4))
    }

    /// Downsampling between encoder levels: (d, h, w) -> (2d, h/2, w/2).
    pub fn patch_merge(&self, f: &Arr, level: usize) -> Result<Arr> {
        let d = self.cfg.dim_at(level);
        let shape = f.shape();
        if shape.len() != 3 || shape[0] != d {
            return Err(Error::Contract(format!(
                "patch_merge level {level} expects ({d}, h, w), got {shape:?}"
            )));
        }
        let (h, w) = (shape[1], shape[2]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Contract(format!(
                "patch_merge needs even spatial dims, got {h}x{w}"
            )));
        }
        let g = Graph::new();
        let bp = self.params.bind(&g);
        let tokens = g.leaf(map_to_tokens(f));
        let m = &self.arch.merges[level - 1];
        let s2d = std::rc::Rc::new(space_to_depth_indices(h, w, d, 2));
        let out = tokens
            .gather(&[h * w / 4, 4 * d], s2d)
            .layer_norm(bp.t(m.norm.gamma), bp.t(m.norm.beta), NORM_EPS)
            .linear(bp.t(m.reduce), None);
        Ok(tokens_to_map(&out.value(), h / 2, w / 2))
    }

    /// Upsampling between decoder levels: (2d, h, w) -> (d, 2h, 2w), the
    /// exact inverse shape transform of [`Model::patch_merge`].
    pub fn patch_expand(&self, f: &Arr, level: usize) -> Result<Arr> {
        let d_hi = self.cfg.dim_at(level + 1);
        let shape = f.shape();
        if shape.len() != 3 || shape[0] != d_hi {
            return Err(Error::Contract(format!(
                "patch_expand to level {level} expects ({d_hi}, h, w), got {shape:?}"
            )));
        }
        if d_hi % 2 != 0 {
            return Err(Error::Contract("patch_expand needs even channel count".into()));
        }
        let (h, w) = (shape[1], shape[2]);
        let g = Graph::new();
        let bp = self.params.bind(&g);
        let tokens = g.leaf(map_to_tokens(f));
        let e = &self.arch.expands[level - 1];
        let d2s = std::rc::Rc::new(depth_to_space_indices(h, w, d_hi / 2, 2));
        let out = tokens
            .linear(bp.t(e.expand), None)
            .gather(&[h * w * 4, d_hi / 2], d2s)
            .layer_norm(bp.t(e.norm.gamma), bp.t(e.norm.beta), NORM_EPS);
        Ok(tokens_to_map(&out.value(), h * 2, w * 2))
    }
}

/// Parameter-free layer norm over the channel axis, applied to the level
/// features exposed for distillation. The main stream stays unnormalized;
/// alignment then works on feature directions instead of chasing the
/// residual stream's growing magnitude.
fn feature_norm(t: &Tensor) -> Tensor {
    let g = t.graph().clone();
    let c = t.cols();
    let ones = g.leaf(Arr::full(&[c], 1.0));
    let zeros = g.leaf(Arr::zeros(&[c]));
    t.layer_norm(&ones, &zeros, NORM_EPS)
}

/// (C, H, W) -> (H*W, C)
pub fn map_to_tokens(map: &Arr) -> Arr {
    let shape = map.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut out = Arr::zeros(&[h * w, c]);
    for k in 0..c {
        for p in 0..h * w {
            out.data_mut()[p * c + k] = map.data()[k * h * w + p];
        }
    }
    out
}

/// (H*W, C) -> (C, H, W)
pub fn tokens_to_map(tokens: &Arr, h: usize, w: usize) -> Arr {
    let c = tokens.cols();
    assert_eq!(tokens.rows(), h * w, "tokens_to_map: rows != h*w");
    let mut out = Arr::zeros(&[c, h, w]);
    for p in 0..h * w {
        for k in 0..c {
            out.data_mut()[k * h * w + p] = tokens.data()[p * c + k];
        }
    }
    out
}
