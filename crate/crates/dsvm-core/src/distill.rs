//! Dual self-distillation.
//!
//! Projection distillation maps every encoder/decoder level feature into the
//! space of the decoder's last-level feature (the teacher) through a learned
//! per-channel spatial map plus a 1x1 channel map, and penalizes the MSE.
//! Progressive distillation aligns adjacent levels: the deeper (lower
//! resolution) member of each pair is channel-reduced by a 1x1 conv and
//! bilinearly upsampled; the feature later in forward order acts as teacher.
//!
//! Teachers are detached by default. Detaching stops gradients at the
//! teacher *feature*, so alignment-head parameters keep receiving gradients
//! in both modes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{map_to_tokens, tokens_to_map, FeaturePyramid, LevelFeature, TokenPyramid};
use crate::params::{AllocSink, Bound, CountSink, Init, ParamSet, ParamSink};
use crate::rng::Rng;
use crate::tensor::{Arr, Graph, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjSpatialMode {
    /// Learned linear map over the flattened spatial axis (S_l -> S_1).
    LearnedLinear,
    /// Parameter-free bilinear resize to the level-1 grid.
    Interpolation,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DistillConfig {
    /// Weight of the projection loss in the total objective.
    pub alpha: f64,
    /// Weight of the progressive loss in the total objective.
    pub beta: f64,
    /// Stop gradients at teacher features.
    pub teacher_detach: bool,
    pub proj_spatial_mode: ProjSpatialMode,
    /// Literal reading of the decoder sum: students f^d_1..f^d_{M-1}
    /// instead of the default f^d_2..f^d_M (teacher excluded).
    pub decoder_students_from_level1: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            alpha: 1.0,
            beta: 0.5,
            teacher_detach: true,
            proj_spatial_mode: ProjSpatialMode::LearnedLinear,
            decoder_students_from_level1: false,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !self.beta.is_finite() || self.alpha < 0.0 || self.beta < 0.0
        {
            return Err(Error::Config("alpha and beta must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Decoder student levels for the projection loss.
    fn decoder_student_levels(&self, m: usize) -> Vec<usize> {
        if self.decoder_students_from_level1 {
            (1..m).collect()
        } else {
            (2..=m).collect()
        }
    }
}

/// Number of MSE terms in the projection loss at M levels.
pub fn projection_term_count(m: usize) -> usize {
    m + (m - 1)
}

/// Number of MSE terms in the progressive loss at M levels.
pub fn progressive_term_count(m: usize) -> usize {
    2 * (m - 1)
}

#[derive(Clone, Debug)]
struct ProjHeadIdx {
    /// None for level 1 (identity) and in interpolation mode.
    spatial: Option<usize>,
    channel_w: usize,
    channel_b: usize,
}

#[derive(Clone, Debug)]
struct AlignIdx {
    w: usize,
    b: usize,
}

#[derive(Clone, Debug)]
struct HeadArch {
    /// level l at index l-1
    proj_enc: Vec<ProjHeadIdx>,
    /// (level, head) for each decoder student
    proj_dec: Vec<(usize, ProjHeadIdx)>,
    /// pair with deep level l at index l-2
    prog_enc: Vec<AlignIdx>,
    prog_dec: Vec<AlignIdx>,
}

/// Geometry the heads are built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidSpec {
    pub base_dim: usize,
    pub input_size: usize,
    pub levels: usize,
}

impl PyramidSpec {
    pub fn dim_at(&self, level: usize) -> usize {
        self.base_dim << (level - 1)
    }

    pub fn grid_at(&self, level: usize) -> usize {
        self.input_size >> (level + 1)
    }
}

fn build_heads(
    spec: &PyramidSpec,
    cfg: &DistillConfig,
    sink: &mut dyn ParamSink,
) -> HeadArch {
    let m = spec.levels;
    let s1 = spec.grid_at(1) * spec.grid_at(1);
    // Heads start small and structured: spatial maps begin as the bilinear
    // resize operator and channel maps at a tenth of the usual scale. The
    // backbone then feels alignment pressure only once the heads have
    // settled, instead of chasing random projections in the first epochs.
    let small = |fan_in: usize| Init::Normal(0.02 * (1.0 / fan_in as f64).sqrt());
    let proj_head = |branch: &str, l: usize, sink: &mut dyn ParamSink| {
        let spatial = if l > 1 && cfg.proj_spatial_mode == ProjSpatialMode::LearnedLinear {
            Some(sink.add(
                format!("distill.proj.{branch}.l{l}.spatial.w"),
                &[s1, spec.grid_at(l) * spec.grid_at(l)],
                Init::BilinearResize { from: spec.grid_at(l), to: spec.grid_at(1) },
            ))
        } else {
            None
        };
        ProjHeadIdx {
            spatial,
            channel_w: sink.add(
                format!("distill.proj.{branch}.l{l}.channel.w"),
                &[spec.base_dim, spec.dim_at(l)],
                small(spec.dim_at(l)),
            ),
            channel_b: sink.add(
                format!("distill.proj.{branch}.l{l}.channel.b"),
                &[spec.base_dim],
                Init::Zeros,
            ),
        }
    };
    let proj_enc = (1..=m).map(|l| proj_head("enc", l, sink)).collect();
    let proj_dec = cfg
        .decoder_student_levels(m)
        .into_iter()
        .map(|l| (l, proj_head("dec", l, sink)))
        .collect();
    let align_head = |branch: &str, l: usize, sink: &mut dyn ParamSink| AlignIdx {
        w: sink.add(
            format!("distill.prog.{branch}.pair{l}.channel.w"),
            &[spec.dim_at(l - 1), spec.dim_at(l)],
            small(spec.dim_at(l)),
        ),
        b: sink.add(
            format!("distill.prog.{branch}.pair{l}.channel.b"),
            &[spec.dim_at(l - 1)],
            Init::Zeros,
        ),
    };
    let prog_enc = (2..=m).map(|l| align_head("enc", l, sink)).collect();
    let prog_dec = (2..=m).map(|l| align_head("dec", l, sink)).collect();
    HeadArch { proj_enc, proj_dec, prog_enc, prog_dec }
}

/// Trainable distillation heads. Training-only: they contribute nothing to
/// inference and are stripped from inference checkpoints.
pub struct DistillHeads {
    pub spec: PyramidSpec,
    pub cfg: DistillConfig,
    pub params: ParamSet,
    arch: HeadArch,
}

impl DistillHeads {
    pub fn init(spec: PyramidSpec, cfg: DistillConfig, seed: u64) -> Result<DistillHeads> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let mut sink = AllocSink::new(&mut rng);
        let arch = build_heads(&spec, &cfg, &mut sink);
        Ok(DistillHeads { spec, cfg, params: sink.set, arch })
    }

    pub fn from_params(
        spec: PyramidSpec,
        cfg: DistillConfig,
        params: ParamSet,
    ) -> Result<DistillHeads> {
        let fresh = DistillHeads::init(spec, cfg, 0)?;
        if fresh.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "distill head count mismatch: config wants {}, checkpoint has {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for i in 0..params.len() {
            if fresh.params.name(i) != params.name(i)
                || fresh.params.get(i).shape() != params.get(i).shape()
            {
                return Err(Error::Checkpoint(format!(
                    "distill head {i} mismatch: {} vs {}",
                    fresh.params.name(i),
                    params.name(i)
                )));
            }
        }
        Ok(DistillHeads { params, ..fresh })
    }

    /// Head shapes without allocation.
    pub fn shape_census(spec: &PyramidSpec, cfg: &DistillConfig) -> CountSink {
        let mut sink = CountSink::default();
        build_heads(spec, cfg, &mut sink);
        sink
    }

    fn proj_head_for(&self, branch: Branch, level: usize) -> Option<&ProjHeadIdx> {
        match branch {
            Branch::Encoder => self.arch.proj_enc.get(level - 1),
            Branch::Decoder => self
                .arch
                .proj_dec
                .iter()
                .find(|(l, _)| *l == level)
                .map(|(_, h)| h),
        }
    }

    /// Project one level feature into the teacher space (token form).
    fn project_graph(
        &self,
        f: &LevelFeature,
        level: usize,
        head: &ProjHeadIdx,
        bp: &Bound,
    ) -> Tensor {
        let g1 = self.spec.grid_at(1);
        let spatial = match (&head.spatial, self.cfg.proj_spatial_mode) {
            (Some(w), _) => {
                // (S1, Sl) @ (Sl, Cl): per-channel linear over the spatial axis
                bp.t(*w).matmul(&f.tokens)
            }
            (None, _) if level == 1 => f.tokens.clone(),
            (None, ProjSpatialMode::Interpolation) => {
                f.tokens.bilinear_resize(f.grid, f.grid, g1, g1)
            }
            (None, ProjSpatialMode::LearnedLinear) => unreachable!("missing spatial head"),
        };
        spatial.linear(bp.t(head.channel_w), Some(bp.t(head.channel_b)))
    }

    /// Channel-reduce and bilinearly upsample a deep feature to the adjacent
    /// shallower level's shape (token form).
    fn align_graph(&self, f_deep: &LevelFeature, level: usize, head: &AlignIdx, bp: &Bound) -> Tensor {
        let out_grid = self.spec.grid_at(level - 1);
        f_deep
            .tokens
            .linear(bp.t(head.w), Some(bp.t(head.b)))
            .bilinear_resize(f_deep.grid, f_deep.grid, out_grid, out_grid)
    }

    /// Projection loss over the whole pyramid: every projected level against
    /// the raw decoder level-1 teacher. Returns the loss and the term count.
    pub fn projection_loss_graph(&self, pyr: &TokenPyramid, bp: &Bound) -> (Tensor, usize) {
        let m = self.spec.levels;
        let teacher_raw = &pyr.dec[0].tokens;
        let teacher = if self.cfg.teacher_detach {
            teacher_raw.detach()
        } else {
            teacher_raw.clone()
        };
        let mut total: Option<Tensor> = None;
        let mut terms = 0usize;
        let mut add_term = |t: Tensor| {
            total = Some(match total.take() {
                Some(acc) => acc.add(&t),
                None => t,
            });
            terms += 1;
        };
        for l in 1..=m {
            let head = self.proj_head_for(Branch::Encoder, l).expect("encoder head");
            let student = self.project_graph(&pyr.enc[l - 1], l, head, bp);
            add_term(mse_graph(&student, &teacher));
        }
        for l in self.cfg.decoder_student_levels(m) {
            let head = self.proj_head_for(Branch::Decoder, l).expect("decoder head");
            let student = self.project_graph(&pyr.dec[l - 1], l, head, bp);
            add_term(mse_graph(&student, &teacher));
        }
        (total.expect("at least one projection term"), terms)
    }

    /// Progressive loss over adjacent level pairs. Encoder pairs: the deeper
    /// feature is aligned and teaches the shallower one. Decoder pairs: the
    /// shallower (later in forward order) feature teaches the aligned deeper
    /// one. Returns the loss and the term count.
    pub fn progressive_loss_graph(&self, pyr: &TokenPyramid, bp: &Bound) -> (Tensor, usize) {
        let m = self.spec.levels;
        let mut total: Option<Tensor> = None;
        let mut terms = 0usize;
        let mut add_term = |t: Tensor| {
            total = Some(match total.take() {
                Some(acc) => acc.add(&t),
                None => t,
            });
            terms += 1;
        };
        for l in 2..=m {
            // encoder: teacher = aligned deep feature (detached at the feature)
            let deep = &pyr.enc[l - 1];
            let deep_src = if self.cfg.teacher_detach {
                LevelFeature {
                    tokens: deep.tokens.detach(),
                    grid: deep.grid,
                    dim: deep.dim,
                }
            } else {
                deep.clone()
            };
            let teacher = self.align_graph(&deep_src, l, &self.arch.prog_enc[l - 2], bp);
            let student = pyr.enc[l - 2].tokens.clone();
            add_term(mse_graph(&student, &teacher));

            // decoder: teacher = raw shallower feature, student = aligned deep
            let teacher_raw = &pyr.dec[l - 2].tokens;
            let teacher = if self.cfg.teacher_detach {
                teacher_raw.detach()
            } else {
                teacher_raw.clone()
            };
            let student = self.align_graph(&pyr.dec[l - 1], l, &self.arch.prog_dec[l - 2], bp);
            add_term(mse_graph(&student, &teacher));
        }
        (total.expect("at least one progressive term"), terms)
    }

    // -- plain-array entry points -------------------------------------------

    /// Project a (2^(l-1) C, h, w) feature to the (C, H/4, W/4) teacher space.
    pub fn project_feature(&self, f: &Arr, level: usize, branch: Branch) -> Result<Arr> {
        self.check_level_shape(f, level, "project_feature")?;
        let head = self.proj_head_for(branch, level).ok_or_else(|| {
            Error::Contract(format!("no projection head for {branch:?} level {level}"))
        })?;
        let g = Graph::new();
        let bp = self.params.bind(&g);
        let lf = LevelFeature {
            tokens: g.leaf(map_to_tokens(f)),
            grid: self.spec.grid_at(level),
            dim: self.spec.dim_at(level),
        };
        let out = self.project_graph(&lf, level, head, &bp);
        let g1 = self.spec.grid_at(1);
        Ok(tokens_to_map(&out.value(), g1, g1))
    }

    /// Align a level-l feature (l >= 2) to the level-(l-1) shape.
    pub fn align_adjacent(&self, f_deep: &Arr, level: usize, branch: Branch) -> Result<Arr> {
        if level < 2 || level > self.spec.levels {
            return Err(Error::Contract(format!(
                "align_adjacent needs 2 <= level <= {}, got {level}",
                self.spec.levels
            )));
        }
        self.check_level_shape(f_deep, level, "align_adjacent")?;
        let head = match branch {
            Branch::Encoder => &self.arch.prog_enc[level - 2],
            Branch::Decoder => &self.arch.prog_dec[level - 2],
        };
        let g = Graph::new();
        let bp = self.params.bind(&g);
        let lf = LevelFeature {
            tokens: g.leaf(map_to_tokens(f_deep)),
            grid: self.spec.grid_at(level),
            dim: self.spec.dim_at(level),
        };
        let out = self.align_graph(&lf, level, head, &bp);
        let og = self.spec.grid_at(level - 1);
        Ok(tokens_to_map(&out.value(), og, og))
    }

    pub fn projection_loss(&self, pyramid: &FeaturePyramid) -> Result<(f64, usize)> {
        let g = Graph::new();
        let bp = self.params.bind(&g);
        let pyr = self.pyramid_to_tokens(&g, pyramid)?;
        let (loss, terms) = self.projection_loss_graph(&pyr, &bp);
        let v = loss.item();
        if !v.is_finite() {
            return Err(Error::NonFinite("projection loss".into()));
        }
        Ok((v, terms))
    }

    pub fn progressive_loss(&self, pyramid: &FeaturePyramid) -> Result<(f64, usize)> {
        let g = Graph::new();
        let bp = self.params.bind(&g);
        let pyr = self.pyramid_to_tokens(&g, pyramid)?;
        let (loss, terms) = self.progressive_loss_graph(&pyr, &bp);
        let v = loss.item();
        if !v.is_finite() {
            return Err(Error::NonFinite("progressive loss".into()));
        }
        Ok((v, terms))
    }

    fn check_level_shape(&self, f: &Arr, level: usize, what: &str) -> Result<()> {
        if level < 1 || level > self.spec.levels {
            return Err(Error::Contract(format!("{what}: level {level} out of range")));
        }
        let (d, gsz) = (self.spec.dim_at(level), self.spec.grid_at(level));
        if f.shape() != [d, gsz, gsz] {
            return Err(Error::Contract(format!(
                "{what}: level {level} feature has shape {:?}, contract wants [{d}, {gsz}, {gsz}]",
                f.shape()
            )));
        }
        if !f.all_finite() {
            return Err(Error::NonFinite(format!("{what}: level {level} feature")));
        }
        Ok(())
    }

    fn pyramid_to_tokens(&self, g: &Graph, pyramid: &FeaturePyramid) -> Result<TokenPyramid> {
        let m = self.spec.levels;
        if pyramid.encoder_feats.len() != m || pyramid.decoder_feats.len() != m {
            return Err(Error::Contract(format!(
                "pyramid must carry {m} encoder and {m} decoder features"
            )));
        }
        let mut enc = Vec::with_capacity(m);
        for (i, f) in pyramid.encoder_feats.iter().enumerate() {
            let level = i + 1;
            self.check_level_shape(f, level, "pyramid encoder")?;
            enc.push(LevelFeature {
                tokens: g.leaf(map_to_tokens(f)),
                grid: self.spec.grid_at(level),
                dim: self.spec.dim_at(level),
            });
        }
        let mut dec = Vec::with_capacity(m);
        // decoder_feats arrives deep-to-shallow; store level-indexed
        for (i, f) in pyramid.decoder_feats.iter().rev().enumerate() {
            let level = i + 1;
            self.check_level_shape(f, level, "pyramid decoder")?;
            dec.push(LevelFeature {
                tokens: g.leaf(map_to_tokens(f)),
                grid: self.spec.grid_at(level),
                dim: self.spec.dim_at(level),
            });
        }
        Ok(TokenPyramid { enc, dec })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Encoder,
    Decoder,
}

/// Mean squared error between two same-shape tensors. Gradients flow into
/// both sides; detach teachers at the call site to block one.
pub fn mse_graph(student: &Tensor, teacher: &Tensor) -> Tensor {
    assert_eq!(student.shape(), teacher.shape(), "mse shape mismatch");
    student.sub(teacher).square().mean_all()
}

/// Plain-array MSE with contract checking.
pub fn mse_distill(student: &Arr, teacher: &Arr) -> Result<f64> {
    if student.shape() != teacher.shape() {
        return Err(Error::Contract(format!(
            "mse_distill: shape mismatch {:?} vs {:?}",
            student.shape(),
            teacher.shape()
        )));
    }
    let g = Graph::new();
    let s = g.leaf(student.clone());
    let t = g.leaf(teacher.clone());
    Ok(mse_graph(&s, &t).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff;

    fn spec() -> PyramidSpec {
        PyramidSpec { base_dim: 4, input_size: 32, levels: 4 }
    }

    fn random_pyramid(spec: &PyramidSpec, seed: u64) -> FeaturePyramid {
        let mut rng = Rng::new(seed);
        let mut mk = |l: usize| {
            let (d, g) = (spec.dim_at(l), spec.grid_at(l));
            let mut a = Arr::zeros(&[d, g, g]);
            rng.fill_normal(a.data_mut(), 1.0);
            a
        };
        FeaturePyramid {
            encoder_feats: (1..=4).map(&mut mk).collect(),
            decoder_feats: (1..=4).rev().map(&mut mk).collect(),
        }
    }

    #[test]
    fn mse_basics() {
        let a = Arr::from_vec(&[2], vec![0.0, 2.0]);
        let b = Arr::zeros(&[2]);
        assert_eq!(mse_distill(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_distill(&a, &b).unwrap(), 2.0);
        let ones = Arr::full(&[3], 1.0);
        let zeros = Arr::zeros(&[3]);
        assert_eq!(mse_distill(&zeros, &ones).unwrap(), 1.0);
        assert!(mse_distill(&a, &ones).is_err());
    }

    #[test]
    fn project_feature_shapes() {
        let spec = spec();
        let heads = DistillHeads::init(spec, DistillConfig::default(), 0).unwrap();
        // level 3 at this scale: (16, 2, 2) -> (4, 8, 8)
        let f3 = Arr::full(&[16, 2, 2], 0.3);
        let out = heads.project_feature(&f3, 3, Branch::Encoder).unwrap();
        assert_eq!(out.shape(), &[4, 8, 8]);
        // level 1 passes through the identity spatial map
        let f1 = Arr::zeros(&[4, 8, 8]);
        let out = heads.project_feature(&f1, 1, Branch::Encoder).unwrap();
        assert_eq!(out.shape(), &[4, 8, 8]);
        // zero input with zero channel bias stays zero
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn level1_spatial_head_absent() {
        let spec = spec();
        let heads = DistillHeads::init(spec, DistillConfig::default(), 0).unwrap();
        assert!(heads.params.index_of("distill.proj.enc.l1.spatial.w").is_none());
        assert!(heads.params.index_of("distill.proj.enc.l2.spatial.w").is_some());
    }

    #[test]
    fn align_adjacent_shapes_and_constants() {
        let spec = spec();
        let heads = DistillHeads::init(spec, DistillConfig::default(), 1).unwrap();
        let f2 = Arr::full(&[8, 4, 4], 1.0);
        let out = heads.align_adjacent(&f2, 2, Branch::Encoder).unwrap();
        assert_eq!(out.shape(), &[4, 8, 8]);
        // constant in -> constant out per channel (bilinear preserves
        // constants, 1x1 conv maps them to per-channel constants)
        for ch in 0..4 {
            let plane = &out.data()[ch * 64..(ch + 1) * 64];
            let v0 = plane[0];
            assert!(plane.iter().all(|&v| (v - v0).abs() < 1e-12));
        }
        let f4 = Arr::zeros(&[32, 1, 1]);
        let out = heads.align_adjacent(&f4, 4, Branch::Decoder).unwrap();
        assert_eq!(out.shape(), &[16, 2, 2]);
    }

    #[test]
    fn term_counts_at_m4() {
        let spec = spec();
        let heads = DistillHeads::init(spec, DistillConfig::default(), 2).unwrap();
        let pyr = random_pyramid(&spec, 3);
        let (_, proj_terms) = heads.projection_loss(&pyr).unwrap();
        assert_eq!(proj_terms, 7);
        assert_eq!(projection_term_count(4), 7);
        let (_, prog_terms) = heads.progressive_loss(&pyr).unwrap();
        assert_eq!(prog_terms, 6);
        assert_eq!(progressive_term_count(4), 6);
    }

    #[test]
    fn alternative_decoder_indexing() {
        let spec = spec();
        let cfg = DistillConfig { decoder_students_from_level1: true, ..Default::default() };
        let heads = DistillHeads::init(spec, cfg, 2).unwrap();
        assert!(heads.params.index_of("distill.proj.dec.l1.channel.w").is_some());
        assert!(heads.params.index_of("distill.proj.dec.l4.channel.w").is_none());
        let pyr = random_pyramid(&spec, 3);
        let (_, terms) = heads.projection_loss(&pyr).unwrap();
        assert_eq!(terms, 7);
    }

    #[test]
    fn losses_nonnegative_and_zero_on_constructed_identity() {
        let spec = spec();
        let heads = DistillHeads::init(spec, DistillConfig::default(), 4).unwrap();
        let pyr = random_pyramid(&spec, 5);
        let (proj, _) = heads.projection_loss(&pyr).unwrap();
        let (prog, _) = heads.progressive_loss(&pyr).unwrap();
        assert!(proj >= 0.0 && prog >= 0.0);

        // zero pyramid, zero biases: projected students and teachers all zero
        let zero_pyr = FeaturePyramid {
            encoder_feats: (1..=4)
                .map(|l| Arr::zeros(&[spec.dim_at(l), spec.grid_at(l), spec.grid_at(l)]))
                .collect(),
            decoder_feats: (1..=4)
                .rev()
                .map(|l| Arr::zeros(&[spec.dim_at(l), spec.grid_at(l), spec.grid_at(l)]))
                .collect(),
        };
        let (proj, _) = heads.projection_loss(&zero_pyr).unwrap();
        let (prog, _) = heads.progressive_loss(&zero_pyr).unwrap();
        assert_eq!(proj, 0.0);
        assert_eq!(prog, 0.0);

        // construct: copy aligned teachers into shallow slots -> prog = 0
        let mut rng = Rng::new(6);
        let mut deep_e = Arr::zeros(&[32, 1, 1]);
        rng.fill_normal(deep_e.data_mut(), 1.0);
        let mut enc = vec![Arr::zeros(&[0]); 4];
        enc[3] = deep_e;
        for l in (2..=4).rev() {
            let aligned = heads.align_adjacent(&enc[l - 1], l, Branch::Encoder).unwrap();
            enc[l - 2] = aligned;
        }
        let mut deep_d = Arr::zeros(&[32, 1, 1]);
        rng.fill_normal(deep_d.data_mut(), 1.0);
        let mut dec_by_level = vec![Arr::zeros(&[0]); 4];
        dec_by_level[3] = deep_d;
        for l in (2..=4).rev() {
            let aligned = heads
                .align_adjacent(&dec_by_level[l - 1], l, Branch::Decoder)
                .unwrap();
            dec_by_level[l - 2] = aligned;
        }
        let pyr = FeaturePyramid {
            encoder_feats: enc,
            decoder_feats: dec_by_level.into_iter().rev().collect(),
        };
        let (prog, terms) = heads.progressive_loss(&pyr).unwrap();
        assert_eq!(terms, 6);
        assert!(prog < 1e-24, "constructed-identity progressive loss {prog}");
    }

    #[test]
    fn doubling_features_quadruples_projection_terms() {
        let spec = spec();
        let mut heads = DistillHeads::init(spec, DistillConfig::default(), 7).unwrap();
        // zero the channel biases so the heads are homogeneous
        for i in 0..heads.params.len() {
            if heads.params.name(i).ends_with(".channel.b") {
                heads.params.get_mut(i).data_mut().fill(0.0);
            }
        }
        let pyr = random_pyramid(&spec, 8);
        let doubled = FeaturePyramid {
            encoder_feats: pyr.encoder_feats.iter().map(|a| a.scale(2.0)).collect(),
            decoder_feats: pyr.decoder_feats.iter().map(|a| a.scale(2.0)).collect(),
        };
        let (l1, _) = heads.projection_loss(&pyr).unwrap();
        let (l2, _) = heads.projection_loss(&doubled).unwrap();
        assert!((l2 - 4.0 * l1).abs() < 1e-9 * l2.abs().max(1.0), "{l2} vs 4*{l1}");
    }

    #[test]
    fn teacher_detach_blocks_gradient_into_teacher_feature() {
        let spec = spec();
        for detach in [true, false] {
            let cfg = DistillConfig { teacher_detach: detach, ..Default::default() };
            let heads = DistillHeads::init(spec, cfg, 9).unwrap();
            let pyr = random_pyramid(&spec, 10);
            let g = Graph::new();
            let bp = heads.params.bind(&g);
            let tokens = heads.pyramid_to_tokens(&g, &pyr).unwrap();
            let teacher_leaf = tokens.dec[0].tokens.clone();
            let (loss, _) = heads.projection_loss_graph(&tokens, &bp);
            let grads = g.backward(&loss);
            let got = grads.get(&teacher_leaf).map(|a| a.max_abs()).unwrap_or(0.0);
            if detach {
                // f^d_1 only appears in the teacher slot here, so its leaf
                // must receive no gradient at all
                assert_eq!(got, 0.0, "teacher leaked gradient");
            } else {
                assert!(got > 0.0, "teacher should receive gradient when not detached");
            }
        }
    }

    #[test]
    fn progressive_teacher_detach_blocks_feature_not_heads() {
        let spec = spec();
        let heads = DistillHeads::init(spec, DistillConfig::default(), 11).unwrap();
        let pyr = random_pyramid(&spec, 12);
        let g = Graph::new();
        let bp = heads.params.bind(&g);
        let tokens = heads.pyramid_to_tokens(&g, &pyr).unwrap();
        let deep_enc_leaf = tokens.enc[3].tokens.clone(); // teacher-only slot (encoder pair 4)
        let (loss, _) = heads.progressive_loss_graph(&tokens, &bp);
        let grads = g.backward(&loss);
        // deepest encoder feature only acts as a teacher in the progressive
        // loss; detached -> no gradient
        assert!(grads.get(&deep_enc_leaf).map(|a| a.max_abs()).unwrap_or(0.0) == 0.0);
        // but its alignment head still trains
        let head_w = heads.params.index_of("distill.prog.enc.pair4.channel.w").unwrap();
        let gw = grads.get(bp.t(head_w)).map(|a| a.max_abs()).unwrap_or(0.0);
        assert!(gw > 0.0, "teacher-side alignment head lost its gradient");
    }

    #[test]
    fn batch_mean_equals_mean_of_per_sample_losses() {
        let spec = spec();
        let heads = DistillHeads::init(spec, DistillConfig::default(), 13).unwrap();
        let a = random_pyramid(&spec, 14);
        let b = random_pyramid(&spec, 15);
        let (la, _) = heads.projection_loss(&a).unwrap();
        let (lb, _) = heads.projection_loss(&b).unwrap();
        let batch_mean = (la + lb) / 2.0;
        // swapping sample order cannot change the batch mean
        let swapped = (lb + la) / 2.0;
        assert_eq!(batch_mean, swapped);
    }

    #[test]
    fn head_and_student_gradients_match_finite_differences() {
        // tiny geometry; teacher_detach=false so the full differential
        // structure is exercised
        let spec = PyramidSpec { base_dim: 2, input_size: 32, levels: 4 };
        let cfg = DistillConfig { teacher_detach: false, ..Default::default() };
        let heads = DistillHeads::init(spec, cfg, 16).unwrap();
        let pyr = random_pyramid(&spec, 17);

        let mut flat: Vec<f64> = Vec::new();
        for (_, arr) in heads.params.iter() {
            flat.extend_from_slice(arr.data());
        }
        let feats: Vec<&Arr> = pyr
            .encoder_feats
            .iter()
            .chain(pyr.decoder_feats.iter())
            .collect();
        for f in &feats {
            flat.extend_from_slice(f.data());
        }
        for prog in [false, true] {
            let eval = |v: &[f64]| -> (f64, Vec<f64>) {
                let mut h = DistillHeads::init(spec, cfg, 16).unwrap();
                let mut off = 0;
                for i in 0..h.params.len() {
                    let len = h.params.get(i).len();
                    h.params.get_mut(i).data_mut().copy_from_slice(&v[off..off + len]);
                    off += len;
                }
                let mut enc = Vec::new();
                let mut dec = Vec::new();
                for (i, f) in feats.iter().enumerate() {
                    let arr = Arr::from_vec(f.shape(), v[off..off + f.len()].to_vec());
                    off += f.len();
                    if i < 4 {
                        enc.push(arr);
                    } else {
                        dec.push(arr);
                    }
                }
                let p = FeaturePyramid { encoder_feats: enc, decoder_feats: dec };
                let g = Graph::new();
                let bp = h.params.bind(&g);
                let tokens = h.pyramid_to_tokens(&g, &p).unwrap();
                let (loss, _) = if prog {
                    h.progressive_loss_graph(&tokens, &bp)
                } else {
                    h.projection_loss_graph(&tokens, &bp)
                };
                let grads = g.backward(&loss);
                let mut flatg = Vec::new();
                for i in 0..h.params.len() {
                    match grads.get(bp.t(i)) {
                        Some(ga) => flatg.extend_from_slice(ga.data()),
                        None => flatg.extend(std::iter::repeat_n(0.0, h.params.get(i).len())),
                    }
                }
                for (i, f) in feats.iter().enumerate() {
                    // decoder_feats is deep-to-shallow; tokens.dec is level-indexed
                    let (leaf, grid) = if i < 4 {
                        (&tokens.enc[i].tokens, tokens.enc[i].grid)
                    } else {
                        let lf = &tokens.dec[3 - (i - 4)];
                        (&lf.tokens, lf.grid)
                    };
                    match grads.get(leaf) {
                        // leaf gradients live in token layout; the flat
                        // vector packs map layout
                        Some(ga) => flatg
                            .extend_from_slice(tokens_to_map(ga, grid, grid).data()),
                        None => flatg.extend(std::iter::repeat_n(0.0, f.len())),
                    }
                }
                (loss.item(), flatg)
            };
            let (_, analytic) = eval(&flat);
            let numeric = finite_diff(&flat, |v| eval(v).0);
            let (at, err) = crate::gradcheck::max_rel_error_at(&analytic, &numeric, 1e-6);
            if err >= 1e-3 {
                let mut off = 0;
                for i in 0..heads.params.len() {
                    let len = heads.params.get(i).len();
                    if at < off + len {
                        panic!(
                            "distill loss (prog={prog}) rel err {err} at param {} elem {}: {} vs {}",
                            heads.params.name(i),
                            at - off,
                            analytic[at],
                            numeric[at]
                        );
                    }
                    off += len;
                }
                panic!(
                    "distill loss (prog={prog}) rel err {err} at feature offset {}: {} vs {}",
                    at - off,
                    analytic[at],
                    numeric[at]
                );
            }
        }
    }
}
