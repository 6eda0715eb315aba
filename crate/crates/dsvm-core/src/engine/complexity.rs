//! Parameter and FLOP accounting.
//!
//! Parameters are tallied exactly from the registered shapes (no
//! allocation). FLOPs are analytic multiply-accumulate counts x2 covering
//! every convolution, linear map, and scan (the scan counted as L*D*N MACs
//! per direction). A second figure, `flops_reference_convention`, counts
//! only the standard layers (projections, convolutions, merges/expands) at
//! 1 MAC = 1 FLOP, matching how the published comparison tables for this
//! model family are produced; the per-direction projections and the scan
//! itself are invisible to those profilers.

use serde::{Deserialize, Serialize};

use crate::distill::{DistillConfig, DistillHeads, PyramidSpec};
use crate::error::Result;
use crate::network::{shape_census, ModelConfig, SkipMode};

/// Published reference figures (millions of params, billions of FLOPs as
/// the tables report them) used for sanity comparison.
pub const REFERENCE_FIGURES: &[(&str, f64, f64)] = &[
    ("VM-UNet (reported)", 27.42, 4.11),
    ("DSVM-UNet (reported)", 22.63, 3.65),
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub reported_params_m: f64,
    pub reported_flops_g: f64,
    pub params_delta_pct: f64,
    pub flops_delta_pct: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub input_size: usize,
    pub num_classes: usize,
    pub base_dim: usize,
    /// Trainable parameters with distillation heads stripped.
    pub param_count_inference: usize,
    /// Trainable parameters including distillation heads.
    pub param_count_training: usize,
    pub params_by_module: Vec<(String, usize)>,
    /// MAC x2 over all convolutions, linear maps and scans (one forward).
    pub flops_total: f64,
    pub flops_by_module: Vec<(String, f64)>,
    /// Standard-layer MACs only, as published profilers count them.
    pub flops_reference_convention: f64,
    /// Deviation from published figures, computed against the
    /// reference-convention FLOPs and inference parameters.
    pub comparisons: Vec<ComparisonRow>,
}

/// Exact parameter tallies for the model and its distillation heads.
pub fn count_parameters(
    model_cfg: &ModelConfig,
    distill_cfg: &DistillConfig,
) -> Result<(usize, usize, Vec<(String, usize)>)> {
    let census = shape_census(model_cfg)?;
    let spec = PyramidSpec {
        base_dim: model_cfg.base_dim,
        input_size: model_cfg.input_size,
        levels: model_cfg.levels,
    };
    let heads = DistillHeads::shape_census(&spec, distill_cfg);
    let inference = census.element_count();
    let training = inference + heads.element_count();
    let mut by_module = vec![
        ("patch_embed".to_string(), census.count_prefix("patch_embed")),
        ("encoder".to_string(), census.count_prefix("encoder")),
        ("decoder".to_string(), census.count_prefix("decoder")),
        ("final_proj".to_string(), census.count_prefix("final_proj")),
    ];
    by_module.push(("distill".to_string(), heads.element_count()));
    Ok((inference, training, by_module))
}

struct FlopTally {
    by_module: Vec<(String, f64)>,
    total_macs: f64,
    reference_macs: f64,
}

impl FlopTally {
    fn new() -> Self {
        FlopTally { by_module: Vec::new(), total_macs: 0.0, reference_macs: 0.0 }
    }

    fn add(&mut self, module: &str, macs: f64, standard_layer: bool) {
        self.total_macs += macs;
        if standard_layer {
            self.reference_macs += macs;
        }
        match self.by_module.iter_mut().find(|(m, _)| m == module) {
            Some((_, v)) => *v += macs,
            None => self.by_module.push((module.to_string(), macs)),
        }
    }
}

/// Analytic forward-pass FLOPs at the configured input size.
/// Returns (flops_total = 2 * MACs, by-module breakdown in FLOPs,
/// reference-convention MACs).
pub fn estimate_flops(cfg: &ModelConfig) -> Result<(f64, Vec<(String, f64)>, f64)> {
    cfg.validate()?;
    let mut t = FlopTally::new();
    let hw = cfg.input_size;
    let c = cfg.base_dim as f64;
    let l1 = (hw * hw / 16) as f64;
    let pe_in = (cfg.in_channels * 16) as f64;
    t.add("patch_embed", l1 * pe_in * c, true);
    for level in 1..=cfg.levels {
        let module = format!("level{level}");
        let cl = cfg.dim_at(level) as f64;
        let ec = cl * cfg.expand as f64;
        let ll = (cfg.grid_at(level) * cfg.grid_at(level)) as f64;
        let bc = cfg.block_cfg(level);
        let (r, n) = (bc.dt_rank as f64, cfg.state_dim as f64);
        let blocks = (cfg.encoder_depths[level - 1] + cfg.decoder_depth_at(level)) as f64;
        // per block
        let in_gate = 2.0 * ll * cl * ec; // expansion + gating branch
        let dw = ll * ec * 9.0;
        let out = ll * ec * cl;
        let x_proj = 4.0 * ll * ec * (r + 2.0 * n);
        let dt_proj = 4.0 * ll * r * ec;
        let scan = 4.0 * ll * ec * n;
        t.add(&module, blocks * (in_gate + dw + out), true);
        t.add(&module, blocks * (x_proj + dt_proj + scan), false);
        if level < cfg.levels {
            // merge (encoder) and expand (decoder) between level and level+1
            let l_next = (cfg.grid_at(level + 1) * cfg.grid_at(level + 1)) as f64;
            t.add("merge", l_next * (4.0 * cl) * (2.0 * cl), true);
            let c_hi = cfg.dim_at(level + 1) as f64;
            t.add("expand", l_next * c_hi * (2.0 * c_hi), true);
            if cfg.skip_mode == SkipMode::Concat {
                t.add("skip_reduce", ll * (2.0 * cl) * cl, true);
            }
        }
    }
    t.add("final_proj", l1 * c * 16.0 * c, true);
    t.add(
        "final_proj",
        (hw * hw) as f64 * c * cfg.num_classes as f64,
        true,
    );
    let by_module = t
        .by_module
        .iter()
        .map(|(m, macs)| (m.clone(), 2.0 * macs))
        .collect();
    Ok((2.0 * t.total_macs, by_module, t.reference_macs))
}

/// Full complexity report with published-figure comparisons.
pub fn complexity_report(
    model_cfg: &ModelConfig,
    distill_cfg: &DistillConfig,
) -> Result<ComplexityReport> {
    let (inference, training, params_by_module) = count_parameters(model_cfg, distill_cfg)?;
    let (flops_total, flops_by_module, reference_macs) = estimate_flops(model_cfg)?;
    let comparisons = REFERENCE_FIGURES
        .iter()
        .map(|&(name, pm, fg)| ComparisonRow {
            model: name.to_string(),
            reported_params_m: pm,
            reported_flops_g: fg,
            params_delta_pct: (inference as f64 / 1e6 - pm) / pm * 100.0,
            flops_delta_pct: (reference_macs / 1e9 - fg) / fg * 100.0,
        })
        .collect();
    Ok(ComplexityReport {
        input_size: model_cfg.input_size,
        num_classes: model_cfg.num_classes,
        base_dim: model_cfg.base_dim,
        param_count_inference: inference,
        param_count_training: training,
        params_by_module,
        flops_total,
        flops_by_module,
        flops_reference_convention: reference_macs,
        comparisons,
    })
}

impl ComplexityReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "input {}x{}  base_dim {}  classes {}\n",
            self.input_size, self.input_size, self.base_dim, self.num_classes
        ));
        out.push_str(&format!(
            "params (inference): {:>12}  ({:.2} M)\n",
            self.param_count_inference,
            self.param_count_inference as f64 / 1e6
        ));
        out.push_str(&format!(
            "params (training):  {:>12}  ({:.2} M, distillation heads included)\n",
            self.param_count_training,
            self.param_count_training as f64 / 1e6
        ));
        for (m, n) in &self.params_by_module {
            out.push_str(&format!("  {m:<12} {n:>12}\n"));
        }
        out.push_str(&format!(
            "flops (MAC x2, scans included): {:.3} G\n",
            self.flops_total / 1e9
        ));
        for (m, f) in &self.flops_by_module {
            out.push_str(&format!("  {m:<12} {:>10.3} G\n", f / 1e9));
        }
        out.push_str(&format!(
            "flops (reference convention, standard layers as 1 MAC): {:.3} G\n",
            self.flops_reference_convention / 1e9
        ));
        for c in &self.comparisons {
            out.push_str(&format!(
                "vs {:<24} params {:+.1}% of {:.2} M, flops {:+.1}% of {:.2} G\n",
                c.model, c.params_delta_pct, c.reported_params_m, c.flops_delta_pct,
                c.reported_flops_g
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_count_scales_with_classes() {
        let mut c1 = ModelConfig::desk();
        c1.num_classes = 1;
        let mut c9 = ModelConfig::desk();
        c9.num_classes = 9;
        let d = DistillConfig::default();
        let (i1, _, _) = count_parameters(&c1, &d).unwrap();
        let (i9, _, _) = count_parameters(&c9, &d).unwrap();
        assert_eq!(i9 - i1, 8 * (c1.base_dim + 1));
    }

    #[test]
    fn training_count_exceeds_inference_and_ignores_distill_at_inference() {
        let cfg = ModelConfig::desk();
        let (inf, train, by) = count_parameters(&cfg, &DistillConfig::default()).unwrap();
        assert!(train > inf);
        let distill: usize = by.iter().find(|(m, _)| m == "distill").map(|(_, n)| *n).unwrap();
        assert_eq!(train - inf, distill);
        // inference count must not depend on the distillation config
        let alt = DistillConfig { decoder_students_from_level1: true, ..Default::default() };
        let (inf2, _, _) = count_parameters(&cfg, &alt).unwrap();
        assert_eq!(inf, inf2);
    }

    #[test]
    fn doubling_width_roughly_quadruples_params() {
        let mut small = ModelConfig::desk();
        small.base_dim = 16;
        let mut big = ModelConfig::desk();
        big.base_dim = 32;
        let d = DistillConfig::default();
        let (a, _, _) = count_parameters(&small, &d).unwrap();
        let (b, _, _) = count_parameters(&big, &d).unwrap();
        let ratio = b as f64 / a as f64;
        assert!((3.0..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn closed_form_patch_embed_count() {
        // analytic: w (C x in*16) + b (C) + norm (2C)
        let cfg = ModelConfig::desk();
        let census = shape_census(&cfg).unwrap();
        let got = census.count_prefix("patch_embed");
        let c = cfg.base_dim;
        assert_eq!(got, c * 48 + c + 2 * c);
    }

    #[test]
    fn flops_scale_quadratically_with_input() {
        let mut a = ModelConfig::desk();
        a.input_size = 64;
        let mut b = ModelConfig::desk();
        b.input_size = 128;
        let (fa, _, _) = estimate_flops(&a).unwrap();
        let (fb, _, _) = estimate_flops(&b).unwrap();
        let ratio = fb / fa;
        assert!((3.7..4.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn one_by_one_conv_definition() {
        // the head is a 1x1 conv (C/4 -> K) on the full grid: 2*Cin*Cout*h*w
        let cfg = ModelConfig::desk();
        let (_, by_module, _) = estimate_flops(&cfg).unwrap();
        let final_flops = by_module
            .iter()
            .find(|(m, _)| m == "final_proj")
            .map(|(_, f)| *f)
            .unwrap();
        let c = cfg.base_dim as f64;
        let hw = (cfg.input_size * cfg.input_size) as f64;
        let head = 2.0 * c * cfg.num_classes as f64 * hw;
        let expand = 2.0 * (hw / 16.0) * c * 16.0 * c;
        assert!((final_flops - (head + expand)).abs() < 1e-6);
    }

    #[test]
    fn paper_scale_lands_near_reference_figures() {
        let cfg = ModelConfig::paper_scale();
        let report = complexity_report(&cfg, &DistillConfig::default()).unwrap();
        let params_m = report.param_count_inference as f64 / 1e6;
        assert!(
            (params_m - 27.42).abs() / 27.42 < 0.2,
            "inference params {params_m} M vs 27.42 M reference"
        );
        let flops_g = report.flops_reference_convention / 1e9;
        assert!(
            (flops_g - 4.11).abs() / 4.11 < 0.25,
            "reference-convention flops {flops_g} G vs 4.11 G"
        );
        // the inclusive figure is strictly larger
        assert!(report.flops_total > report.flops_reference_convention);
    }
}
