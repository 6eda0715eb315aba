//! The VSS block: pre-norm, channel expansion, depthwise conv, SiLU,
//! four-directional selective scan (SS2D), post-norm, SiLU gating, and a
//! residual projection back to the input width.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::params::{AllocSink, Bound, Init, ParamSet, ParamSink};
use crate::rng::Rng;
use crate::ssm::cross::{scan_order, token_perm};
use crate::ssm::scan::scan_graph;
use crate::tensor::{Arr, Graph, Tensor};

pub const NORM_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct VssBlockCfg {
    /// Token width C at the block boundary.
    pub dim: usize,
    /// Expansion ratio E; the scan runs at E*C.
    pub expand: usize,
    /// SSM state size N.
    pub state_dim: usize,
    /// Low-rank width of the step-size projection.
    pub dt_rank: usize,
}

impl VssBlockCfg {
    pub fn new(dim: usize, expand: usize, state_dim: usize) -> Self {
        VssBlockCfg { dim, expand, state_dim, dt_rank: dim.div_ceil(16).max(8) }
    }

    pub fn inner_dim(&self) -> usize {
        self.dim * self.expand
    }
}

#[derive(Clone, Debug)]
pub struct DirIdx {
    pub x_proj: usize,
    pub dt_proj: usize,
    pub delta_bias: usize,
    pub a_log: usize,
    pub d_skip: usize,
}

/// Indices of one block's parameters inside a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct VssBlockIdx {
    pub norm_gamma: usize,
    pub norm_beta: usize,
    pub in_proj: usize,
    pub gate_proj: usize,
    pub dw_w: usize,
    pub dw_b: usize,
    pub dirs: [DirIdx; 4],
    pub out_norm_gamma: usize,
    pub out_norm_beta: usize,
    pub out_proj: usize,
}

impl VssBlockIdx {
    pub fn build(sink: &mut dyn ParamSink, prefix: &str, cfg: &VssBlockCfg) -> VssBlockIdx {
        let c = cfg.dim;
        let ec = cfg.inner_dim();
        let (n, r) = (cfg.state_dim, cfg.dt_rank);
        let lin_std = |fan_in: usize| Init::Normal((1.0 / fan_in as f64).sqrt());
        let dir = |k: usize, sink: &mut dyn ParamSink| DirIdx {
            x_proj: sink.add(format!("{prefix}.dir{k}.x_proj.w"), &[r + 2 * n, ec], lin_std(ec)),
            dt_proj: sink.add(
                format!("{prefix}.dir{k}.dt_proj.w"),
                &[ec, r],
                Init::Uniform(-(r as f64).powf(-0.5), (r as f64).powf(-0.5)),
            ),
            delta_bias: sink.add(
                format!("{prefix}.dir{k}.delta_bias"),
                &[ec],
                Init::DtBias { dt_min: 1e-3, dt_max: 0.1 },
            ),
            a_log: sink.add(format!("{prefix}.dir{k}.a_log"), &[ec, n], Init::StateLog),
            d_skip: sink.add(format!("{prefix}.dir{k}.d_skip"), &[ec], Init::Ones),
        };
        VssBlockIdx {
            norm_gamma: sink.add(format!("{prefix}.norm.gamma"), &[c], Init::Ones),
            norm_beta: sink.add(format!("{prefix}.norm.beta"), &[c], Init::Zeros),
            in_proj: sink.add(format!("{prefix}.in_proj.w"), &[ec, c], lin_std(c)),
            gate_proj: sink.add(format!("{prefix}.gate_proj.w"), &[ec, c], lin_std(c)),
            dw_w: sink.add(format!("{prefix}.dwconv.w"), &[ec, 3, 3], Init::Normal(1.0 / 3.0)),
            dw_b: sink.add(format!("{prefix}.dwconv.b"), &[ec], Init::Zeros),
            dirs: [
                dir(0, sink),
                dir(1, sink),
                dir(2, sink),
                dir(3, sink),
            ],
            out_norm_gamma: sink.add(format!("{prefix}.out_norm.gamma"), &[ec], Init::Ones),
            out_norm_beta: sink.add(format!("{prefix}.out_norm.beta"), &[ec], Init::Zeros),
            // damped residual branch at init keeps the token stream near the
            // embedding scale, which also keeps the feature-alignment losses
            // on the same footing as the segmentation loss
            out_proj: sink.add(
                format!("{prefix}.out_proj.w"),
                &[c, ec],
                Init::Normal(0.35 * (1.0 / ec as f64).sqrt()),
            ),
        }
    }
}

/// Forward and inverse element permutations for the four scan directions at
/// a given grid size and channel count.
pub type ScanPerms = [(Rc<Vec<usize>>, Rc<Vec<usize>>); 4];

pub fn block_perms(h: usize, w: usize, channels: usize) -> ScanPerms {
    std::array::from_fn(|dir| {
        let order = scan_order(h, w, dir);
        (token_perm(&order, channels, false), token_perm(&order, channels, true))
    })
}

/// One VSS block over (h*w, C) tokens. Output shape equals input shape and
/// the block is residual: out = x + f(norm(x)).
pub fn vss_block_graph(
    x: &Tensor,
    h: usize,
    w: usize,
    cfg: &VssBlockCfg,
    idx: &VssBlockIdx,
    bp: &Bound,
    perms: &ScanPerms,
) -> Tensor {
    let l = h * w;
    let ec = cfg.inner_dim();
    let (n, r) = (cfg.state_dim, cfg.dt_rank);
    debug_assert_eq!(x.rows(), l, "vss_block: token count");
    debug_assert_eq!(x.cols(), cfg.dim, "vss_block: token width");

    let xn = x.layer_norm(bp.t(idx.norm_gamma), bp.t(idx.norm_beta), NORM_EPS);
    let expanded = xn.linear(bp.t(idx.in_proj), None);
    let gate = xn.linear(bp.t(idx.gate_proj), None);
    let conv = expanded
        .conv_dw3x3(h, w, bp.t(idx.dw_w), bp.t(idx.dw_b))
        .silu();

    let mut merged: Option<Tensor> = None;
    for (k, dir) in idx.dirs.iter().enumerate() {
        let (fwd, inv) = &perms[k];
        let seq = conv.gather(&[l, ec], fwd.clone());
        let proj = seq.linear(bp.t(dir.x_proj), None);
        let dt_low = proj.slice_cols(0, r);
        let b_seq = proj.slice_cols(r, n);
        let c_seq = proj.slice_cols(r + n, n);
        let delta = dt_low
            .linear(bp.t(dir.dt_proj), Some(bp.t(dir.delta_bias)))
            .softplus();
        let a_eff = bp.t(dir.a_log).exp().neg();
        let y = scan_graph(&seq, &delta, &b_seq, &c_seq, &a_eff, bp.t(dir.d_skip));
        let back = y.gather(&[l, ec], inv.clone());
        merged = Some(match merged {
            Some(acc) => acc.add(&back),
            None => back,
        });
    }
    let y = merged.expect("four directions");
    let yn = y.layer_norm(bp.t(idx.out_norm_gamma), bp.t(idx.out_norm_beta), NORM_EPS);
    let gated = yn.mul(&gate.silu());
    let out = gated.linear(bp.t(idx.out_proj), None);
    x.add(&out)
}

/// Self-contained parameter bundle for a single block (spec-level API; the
/// network registers blocks into its own set instead).
#[derive(Clone, Debug)]
pub struct VssBlockParams {
    pub cfg: VssBlockCfg,
    pub set: ParamSet,
    pub idx: VssBlockIdx,
}

impl VssBlockParams {
    pub fn init(cfg: VssBlockCfg, seed: u64) -> VssBlockParams {
        let mut rng = Rng::new(seed);
        let mut sink = AllocSink::new(&mut rng);
        let idx = VssBlockIdx::build(&mut sink, "block", &cfg);
        VssBlockParams { cfg, set: sink.set, idx }
    }
}

/// Evaluate one block on an (H, W, C) token map.
pub fn vss_block_forward(x: &Arr, params: &VssBlockParams) -> Result<Arr> {
    let shape = x.shape().to_vec();
    if shape.len() != 3 || shape[2] != params.cfg.dim {
        return Err(Error::Contract(format!(
            "vss_block_forward expects (H, W, {}), got {shape:?}",
            params.cfg.dim
        )));
    }
    if !x.all_finite() {
        return Err(Error::Contract("vss_block_forward: non-finite input".into()));
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let g = Graph::new();
    let tokens = g.leaf(x.clone().reshaped(&[h * w, c]));
    let bp = params.set.bind(&g);
    let perms = block_perms(h, w, params.cfg.inner_dim());
    let out = vss_block_graph(&tokens, h, w, &params.cfg, &params.idx, &bp, &perms);
    Ok(out.value().as_ref().clone().reshaped(&[h, w, c]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff;

    #[test]
    fn shape_contract_8x8x16() {
        let cfg = VssBlockCfg::new(16, 2, 4);
        let params = VssBlockParams::init(cfg, 0);
        let mut rng = Rng::new(1);
        let mut x = Arr::zeros(&[8, 8, 16]);
        rng.fill_normal(x.data_mut(), 1.0);
        let y = vss_block_forward(&x, &params).unwrap();
        assert_eq!(y.shape(), &[8, 8, 16]);
    }

    #[test]
    fn zero_out_proj_is_identity() {
        let cfg = VssBlockCfg::new(8, 2, 4);
        let mut params = VssBlockParams::init(cfg, 0);
        let op = params.idx.out_proj;
        params.set.get_mut(op).data_mut().fill(0.0);
        let mut rng = Rng::new(2);
        let mut x = Arr::zeros(&[4, 4, 8]);
        rng.fill_normal(x.data_mut(), 1.0);
        let y = vss_block_forward(&x, &params).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn repeated_calls_are_bitwise_identical() {
        let cfg = VssBlockCfg::new(8, 2, 4);
        let params = VssBlockParams::init(cfg, 3);
        let mut rng = Rng::new(4);
        let mut x = Arr::zeros(&[4, 4, 8]);
        rng.fill_normal(x.data_mut(), 1.0);
        let y1 = vss_block_forward(&x, &params).unwrap();
        let y2 = vss_block_forward(&x, &params).unwrap();
        assert_eq!(y1.data(), y2.data());
    }

    #[test]
    fn non_finite_input_rejected() {
        let cfg = VssBlockCfg::new(4, 2, 2);
        let params = VssBlockParams::init(cfg, 0);
        let mut x = Arr::zeros(&[2, 2, 4]);
        x.data_mut()[3] = f64::NAN;
        assert!(matches!(
            vss_block_forward(&x, &params),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let cfg = VssBlockCfg::new(4, 2, 2);
        let params = VssBlockParams::init(cfg, 7);
        let (h, w) = (4, 4);
        let mut rng = Rng::new(8);
        let mut x = Arr::zeros(&[h * w, 4]);
        rng.fill_normal(x.data_mut(), 1.0);
        let mut readout = Arr::zeros(&[h * w, 4]);
        rng.fill_normal(readout.data_mut(), 1.0);

        // Flatten all block parameters plus the input into one vector.
        let mut flat: Vec<f64> = Vec::new();
        for (_, arr) in params.set.iter() {
            flat.extend_from_slice(arr.data());
        }
        flat.extend_from_slice(x.data());

        let eval = |v: &[f64]| -> (f64, Vec<f64>) {
            let mut set = params.set.clone();
            let mut off = 0;
            for i in 0..set.len() {
                let len = set.get(i).len();
                set.get_mut(i).data_mut().copy_from_slice(&v[off..off + len]);
                off += len;
            }
            let xin = Arr::from_vec(&[h * w, 4], v[off..off + h * w * 4].to_vec());
            let g = Graph::new();
            let tokens = g.leaf(xin);
            let bp = set.bind(&g);
            let perms = block_perms(h, w, cfg.inner_dim());
            let out = vss_block_graph(&tokens, h, w, &cfg, &params.idx, &bp, &perms);
            let wt = g.leaf(readout.clone());
            let loss = out.mul(&wt).sum_all();
            let grads = g.backward(&loss);
            let mut flatg = Vec::new();
            for i in 0..set.len() {
                // every parameter participates; missing grad means a
                // disconnected subgraph
                let ga = grads
                    .get(bp.t(i))
                    .unwrap_or_else(|| panic!("no grad for {}", set.name(i)));
                flatg.extend_from_slice(ga.data());
            }
            flatg.extend_from_slice(grads.get(&tokens).unwrap().data());
            (loss.item(), flatg)
        };
        let (_, analytic) = eval(&flat);
        let numeric = finite_diff(&flat, |v| eval(v).0);
        let (at, err) = crate::gradcheck::max_rel_error_at(&analytic, &numeric, 1e-6);
        assert!(
            err < 1e-3,
            "vss block gradient rel err {err} at flat index {at}: analytic {} vs numeric {}",
            analytic[at],
            numeric[at]
        );
    }
}
