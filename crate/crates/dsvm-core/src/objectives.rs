//! Segmentation objectives: BCE, soft Dice, their weighted combination for
//! binary tasks, cross-entropy + Dice for multi-class, and the total
//! training objective combining segmentation and distillation terms.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Arr, Graph, Tensor};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossWeights {
    /// BCE / CE weight.
    pub lambda1: f64,
    /// Dice weight.
    pub lambda2: f64,
    /// Projection self-distillation weight.
    pub alpha: f64,
    /// Progressive self-distillation weight.
    pub beta: f64,
    /// Probability clamp for log stability.
    pub eps_clamp: f64,
    /// Additive smoothing in the soft-Dice ratio.
    pub dice_smooth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 1.0,
            alpha: 1.0,
            beta: 0.5,
            eps_clamp: 1e-7,
            dice_smooth: 1e-5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("alpha and beta must be non-negative".into()));
        }
        if !(self.eps_clamp > 0.0 && self.eps_clamp < 0.5) {
            return Err(Error::Config("eps_clamp must lie in (0, 0.5)".into()));
        }
        if !(self.dice_smooth > 0.0) {
            return Err(Error::Config("dice_smooth must be positive".into()));
        }
        Ok(())
    }
}

fn check_same_shape(a: &Arr, b: &Arr, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Contract(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Graph BCE over probabilities, clamped to [eps, 1-eps] before the logs.
pub fn bce_graph(probs: &Tensor, targets: &Tensor, eps: f64) -> Tensor {
    let p = probs.clamp(eps, 1.0 - eps);
    let pos = targets.mul(&p.ln());
    let one_minus_p = p.neg().add_scalar(1.0);
    let neg = targets.neg().add_scalar(1.0).mul(&one_minus_p.ln());
    pos.add(&neg).mean_all().neg()
}

/// Numerically stable BCE straight from logits:
/// mean(softplus(x) - x * y).
pub fn bce_with_logits_graph(logits: &Tensor, targets: &Tensor) -> Tensor {
    logits.softplus().sub(&logits.mul(targets)).mean_all()
}

/// Graph soft Dice loss: 1 - (2*sum(p*y) + s) / (sum(p) + sum(y) + s).
pub fn dice_graph(probs: &Tensor, targets: &Tensor, smooth: f64) -> Tensor {
    let inter = probs.mul(targets).sum_all();
    let denom = probs.sum_all().add(&targets.sum_all()).add_scalar(smooth);
    let num = inter.scale(2.0).add_scalar(smooth);
    num.div(&denom).neg().add_scalar(1.0)
}

/// lambda1 * BCE + lambda2 * Dice over probabilities.
pub fn bcedice_graph(probs: &Tensor, targets: &Tensor, w: &LossWeights) -> Tensor {
    bce_graph(probs, targets, w.eps_clamp)
        .scale(w.lambda1)
        .add(&dice_graph(probs, targets, w.dice_smooth).scale(w.lambda2))
}

/// As [`bcedice_graph`] but from logits, using the stable BCE form and a
/// sigmoid for the Dice term.
pub fn bcedice_from_logits_graph(logits: &Tensor, targets: &Tensor, w: &LossWeights) -> Tensor {
    let bce = bce_with_logits_graph(logits, targets);
    let probs = logits.sigmoid();
    bce.scale(w.lambda1)
        .add(&dice_graph(&probs, targets, w.dice_smooth).scale(w.lambda2))
}

/// Multi-class objective on (P, K) logits and per-pixel class indices:
/// lambda1 * CE + lambda2 * (1 - mean over all K classes of soft Dice).
pub fn cedice_graph(
    logits: &Tensor,
    targets: &[usize],
    num_classes: usize,
    w: &LossWeights,
) -> Tensor {
    let g: Graph = logits.graph().clone();
    let p = logits.rows();
    assert_eq!(logits.cols(), num_classes, "cedice: logits width != K");
    assert_eq!(targets.len(), p, "cedice: target count");
    let logp = logits.log_softmax_rows();
    let ce = logp.nll_mean(Rc::new(targets.to_vec()));
    let probs = logp.exp();
    let mut onehot = Arr::zeros(&[p, num_classes]);
    for (i, &t) in targets.iter().enumerate() {
        onehot.data_mut()[i * num_classes + t] = 1.0;
    }
    let y = g.leaf(onehot);
    let inter = probs.mul(&y).col_sums();
    let denom = probs
        .col_sums()
        .add(&y.col_sums())
        .add_scalar(w.dice_smooth);
    let dice_per_class = inter.scale(2.0).add_scalar(w.dice_smooth).div(&denom);
    let dice_loss = dice_per_class.mean_all().neg().add_scalar(1.0);
    ce.scale(w.lambda1).add(&dice_loss.scale(w.lambda2))
}

/// Total objective: seg + alpha * proj + beta * prog.
pub fn total_graph(seg: &Tensor, proj: &Tensor, prog: &Tensor, w: &LossWeights) -> Tensor {
    seg.add(&proj.scale(w.alpha)).add(&prog.scale(w.beta))
}

// ---------------------------------------------------------------------------
// Plain-array entry points with contract validation.
// ---------------------------------------------------------------------------

fn validate_probs_targets(probs: &Arr, targets: &Arr, what: &str) -> Result<()> {
    check_same_shape(probs, targets, what)?;
    if probs.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Contract(format!("{what}: probabilities outside [0, 1]")));
    }
    if targets.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Contract(format!("{what}: targets must be binary")));
    }
    Ok(())
}

pub fn bce_loss(probs: &Arr, targets: &Arr, w: &LossWeights) -> Result<f64> {
    validate_probs_targets(probs, targets, "bce_loss")?;
    let g = Graph::new();
    let p = g.leaf(probs.clone());
    let t = g.leaf(targets.clone());
    Ok(bce_graph(&p, &t, w.eps_clamp).item())
}

pub fn dice_loss(probs: &Arr, targets: &Arr, w: &LossWeights) -> Result<f64> {
    validate_probs_targets(probs, targets, "dice_loss")?;
    let g = Graph::new();
    let p = g.leaf(probs.clone());
    let t = g.leaf(targets.clone());
    Ok(dice_graph(&p, &t, w.dice_smooth).item())
}

pub fn bcedice_loss(probs: &Arr, targets: &Arr, w: &LossWeights) -> Result<f64> {
    validate_probs_targets(probs, targets, "bcedice_loss")?;
    let g = Graph::new();
    let p = g.leaf(probs.clone());
    let t = g.leaf(targets.clone());
    Ok(bcedice_graph(&p, &t, w).item())
}

/// Multi-class loss on (K, H, W) logits and an (H, W) class-index map.
pub fn cedice_loss(logits: &Arr, targets: &[usize], w: &LossWeights) -> Result<f64> {
    let shape = logits.shape();
    if shape.len() != 3 {
        return Err(Error::Contract(format!("cedice_loss expects (K,H,W), got {shape:?}")));
    }
    let (k, h, wd) = (shape[0], shape[1], shape[2]);
    if k < 2 {
        return Err(Error::Contract("cedice_loss requires K >= 2".into()));
    }
    if targets.len() != h * wd {
        return Err(Error::Contract("cedice_loss: target size mismatch".into()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::Contract(format!("cedice_loss: class index {bad} >= K = {k}")));
    }
    let g = Graph::new();
    let tok = g.leaf(crate::network::map_to_tokens(logits));
    Ok(cedice_graph(&tok, targets, k, w).item())
}

/// Per-class soft Dice of softmaxed (K, H, W) logits against a class map,
/// reported for all K classes (background included).
pub fn multiclass_dice_per_class(logits: &Arr, targets: &[usize], smooth: f64) -> Result<Vec<f64>> {
    let shape = logits.shape();
    let (k, h, w) = (shape[0], shape[1], shape[2]);
    if targets.len() != h * w {
        return Err(Error::Contract("dice per class: target size mismatch".into()));
    }
    let g = Graph::new();
    let tok = g.leaf(crate::network::map_to_tokens(logits));
    let probs = tok.log_softmax_rows().exp();
    let pv = probs.value();
    let mut out = Vec::with_capacity(k);
    for class in 0..k {
        let mut inter = 0.0;
        let mut psum = 0.0;
        let mut ysum = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let p = pv.data()[i * k + class];
            psum += p;
            if t == class {
                inter += p;
                ysum += 1.0;
            }
        }
        out.push((2.0 * inter + smooth) / (psum + ysum + smooth));
    }
    Ok(out)
}

pub fn total_loss(seg: f64, proj: f64, prog: f64, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("seg", seg), ("proj", proj), ("prog", prog)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("total_loss input {name} = {v}")));
        }
    }
    Ok(seg + w.alpha * proj + w.beta * prog)
}
