//! AdamW with decoupled weight decay and the cosine-annealing schedule.

use serde::{Deserialize, Serialize};

use crate::tensor::Arr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrMode {
    /// Evaluate the cosine formula directly; the schedule is periodic with
    /// period 2 * t_max and rises again after t_max.
    Periodic,
    /// Hold eta_min once t reaches t_max.
    Clamp,
}

/// eta_min + (eta_max - eta_min) * (1 + cos(pi * t / t_max)) / 2, with exact
/// endpoint values at multiples of t_max.
pub fn cosine_lr_mode(t: usize, t_max: usize, eta_max: f64, eta_min: f64, mode: LrMode) -> f64 {
    assert!(t_max > 0, "t_max must be positive");
    let t_eff = match mode {
        LrMode::Periodic => t % (2 * t_max),
        LrMode::Clamp => {
            if t >= t_max {
                return eta_min;
            }
            t
        }
    };
    if t_eff == 0 {
        return eta_max;
    }
    if t_eff == t_max {
        return eta_min;
    }
    let cos = (std::f64::consts::PI * t_eff as f64 / t_max as f64).cos();
    eta_min + 0.5 * (eta_max - eta_min) * (1.0 + cos)
}

/// Default (periodic) cosine schedule.
pub fn cosine_lr(t: usize, t_max: usize, eta_max: f64, eta_min: f64) -> f64 {
    cosine_lr_mode(t, t_max, eta_max, eta_min, LrMode::Periodic)
}

/// Optimizer state: first/second moment estimates per parameter array.
#[derive(Clone, Debug)]
pub struct AdamWState {
    pub step: u64,
    pub m: Vec<Arr>,
    pub v: Vec<Arr>,
}

impl AdamWState {
    pub fn new(shapes: &[&Arr]) -> AdamWState {
        AdamWState {
            step: 0,
            m: shapes.iter().map(|a| Arr::zeros(a.shape())).collect(),
            v: shapes.iter().map(|a| Arr::zeros(a.shape())).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.8, beta2: 0.99, eps: 1e-8, weight_decay: 1e-2 }
    }
}

/// One AdamW step over aligned (param, grad) pairs. Decay is decoupled:
/// p -= lr * wd * p before the moment update is applied.
pub fn adamw_step(
    cfg: &AdamWConfig,
    state: &mut AdamWState,
    params: &mut [&mut Arr],
    grads: &[Arr],
    lr: f64,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        debug_assert_eq!(p.shape(), g.shape());
        for ((pv, &gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *pv -= lr * cfg.weight_decay * *pv;
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints_exact() {
        assert_eq!(cosine_lr(0, 50, 1e-3, 1e-5), 1e-3);
        assert_eq!(cosine_lr(50, 50, 1e-3, 1e-5), 1e-5);
        assert_eq!(cosine_lr(100, 50, 1e-3, 1e-5), 1e-3); // periodic
        let mid = cosine_lr(25, 50, 1e-3, 1e-5);
        assert!((mid - 5.05e-4).abs() < 1e-12, "midpoint {mid}");
    }

    #[test]
    fn clamp_mode_holds_minimum() {
        assert_eq!(cosine_lr_mode(60, 50, 1e-3, 1e-5, LrMode::Clamp), 1e-5);
        assert_eq!(cosine_lr_mode(0, 50, 1e-3, 1e-5, LrMode::Clamp), 1e-3);
    }

    #[test]
    fn adamw_descends_a_quadratic() {
        // minimize (p - 3)^2
        let mut p = Arr::from_vec(&[1], vec![0.0]);
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut state = AdamWState::new(&[&p]);
        for _ in 0..500 {
            let g = Arr::from_vec(&[1], vec![2.0 * (p.data()[0] - 3.0)]);
            adamw_step(&cfg, &mut state, &mut [&mut p], &[g], 0.05);
        }
        assert!((p.data()[0] - 3.0).abs() < 1e-2, "got {}", p.data()[0]);
    }

    #[test]
    fn weight_decay_shrinks_params_without_gradient() {
        let mut p = Arr::from_vec(&[1], vec![1.0]);
        let cfg = AdamWConfig::default();
        let mut state = AdamWState::new(&[&p]);
        let g = Arr::zeros(&[1]);
        adamw_step(&cfg, &mut state, &mut [&mut p], std::slice::from_ref(&g), 0.1);
        assert!(p.data()[0] < 1.0 && p.data()[0] > 0.99);
    }
}
