use super::param::{Module, Param};
use crate::scalar::Real;

/// Adam hyperparameters. Weight decay is an L2 term added to the gradient before the
/// moment updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 2e-5,
        }
    }
}

/// One bias-corrected Adam update of a single parameter.
pub fn adam_update<T: Real>(p: &mut Param<T>, cfg: &AdamConfig) {
    p.step_count += 1;
    let t = p.step_count as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (lr, eps, wd) = (T::lit(cfg.lr), T::lit(cfg.eps), T::lit(cfg.weight_decay));
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let one = T::one();
    let value = p.value.data_mut();
    let grad = p.grad.data();
    let m = p.adam_m.data_mut();
    let v = p.adam_v.data_mut();
    for k in 0..value.len() {
        let g = grad[k] + wd * value[k];
        m[k] = b1 * m[k] + (one - b1) * g;
        v[k] = b2 * v[k] + (one - b2) * g * g;
        let m_hat = m[k] / bc1;
        let v_hat = v[k] / bc2;
        value[k] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Apply [`adam_update`] to every parameter of a module.
pub fn adam_step<T: Real, M: Module<T> + ?Sized>(module: &mut M, cfg: &AdamConfig) {
    for (_, p) in module.params_mut() {
        adam_update(p, cfg);
    }
}

/// Scale all gradients of a module so their joint L2 norm is at most `max_norm`.
/// Returns the norm before scaling. `max_norm <= 0` leaves the gradients alone.
pub fn clip_grad_norm<T: Real, M: Module<T> + ?Sized>(module: &mut M, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for (_, p) in module.params() {
        sq += p.grad.data().iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>();
    }
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = T::lit(max_norm / norm);
        for (_, p) in module.params_mut() {
            for g in p.grad.data_mut() {
                *g = *g * scale;
            }
        }
    }
    norm
}
