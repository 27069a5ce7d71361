use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. `step` counts from 1.
///
/// Moments live inside each [`Param`](super::params::Param), so the store
/// carries the full optimizer state.
pub fn adam_step<T: Scalar>(params: &mut ParamStore<T>, cfg: &AdamConfig, step: usize) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {}", cfg.lr)));
    }
    if step == 0 {
        return Err(Error::Config("adam step counter starts at 1".into()));
    }
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.eps);
    let bc1 = T::one() - b1.powi(step as i32);
    let bc2 = T::one() - b2.powi(step as i32);
    for (_, p) in params.iter_mut() {
        let n = p.value.len();
        for idx in 0..n {
            let g = p.grad.data()[idx];
            let m = b1 * p.first_moment.data()[idx] + (T::one() - b1) * g;
            let v = b2 * p.second_moment.data()[idx] + (T::one() - b2) * g * g;
            p.first_moment.data_mut()[idx] = m;
            p.second_moment.data_mut()[idx] = v;
            let update = lr * (m / bc1) / ((v / bc2).sqrt() + eps);
            p.value.data_mut()[idx] -= update;
        }
    }
    Ok(())
}
