//! Adaptive-moment optimizer.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamStore, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub name: OptimizerKind,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Decoupled weight decay; 0 disables it.
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            name: OptimizerKind::Adam,
            learning_rate: 1e-4,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.betas.0)
            && (0.0..1.0).contains(&self.betas.1)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First and second moment estimates for every parameter of one store.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: OptimizerConfig,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: OptimizerConfig, params: &ParamStore<T>) -> Self {
        let zeros = || -> Vec<Matrix<T>> {
            params
                .iter()
                .map(|(_, p)| Matrix::zeros(p.rows(), p.cols()))
                .collect()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            cfg,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update from the gradients currently held in `params`.
    pub fn step(&mut self, params: &mut ParamStore<T>) {
        self.t += 1;
        let (b1, b2) = self.cfg.betas;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.cfg.learning_rate;
        let decay = T::of(1.0 - lr * self.cfg.weight_decay);
        let (b1t, b2t) = (T::of(b1), T::of(b2));
        let (one_b1, one_b2) = (T::of(1.0 - b1), T::of(1.0 - b2));
        let (inv_c1, inv_c2) = (T::of(1.0 / c1), T::of(1.0 / c2));
        let (lr, eps) = (T::of(lr), T::of(self.cfg.eps));
        let decoupled = self.cfg.weight_decay > 0.0;
        for ((value, grad), (m, v)) in params
            .values_and_grads_mut()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let slots = value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((p, &g), (m, v)) in slots {
                *m = b1t * *m + one_b1 * g;
                *v = b2t * *v + one_b2 * g * g;
                let m_hat = *m * inv_c1;
                let v_hat = *v * inv_c2;
                if decoupled {
                    *p = *p * decay;
                }
                *p = *p - lr * m_hat / (Float::sqrt(v_hat) + eps);
            }
        }
    }
}
