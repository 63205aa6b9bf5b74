use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{Parameters, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments shaped like the parameters they track.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<P> {
    pub config: AdamConfig,
    pub m: P,
    pub v: P,
    pub step: u64,
}

impl<P> AdamState<P> {
    pub fn new<T: Scalar>(params: &P, config: AdamConfig) -> Self
    where
        P: Parameters<T>,
    {
        AdamState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step<T: Scalar>(&mut self, params: &mut P, grads: &P) -> Result<()>
    where
        P: Parameters<T>,
    {
        self.step_filtered(params, grads, |_| true)
    }

    /// Bias-corrected Adam update, applied only to tensors whose name passes
    /// `update`. Skipped tensors keep their values and moments.
    pub fn step_filtered<T: Scalar>(&mut self, params: &mut P, grads: &P, update: impl Fn(&str) -> bool) -> Result<()>
    where
        P: Parameters<T>,
    {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let one = T::one();
        let correction1 = T::of(1.0 - c.beta1.powi(t));
        let correction2 = T::of(1.0 - c.beta2.powi(t));
        let lr = T::of(c.learning_rate);
        let eps = T::of(c.epsilon);

        let grads = grads.tensors();
        let params = params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        if grads.len() != params.len() || ms.len() != params.len() {
            return Err(Error::Shape("gradient and parameter sets differ".into()));
        }
        for (((name, mut p), (_, g)), ((_, mut m), (_, mut v))) in
            params.into_iter().zip(grads).zip(ms.into_iter().zip(vs))
        {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !update(&name) {
                continue;
            }
            Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / correction1;
                    let v_hat = *v / correction2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}
