use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

/// Adaptive-moment optimizer state for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.shape()))
                .collect::<Vec<_>>()
        };
        Adam {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.v[i]
    }

    /// One bias-corrected update. Parameters without a gradient entry are
    /// treated as having a zero gradient. A non-finite gradient aborts the
    /// step before anything is modified.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.iter() {
            if !g.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter {}",
                    store.name(id)
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
        for id in ids {
            let g = grads.get(id);
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = store.get_mut(id);
            for k in 0..p.len() {
                let gk = g.map_or(0.0, |g| g.data()[k]);
                let mk = beta1 * m.data()[k] + (1.0 - beta1) * gk;
                let vk = beta2 * v.data()[k] + (1.0 - beta2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let mhat = mk / bc1;
                let vhat = vk / bc2;
                p.data_mut()[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    fn store_with(v: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::row(v.to_vec()));
        s
    }

    fn grads_for(store: &ParamStore, g: &[f64]) -> Gradients {
        // d/dp of sum(p * g) is g.
        let mut graph = Graph::new();
        let p = graph.param(store, store.id("p").unwrap());
        let c = graph.constant(Tensor::row(g.to_vec()));
        let prod = graph.mul(p, c).unwrap();
        let loss = graph.sum(prod);
        graph.backward(loss).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = store_with(&[1.0, -2.0]);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let g = grads_for(&store, &[0.0, 0.0]);
        adam.step(&mut store, &g).unwrap();
        assert_eq!(store.get(store.id("p").unwrap()).data(), &[1.0, -2.0]);
        assert_eq!(adam.first_moment(0).data(), &[0.0, 0.0]);
    }

    #[test]
    fn first_step_closed_form() {
        // m = (1-b1) g, v = (1-b2) g^2; after bias correction the step is
        // lr * g / (|g| + eps).
        let mut store = store_with(&[0.5, 0.5, 0.5]);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(&store, cfg);
        let gv = [3.0, -0.25, 1e-3];
        let g = grads_for(&store, &gv);
        adam.step(&mut store, &g).unwrap();
        for (k, &gk) in gv.iter().enumerate() {
            let expected = 0.5 - cfg.lr * gk / (gk.abs() + cfg.eps);
            let got = store.get(store.id("p").unwrap()).data()[k];
            assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
        }
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        let mut store = store_with(&[0.0]);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..2000 {
            let g = grads_for(&store, &[-0.7]);
            adam.step(&mut store, &g).unwrap();
            let now = store.get(store.id("p").unwrap()).data()[0];
            last_step = now - prev;
            prev = now;
        }
        assert!((last_step - 0.001).abs() < 1e-6, "{last_step}");
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut store = store_with(&[1.0]);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let g = grads_for(&store, &[f64::NAN]);
        assert!(matches!(adam.step(&mut store, &g), Err(Error::Numeric(_))));
        assert_eq!(store.get(store.id("p").unwrap()).data(), &[1.0]);
        assert_eq!(adam.steps(), 0);
    }
}
