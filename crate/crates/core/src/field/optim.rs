use serde::{Deserialize, Serialize};

use super::{Grads, RadianceField, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    /// Step size for grid feature tensors.
    pub lr_grid: f64,
    /// Step size for head weights and biases.
    pub lr_heads: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr_grid: 1e-2,
            lr_heads: 1e-2,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr_grid >= 0.0
            && self.lr_heads >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("invalid optimizer settings"))
        }
    }
}

/// Adam with bias correction and separate step sizes for grid and head tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    /// Number of updates applied so far.
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, field: &RadianceField<T>) -> Self {
        let zeros = || field.params().iter().map(|t| vec![T::zero(); t.data.len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Clears the moment estimates and step counter.
    pub fn reset(&mut self) {
        self.step = 0;
        for t in self.m.iter_mut().chain(self.v.iter_mut()) {
            t.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn update(&mut self, field: &mut RadianceField<T>, grads: &Grads<T>) {
        self.step += 1;
        let c = self.config;
        let b1 = T::of(c.beta1);
        let b2 = T::of(c.beta2);
        let one = T::one();
        let corr1 = T::of(1.0 - c.beta1.powf(self.step as f64));
        let corr2 = T::of(1.0 - c.beta2.powf(self.step as f64));
        let eps = T::of(c.eps);
        let grid_levels = field.config().levels;
        for (i, param) in field.params_mut().iter_mut().enumerate() {
            let lr = T::of(if i < grid_levels { c.lr_grid } else { c.lr_heads });
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads.tensors[i]);
            for j in 0..param.data.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let mhat = m[j] / corr1;
                let vhat = v[j] / corr2;
                param.data[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// Moment tensors named after the field tensors, for checkpointing.
    pub fn tensors(&self, field: &RadianceField<T>) -> Vec<Tensor<T>> {
        let named = |prefix: &str, data: &Vec<Vec<T>>| -> Vec<Tensor<T>> {
            field
                .params()
                .iter()
                .zip(data)
                .map(|(p, d)| Tensor {
                    name: format!("{prefix}.{}", p.name),
                    shape: p.shape.clone(),
                    data: d.clone(),
                })
                .collect()
        };
        let mut out = named("adam.m", &self.m);
        out.extend(named("adam.v", &self.v));
        out
    }

    /// Restores moments written by [`Adam::tensors`].
    pub fn from_tensors(config: AdamConfig, step: u64, field: &RadianceField<T>, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let n = field.params().len();
        if tensors.len() != 2 * n {
            return Err(Error::invalid(format!(
                "expected {} optimizer tensors, got {}",
                2 * n,
                tensors.len()
            )));
        }
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for (i, t) in tensors.into_iter().enumerate() {
            let p = &field.params()[i % n];
            let prefix = if i < n { "adam.m" } else { "adam.v" };
            if t.name != format!("{prefix}.{}", p.name) || t.data.len() != p.data.len() {
                return Err(Error::invalid(format!("unexpected optimizer tensor {}", t.name)));
            }
            if i < n {
                m.push(t.data);
            } else {
                v.push(t.data);
            }
        }
        Ok(Self { config, step, m, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;

    fn tiny() -> RadianceField<f64> {
        let cfg = FieldConfig {
            levels: 1,
            base_resolution: 1,
            hidden_width: 2,
            ..FieldConfig::default()
        };
        RadianceField::new(cfg, 0).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut field = tiny();
        let before = field.clone();
        let mut grads = Grads::zeros_like(&field);
        grads.tensors.iter_mut().flatten().for_each(|g| *g = 0.3);
        let cfg = AdamConfig { lr_grid: 0.0, lr_heads: 0.0, ..AdamConfig::default() };
        let mut adam = Adam::new(cfg, &field);
        adam.update(&mut field, &grads);
        assert_eq!(field, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut field = tiny();
        let before = field.clone();
        let mut grads = Grads::zeros_like(&field);
        grads.tensors.iter_mut().flatten().for_each(|g| *g = -2.0);
        let cfg = AdamConfig { lr_grid: 1e-2, lr_heads: 1e-3, ..AdamConfig::default() };
        let mut adam = Adam::new(cfg, &field);
        adam.update(&mut field, &grads);
        let grid_delta = field.params()[0].data[0] - before.params()[0].data[0];
        let head_delta = field.params()[1].data[0] - before.params()[1].data[0];
        assert!((grid_delta - 1e-2).abs() < 1e-9);
        assert!((head_delta - 1e-3).abs() < 1e-9);
    }
}
