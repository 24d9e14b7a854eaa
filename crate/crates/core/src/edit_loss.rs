//! Visibility-weighted penalty tying the edited field to a frozen copy of
//! the original outside the editable region.
//!
//! For one ray with samples `i`, edited values `(sigma_i, c_i, w_i)`, frozen
//! values `(sigma'_i, c'_i, w'_i)` and region membership `m_i`:
//!
//! ```text
//! L = 1/M * sum_i (lc * |c_i - c'_i|^2 + ls * (Psi(sigma_i) - Psi(sigma'_i))^2) * (w'_i + w_i) * (1 - m_i)
//! M = sum_i (1 - m_i)
//! ```
//!
//! with `Psi(x) = 1 - exp(-x)`. Rays with `M = 0` contribute 0. The batch
//! value is the mean over rays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::render::opacity;

/// How the density residual maps densities into `[0, 1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityResidual {
    /// `Psi(sigma)`.
    #[default]
    Density,
    /// `Psi(sigma * delta)`, the per-sample opacity.
    Opacity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditLossWeights {
    pub lambda_color: f64,
    pub lambda_density: f64,
    #[serde(default)]
    pub residual: DensityResidual,
}

impl Default for EditLossWeights {
    fn default() -> Self {
        Self {
            lambda_color: 100.0,
            lambda_density: 1000.0,
            residual: DensityResidual::Density,
        }
    }
}

impl EditLossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_color >= 0.0 && self.lambda_density >= 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// Density, color and compositing weight of one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampleValues {
    pub sigma: f64,
    pub color: [f64; 3],
    pub weight: f64,
}

/// Aligned edited and frozen samples for a batch of rays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSampleBatch {
    pub edited: Vec<SampleValues>,
    pub frozen: Vec<SampleValues>,
    /// Sample spacing, used only by [`DensityResidual::Opacity`].
    pub deltas: Vec<f64>,
    /// Region membership of each sample.
    pub inside: Vec<bool>,
    /// Samples of ray `r` are `ray_offsets[r]..ray_offsets[r + 1]`.
    pub ray_offsets: Vec<usize>,
}

impl ConstraintSampleBatch {
    pub fn ray_count(&self) -> usize {
        self.ray_offsets.len().saturating_sub(1)
    }

    fn validate(&self) -> Result<()> {
        let n = self.edited.len();
        if self.frozen.len() != n || self.deltas.len() != n || self.inside.len() != n {
            return Err(Error::invalid(format!(
                "misaligned batch: {} edited, {} frozen, {} deltas, {} membership bits",
                n,
                self.frozen.len(),
                self.deltas.len(),
                self.inside.len()
            )));
        }
        let offsets_ok = self.ray_offsets.first() == Some(&0)
            && self.ray_offsets.last() == Some(&n)
            && self.ray_offsets.windows(2).all(|w| w[0] <= w[1]);
        if !offsets_ok {
            return Err(Error::invalid("ray offsets must rise from 0 to the sample count"));
        }
        Ok(())
    }
}

/// Batch loss: mean over rays of the per-ray penalty.
pub fn l_out(batch: &ConstraintSampleBatch, weights: &EditLossWeights) -> Result<f64> {
    batch.validate()?;
    weights.validate()?;
    let rays = batch.ray_count();
    if rays == 0 {
        return Ok(0.0);
    }
    let total: f64 = batch
        .ray_offsets
        .windows(2)
        .map(|w| {
            let r = w[0]..w[1];
            ray_l_out(
                &batch.edited[r.clone()],
                &batch.frozen[r.clone()],
                &batch.deltas[r.clone()],
                &batch.inside[r],
                weights,
                None,
            )
        })
        .sum();
    Ok(total / rays as f64)
}

/// Loss gradients with respect to the edited samples of one ray.
#[derive(Clone, Debug, Default)]
pub struct RayLossGrads {
    /// Through the density residual only; the weight path is separate.
    pub sigma: Vec<f64>,
    pub color: Vec<[f64; 3]>,
    pub weight: Vec<f64>,
}

impl RayLossGrads {
    fn reset(&mut self, n: usize) {
        self.sigma.clear();
        self.sigma.resize(n, 0.0);
        self.color.clear();
        self.color.resize(n, [0.0; 3]);
        self.weight.clear();
        self.weight.resize(n, 0.0);
    }
}

/// Penalty of one ray, optionally filling its gradients. Frozen values are
/// constants.
pub fn ray_l_out(
    edited: &[SampleValues],
    frozen: &[SampleValues],
    deltas: &[f64],
    inside: &[bool],
    weights: &EditLossWeights,
    mut grads: Option<&mut RayLossGrads>,
) -> f64 {
    let n = edited.len();
    if let Some(g) = grads.as_deref_mut() {
        g.reset(n);
    }
    let outside = inside.iter().filter(|m| !**m).count();
    if outside == 0 {
        return 0.0;
    }
    let inv_m = 1.0 / outside as f64;
    let mut total = 0.0;
    for i in 0..n {
        if inside[i] {
            continue;
        }
        let (e, f) = (&edited[i], &frozen[i]);
        let scale = match weights.residual {
            DensityResidual::Density => 1.0,
            DensityResidual::Opacity => deltas[i],
        };
        let dc = [0, 1, 2].map(|k| e.color[k] - f.color[k]);
        let color_term = dc.iter().map(|d| d * d).sum::<f64>();
        let dpsi = opacity(e.sigma * scale) - opacity(f.sigma * scale);
        let term = weights.lambda_color * color_term + weights.lambda_density * dpsi * dpsi;
        let vis = f.weight + e.weight;
        total += term * vis;
        if let Some(g) = grads.as_deref_mut() {
            let k = vis * inv_m;
            g.color[i] = dc.map(|d| 2.0 * weights.lambda_color * d * k);
            g.sigma[i] = 2.0 * weights.lambda_density * dpsi * scale * (-e.sigma * scale).exp() * k;
            g.weight[i] = term * inv_m;
        }
    }
    total * inv_m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(sigma: f64, color: [f64; 3], weight: f64) -> SampleValues {
        SampleValues { sigma, color, weight }
    }

    fn one_ray(edited: Vec<SampleValues>, frozen: Vec<SampleValues>, inside: Vec<bool>) -> ConstraintSampleBatch {
        let n = edited.len();
        ConstraintSampleBatch {
            edited,
            frozen,
            deltas: vec![0.1; n],
            inside,
            ray_offsets: vec![0, n],
        }
    }

    #[test]
    fn identical_fields_give_zero() {
        let s = vec![sv(2.0, [0.1, 0.2, 0.3], 0.4), sv(0.5, [0.9, 0.9, 0.1], 0.2)];
        let b = one_ray(s.clone(), s, vec![false, false]);
        assert_eq!(l_out(&b, &EditLossWeights::default()).unwrap(), 0.0);
    }

    #[test]
    fn all_inside_gives_zero() {
        let b = one_ray(
            vec![sv(9.0, [1.0; 3], 0.9)],
            vec![sv(0.0, [0.0; 3], 0.0)],
            vec![true],
        );
        assert_eq!(l_out(&b, &EditLossWeights::default()).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_two_sample_ray() {
        // Sample 0 outside, sample 1 inside, so M = 1.
        let b = one_ray(
            vec![sv(1.0, [0.5, 0.2, 0.1], 0.3), sv(4.0, [1.0, 0.0, 0.0], 0.6)],
            vec![sv(2.0, [0.4, 0.2, 0.3], 0.5), sv(0.0, [0.0; 3], 0.0)],
            vec![false, true],
        );
        let w = EditLossWeights { lambda_color: 100.0, lambda_density: 1000.0, ..Default::default() };
        let color = 100.0 * (0.01 + 0.0 + 0.04);
        let dpsi = (1.0 - (-1.0f64).exp()) - (1.0 - (-2.0f64).exp());
        let expected = (color + 1000.0 * dpsi * dpsi) * (0.5 + 0.3);
        assert!((l_out(&b, &w).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn misaligned_arrays_are_rejected() {
        let mut b = one_ray(vec![sv(1.0, [0.0; 3], 0.1)], vec![sv(1.0, [0.0; 3], 0.1)], vec![false]);
        b.inside.push(true);
        assert!(matches!(l_out(&b, &EditLossWeights::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn color_component_is_linear_in_lambda() {
        let b = one_ray(
            vec![sv(1.0, [0.3, 0.6, 0.1], 0.2)],
            vec![sv(1.0, [0.1, 0.2, 0.9], 0.4)],
            vec![false],
        );
        let w1 = EditLossWeights { lambda_color: 100.0, lambda_density: 0.0, ..Default::default() };
        let w2 = EditLossWeights { lambda_color: 200.0, ..w1 };
        assert_eq!(2.0 * l_out(&b, &w1).unwrap(), l_out(&b, &w2).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let e = vec![sv(0.7, [0.2, 0.5, 0.8], 0.3), sv(1.5, [0.6, 0.1, 0.4], 0.1), sv(0.2, [0.9, 0.9, 0.9], 0.05)];
        let f = vec![sv(0.1, [0.3, 0.3, 0.3], 0.2), sv(2.5, [0.6, 0.2, 0.1], 0.4), sv(0.0, [0.0; 3], 0.0)];
        let inside = [false, false, true];
        let deltas = [0.1, 0.2, 0.3];
        for residual in [DensityResidual::Density, DensityResidual::Opacity] {
            let w = EditLossWeights { residual, ..Default::default() };
            let mut g = RayLossGrads::default();
            ray_l_out(&e, &f, &deltas, &inside, &w, Some(&mut g));
            let h = 1e-6;
            for i in 0..2 {
                let mut p = e.clone();
                let mut m = e.clone();
                p[i].sigma += h;
                m[i].sigma -= h;
                let fd = (ray_l_out(&p, &f, &deltas, &inside, &w, None) - ray_l_out(&m, &f, &deltas, &inside, &w, None)) / (2.0 * h);
                assert!((fd - g.sigma[i]).abs() < 1e-5 * fd.abs().max(1.0));
                let mut p = e.clone();
                let mut m = e.clone();
                p[i].weight += h;
                m[i].weight -= h;
                let fd = (ray_l_out(&p, &f, &deltas, &inside, &w, None) - ray_l_out(&m, &f, &deltas, &inside, &w, None)) / (2.0 * h);
                assert!((fd - g.weight[i]).abs() < 1e-5 * fd.abs().max(1.0));
                let mut p = e.clone();
                let mut m = e.clone();
                p[i].color[1] += h;
                m[i].color[1] -= h;
                let fd = (ray_l_out(&p, &f, &deltas, &inside, &w, None) - ray_l_out(&m, &f, &deltas, &inside, &w, None)) / (2.0 * h);
                assert!((fd - g.color[i][1]).abs() < 1e-5 * fd.abs().max(1.0));
            }
            assert_eq!(g.sigma[2], 0.0);
            assert_eq!(g.weight[2], 0.0);
        }
    }
}
