//! Loss evaluation, gradients and optimizer steps.
//!
//! The loss of a batch is the mean squared RGB error over rays and channels,
//! plus the constrained-edit penalty when a frozen reference is supplied.
//! Rays are processed in a fixed number of contiguous chunks whose gradients
//! are summed in chunk order, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamConfig};
use super::render::{composite_backward, composite_into, pixel_seed, sample_ray, Composite, RaySamples, SamplingConfig};
use super::{Grads, RadianceField, SampleTrace};
use crate::camera::{CameraModel, Vec3};
use crate::edit_loss::{ray_l_out, EditLossWeights, RayLossGrads, SampleValues};
use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::real::Real;

const CHUNKS: usize = 8;

/// Rays with target colors and, when constrained, per-sample region membership.
#[derive(Clone, Debug, PartialEq)]
pub struct RayBatch {
    pub rays: Vec<RaySamples>,
    pub targets: Vec<[f64; 3]>,
    pub inside: Option<Vec<Vec<bool>>>,
}

impl RayBatch {
    pub fn new(rays: Vec<RaySamples>, targets: Vec<[f64; 3]>) -> Result<Self> {
        if rays.is_empty() {
            return Err(Error::invalid("ray batch is empty"));
        }
        if rays.len() != targets.len() {
            return Err(Error::invalid("one target color per ray required"));
        }
        Ok(Self { rays, targets, inside: None })
    }

    /// Records region membership for every sample position.
    pub fn mark_membership(&mut self, contains: impl Fn(&Vec3) -> bool) {
        self.inside = Some(self.rays.iter().map(|r| r.points().map(|p| contains(&p)).collect()).collect());
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Frozen reference field and penalty weights.
#[derive(Clone, Copy, Debug)]
pub struct Constraint<'a, T: Real> {
    pub frozen: &'a RadianceField<T>,
    pub weights: EditLossWeights,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rgb: f64,
    pub constraint: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
struct RayScratch<T> {
    traces: Vec<SampleTrace<T>>,
    frozen_trace: SampleTrace<T>,
    sigma: Vec<f64>,
    color: Vec<[f64; 3]>,
    frozen_sigma: Vec<f64>,
    frozen_color: Vec<[f64; 3]>,
    comp: Composite,
    frozen_comp: Composite,
    edited_vals: Vec<SampleValues>,
    frozen_vals: Vec<SampleValues>,
    loss_grads: RayLossGrads,
    d_sigma: Vec<f64>,
    d_color: Vec<[f64; 3]>,
    d_weight: Vec<f64>,
}

impl<T: Real> RayScratch<T> {
    fn new(field: &RadianceField<T>) -> Self {
        Self {
            traces: Vec::new(),
            frozen_trace: SampleTrace::new(field.config()),
            sigma: Vec::new(),
            color: Vec::new(),
            frozen_sigma: Vec::new(),
            frozen_color: Vec::new(),
            comp: Composite::default(),
            frozen_comp: Composite::default(),
            edited_vals: Vec::new(),
            frozen_vals: Vec::new(),
            loss_grads: RayLossGrads::default(),
            d_sigma: Vec::new(),
            d_color: Vec::new(),
            d_weight: Vec::new(),
        }
    }
}

/// Reusable buffers for repeated gradient evaluations on one field shape.
#[derive(Clone, Debug)]
pub struct TrainWorkspace<T: Real> {
    chunk_grads: Vec<Grads<T>>,
    scratch: Vec<RayScratch<T>>,
    grads: Grads<T>,
}

impl<T: Real> TrainWorkspace<T> {
    pub fn new(field: &RadianceField<T>) -> Self {
        Self {
            chunk_grads: (0..CHUNKS).map(|_| Grads::zeros_like(field)).collect(),
            scratch: (0..CHUNKS).map(|_| RayScratch::new(field)).collect(),
            grads: Grads::zeros_like(field),
        }
    }

    /// Gradient from the last [`loss_and_grad`] call.
    pub fn grads(&self) -> &Grads<T> {
        &self.grads
    }
}

/// One ray's contribution: `(rgb, constraint)` already divided by the batch size.
#[allow(clippy::too_many_arguments)]
fn ray_pass<T: Real>(
    field: &RadianceField<T>,
    samples: &RaySamples,
    target: [f64; 3],
    inside: Option<&[bool]>,
    constraint: Option<&Constraint<'_, T>>,
    inv_batch: f64,
    s: &mut RayScratch<T>,
    grads: Option<&mut Grads<T>>,
) -> (f64, f64) {
    let n = samples.len();
    if s.traces.len() < n {
        s.traces.resize_with(n, || SampleTrace::new(field.config()));
    }
    s.sigma.clear();
    s.color.clear();
    for (i, p) in samples.points().enumerate() {
        let out = field.sample(&p, &mut s.traces[i]);
        s.sigma.push(out.density);
        s.color.push(out.color);
    }
    composite_into(&s.sigma, &s.color, &samples.delta, &mut s.comp);
    let residual = [0, 1, 2].map(|k| s.comp.color[k] - target[k]);
    let rgb = residual.iter().map(|r| r * r).sum::<f64>() / 3.0;

    let mut constraint_loss = 0.0;
    let mut has_constraint = false;
    if let (Some(c), Some(inside)) = (constraint, inside) {
        has_constraint = true;
        s.frozen_sigma.clear();
        s.frozen_color.clear();
        for p in samples.points() {
            let out = c.frozen.sample(&p, &mut s.frozen_trace);
            s.frozen_sigma.push(out.density);
            s.frozen_color.push(out.color);
        }
        composite_into(&s.frozen_sigma, &s.frozen_color, &samples.delta, &mut s.frozen_comp);
        s.edited_vals.clear();
        s.frozen_vals.clear();
        for i in 0..n {
            s.edited_vals.push(SampleValues { sigma: s.sigma[i], color: s.color[i], weight: s.comp.weights[i] });
            s.frozen_vals.push(SampleValues {
                sigma: s.frozen_sigma[i],
                color: s.frozen_color[i],
                weight: s.frozen_comp.weights[i],
            });
        }
        let lg = grads.is_some().then_some(&mut s.loss_grads);
        constraint_loss = ray_l_out(&s.edited_vals, &s.frozen_vals, &samples.delta, inside, &c.weights, lg);
    }

    if let Some(grads) = grads {
        let d_color = residual.map(|r| 2.0 / 3.0 * r * inv_batch);
        let d_weights = if has_constraint {
            s.d_weight.clear();
            s.d_weight.extend(s.loss_grads.weight.iter().map(|g| g * inv_batch));
            Some(s.d_weight.as_slice())
        } else {
            None
        };
        composite_backward(&s.comp, &s.color, &samples.delta, d_color, d_weights, &mut s.d_sigma, &mut s.d_color);
        for i in 0..n {
            let mut ds = s.d_sigma[i];
            let mut dc = s.d_color[i];
            if has_constraint {
                ds += s.loss_grads.sigma[i] * inv_batch;
                for k in 0..3 {
                    dc[k] += s.loss_grads.color[i][k] * inv_batch;
                }
            }
            field.backward(&mut s.traces[i], T::of(ds), dc.map(T::of), grads);
        }
    }
    (rgb * inv_batch, constraint_loss * inv_batch)
}

fn check_batch<T: Real>(batch: &RayBatch, constraint: Option<&Constraint<'_, T>>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("ray batch is empty"));
    }
    if constraint.is_some() {
        match &batch.inside {
            None => return Err(Error::invalid("constrained loss needs membership bits")),
            Some(inside) if inside.iter().zip(&batch.rays).any(|(m, r)| m.len() != r.len()) => {
                return Err(Error::invalid("membership bits misaligned with samples"))
            }
            _ => {}
        }
    }
    Ok(())
}

fn chunk_bounds(n: usize, c: usize) -> std::ops::Range<usize> {
    (n * c / CHUNKS)..(n * (c + 1) / CHUNKS)
}

/// Loss of `batch` without gradients.
pub fn evaluate_loss<T: Real>(
    field: &RadianceField<T>,
    batch: &RayBatch,
    constraint: Option<&Constraint<'_, T>>,
) -> Result<LossBreakdown> {
    check_batch(batch, constraint)?;
    let inv = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, f64)> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut s = RayScratch::new(field);
            chunk_bounds(batch.len(), c).fold((0.0, 0.0), |acc, r| {
                let inside = batch.inside.as_ref().map(|m| m[r].as_slice());
                let (a, b) = ray_pass(field, &batch.rays[r], batch.targets[r], inside, constraint, inv, &mut s, None);
                (acc.0 + a, acc.1 + b)
            })
        })
        .collect();
    Ok(sum_parts(&parts))
}

fn sum_parts(parts: &[(f64, f64)]) -> LossBreakdown {
    let (rgb, constraint) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    LossBreakdown { rgb, constraint, total: rgb + constraint }
}

/// Loss of `batch` and its gradient, left in `ws.grads()`.
pub fn loss_and_grad<T: Real>(
    field: &RadianceField<T>,
    batch: &RayBatch,
    constraint: Option<&Constraint<'_, T>>,
    ws: &mut TrainWorkspace<T>,
) -> Result<LossBreakdown> {
    check_batch(batch, constraint)?;
    let inv = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, f64)> = ws
        .chunk_grads
        .par_iter_mut()
        .zip(ws.scratch.par_iter_mut())
        .enumerate()
        .map(|(c, (grads, s))| {
            grads.fill_zero();
            chunk_bounds(batch.len(), c).fold((0.0, 0.0), |acc, r| {
                let inside = batch.inside.as_ref().map(|m| m[r].as_slice());
                let (a, b) = ray_pass(field, &batch.rays[r], batch.targets[r], inside, constraint, inv, s, Some(grads));
                (acc.0 + a, acc.1 + b)
            })
        })
        .collect();
    ws.grads.fill_zero();
    for g in &ws.chunk_grads {
        ws.grads.add_assign(g);
    }
    Ok(sum_parts(&parts))
}

/// One optimizer update on `batch`. `step` labels divergence errors.
pub fn train_step<T: Real>(
    field: &mut RadianceField<T>,
    batch: &RayBatch,
    constraint: Option<&Constraint<'_, T>>,
    optimizer: &mut Adam<T>,
    ws: &mut TrainWorkspace<T>,
    step: u64,
) -> Result<LossBreakdown> {
    let loss = loss_and_grad(field, batch, constraint, ws)?;
    if !loss.total.is_finite() || !ws.grads.is_finite() {
        return Err(Error::TrainingDiverged { step, loss: loss.total });
    }
    optimizer.update(field, &ws.grads);
    Ok(loss)
}

/// Draws random pixels, with replacement, from a set of posed images.
pub struct PixelSampler<'a> {
    views: Vec<(&'a CameraModel, &'a RgbImage)>,
    offsets: Vec<usize>,
}

impl<'a> PixelSampler<'a> {
    pub fn new(views: Vec<(&'a CameraModel, &'a RgbImage)>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::invalid("no training views"));
        }
        let mut offsets = vec![0];
        for (cam, img) in &views {
            if (cam.width, cam.height) != (img.width, img.height) {
                return Err(Error::invalid("image and camera dimensions differ"));
            }
            offsets.push(offsets.last().unwrap() + cam.pixel_count());
        }
        Ok(Self { views, offsets })
    }

    pub fn total_pixels(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Batch for training step `step`, reproducible from `(seed, step)`.
    pub fn batch(&self, n_rays: usize, sampling: &SamplingConfig, seed: u64, step: u64) -> Result<RayBatch> {
        let step_seed = pixel_seed(seed, step);
        let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
        let total = self.total_pixels();
        let mut rays = Vec::with_capacity(n_rays);
        let mut targets = Vec::with_capacity(n_rays);
        for r in 0..n_rays {
            let flat = rng.random_range(0..total);
            let view = self.offsets.partition_point(|&o| o <= flat) - 1;
            let local = flat - self.offsets[view];
            let (cam, img) = self.views[view];
            let (u, v) = ((local % cam.width as usize) as u32, (local / cam.width as usize) as u32);
            let jitter = pixel_seed(step_seed, r as u64);
            rays.push(sample_ray(cam, (u, v), sampling.n_samples, sampling.near, sampling.far, Some(jitter))?);
            targets.push(img.get(u, v).map(|c| c as f64));
        }
        RayBatch::new(rays, targets)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub steps: u64,
    pub batch_rays: usize,
    pub sampling: SamplingConfig,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_rays: 512,
            sampling: SamplingConfig::default(),
            optimizer: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Trains `field` to reproduce posed images with the RGB loss alone.
/// Returns the loss of every step.
pub fn fit<T: Real>(
    field: &mut RadianceField<T>,
    views: Vec<(&CameraModel, &RgbImage)>,
    config: &FitConfig,
    mut on_step: impl FnMut(u64, &LossBreakdown),
) -> Result<Vec<f64>> {
    config.sampling.validate()?;
    config.optimizer.validate()?;
    let sampler = PixelSampler::new(views)?;
    let mut adam = Adam::new(config.optimizer, field);
    let mut ws = TrainWorkspace::new(field);
    let mut history = Vec::with_capacity(config.steps as usize);
    for step in 0..config.steps {
        let batch = sampler.batch(config.batch_rays, &config.sampling, config.seed, step)?;
        let loss = train_step(field, &batch, None, &mut adam, &mut ws, step)?;
        on_step(step, &loss);
        history.push(loss.rgb);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;

    fn tiny_field() -> RadianceField<f64> {
        let cfg = FieldConfig {
            levels: 2,
            base_resolution: 2,
            hidden_width: 4,
            log2_table_size: 8,
            ..FieldConfig::default()
        };
        RadianceField::new(cfg, 5).unwrap()
    }

    fn camera() -> CameraModel {
        CameraModel::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::y(), 8, 8, 40.0)
    }

    fn sampling() -> SamplingConfig {
        SamplingConfig { n_samples: 16, near: 1.5, far: 4.5, early_stop: 0.0 }
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(RayBatch::new(vec![], vec![]).is_err());
    }

    #[test]
    fn zero_learning_rate_reports_loss_without_moving() {
        let mut field = tiny_field();
        let before = field.clone();
        let cam = camera();
        let img = RgbImage::filled(8, 8, [0.8, 0.1, 0.3]);
        let sampler = PixelSampler::new(vec![(&cam, &img)]).unwrap();
        let batch = sampler.batch(32, &sampling(), 1, 0).unwrap();
        let cfg = AdamConfig { lr_grid: 0.0, lr_heads: 0.0, ..AdamConfig::default() };
        let mut adam = Adam::new(cfg, &field);
        let mut ws = TrainWorkspace::new(&field);
        let loss = train_step(&mut field, &batch, None, &mut adam, &mut ws, 0).unwrap();
        assert!(loss.rgb > 0.0);
        assert_eq!(field, before);
    }

    #[test]
    fn gradients_are_deterministic() {
        let field = tiny_field();
        let cam = camera();
        let img = RgbImage::filled(8, 8, [0.2, 0.4, 0.6]);
        let sampler = PixelSampler::new(vec![(&cam, &img)]).unwrap();
        let batch = sampler.batch(40, &sampling(), 3, 2).unwrap();
        let mut ws = TrainWorkspace::new(&field);
        loss_and_grad(&field, &batch, None, &mut ws).unwrap();
        let first = ws.grads().clone();
        loss_and_grad(&field, &batch, None, &mut ws).unwrap();
        assert_eq!(&first, ws.grads());
        assert_eq!(
            evaluate_loss(&field, &batch, None).unwrap(),
            loss_and_grad(&field, &batch, None, &mut ws).unwrap()
        );
    }

    #[test]
    fn constrained_loss_requires_membership() {
        let field = tiny_field();
        let frozen = field.clone();
        let cam = camera();
        let img = RgbImage::new(8, 8);
        let sampler = PixelSampler::new(vec![(&cam, &img)]).unwrap();
        let batch = sampler.batch(4, &sampling(), 0, 0).unwrap();
        let c = Constraint { frozen: &frozen, weights: EditLossWeights::default() };
        assert!(evaluate_loss(&field, &batch, Some(&c)).is_err());
    }

    #[test]
    fn identical_frozen_field_adds_nothing() {
        let field = tiny_field();
        let frozen = field.clone();
        let cam = camera();
        let img = RgbImage::new(8, 8);
        let sampler = PixelSampler::new(vec![(&cam, &img)]).unwrap();
        let mut batch = sampler.batch(16, &sampling(), 0, 0).unwrap();
        batch.mark_membership(|p| p.x > 0.0);
        let c = Constraint { frozen: &frozen, weights: EditLossWeights::default() };
        let loss = evaluate_loss(&field, &batch, Some(&c)).unwrap();
        assert_eq!(loss.constraint, 0.0);
    }
}
