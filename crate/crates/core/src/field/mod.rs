//! Learnable density and color field over a bounded box.
//!
//! A point is encoded by trilinear interpolation in a stack of feature
//! grids (features concatenated across levels), then decoded by two small
//! fully-connected heads: softplus density and sigmoid color. Color takes
//! no view direction.

mod encoding;
pub mod optim;
pub mod render;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Ray, Vec3};
use crate::error::{Error, Result};
use crate::real::Real;

pub use encoding::GridLevel;

/// Axis-aligned box in world units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|a| !(min[a] < max[a])) {
            return Err(Error::invalid(format!("degenerate box {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn cube(half: f64) -> Self {
        Self { min: [-half; 3], max: [half; 3] }
    }

    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Position of `p` relative to the box, each coordinate in `[0, 1]` when inside.
    #[inline]
    pub fn normalize(&self, p: &Vec3) -> [f64; 3] {
        [0, 1, 2].map(|a| (p[a] - self.min[a]) / (self.max[a] - self.min[a]))
    }

    pub fn diagonal(&self) -> f64 {
        (0..3).map(|a| (self.max[a] - self.min[a]).powi(2)).sum::<f64>().sqrt()
    }

    /// Parametric entry and exit distances of a ray, if it hits the box.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for a in 0..3 {
            let inv = 1.0 / ray.dir[a];
            let mut ta = (self.min[a] - ray.origin[a]) * inv;
            let mut tb = (self.max[a] - ray.origin[a]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t1 >= t0.max(0.0)).then_some((t0.max(0.0), t1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub bbox: Aabb,
    pub levels: usize,
    pub base_resolution: u32,
    /// Resolution multiplier between consecutive levels.
    pub growth: f64,
    pub features_per_level: usize,
    pub log2_table_size: u32,
    pub hidden_width: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            bbox: Aabb::cube(1.0),
            levels: 4,
            base_resolution: 8,
            growth: 2.0,
            features_per_level: 2,
            log2_table_size: 16,
            hidden_width: 16,
        }
    }
}

impl FieldConfig {
    pub fn grid_levels(&self) -> Vec<GridLevel> {
        (0..self.levels)
            .map(|l| {
                let res = (self.base_resolution as f64 * self.growth.powi(l as i32)).floor() as u32;
                GridLevel::new(res.max(1), 1usize << self.log2_table_size)
            })
            .collect()
    }

    pub fn feature_dim(&self) -> usize {
        self.levels * self.features_per_level
    }

    pub fn validate(&self) -> Result<()> {
        Aabb::new(self.bbox.min, self.bbox.max)?;
        if self.levels == 0 || self.features_per_level == 0 || self.hidden_width == 0 {
            return Err(Error::invalid("levels, features_per_level and hidden_width must be >= 1"));
        }
        if self.base_resolution == 0 || !(self.growth >= 1.0) || self.log2_table_size > 28 {
            return Err(Error::invalid("invalid grid resolution settings"));
        }
        Ok(())
    }
}

/// Named parameter tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape, data: vec![T::zero(); n] }
    }
}

/// Tensor indices of the head parameters, after the grid levels.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Layout {
    dw1: usize,
    db1: usize,
    dw2: usize,
    db2: usize,
    cw1: usize,
    cb1: usize,
    cw2: usize,
    cb2: usize,
}

impl Layout {
    fn new(levels: usize) -> Self {
        let b = levels;
        Self {
            dw1: b,
            db1: b + 1,
            dw2: b + 2,
            db2: b + 3,
            cw1: b + 4,
            cb1: b + 5,
            cw2: b + 6,
            cb2: b + 7,
        }
    }
}

/// Density and color at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub density: f64,
    pub color: [f64; 3],
}

impl FieldSample {
    pub const EMPTY: FieldSample = FieldSample { density: 0.0, color: [0.0; 3] };
}

/// Anything that can report a density at a world point.
///
/// `Scratch` is per-thread working memory, created once per worker.
pub trait DensitySource: Sync {
    type Scratch: Send;

    fn scratch(&self) -> Self::Scratch;

    fn density_at(&self, p: &Vec3, scratch: &mut Self::Scratch) -> f64;
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadianceField<T: Real = f32> {
    config: FieldConfig,
    levels: Vec<GridLevel>,
    layout: Layout,
    params: Vec<Tensor<T>>,
}

/// Gradient buffers aligned with [`RadianceField::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Grads<T> {
    pub fn zeros_like(field: &RadianceField<T>) -> Self {
        Self {
            tensors: field.params.iter().map(|t| vec![T::zero(); t.data.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn dot(&self, other: &Grads<T>) -> f64 {
        self.tensors
            .iter()
            .zip(&other.tensors)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| x.f64() * y.f64())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|g| g.is_finite())
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Clone, Debug)]
pub struct SampleTrace<T> {
    inside: bool,
    corner_index: Vec<u32>,
    corner_weight: Vec<T>,
    feats: Vec<T>,
    density_pre: Vec<T>,
    color_pre: Vec<T>,
    density_raw: T,
    color: [T; 3],
    dfeats: Vec<T>,
}

impl<T: Real> SampleTrace<T> {
    pub fn new(config: &FieldConfig) -> Self {
        Self {
            inside: false,
            corner_index: vec![0; config.levels * 8],
            corner_weight: vec![T::zero(); config.levels * 8],
            feats: vec![T::zero(); config.feature_dim()],
            density_pre: vec![T::zero(); config.hidden_width],
            color_pre: vec![T::zero(); config.hidden_width],
            density_raw: T::zero(),
            color: [T::zero(); 3],
            dfeats: vec![T::zero(); config.feature_dim()],
        }
    }
}

#[inline]
fn softplus<T: Real>(x: T) -> T {
    if x > T::of(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

impl<T: Real> RadianceField<T> {
    /// Randomly initialized field: grid features uniform in ±1e-4, heads He-uniform.
    pub fn new(config: FieldConfig, seed: u64) -> Result<Self> {
        let mut field = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = field.config.levels;
        let d = field.config.feature_dim() as f64;
        let h = field.config.hidden_width as f64;
        let l = field.layout;
        for (i, t) in field.params.iter_mut().enumerate() {
            let bound = if i < levels {
                1e-4
            } else if i == l.dw1 || i == l.cw1 {
                (6.0 / d).sqrt()
            } else if i == l.dw2 || i == l.cw2 {
                (1.0 / h).sqrt()
            } else {
                continue;
            };
            for v in &mut t.data {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
        Ok(field)
    }

    /// Field with every parameter zero.
    pub fn zeroed(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        let levels = config.grid_levels();
        let f = config.features_per_level;
        let d = config.feature_dim();
        let h = config.hidden_width;
        let mut params: Vec<Tensor<T>> = levels
            .iter()
            .enumerate()
            .map(|(i, lvl)| Tensor::zeros(format!("grid.{i}"), vec![lvl.entries, f]))
            .collect();
        params.extend([
            Tensor::zeros("density.w1", vec![h, d]),
            Tensor::zeros("density.b1", vec![h]),
            Tensor::zeros("density.w2", vec![1, h]),
            Tensor::zeros("density.b2", vec![1]),
            Tensor::zeros("color.w1", vec![h, d]),
            Tensor::zeros("color.b1", vec![h]),
            Tensor::zeros("color.w2", vec![3, h]),
            Tensor::zeros("color.b2", vec![3]),
        ]);
        Ok(Self {
            layout: Layout::new(config.levels),
            levels,
            config,
            params,
        })
    }

    /// Rebuilds a field from named tensors, checking names and shapes.
    pub fn from_tensors(config: FieldConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut field = Self::zeroed(config)?;
        if tensors.len() != field.params.len() {
            return Err(Error::invalid(format!(
                "expected {} field tensors, got {}",
                field.params.len(),
                tensors.len()
            )));
        }
        for (slot, t) in field.params.iter_mut().zip(tensors) {
            if slot.name != t.name || slot.shape != t.shape || t.data.len() != slot.data.len() {
                return Err(Error::invalid(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    t.name, t.shape, slot.name, slot.shape
                )));
            }
            *slot = t;
        }
        Ok(field)
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn bbox(&self) -> &Aabb {
        &self.config.bbox
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|t| t.data.len()).sum()
    }

    /// Whether tensor `i` holds grid features (as opposed to head weights).
    pub fn is_grid_tensor(&self, i: usize) -> bool {
        i < self.config.levels
    }

    /// Sets the output-layer biases so that, with zero output weights, the
    /// field has the given raw density and color pre-activations everywhere.
    pub fn set_output_bias(&mut self, density_raw: f64, color_raw: [f64; 3]) {
        let l = self.layout;
        self.params[l.db2].data[0] = T::of(density_raw);
        for k in 0..3 {
            self.params[l.cb2].data[k] = T::of(color_raw[k]);
        }
    }

    /// Zeroes the output layers of both heads.
    pub fn zero_output_layers(&mut self) {
        let l = self.layout;
        for i in [l.dw2, l.db2, l.cw2, l.cb2] {
            self.params[i].data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Density and color at each point. Points outside the box are empty space.
    pub fn query(&self, points: &[Vec3]) -> Result<Vec<FieldSample>> {
        let mut trace = SampleTrace::new(&self.config);
        points
            .iter()
            .map(|p| {
                if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                    return Err(Error::invalid(format!("non-finite query point {p:?}")));
                }
                Ok(self.sample(p, &mut trace))
            })
            .collect()
    }

    /// Single evaluation, recording intermediates into `trace`.
    pub fn sample(&self, p: &Vec3, trace: &mut SampleTrace<T>) -> FieldSample {
        let (sigma, color) = self.forward(p, trace);
        if !trace.inside {
            return FieldSample::EMPTY;
        }
        FieldSample {
            density: sigma.f64(),
            color: color.map(|c| c.f64()),
        }
    }

    fn encode(&self, p: &Vec3, trace: &mut SampleTrace<T>) -> bool {
        if !self.config.bbox.contains(p) {
            trace.inside = false;
            return false;
        }
        trace.inside = true;
        let u = self.config.bbox.normalize(p);
        let f = self.config.features_per_level;
        let mut w = [0f64; 8];
        for (l, level) in self.levels.iter().enumerate() {
            let idx = &mut trace.corner_index[l * 8..l * 8 + 8];
            level.corners(u, idx, &mut w);
            let table = &self.params[l].data;
            let feats = &mut trace.feats[l * f..l * f + f];
            feats.iter_mut().for_each(|v| *v = T::zero());
            for c in 0..8 {
                let wc = T::of(w[c]);
                trace.corner_weight[l * 8 + c] = wc;
                let row = idx[c] as usize * f;
                for k in 0..f {
                    feats[k] += wc * table[row + k];
                }
            }
        }
        true
    }

    fn hidden(&self, w1: usize, b1: usize, feats: &[T], pre: &mut [T]) {
        let d = feats.len();
        let w = &self.params[w1].data;
        let b = &self.params[b1].data;
        for (j, out) in pre.iter_mut().enumerate() {
            let row = &w[j * d..j * d + d];
            let mut acc = b[j];
            for k in 0..d {
                acc += row[k] * feats[k];
            }
            *out = acc;
        }
    }

    fn forward(&self, p: &Vec3, trace: &mut SampleTrace<T>) -> (T, [T; 3]) {
        if !self.encode(p, trace) {
            return (T::zero(), [T::zero(); 3]);
        }
        let l = self.layout;
        let h = self.config.hidden_width;
        let SampleTrace { feats, density_pre, color_pre, .. } = trace;
        self.hidden(l.dw1, l.db1, feats, density_pre);
        self.hidden(l.cw1, l.cb1, feats, color_pre);

        let dw2 = &self.params[l.dw2].data;
        let mut raw = self.params[l.db2].data[0];
        for j in 0..h {
            raw += dw2[j] * relu(density_pre[j]);
        }
        trace.density_raw = raw;

        let cw2 = &self.params[l.cw2].data;
        let cb2 = &self.params[l.cb2].data;
        let mut color = [T::zero(); 3];
        for k in 0..3 {
            let mut acc = cb2[k];
            for j in 0..h {
                acc += cw2[k * h + j] * relu(color_pre[j]);
            }
            color[k] = sigmoid(acc);
        }
        trace.color = color;
        (softplus(raw), color)
    }

    /// Accumulates parameter gradients given the loss gradient with respect
    /// to the density and color produced by the traced forward pass.
    pub fn backward(&self, trace: &mut SampleTrace<T>, d_density: T, d_color: [T; 3], grads: &mut Grads<T>) {
        if !trace.inside {
            return;
        }
        let l = self.layout;
        let h = self.config.hidden_width;
        let d = self.config.feature_dim();
        let d_raw = d_density * sigmoid(trace.density_raw);
        let d_craw: [T; 3] = [0, 1, 2].map(|k| {
            let c = trace.color[k];
            d_color[k] * c * (T::one() - c)
        });
        trace.dfeats.iter_mut().for_each(|v| *v = T::zero());

        // Density head.
        grads.tensors[l.db2][0] += d_raw;
        {
            let w2 = &self.params[l.dw2].data;
            let w1 = &self.params[l.dw1].data;
            for j in 0..h {
                let pre = trace.density_pre[j];
                grads.tensors[l.dw2][j] += d_raw * relu(pre);
                if pre > T::zero() {
                    let dpre = w2[j] * d_raw;
                    grads.tensors[l.db1][j] += dpre;
                    let gw = &mut grads.tensors[l.dw1][j * d..j * d + d];
                    for k in 0..d {
                        gw[k] += dpre * trace.feats[k];
                        trace.dfeats[k] += dpre * w1[j * d + k];
                    }
                }
            }
        }

        // Color head.
        for k in 0..3 {
            grads.tensors[l.cb2][k] += d_craw[k];
        }
        {
            let w2 = &self.params[l.cw2].data;
            let w1 = &self.params[l.cw1].data;
            for j in 0..h {
                let pre = trace.color_pre[j];
                let act = relu(pre);
                let mut dact = T::zero();
                for k in 0..3 {
                    grads.tensors[l.cw2][k * h + j] += d_craw[k] * act;
                    dact += w2[k * h + j] * d_craw[k];
                }
                if pre > T::zero() {
                    grads.tensors[l.cb1][j] += dact;
                    let gw = &mut grads.tensors[l.cw1][j * d..j * d + d];
                    for k in 0..d {
                        gw[k] += dact * trace.feats[k];
                        trace.dfeats[k] += dact * w1[j * d + k];
                    }
                }
            }
        }

        // Grid features.
        let f = self.config.features_per_level;
        for lvl in 0..self.config.levels {
            let g = &mut grads.tensors[lvl];
            let df = &trace.dfeats[lvl * f..lvl * f + f];
            for c in 0..8 {
                let w = trace.corner_weight[lvl * 8 + c];
                let row = trace.corner_index[lvl * 8 + c] as usize * f;
                for k in 0..f {
                    g[row + k] += w * df[k];
                }
            }
        }
    }

    /// Density only; skips the color head.
    pub fn density(&self, p: &Vec3, trace: &mut SampleTrace<T>) -> f64 {
        if !self.encode(p, trace) {
            return 0.0;
        }
        let l = self.layout;
        let SampleTrace { feats, density_pre, .. } = trace;
        self.hidden(l.dw1, l.db1, feats, density_pre);
        let dw2 = &self.params[l.dw2].data;
        let mut raw = self.params[l.db2].data[0];
        for (w, pre) in dw2.iter().zip(density_pre.iter()) {
            raw += *w * relu(*pre);
        }
        softplus(raw).f64()
    }

    /// Copy with every parameter converted to another precision.
    pub fn cast<U: Real>(&self) -> RadianceField<U> {
        RadianceField {
            config: self.config.clone(),
            levels: self.levels.clone(),
            layout: self.layout,
            params: self
                .params
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::of(v.f64())).collect(),
                })
                .collect(),
        }
    }

    /// Adds `scale * direction` to every parameter.
    pub fn perturb(&mut self, direction: &Grads<T>, scale: f64) {
        for (t, d) in self.params.iter_mut().zip(&direction.tensors) {
            for (p, v) in t.data.iter_mut().zip(d) {
                *p = T::of(p.f64() + scale * v.f64());
            }
        }
    }
}

impl<T: Real> DensitySource for RadianceField<T> {
    type Scratch = SampleTrace<T>;

    fn scratch(&self) -> SampleTrace<T> {
        SampleTrace::new(&self.config)
    }

    fn density_at(&self, p: &Vec3, scratch: &mut SampleTrace<T>) -> f64 {
        self.density(p, scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FieldConfig {
        FieldConfig {
            levels: 2,
            base_resolution: 2,
            hidden_width: 4,
            log2_table_size: 6,
            ..FieldConfig::default()
        }
    }

    #[test]
    fn zero_heads_give_activation_at_zero() {
        let mut field = RadianceField::<f64>::new(small(), 3).unwrap();
        field.zero_output_layers();
        let out = field.query(&[Vec3::new(0.2, -0.4, 0.9)]).unwrap()[0];
        assert_eq!(out.color, [0.5; 3]);
        assert!((out.density - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn queries_are_deterministic() {
        let field = RadianceField::<f32>::new(small(), 9).unwrap();
        let p = [Vec3::new(0.13, 0.5, -0.77)];
        assert_eq!(field.query(&p).unwrap(), field.query(&p).unwrap());
    }

    #[test]
    fn outside_box_is_empty() {
        let field = RadianceField::<f32>::new(small(), 1).unwrap();
        let corner = Vec3::new(1.0, 1.0, 1.0);
        let diag = Vec3::new(2.0, 2.0, 2.0);
        let out = field.query(&[corner + diag]).unwrap()[0];
        assert_eq!(out, FieldSample::EMPTY);
    }

    #[test]
    fn non_finite_points_are_rejected() {
        let field = RadianceField::<f32>::new(small(), 1).unwrap();
        assert!(matches!(
            field.query(&[Vec3::new(f64::NAN, 0.0, 0.0)]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn outputs_stay_in_range_for_extreme_biases() {
        let mut field = RadianceField::<f32>::new(small(), 1).unwrap();
        field.zero_output_layers();
        field.set_output_bias(500.0, [-500.0, 500.0, 0.0]);
        let out = field.query(&[Vec3::zeros()]).unwrap()[0];
        assert!(out.density > 0.0 && out.density.is_finite());
        assert!(out.color.iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn from_tensors_rejects_shape_mismatch() {
        let field = RadianceField::<f32>::new(small(), 1).unwrap();
        let mut tensors = field.params().to_vec();
        tensors[0].shape = vec![1, 1];
        assert!(RadianceField::from_tensors(small(), tensors).is_err());
        assert!(RadianceField::from_tensors(small(), field.params().to_vec()).is_ok());
    }
}
