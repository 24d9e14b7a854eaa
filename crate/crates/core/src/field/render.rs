//! Stratified ray sampling and volume compositing.
//!
//! All compositing runs in `f64` regardless of the field's parameter
//! precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FieldSample, RadianceField, SampleTrace};
use crate::camera::{CameraModel, Ray, Vec3};
use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_samples: usize,
    pub near: f64,
    pub far: f64,
    /// Renders stop marching once transmittance falls below this. Training
    /// always marches the whole ray. 0 disables early termination.
    #[serde(default)]
    pub early_stop: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_samples: 192,
            near: 0.5,
            far: 6.0,
            early_stop: 1e-4,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be >= 1"));
        }
        if !(self.near < self.far) || !self.near.is_finite() || !self.far.is_finite() {
            return Err(Error::invalid(format!(
                "near ({}) must be below far ({})",
                self.near, self.far
            )));
        }
        if !(0.0..1.0).contains(&self.early_stop) {
            return Err(Error::invalid("early_stop must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Sample positions along one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub ray: Ray,
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.t.iter().map(|&t| self.ray.at(t))
    }
}

/// Splits `[near, far]` into `n` equal bins. Without jitter each sample sits
/// at its bin midpoint; with jitter it is uniform within the bin. Every
/// spacing equals the bin width, so spacings always sum to `far - near`.
pub fn stratify(ray: Ray, n: usize, near: f64, far: f64, jitter_seed: Option<u64>) -> Result<RaySamples> {
    if n == 0 {
        return Err(Error::invalid("n_samples must be >= 1"));
    }
    if !(near < far) {
        return Err(Error::invalid(format!("near ({near}) must be below far ({far})")));
    }
    let width = (far - near) / n as f64;
    let mut rng = jitter_seed.map(ChaCha8Rng::seed_from_u64);
    let t = (0..n)
        .map(|i| {
            let offset = match rng.as_mut() {
                Some(r) => r.random::<f64>(),
                None => 0.5,
            };
            near + (i as f64 + offset) * width
        })
        .collect();
    Ok(RaySamples {
        ray,
        t,
        delta: vec![width; n],
    })
}

/// Samples the ray through pixel `(u, v)`.
pub fn sample_ray(
    camera: &CameraModel,
    pixel: (u32, u32),
    n_samples: usize,
    near: f64,
    far: f64,
    jitter_seed: Option<u64>,
) -> Result<RaySamples> {
    stratify(camera.ray(pixel.0, pixel.1), n_samples, near, far, jitter_seed)
}

/// Result of alpha-compositing one ray.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Composite {
    pub color: [f64; 3],
    pub weights: Vec<f64>,
    /// Transmittance left after the last sample.
    pub transmittance: f64,
    /// Transmittance after each sample, `T_{i+1}`.
    trans_after: Vec<f64>,
}

/// `Psi(x) = 1 - exp(-x)`.
#[inline]
pub fn opacity(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// Composites densities and colors along one ray.
pub fn composite(sigmas: &[f64], colors: &[[f64; 3]], deltas: &[f64]) -> Result<Composite> {
    if sigmas.len() != colors.len() || sigmas.len() != deltas.len() {
        return Err(Error::invalid("composite inputs must have equal lengths"));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::invalid(format!("negative or NaN density {s}")));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::invalid(format!("non-positive sample spacing {d}")));
    }
    let mut out = Composite::default();
    composite_into(sigmas, colors, deltas, &mut out);
    Ok(out)
}

pub(crate) fn composite_into(sigmas: &[f64], colors: &[[f64; 3]], deltas: &[f64], out: &mut Composite) {
    let n = sigmas.len();
    out.weights.clear();
    out.trans_after.clear();
    out.weights.reserve(n);
    out.trans_after.reserve(n);
    out.color = [0.0; 3];
    let mut trans = 1.0;
    for i in 0..n {
        let x = sigmas[i] * deltas[i];
        let w = trans * opacity(x);
        trans *= (-x).exp();
        for k in 0..3 {
            out.color[k] += w * colors[i][k];
        }
        out.weights.push(w);
        out.trans_after.push(trans);
    }
    out.transmittance = trans;
}

/// Gradient of a loss with respect to each sample's density and color,
/// given the loss gradients with respect to the composite color and to the
/// weights directly.
pub(crate) fn composite_backward(
    comp: &Composite,
    colors: &[[f64; 3]],
    deltas: &[f64],
    d_color: [f64; 3],
    d_weights: Option<&[f64]>,
    d_sigma: &mut Vec<f64>,
    d_colors: &mut Vec<[f64; 3]>,
) {
    let n = comp.weights.len();
    d_sigma.clear();
    d_sigma.resize(n, 0.0);
    d_colors.clear();
    d_colors.extend(comp.weights.iter().map(|w| d_color.map(|g| g * w)));
    // dw_i/dsigma_k = delta_k T_{k+1} for i = k, -delta_k w_i for i > k.
    let mut suffix = 0.0;
    for k in (0..n).rev() {
        let mut g = d_color[0] * colors[k][0] + d_color[1] * colors[k][1] + d_color[2] * colors[k][2];
        if let Some(dw) = d_weights {
            g += dw[k];
        }
        d_sigma[k] = deltas[k] * (g * comp.trans_after[k] - suffix);
        suffix += g * comp.weights[k];
    }
}

/// Something that can be volume rendered.
pub trait RadianceSource: Sync {
    type Scratch: Send;

    fn scratch(&self) -> Self::Scratch;

    fn eval(&self, p: &Vec3, scratch: &mut Self::Scratch) -> FieldSample;
}

impl<T: Real> RadianceSource for RadianceField<T> {
    type Scratch = SampleTrace<T>;

    fn scratch(&self) -> SampleTrace<T> {
        SampleTrace::new(self.config())
    }

    fn eval(&self, p: &Vec3, scratch: &mut SampleTrace<T>) -> FieldSample {
        self.sample(p, scratch)
    }
}

/// Marches one ray front to back.
pub fn march<S: RadianceSource>(src: &S, samples: &RaySamples, early_stop: f64, scratch: &mut S::Scratch) -> [f64; 3] {
    let mut color = [0.0; 3];
    let mut trans = 1.0;
    for (i, p) in samples.points().enumerate() {
        let s = src.eval(&p, scratch);
        let x = s.density * samples.delta[i];
        let w = trans * opacity(x);
        for k in 0..3 {
            color[k] += w * s.color[k];
        }
        trans *= (-x).exp();
        if trans < early_stop {
            break;
        }
    }
    color
}

/// Jitter seed for pixel `index` of a render seeded with `seed`.
pub(crate) fn pixel_seed(seed: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix(index))
}

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Renders every pixel of `camera` from an arbitrary radiance source.
pub fn render_source<S: RadianceSource>(
    src: &S,
    camera: &CameraModel,
    sampling: &SamplingConfig,
    jitter_seed: Option<u64>,
) -> Result<RgbImage> {
    sampling.validate()?;
    let w = camera.width;
    let rows: Vec<Vec<[f32; 3]>> = (0..camera.height)
        .into_par_iter()
        .map_init(
            || src.scratch(),
            |scratch, v| {
                (0..w)
                    .map(|u| {
                        let seed = jitter_seed.map(|s| pixel_seed(s, v as u64 * w as u64 + u as u64));
                        let samples = sample_ray(camera, (u, v), sampling.n_samples, sampling.near, sampling.far, seed)
                            .expect("validated sampling");
                        march(src, &samples, sampling.early_stop, scratch).map(|c| c as f32)
                    })
                    .collect()
            },
        )
        .collect();
    Ok(RgbImage {
        width: w,
        height: camera.height,
        data: rows.into_iter().flatten().collect(),
    })
}

/// Renders the field from `camera`.
pub fn render_view<T: Real>(
    field: &RadianceField<T>,
    camera: &CameraModel,
    sampling: &SamplingConfig,
    jitter_seed: Option<u64>,
) -> Result<RgbImage> {
    render_source(field, camera, sampling, jitter_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn midpoints_without_jitter() {
        let ray = Ray { origin: Vec3::zeros(), dir: Vec3::z() };
        let s = stratify(ray, 2, 0.0, 1.0, None).unwrap();
        assert_eq!(s.t, vec![0.25, 0.75]);
        assert_eq!(s.delta, vec![0.5, 0.5]);
    }

    #[test]
    fn jitter_stays_in_bins_and_repeats() {
        let ray = Ray { origin: Vec3::zeros(), dir: Vec3::z() };
        let a = stratify(ray, 16, 1.0, 3.0, Some(7)).unwrap();
        let b = stratify(ray, 16, 1.0, 3.0, Some(7)).unwrap();
        assert_eq!(a, b);
        for (i, t) in a.t.iter().enumerate() {
            let lo = 1.0 + i as f64 * 0.125;
            assert!(*t >= lo && *t < lo + 0.125);
        }
        assert_ne!(a.t, stratify(ray, 16, 1.0, 3.0, Some(8)).unwrap().t);
    }

    #[test]
    fn rejects_inverted_range() {
        let ray = Ray { origin: Vec3::zeros(), dir: Vec3::z() };
        assert!(stratify(ray, 4, 2.0, 2.0, None).is_err());
        assert!(stratify(ray, 0, 0.0, 1.0, None).is_err());
    }

    #[test]
    fn single_sample_half_opacity() {
        let c = composite(&[LN_2], &[[1.0; 3]], &[1.0]).unwrap();
        assert!((c.weights[0] - 0.5).abs() < 1e-15);
        assert!(c.color.iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn two_samples_telescoping() {
        let c = composite(&[LN_2, LN_2], &[[1.0; 3]; 2], &[1.0, 1.0]).unwrap();
        assert!((c.weights[0] - 0.5).abs() < 1e-12);
        assert!((c.weights[1] - 0.25).abs() < 1e-12);
        assert!((c.transmittance - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_space_is_black() {
        let c = composite(&[0.0; 5], &[[1.0; 3]; 5], &[0.2; 5]).unwrap();
        assert_eq!(c.color, [0.0; 3]);
        assert_eq!(c.weights.iter().sum::<f64>(), 0.0);
        assert_eq!(c.transmittance, 1.0);
    }

    #[test]
    fn rejects_bad_preconditions() {
        assert!(composite(&[-1.0], &[[0.0; 3]], &[1.0]).is_err());
        assert!(composite(&[1.0], &[[0.0; 3]], &[0.0]).is_err());
        assert!(composite(&[1.0, 2.0], &[[0.0; 3]], &[1.0]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let sig = [0.3, 2.0, 0.7, 5.0];
        let col = [[0.1, 0.5, 0.9], [0.8, 0.2, 0.4], [0.3, 0.3, 0.3], [0.9, 0.0, 0.6]];
        let del = [0.2, 0.1, 0.3, 0.25];
        let dw = [0.4, -0.3, 0.9, 0.2];
        let dc = [1.0, -2.0, 0.5];
        let loss = |s: &[f64]| {
            let c = composite(s, &col, &del).unwrap();
            dc.iter().zip(c.color).map(|(a, b)| a * b).sum::<f64>()
                + dw.iter().zip(&c.weights).map(|(a, b)| a * b).sum::<f64>()
        };
        let comp = composite(&sig, &col, &del).unwrap();
        let (mut ds, mut dcol) = (Vec::new(), Vec::new());
        composite_backward(&comp, &col, &del, dc, Some(&dw), &mut ds, &mut dcol);
        for k in 0..4 {
            let mut p = sig;
            let mut m = sig;
            p[k] += 1e-6;
            m[k] -= 1e-6;
            let fd = (loss(&p) - loss(&m)) / 2e-6;
            assert!((fd - ds[k]).abs() < 1e-8, "sample {k}: fd {fd} vs {}", ds[k]);
        }
        assert_eq!(dcol[1], dc.map(|g| g * comp.weights[1]));
    }

    proptest! {
        #[test]
        fn spacings_partition_range(n in 1usize..300, near in 0.0f64..5.0, len in 0.01f64..10.0) {
            let ray = Ray { origin: Vec3::zeros(), dir: Vec3::z() };
            let s = stratify(ray, n, near, near + len, None).unwrap();
            prop_assert!((s.delta.iter().sum::<f64>() - len).abs() < 1e-9 * len.max(1.0));
        }

        #[test]
        fn weights_normalize(sig in prop::collection::vec(0.0f64..50.0, 1..64), delta in 0.001f64..0.5) {
            let n = sig.len();
            let c = composite(&sig, &vec![[0.5; 3]; n], &vec![delta; n]).unwrap();
            prop_assert!((c.weights.iter().sum::<f64>() + c.transmittance - 1.0).abs() < 1e-6);
            prop_assert!(c.weights.iter().all(|w| (0.0..=1.0).contains(w)));
        }

        #[test]
        fn denser_sample_occludes(sig in prop::collection::vec(0.0f64..5.0, 2..16), k in 0usize..16, bump in 0.01f64..10.0) {
            let n = sig.len();
            let k = k % n;
            let col = vec![[1.0; 3]; n];
            let del = vec![0.1; n];
            let before = composite(&sig, &col, &del).unwrap();
            let mut more = sig.clone();
            more[k] += bump;
            let after = composite(&more, &col, &del).unwrap();
            for j in 0..k {
                prop_assert_eq!(before.weights[j], after.weights[j]);
            }
            for j in k + 1..n {
                prop_assert!(after.weights[j] <= before.weights[j] + 1e-15);
            }
        }
    }
}
