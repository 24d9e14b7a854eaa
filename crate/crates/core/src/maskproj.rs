//! Inpainting masks from the hull: occlusion-aware reprojection into any
//! view, thresholding, disc dilation and crop selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{CameraModel, Vec3};
use crate::error::{Error, Result};
use crate::field::render::{render_source, RadianceSource, SamplingConfig};
use crate::field::{DensitySource, FieldSample};
use crate::hull::VisualHull;
use crate::imaging::{CropRect, FloatMask, MaskImage};

/// Density given to hull interior points, per world unit.
pub const DEFAULT_SIGMA_IN: f64 = 1e4;
pub const DEFAULT_THRESHOLD: f32 = 0.5;
pub const DEFAULT_DILATION: u32 = 11;

/// White opaque hull embedded in the frozen scene's black density.
pub struct HullComposite<'a, D> {
    pub hull: &'a VisualHull,
    pub frozen: &'a D,
    pub sigma_in: f64,
}

impl<D: DensitySource> RadianceSource for HullComposite<'_, D> {
    type Scratch = D::Scratch;

    fn scratch(&self) -> D::Scratch {
        self.frozen.scratch()
    }

    fn eval(&self, p: &Vec3, scratch: &mut D::Scratch) -> FieldSample {
        if self.hull.contains(p) {
            FieldSample { density: self.sigma_in, color: [1.0; 3] }
        } else {
            FieldSample { density: self.frozen.density_at(p, scratch), color: [0.0; 3] }
        }
    }
}

/// Renders the hull from `camera`, occluded by the frozen scene. Sampling is
/// unjittered so the mask is a pure function of its inputs.
pub fn render_hull_mask<D: DensitySource>(
    hull: &VisualHull,
    frozen: &D,
    camera: &CameraModel,
    sampling: &SamplingConfig,
    sigma_in: f64,
) -> Result<FloatMask> {
    if !(sigma_in > 0.0 && sigma_in.is_finite()) {
        return Err(Error::invalid("hull density must be positive and finite"));
    }
    let src = HullComposite { hull, frozen, sigma_in };
    let img = render_source(&src, camera, sampling, None)?;
    let mut out = FloatMask::new(img.width, img.height);
    for v in 0..img.height {
        for u in 0..img.width {
            let [r, g, b] = img.get(u, v);
            out.set(u, v, 0.2126 * r + 0.7152 * g + 0.0722 * b);
        }
    }
    Ok(out)
}

/// Pixels with value ≥ `threshold`.
pub fn binarize(mask: &FloatMask, threshold: f32) -> Result<MaskImage> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(MaskImage::from_fn(mask.width, mask.height, |u, v| mask.get(u, v) >= threshold))
}

/// Offsets `(dx, dy)` of a disc of odd `diameter`: `dx² + dy² ≤ (diameter/2)²`.
pub fn disc_offsets(diameter: u32) -> Result<Vec<(i32, i32)>> {
    if diameter % 2 == 0 {
        return Err(Error::invalid(format!("dilation diameter {diameter} must be odd")));
    }
    let r = (diameter / 2) as i32 + 1;
    let d2 = (diameter as i64) * (diameter as i64);
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if 4 * ((dx * dx + dy * dy) as i64) <= d2 {
                out.push((dx, dy));
            }
        }
    }
    Ok(out)
}

/// Binary dilation by a disc of odd `diameter`.
pub fn dilate(mask: &MaskImage, diameter: u32) -> Result<MaskImage> {
    let offsets = disc_offsets(diameter)?;
    let mut out = MaskImage::new(mask.width, mask.height);
    let (w, h) = (mask.width as i32, mask.height as i32);
    for (x, y) in mask.iter_set() {
        for &(dx, dy) in &offsets {
            let (u, v) = (x as i32 + dx, y as i32 + dy);
            if u >= 0 && v >= 0 && u < w && v < h {
                out.set(u as u32, v as u32, true);
            }
        }
    }
    Ok(out)
}

/// Grey-level dilation (disc maximum filter).
pub fn dilate_float(mask: &FloatMask, diameter: u32) -> Result<FloatMask> {
    let offsets = disc_offsets(diameter)?;
    let (w, h) = (mask.width as i32, mask.height as i32);
    Ok(FloatMask::from_fn(mask.width, mask.height, |x, y| {
        offsets
            .iter()
            .filter_map(|&(dx, dy)| {
                let (u, v) = (x as i32 + dx, y as i32 + dy);
                (u >= 0 && v >= 0 && u < w && v < h).then(|| mask.get(u as u32, v as u32))
            })
            .fold(0.0, f32::max)
    }))
}

/// Crop around the mask: a square of side `k · max(bbox width, bbox height)`,
/// `k` uniform in `scale` drawn from `seed`, centered on the bounding box and
/// shifted to fit the image. When the side exceeds the image's shorter
/// dimension the crop is clamped per axis and stops being square. The crop
/// always contains the bounding box.
pub fn select_crop(mask: &MaskImage, scale: (f64, f64), seed: u64) -> Result<CropRect> {
    let (k_min, k_max) = scale;
    if !(k_min >= 1.0 && k_max >= k_min && k_max.is_finite()) {
        return Err(Error::invalid(format!("crop scale interval [{k_min}, {k_max}] must satisfy 1 ≤ min ≤ max")));
    }
    let (x0, y0, x1, y1) = mask.bbox().ok_or(Error::NoRegion)?;
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let k = if k_max > k_min { ChaCha8Rng::seed_from_u64(seed).random_range(k_min..=k_max) } else { k_min };
    let side = (k * bw.max(bh) as f64).ceil() as u32;
    let axis = |lo: u32, len: u32, extent: u32| -> (u32, u32) {
        let size = side.clamp(len, extent);
        let start = lo.saturating_sub((size - len) / 2).min(extent - size);
        (start, size)
    };
    let (x, width) = axis(x0, bw, mask.width);
    let (y, height) = axis(y0, bh, mask.height);
    Ok(CropRect { x, y, width, height })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binarize_is_closed_at_threshold() {
        let m = FloatMask::from_fn(3, 1, |u, _| [0.0, 0.5, 1.0][u as usize]);
        let b = binarize(&m, 0.5).unwrap();
        assert_eq!((b.get(0, 0), b.get(1, 0), b.get(2, 0)), (false, true, true));
        assert!(binarize(&m, 0.0).is_err());
        assert!(binarize(&m, 1.0).is_err());
        assert!(binarize(&FloatMask::new(4, 4), 0.5).unwrap().is_empty());
        assert_eq!(binarize(&FloatMask::from_fn(4, 4, |_, _| 1.0), 0.5).unwrap().count(), 16);
    }

    #[test]
    fn disc_of_eleven() {
        // Row half-widths for |dy| = 0..5: floor(sqrt(30.25 - dy²)).
        let offs = disc_offsets(11).unwrap();
        let half = [5, 5, 5, 4, 3, 2];
        let expected: usize = (-5i32..=5).map(|dy| 2 * half[dy.unsigned_abs() as usize] + 1).sum();
        assert_eq!(offs.len(), expected);
        assert_eq!(offs.len(), 97);
        assert!(disc_offsets(10).is_err());
        assert_eq!(disc_offsets(1).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn dilation_clips_at_borders() {
        let mut m = MaskImage::new(5, 5);
        m.set(0, 0, true);
        let d = dilate(&m, 3).unwrap();
        assert_eq!(d.count(), 4);
        assert!(dilate(&MaskImage::new(5, 5), 11).unwrap().is_empty());
    }

    #[test]
    fn crop_of_degenerate_interval_matches_bbox() {
        let m = MaskImage::from_fn(64, 64, |u, v| (20..30).contains(&u) && (10..16).contains(&v));
        let c = select_crop(&m, (1.0, 1.0), 0).unwrap();
        assert_eq!((c.x, c.y, c.width, c.height), (20, 8, 10, 10));
    }

    #[test]
    fn corner_mask_shifts_crop_inward() {
        let m = MaskImage::from_fn(64, 64, |u, v| u < 6 && v < 4);
        let c = select_crop(&m, (2.0, 2.0), 0).unwrap();
        assert_eq!((c.x, c.y, c.width, c.height), (0, 0, 12, 12));
        assert!(matches!(select_crop(&MaskImage::new(8, 8), (1.5, 2.5), 0), Err(Error::NoRegion)));
        assert!(select_crop(&m, (0.5, 2.0), 0).is_err());
    }

    #[test]
    fn oversized_crop_falls_back_to_axis_clamping() {
        let m = MaskImage::from_fn(40, 20, |u, v| (5..35).contains(&u) && (2..18).contains(&v));
        let c = select_crop(&m, (2.0, 2.0), 0).unwrap();
        assert_eq!((c.x, c.y, c.width, c.height), (0, 0, 40, 20));
    }

    fn arb_mask() -> impl Strategy<Value = MaskImage> {
        (1u32..24, 1u32..24, prop::collection::vec(any::<bool>(), 576)).prop_map(|(w, h, bits)| {
            MaskImage::from_fn(w, h, |u, v| bits[(v * 24 + u) as usize] && (u * 7 + v * 3) % 5 == 0)
        })
    }

    proptest! {
        #[test]
        fn dilation_is_a_superset(m in arb_mask(), r in 0u32..4) {
            let d = dilate(&m, 2 * r + 1).unwrap();
            for (x, y) in m.iter_set() {
                prop_assert!(d.get(x, y));
            }
        }

        #[test]
        fn dilation_commutes_with_binarization(m in arb_mask(), r in 0u32..4) {
            let f = FloatMask::from_fn(m.width, m.height, |u, v| if m.get(u, v) { 1.0 } else { 0.0 });
            let a = binarize(&dilate_float(&f, 2 * r + 1).unwrap(), 0.5).unwrap();
            let b = dilate(&binarize(&f, 0.5).unwrap(), 2 * r + 1).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn crop_contains_bbox_and_fits(m in arb_mask(), lo in 1.0f64..3.0, extra in 0.0f64..2.0, seed in any::<u64>()) {
            if let Some((x0, y0, x1, y1)) = m.bbox() {
                let c = select_crop(&m, (lo, lo + extra), seed).unwrap();
                prop_assert!(c.x <= x0 && c.y <= y0 && x1 < c.x + c.width && y1 < c.y + c.height);
                prop_assert!(c.x + c.width <= m.width && c.y + c.height <= m.height);
                prop_assert_eq!(c, select_crop(&m, (lo, lo + extra), seed).unwrap());
            }
        }
    }
}
