//! Editable region as the intersection of silhouette cones.
//!
//! A point belongs to the hull iff, in every silhouette view, it lies in
//! front of the camera, projects inside the image and lands on a set pixel
//! (nearest pixel, `floor` of the projected coordinate).

pub mod mesh;

use rayon::prelude::*;

use crate::camera::{CameraModel, Vec3};
use crate::error::{Error, Result};
use crate::imaging::MaskImage;

pub use mesh::{axis_cameras, rasterize, silhouettes_from_mesh, PosedMesh};

/// Binary silhouette seen from a known camera.
#[derive(Clone, Debug, PartialEq)]
pub struct PosedMask {
    pub camera: CameraModel,
    pub mask: MaskImage,
}

impl PosedMask {
    pub fn new(camera: CameraModel, mask: MaskImage) -> Result<Self> {
        if (camera.width, camera.height) != (mask.width, mask.height) {
            return Err(Error::Validation(format!(
                "mask is {}x{} but camera is {}x{}",
                mask.width, mask.height, camera.width, camera.height
            )));
        }
        Ok(Self { camera, mask })
    }

    /// Whether `p` projects onto a set pixel of this silhouette.
    #[inline]
    pub fn covers(&self, p: &Vec3) -> bool {
        match self.camera.pixel_of(p) {
            Some((u, v)) => self.mask.get(u, v),
            None => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisualHull {
    views: Vec<PosedMask>,
}

/// Builds a hull, rejecting an empty list and any all-clear silhouette.
pub fn hull_from_masks(masks: Vec<PosedMask>) -> Result<VisualHull> {
    if let Some(i) = masks.iter().position(|m| m.mask.is_empty()) {
        log::warn!("silhouette {i} has no set pixels; the hull is empty");
        return Err(Error::DegenerateHull(format!("silhouette {i} has no set pixels")));
    }
    VisualHull::new(masks)
}

impl VisualHull {
    /// Builds a hull without the all-clear check, so an empty region is allowed.
    pub fn new(masks: Vec<PosedMask>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::invalid("a hull needs at least one silhouette"));
        }
        Ok(Self { views: masks })
    }

    pub fn views(&self) -> &[PosedMask] {
        &self.views
    }

    /// The hull of these silhouettes plus one more.
    pub fn with(&self, mask: PosedMask) -> Self {
        let mut views = self.views.clone();
        views.push(mask);
        Self { views }
    }

    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        self.views.iter().all(|v| v.covers(p))
    }

    pub fn contains_many(&self, points: &[Vec3]) -> Vec<bool> {
        points.par_iter().map(|p| self.contains(p)).collect()
    }

    /// True when some silhouette has no set pixels.
    pub fn is_trivially_empty(&self) -> bool {
        self.views.iter().any(|v| v.mask.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam(eye: Vec3) -> CameraModel {
        let up = if eye.x == 0.0 && eye.z == 0.0 { Vec3::z() } else { Vec3::y() };
        CameraModel::look_at(eye, Vec3::zeros(), up, 32, 32, 40.0)
    }

    fn disc(camera: &CameraModel, radius: f64) -> PosedMask {
        let c = camera.clone();
        let mask = MaskImage::from_fn(c.width, c.height, |u, v| {
            let r = c.ray(u, v);
            let b = r.origin.dot(&r.dir);
            b * b - (r.origin.norm_squared() - radius * radius) >= 0.0 && b < 0.0
        });
        PosedMask::new(camera.clone(), mask).unwrap()
    }

    #[test]
    fn empty_list_is_invalid() {
        assert!(matches!(hull_from_masks(vec![]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn all_clear_mask_is_degenerate() {
        let c = cam(Vec3::new(0.0, 0.0, 4.0));
        let m = PosedMask::new(c.clone(), MaskImage::new(32, 32)).unwrap();
        assert!(matches!(hull_from_masks(vec![m]), Err(Error::DegenerateHull(_))));
    }

    #[test]
    fn mismatched_mask_is_rejected() {
        let c = cam(Vec3::new(0.0, 0.0, 4.0));
        assert!(PosedMask::new(c, MaskImage::new(8, 8)).is_err());
    }

    #[test]
    fn behind_and_out_of_frame_points_are_outside() {
        let c = cam(Vec3::new(0.0, 0.0, 4.0));
        let hull = hull_from_masks(vec![PosedMask::new(c.clone(), MaskImage::full(32, 32)).unwrap()]).unwrap();
        assert!(hull.contains(&Vec3::zeros()));
        assert!(!hull.contains(&Vec3::new(0.0, 0.0, 5.0)));
        assert!(!hull.contains(&Vec3::new(40.0, 0.0, 0.0)));
    }

    #[test]
    fn orthogonal_sphere_silhouettes() {
        let views: Vec<_> = [Vec3::new(4.0, 0.0, 0.0), Vec3::new(0.0, 4.0, 0.0), Vec3::new(0.0, 0.0, 4.0)]
            .into_iter()
            .map(|e| disc(&cam(e), 1.0))
            .collect();
        let hull = hull_from_masks(views).unwrap();
        assert!(hull.contains(&Vec3::zeros()));
        assert!(!hull.contains(&Vec3::new(1.5, 0.0, 0.0)));
    }

    fn hulls() -> (VisualHull, VisualHull, VisualHull) {
        let a = disc(&cam(Vec3::new(4.0, 0.0, 0.0)), 1.0);
        let b = disc(&cam(Vec3::new(0.0, 0.0, 4.0)), 0.7);
        let c = disc(&cam(Vec3::new(0.0, 4.0, 0.0)), 0.9);
        let ab = hull_from_masks(vec![a.clone(), b.clone()]).unwrap();
        let ba = hull_from_masks(vec![b.clone(), a.clone()]).unwrap();
        (ab.clone(), ba, ab.with(c))
    }

    #[test]
    fn duplicate_silhouette_is_idempotent() {
        let a = disc(&cam(Vec3::new(4.0, 0.0, 0.0)), 1.0);
        let one = hull_from_masks(vec![a.clone()]).unwrap();
        let two = hull_from_masks(vec![a.clone(), a]).unwrap();
        for i in 0..2000 {
            let t = i as f64 * 0.37;
            let p = Vec3::new(t.sin() * 1.3, (t * 1.7).cos() * 1.3, (t * 0.3).sin() * 1.3);
            assert_eq!(one.contains(&p), two.contains(&p));
        }
    }

    proptest! {
        #[test]
        fn order_does_not_matter_and_more_views_shrink(x in -1.5f64..1.5, y in -1.5f64..1.5, z in -1.5f64..1.5) {
            let (ab, ba, abc) = hulls();
            let p = Vec3::new(x, y, z);
            prop_assert_eq!(ab.contains(&p), ba.contains(&p));
            if abc.contains(&p) {
                prop_assert!(ab.contains(&p));
            }
        }
    }
}
