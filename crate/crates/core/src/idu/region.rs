//! Turning a region description (painted masks or a placed mesh) into the
//! visual hull that confines the edit.

use std::path::{Path, PathBuf};

use crate::camera::{CameraModel, Vec3};
use crate::error::{Error, Result};
use crate::hull::{axis_cameras, hull_from_masks, silhouettes_from_mesh, PosedMask, PosedMesh, VisualHull};
use crate::imaging::{MaskImage, RgbImage};
use crate::inpaint::Conditioning;

use super::{ConditioningConfig, RegionConfig};

const MESH_FOV_Y_DEG: f64 = 40.0;

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Hull of masks painted over training views, given as `(view, mask)`.
pub fn hull_from_view_masks(cameras: &[CameraModel], masks: &[(usize, MaskImage)]) -> Result<VisualHull> {
    if masks.is_empty() {
        return Err(Error::NoRegion);
    }
    let posed = masks
        .iter()
        .map(|(view, mask)| {
            let cam = cameras
                .get(*view)
                .ok_or_else(|| Error::invalid(format!("mask for view {view}, but the scene has {} views", cameras.len())))?;
            PosedMask::new(cam.clone(), mask.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    hull_from_masks(posed)
}

/// Six axis cameras framing the mesh's bounding sphere.
pub fn mesh_silhouette_cameras(mesh: &PosedMesh, resolution: u32) -> Vec<CameraModel> {
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for v in mesh.vertices() {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let center = (lo + hi) / 2.0;
    let radius = ((hi - lo).norm() / 2.0).max(1e-6);
    let distance = 1.1 * radius / (MESH_FOV_Y_DEG.to_radians() / 2.0).sin();
    axis_cameras(center, distance, resolution, MESH_FOV_Y_DEG)
}

/// Hull of a mesh placed by a row-major 4×4 `transform`. With `training`
/// the mesh is also rasterized into those cameras.
pub fn hull_from_mesh(
    mesh: &PosedMesh,
    transform: &[f64; 16],
    resolution: u32,
    training: Option<&[CameraModel]>,
) -> Result<VisualHull> {
    if resolution == 0 {
        return Err(Error::invalid("mesh silhouette resolution must be positive"));
    }
    let placed = mesh.transformed(transform)?;
    let mut masks = silhouettes_from_mesh(&placed, &mesh_silhouette_cameras(&placed, resolution))?;
    if let Some(extra) = training {
        // A training camera that misses the mesh would empty the hull.
        masks.extend(silhouettes_from_mesh(&placed, extra)?.into_iter().filter(|m| !m.mask.is_empty()));
    }
    hull_from_masks(masks)
}

/// Loads the region of a job config. Relative paths are taken from `base`.
pub fn load_region(region: &RegionConfig, base: &Path, cameras: &[CameraModel]) -> Result<VisualHull> {
    if let Some(mesh) = &region.mesh {
        let m = PosedMesh::load_obj(resolve(base, &mesh.file))?;
        let training = mesh.include_training_views.then_some(cameras);
        return hull_from_mesh(&m, &mesh.transform, mesh.resolution, training);
    }
    let masks = region
        .masks
        .iter()
        .map(|r| Ok((r.view, MaskImage::load(resolve(base, &r.file))?)))
        .collect::<Result<Vec<_>>>()?;
    hull_from_view_masks(cameras, &masks)
}

pub fn load_conditioning(cfg: &ConditioningConfig, base: &Path) -> Result<Conditioning> {
    match (&cfg.prompt, &cfg.reference_image) {
        (Some(_), Some(_)) => Err(Error::Validation("give a prompt or a reference image, not both".into())),
        (Some(p), None) => Ok(Conditioning::Prompt(p.clone())),
        (None, Some(path)) => Ok(Conditioning::Reference(RgbImage::load(resolve(base, path))?)),
        (None, None) => Ok(Conditioning::None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> Vec<CameraModel> {
        (0..n)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / n as f64;
                CameraModel::look_at(Vec3::new(3.0 * a.cos(), 0.5, 3.0 * a.sin()), Vec3::zeros(), Vec3::y(), 32, 32, 40.0)
            })
            .collect()
    }

    #[test]
    fn view_masks_must_name_existing_views() {
        let cams = ring(2);
        let err = hull_from_view_masks(&cams, &[(5, MaskImage::full(32, 32))]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
        assert!(matches!(hull_from_view_masks(&cams, &[]), Err(Error::NoRegion)));
    }

    #[test]
    fn mesh_hull_contains_the_mesh_center_only() {
        let cube = PosedMesh::cube(Vec3::zeros(), 0.5);
        let mut t = [0.0; 16];
        (t[0], t[5], t[10], t[15]) = (0.5, 0.5, 0.5, 1.0);
        t[3] = 0.3;
        let hull = hull_from_mesh(&cube, &t, 64, None).unwrap();
        assert_eq!(hull.views().len(), 6);
        assert!(hull.contains(&Vec3::new(0.3, 0.0, 0.0)));
        assert!(!hull.contains(&Vec3::new(-0.1, 0.0, 0.0)));
        assert!(!hull.contains(&Vec3::new(0.3, 0.4, 0.0)));
    }

    #[test]
    fn training_views_that_miss_the_mesh_are_dropped() {
        let cube = PosedMesh::cube(Vec3::new(0.0, 0.0, 0.0), 0.2);
        let mut cams = ring(4);
        cams.push(CameraModel::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.0, 5.0, 3.0), Vec3::z(), 32, 32, 20.0));
        let id = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let hull = hull_from_mesh(&cube, &id, 32, Some(&cams)).unwrap();
        assert_eq!(hull.views().len(), 10);
        assert!(hull.contains(&Vec3::zeros()));
    }

    #[test]
    fn conditioning_prompt() {
        let c = ConditioningConfig { prompt: Some("a red ball".into()), reference_image: None };
        assert_eq!(load_conditioning(&c, Path::new(".")).unwrap(), Conditioning::Prompt("a red ball".into()));
    }
}
