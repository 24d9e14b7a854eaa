//! Reprojects a hull into two views of the slab scene: one camera looks at
//! the region through an opaque slab, the other sees it directly.
//!
//! Writes `blocked.png` and `clear.png` into the directory given as the
//! first argument (default `target/reprojection`).

use std::path::PathBuf;

use hullpaint::field::render::SamplingConfig;
use hullpaint::maskproj::{binarize, render_hull_mask, DEFAULT_SIGMA_IN};
use hullpaint::scene::{generate_synthetic_scene, SyntheticKind, SyntheticSpec};
use hullpaint::{hull_from_masks, CameraModel, Vec3};

fn main() -> hullpaint::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/reprojection".into()));
    std::fs::create_dir_all(&out).map_err(|e| hullpaint::Error::Io { path: out.clone(), source: e })?;
    let spec = SyntheticSpec { kind: SyntheticKind::SlabOccluder, views: 2, resolution: 96 };
    let (dataset, scene) = generate_synthetic_scene(&spec, 0)?;
    let side: Vec<CameraModel> = [Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.001), Vec3::new(0.0, 0.0, 3.0)]
        .into_iter()
        .map(|eye| CameraModel::look_at(eye, Vec3::zeros(), Vec3::y(), 96, 96, 40.0))
        .collect();
    let hull = hull_from_masks(scene.target_silhouettes(&side, 0.05)?)?;
    let sampling = SamplingConfig { n_samples: 96, near: 1.25, far: 4.75, early_stop: 0.0 };
    let cameras = dataset.cameras();
    for (name, view) in [("blocked", scene.blocked_view), ("clear", scene.clear_view)] {
        let Some(view) = view else { continue };
        let soft = render_hull_mask(&hull, &scene, &cameras[view], &sampling, DEFAULT_SIGMA_IN)?;
        let mask = binarize(&soft, 0.5)?;
        mask.save(out.join(format!("{name}.png")))?;
        println!("{name} view {view}: {} region pixels", mask.count());
    }
    Ok(())
}
