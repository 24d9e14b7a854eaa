//! Renders a synthetic scene, fits a field to it and writes everything the
//! command line needs: `manifest.json` with its images, `original.nrfi`, and
//! painted masks `v0.png`, `v5.png` over two views.
//!
//! Usage: `fit_synthetic [OUT_DIR] [STEPS]` (defaults `target/demo`, 1500).

use std::path::PathBuf;

use hullpaint::field::render::SamplingConfig;
use hullpaint::field::train::{fit, FitConfig};
use hullpaint::scene::{generate_synthetic_scene, save_dataset, Checkpoint, SyntheticKind, SyntheticSpec};
use hullpaint::{FieldConfig, RadianceField};

fn main() -> hullpaint::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/demo".into()));
    let steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(1500);

    let spec = SyntheticSpec { kind: SyntheticKind::SphereInBox, views: 20, resolution: 64 };
    let (dataset, scene) = generate_synthetic_scene(&spec, 0)?;
    let manifest = save_dataset(&dataset, &out)?;

    let sampling = SamplingConfig { n_samples: 48, near: 1.25, far: 4.75, early_stop: 1e-4 };
    let mut field = RadianceField::<f32>::new(FieldConfig::default(), 0)?;
    let cfg = FitConfig { steps, batch_rays: 256, sampling, ..FitConfig::default() };
    let losses = fit(&mut field, dataset.posed_images(), &cfg, |step, loss| {
        if (step + 1) % 250 == 0 {
            println!("step {:5}: rgb loss {:.5}", step + 1, loss.rgb);
        }
    })?;
    Checkpoint::new(field).save(out.join("original.nrfi"))?;

    let cameras = dataset.cameras();
    for view in [0, 5] {
        let masks = scene.target_silhouettes(&cameras[view..=view], 0.1)?;
        masks[0].mask.save(out.join(format!("v{view}.png")))?;
    }
    println!("final loss {:.5}; wrote {}", losses.last().copied().unwrap_or(f64::NAN), manifest.display());
    Ok(())
}
