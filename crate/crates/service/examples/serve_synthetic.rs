//! Serves a quickly fitted synthetic scene on `127.0.0.1:8080` (or the
//! address given as the first argument) until Ctrl-C.
//!
//! ```text
//! curl localhost:8080/api/views
//! curl -o v0.png 'localhost:8080/api/render?view=0'
//! ```

use hullpaint::field::render::SamplingConfig;
use hullpaint::field::train::{fit, FitConfig};
use hullpaint::scene::{generate_synthetic_scene, SyntheticKind, SyntheticSpec};
use hullpaint::{FieldConfig, RadianceField};
use hullpaint_service::server::serve_forever;
use hullpaint_service::{AppState, ServiceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into()).parse()?;
    let spec = SyntheticSpec { kind: SyntheticKind::SphereInBox, views: 12, resolution: 64 };
    let (dataset, _) = generate_synthetic_scene(&spec, 0)?;
    let sampling = SamplingConfig { n_samples: 48, near: 1.25, far: 4.75, early_stop: 1e-4 };
    let mut field = RadianceField::<f32>::new(FieldConfig::default(), 0)?;
    fit(&mut field, dataset.posed_images(), &FitConfig { steps: 400, batch_rays: 256, sampling, ..FitConfig::default() }, |_, _| {})?;
    let work_dir = std::env::temp_dir().join("hullpaint-serve");
    let state = AppState::new(dataset, field, ServiceConfig { sampling, work_dir, ..ServiceConfig::default() });
    serve_forever(addr, state)?;
    Ok(())
}
