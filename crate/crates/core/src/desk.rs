//! Scaled-down end-to-end edit on the synthetic sphere-in-box scene:
//! fit the original field, lift a hull around the sphere, recolor it with
//! the mock backend and measure how much leaked outside the region.

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::field::render::{render_view, SamplingConfig};
use crate::field::train::{fit, FitConfig};
use crate::field::{FieldConfig, RadianceField};
use crate::hull::{hull_from_masks, VisualHull};
use crate::idu::{EditJobConfig, ViewMask};
use crate::imaging::{mean_color_where, psnr_where, Rgb};
use crate::scene::{generate_synthetic_scene, AnalyticScene, SceneDataset, SyntheticKind, SyntheticSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskOptions {
    pub views: usize,
    pub resolution: u32,
    /// Steps used to fit the original field.
    pub fit_steps: u64,
    /// The first `hull_views` training cameras carry the silhouettes.
    pub hull_views: usize,
    /// Silhouettes are of the target sphere grown by this much.
    pub hull_margin: f64,
    pub target: Rgb,
    pub field: FieldConfig,
    pub seed: u64,
}

impl Default for DeskOptions {
    fn default() -> Self {
        Self {
            views: 20,
            resolution: 64,
            fit_steps: 1500,
            hull_views: 8,
            hull_margin: 0.15,
            target: [1.0, 0.0, 0.0],
            field: FieldConfig::default(),
            seed: 0,
        }
    }
}

impl DeskOptions {
    /// Job settings matching this scene: the desk schedule with a solid
    /// mock target.
    pub fn job_config(&self) -> EditJobConfig {
        let [r, g, b] = self.target;
        EditJobConfig { backend: format!("mock:solid:{r},{g},{b}"), seed: self.seed, ..EditJobConfig::desk() }
    }
}

#[derive(Clone, Debug)]
pub struct DeskScene {
    pub dataset: SceneDataset,
    pub scene: AnalyticScene,
    pub original: RadianceField<f32>,
    pub hull: VisualHull,
    pub fit_losses: Vec<f64>,
}

/// Renders the fixture, fits the original field and builds the hull.
pub fn prepare_desk_scene(opts: &DeskOptions, sampling: &SamplingConfig) -> Result<DeskScene> {
    if opts.hull_views == 0 || opts.hull_views > opts.views {
        return Err(Error::invalid(format!("hull_views must be in 1..={}", opts.views)));
    }
    let spec = SyntheticSpec { kind: SyntheticKind::SphereInBox, views: opts.views, resolution: opts.resolution };
    let (dataset, scene) = generate_synthetic_scene(&spec, opts.seed)?;
    let mut original = RadianceField::<f32>::new(opts.field.clone(), opts.seed)?;
    let fit_cfg = FitConfig { steps: opts.fit_steps, batch_rays: 256, sampling: *sampling, seed: opts.seed, ..FitConfig::default() };
    let fit_losses = fit(&mut original, dataset.posed_images(), &fit_cfg, |_, _| {})?;
    let cameras = dataset.cameras();
    let hull = hull_from_masks(scene.target_silhouettes(&cameras[..opts.hull_views], opts.hull_margin)?)?;
    Ok(DeskScene { dataset, scene, original, hull, fit_losses })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditMetrics {
    /// PSNR of the edited render against the original render outside each
    /// view's mask. Views whose mask covers everything are left out.
    pub outside_psnr: Vec<f64>,
    pub mean_outside_psnr: f64,
    /// Mean edited color over all mask pixels of all views.
    pub inside_mean: [f64; 3],
}

impl EditMetrics {
    pub fn min_outside_psnr(&self) -> f64 {
        self.outside_psnr.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn edit_metrics(
    original: &RadianceField<f32>,
    edited: &RadianceField<f32>,
    cameras: &[CameraModel],
    masks: &[ViewMask],
    sampling: &SamplingConfig,
) -> Result<EditMetrics> {
    if cameras.len() != masks.len() {
        return Err(Error::invalid("one mask per camera expected"));
    }
    let mut outside_psnr = Vec::new();
    let (mut sum, mut n) = ([0.0f64; 3], 0usize);
    for (cam, m) in cameras.iter().zip(masks) {
        let before = render_view(original, cam, sampling, None)?;
        let after = render_view(edited, cam, sampling, None)?;
        if let Some(p) = psnr_where(&before, &after, |x, y| !m.mask.get(x, y))? {
            outside_psnr.push(p);
        }
        if let Some(mean) = mean_color_where(&after, |x, y| m.mask.get(x, y)) {
            let k = m.mask.count();
            (0..3).for_each(|c| sum[c] += mean[c] * k as f64);
            n += k;
        }
    }
    if n == 0 {
        return Err(Error::NoRegion);
    }
    let mean_outside_psnr = outside_psnr.iter().sum::<f64>() / outside_psnr.len().max(1) as f64;
    Ok(EditMetrics { outside_psnr, mean_outside_psnr, inside_mean: sum.map(|v| v / n as f64) })
}
