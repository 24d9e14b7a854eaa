//! One whole-dataset update: render every training view, inpaint the
//! region, composite the result back and replace the training image.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::field::render::{pixel_seed, render_view, SamplingConfig};
use crate::field::{DensitySource, RadianceField};
use crate::hull::VisualHull;
use crate::imaging::{CropRect, MaskImage, RgbImage};
use crate::inpaint::{Conditioning, InpaintBackend, InpaintRequest};
use crate::maskproj::{binarize, dilate, render_hull_mask, select_crop};

use super::EditJobConfig;

/// Reprojected region of one view, fixed for the whole job because the
/// frozen field and the hull never change.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewMask {
    pub mask: MaskImage,
    pub dilated: MaskImage,
}

/// Reprojects the hull into every camera, occluded by `frozen`.
pub fn prepare_view_masks<D: DensitySource>(
    hull: &VisualHull,
    frozen: &D,
    cameras: &[CameraModel],
    config: &EditJobConfig,
) -> Result<Vec<ViewMask>> {
    cameras
        .iter()
        .map(|cam| {
            let soft = render_hull_mask(hull, frozen, cam, &config.sampling, config.sigma_in)?;
            let mask = binarize(&soft, config.mask_threshold)?;
            let dilated = dilate(&mask, config.dilation)?;
            Ok(ViewMask { mask, dilated })
        })
        .collect()
}

/// Renders used by dataset updates: unjittered bin midpoints.
pub fn render_views(field: &RadianceField<f32>, cameras: &[CameraModel], sampling: &SamplingConfig) -> Result<Vec<RgbImage>> {
    cameras.iter().map(|c| render_view(field, c, sampling, None)).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    /// New training images, one per view. Skipped views keep their old image.
    pub images: Vec<RgbImage>,
    pub replaced: usize,
    /// `(view, reason)` for views whose backend call failed.
    pub skipped: Vec<(usize, String)>,
    pub crops: Vec<Option<CropRect>>,
}

/// Inpaints every view of `renders` within its mask.
///
/// Per view: crop around the mask, send the crop with the dilated mask to
/// the backend, then copy the returned pixels back only where the
/// non-dilated mask is set. Views without a region are replaced by their
/// render unchanged. Backend calls run on up to `config.max_in_flight`
/// threads; results do not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn update_dataset(
    renders: &[RgbImage],
    previous: &[RgbImage],
    masks: &[ViewMask],
    backend: &dyn InpaintBackend,
    conditioning: &Conditioning,
    strength: f64,
    update_index: u64,
    config: &EditJobConfig,
) -> Result<UpdateReport> {
    if renders.len() != masks.len() || renders.len() != previous.len() {
        return Err(Error::invalid("renders, previous images and masks must align"));
    }
    let n = renders.len();
    let results: Mutex<Vec<Option<Result<(RgbImage, Option<CropRect>)>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = config.max_in_flight.clamp(1, n.max(1));
    let update_seed = pixel_seed(config.seed, update_index);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let seed = pixel_seed(update_seed, i as u64);
                let r = inpaint_view(&renders[i], &masks[i], backend, conditioning, strength, seed, config);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });

    let mut report = UpdateReport::default();
    for (i, r) in results.into_inner().unwrap().into_iter().enumerate() {
        match r.expect("every view visited") {
            Ok((img, crop)) => {
                report.images.push(img);
                report.crops.push(crop);
                report.replaced += 1;
            }
            Err(e) if config.strict => return Err(e),
            Err(e) => {
                log::warn!("view {i} skipped: {e}");
                report.images.push(previous[i].clone());
                report.crops.push(None);
                report.skipped.push((i, e.to_string()));
            }
        }
    }
    Ok(report)
}

fn inpaint_view(
    render: &RgbImage,
    masks: &ViewMask,
    backend: &dyn InpaintBackend,
    conditioning: &Conditioning,
    strength: f64,
    seed: u64,
    config: &EditJobConfig,
) -> Result<(RgbImage, Option<CropRect>)> {
    if masks.mask.is_empty() {
        return Ok((render.clone(), None));
    }
    let crop = select_crop(&masks.mask, (config.crop_scale[0], config.crop_scale[1]), seed)?;
    let request = InpaintRequest {
        image: render.crop(crop),
        mask: masks.dilated.crop(crop),
        conditioning: conditioning.clone(),
        strength,
        seed,
        steps: config.denoise_steps,
    };
    let response = backend.inpaint(&request)?;
    if (response.image.width, response.image.height) != (crop.width, crop.height) {
        return Err(Error::Protocol("backend changed the crop size".into()));
    }
    let mut out = render.clone();
    for y in 0..crop.height {
        for x in 0..crop.width {
            if masks.mask.get(crop.x + x, crop.y + y) {
                out.set(crop.x + x, crop.y + y, response.image.get(x, y));
            }
        }
    }
    Ok((out, Some(crop)))
}
