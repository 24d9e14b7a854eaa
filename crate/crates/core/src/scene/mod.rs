//! Posed image datasets, manifests, checkpoints and synthetic fixtures.

pub mod checkpoint;
pub mod manifest;
pub mod synthetic;

use std::path::{Path, PathBuf};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::field::Aabb;
use crate::imaging::RgbImage;

pub use checkpoint::Checkpoint;
pub use manifest::{load_manifest, save_dataset, Manifest, ManifestCamera};
pub use synthetic::{generate_synthetic_scene, AnalyticScene, Primitive, SyntheticKind, SyntheticSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SceneView {
    pub camera: CameraModel,
    /// Image file name relative to the manifest.
    pub file: PathBuf,
    /// Current training image; replaced during dataset updates.
    pub image: RgbImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneDataset {
    pub views: Vec<SceneView>,
    pub scene_box: Option<Aabb>,
}

impl SceneDataset {
    pub fn new(views: Vec<SceneView>, scene_box: Option<Aabb>) -> Result<Self> {
        for (i, v) in views.iter().enumerate() {
            if (v.camera.width, v.camera.height) != (v.image.width, v.image.height) {
                return Err(Error::Validation(format!(
                    "view {i} ({}): image is {}x{} but camera is {}x{}",
                    v.file.display(),
                    v.image.width,
                    v.image.height,
                    v.camera.width,
                    v.camera.height
                )));
            }
        }
        Ok(Self { views, scene_box })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn cameras(&self) -> Vec<CameraModel> {
        self.views.iter().map(|v| v.camera.clone()).collect()
    }

    pub fn images(&self) -> Vec<RgbImage> {
        self.views.iter().map(|v| v.image.clone()).collect()
    }

    /// `(camera, image)` pairs for training.
    pub fn posed_images(&self) -> Vec<(&CameraModel, &RgbImage)> {
        self.views.iter().map(|v| (&v.camera, &v.image)).collect()
    }

    pub fn replace_images(&mut self, images: Vec<RgbImage>) -> Result<()> {
        if images.len() != self.views.len() {
            return Err(Error::invalid("one image per view required"));
        }
        for (v, img) in self.views.iter().zip(&images) {
            if !img.same_size(&v.image) {
                return Err(Error::invalid(format!("replacement for {} has the wrong size", v.file.display())));
            }
        }
        for (v, img) in self.views.iter_mut().zip(images) {
            v.image = img;
        }
        Ok(())
    }
}

/// Writes numbered PNG frames `frame_0000.png`, … into `dir`.
pub fn save_frames(images: &[RgbImage], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let p = dir.join(format!("frame_{i:04}.png"));
            img.save(&p)?;
            Ok(p)
        })
        .collect()
}
