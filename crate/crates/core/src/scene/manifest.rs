//! Camera manifest: `{"cameras": [{"file", "width", "height", "fx", "fy",
//! "cx", "cy", "c2w": [16 row-major]}], "scene_box": {"min", "max"}}`, with
//! image paths relative to the manifest file.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SceneDataset, SceneView};
use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::field::Aabb;
use crate::imaging::RgbImage;

/// Rotation orthonormality tolerance accepted from manifests.
pub const MANIFEST_ROTATION_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCamera {
    pub file: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub c2w: Vec<f64>,
}

impl ManifestCamera {
    pub fn from_camera(file: impl Into<String>, c: &CameraModel) -> Self {
        Self {
            file: file.into(),
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            c2w: c.c2w().to_vec(),
        }
    }

    pub fn to_camera(&self) -> Result<CameraModel> {
        let c2w: [f64; 16] = self
            .c2w
            .as_slice()
            .try_into()
            .map_err(|_| Error::Validation(format!("camera {}: c2w needs 16 numbers, got {}", self.file, self.c2w.len())))?;
        CameraModel::with_tolerance(self.width, self.height, self.fx, self.fy, self.cx, self.cy, c2w, MANIFEST_ROTATION_TOLERANCE)
            .map_err(|e| Error::Validation(format!("camera {}: {e}", self.file)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub cameras: Vec<ManifestCamera>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_box: Option<Aabb>,
}

impl Manifest {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(context, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn from_dataset(dataset: &SceneDataset) -> Self {
        Self {
            cameras: dataset
                .views
                .iter()
                .map(|v| ManifestCamera::from_camera(v.file.to_string_lossy(), &v.camera))
                .collect(),
            scene_box: dataset.scene_box,
        }
    }
}

/// Loads a manifest and every image it names.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<SceneDataset> {
    let path = path.as_ref();
    let manifest = Manifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let views = manifest
        .cameras
        .par_iter()
        .map(|c| {
            let camera = c.to_camera()?;
            let image = RgbImage::load(base.join(&c.file))?;
            Ok(SceneView { camera, file: c.file.clone().into(), image })
        })
        .collect::<Result<Vec<_>>>()?;
    SceneDataset::new(views, manifest.scene_box)
}

/// Writes `manifest.json` and every current image into `dir`.
pub fn save_dataset(dataset: &SceneDataset, dir: impl AsRef<Path>) -> Result<std::path::PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for v in &dataset.views {
        let p = dir.join(&v.file);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        v.image.save(&p)?;
    }
    let path = dir.join("manifest.json");
    Manifest::from_dataset(dataset).save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: &str = "[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]";

    #[test]
    fn missing_field_is_named() {
        let text = format!(r#"{{"cameras":[{{"file":"a.png","width":8,"height":8,"fy":8,"cx":4,"cy":4,"c2w":{IDENTITY}}}]}}"#);
        let err = Manifest::parse(&text, "m.json").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("fx"), "{err}");
    }

    #[test]
    fn skewed_rotation_is_a_validation_error() {
        let cam = ManifestCamera {
            file: "a.png".into(),
            width: 8,
            height: 8,
            fx: 8.0,
            fy: 8.0,
            cx: 4.0,
            cy: 4.0,
            c2w: vec![1.0, 0.01, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        };
        assert!(matches!(cam.to_camera(), Err(Error::Validation(_))));
        let nearly = ManifestCamera { c2w: vec![1.0, 1e-5, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0], ..cam };
        assert!(nearly.to_camera().is_ok());
    }
}
