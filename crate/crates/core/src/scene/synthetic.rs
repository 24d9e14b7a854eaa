//! Procedural test scenes rendered with exact ray–primitive intersection and
//! flat shading, plus the ground-truth geometry behind them.
//!
//! World +y is up. Every fixture fits in the box [-1, 1]³ and is viewed from
//! cameras at distance 3 looking at the origin; rays that miss all geometry
//! are black.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SceneDataset, SceneView};
use crate::camera::{CameraModel, Ray, Vec3};
use crate::error::{Error, Result};
use crate::field::render::RadianceSource;
use crate::field::{Aabb, DensitySource, FieldSample};
use crate::hull::PosedMask;
use crate::imaging::{MaskImage, Rgb, RgbImage};

pub const CAMERA_DISTANCE: f64 = 3.0;
pub const FOV_Y_DEG: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Sphere resting above a checkered floor, with a small cube beside it.
    SphereInBox,
    /// Sphere with a thin opaque slab between it and the first camera.
    SlabOccluder,
    /// A single checker-textured cube.
    TexturedBox,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere-in-box" => Ok(Self::SphereInBox),
            "slab-occluder" => Ok(Self::SlabOccluder),
            "textured-box" => Ok(Self::TexturedBox),
            _ => Err(Error::invalid(format!("unknown synthetic scene {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub views: usize,
    pub resolution: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Sphere { center: [f64; 3], radius: f64, color: Rgb },
    /// Axis-aligned box, optionally checkered with cells of size `cell`.
    Cuboid { bounds: Aabb, color: Rgb, checker: Option<(Rgb, f64)> },
}

impl Primitive {
    /// Ray parameter of the first hit with `t > 0`.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        match self {
            Primitive::Sphere { center, radius, .. } => {
                let oc = ray.origin - Vec3::from(*center);
                let b = oc.dot(&ray.dir);
                let disc = b * b - (oc.norm_squared() - radius * radius);
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|t| *t > 0.0)
            }
            Primitive::Cuboid { bounds, .. } => {
                let (t0, t1) = bounds.intersect(ray)?;
                if t1 <= 0.0 {
                    None
                } else if t0 > 0.0 {
                    Some(t0)
                } else {
                    Some(t1)
                }
            }
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Primitive::Sphere { center, radius, .. } => (p - Vec3::from(*center)).norm_squared() <= radius * radius,
            Primitive::Cuboid { bounds, .. } => bounds.contains(p),
        }
    }

    pub fn color_at(&self, p: &Vec3) -> Rgb {
        match self {
            Primitive::Sphere { color, .. } => *color,
            Primitive::Cuboid { color, checker: None, .. } => *color,
            Primitive::Cuboid { color, checker: Some((other, cell)), .. } => {
                // Nudge inward so points on cell-aligned faces pick a stable cell.
                let q = p.map(|c| (c / cell + 1e-7).floor() as i64);
                if (q.x + q.y + q.z).rem_euclid(2) == 0 {
                    *color
                } else {
                    *other
                }
            }
        }
    }
}

/// Ground truth behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub kind: SyntheticKind,
    pub primitives: Vec<Primitive>,
    /// Object meant to be edited: `(center, radius)`.
    pub target: ([f64; 3], f64),
    /// Plane equations `(n, d)` with `n·x = d` bounding the occluding slab.
    pub slab_planes: Vec<([f64; 3], f64)>,
    /// View whose line of sight to the target crosses the slab, and one that does not.
    pub blocked_view: Option<usize>,
    pub clear_view: Option<usize>,
    /// Density reported inside every primitive when used as a volume.
    pub density: f64,
    pub bbox: Aabb,
}

impl AnalyticScene {
    /// Nearest hit `(t, primitive index)`.
    pub fn hit(&self, ray: &Ray) -> Option<(f64, usize)> {
        self.primitives
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.intersect(ray).map(|t| (t, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    pub fn trace(&self, ray: &Ray) -> Rgb {
        match self.hit(ray) {
            Some((t, i)) => self.primitives[i].color_at(&ray.at(t)),
            None => [0.0; 3],
        }
    }

    pub fn render(&self, camera: &CameraModel) -> RgbImage {
        let mut img = RgbImage::new(camera.width, camera.height);
        for v in 0..camera.height {
            for u in 0..camera.width {
                img.set(u, v, self.trace(&camera.ray(u, v)));
            }
        }
        img
    }

    /// Silhouettes of the target sphere grown by `margin`: a pixel is set iff
    /// its center ray meets the grown sphere in front of the camera.
    pub fn target_silhouettes(&self, cameras: &[CameraModel], margin: f64) -> Result<Vec<PosedMask>> {
        let grown = Primitive::Sphere { center: self.target.0, radius: self.target.1 + margin, color: [1.0; 3] };
        cameras
            .iter()
            .map(|c| {
                let mask = MaskImage::from_fn(c.width, c.height, |u, v| grown.intersect(&c.ray(u, v)).is_some());
                PosedMask::new(c.clone(), mask)
            })
            .collect()
    }

    pub fn in_target(&self, p: &Vec3, margin: f64) -> bool {
        (p - Vec3::from(self.target.0)).norm() <= self.target.1 + margin
    }
}

impl DensitySource for AnalyticScene {
    type Scratch = ();

    fn scratch(&self) {}

    fn density_at(&self, p: &Vec3, _: &mut ()) -> f64 {
        if self.primitives.iter().any(|prim| prim.contains(p)) {
            self.density
        } else {
            0.0
        }
    }
}

impl RadianceSource for AnalyticScene {
    type Scratch = ();

    fn scratch(&self) {}

    fn eval(&self, p: &Vec3, _: &mut ()) -> FieldSample {
        match self.primitives.iter().find(|prim| prim.contains(p)) {
            Some(prim) => FieldSample { density: self.density, color: prim.color_at(p).map(|c| c as f64) },
            None => FieldSample::EMPTY,
        }
    }
}

pub const TARGET_COLOR: Rgb = [0.2, 0.45, 0.85];

fn cuboid(min: [f64; 3], max: [f64; 3], color: Rgb, checker: Option<(Rgb, f64)>) -> Primitive {
    Primitive::Cuboid { bounds: Aabb { min, max }, color, checker }
}

fn orbit_camera(rng: &mut ChaCha8Rng, resolution: u32, min_elev: f64, max_elev: f64) -> CameraModel {
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let el = rng.random_range(min_elev..max_elev).to_radians();
    let eye = CAMERA_DISTANCE * Vec3::new(el.cos() * az.cos(), el.sin(), el.cos() * az.sin());
    CameraModel::look_at(eye, Vec3::zeros(), Vec3::y(), resolution, resolution, FOV_Y_DEG)
}

/// Renders `spec.views` views of the chosen fixture. Camera placement is
/// drawn from `seed`; the geometry is fixed per kind.
pub fn generate_synthetic_scene(spec: &SyntheticSpec, seed: u64) -> Result<(SceneDataset, AnalyticScene)> {
    if spec.views == 0 || spec.resolution == 0 {
        return Err(Error::invalid("a synthetic scene needs at least one view and pixel"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bbox = Aabb::cube(1.0);
    let target = ([0.0, 0.0, 0.0], 0.35);
    let sphere = Primitive::Sphere { center: target.0, radius: target.1, color: TARGET_COLOR };
    let mut cameras = Vec::with_capacity(spec.views);
    let mut scene = AnalyticScene {
        kind: spec.kind,
        primitives: Vec::new(),
        target,
        slab_planes: Vec::new(),
        blocked_view: None,
        clear_view: None,
        density: 200.0,
        bbox,
    };
    match spec.kind {
        SyntheticKind::SphereInBox => {
            scene.primitives = vec![
                sphere,
                cuboid([-1.0, -1.0, -1.0], [1.0, -0.7, 1.0], [0.85, 0.85, 0.8], Some(([0.3, 0.3, 0.35], 0.5))),
                cuboid([0.45, -0.7, 0.35], [0.75, -0.4, 0.65], [0.9, 0.6, 0.1], None),
            ];
            for _ in 0..spec.views {
                cameras.push(orbit_camera(&mut rng, spec.resolution, 15.0, 60.0));
            }
        }
        SyntheticKind::SlabOccluder => {
            let (z0, z1) = (0.7, 0.8);
            scene.primitives = vec![sphere, cuboid([-0.8, -0.8, z0], [0.8, 0.8, z1], [0.8, 0.75, 0.7], None)];
            scene.slab_planes = vec![([0.0, 0.0, 1.0], z0), ([0.0, 0.0, 1.0], z1)];
            let fixed = [Vec3::new(0.0, 0.0, CAMERA_DISTANCE), Vec3::new(0.0, 0.0, -CAMERA_DISTANCE)];
            for (i, eye) in fixed.iter().enumerate().take(spec.views) {
                cameras.push(CameraModel::look_at(*eye, Vec3::zeros(), Vec3::y(), spec.resolution, spec.resolution, FOV_Y_DEG));
                if i == 0 {
                    scene.blocked_view = Some(0);
                } else {
                    scene.clear_view = Some(1);
                }
            }
            while cameras.len() < spec.views {
                cameras.push(orbit_camera(&mut rng, spec.resolution, 10.0, 70.0));
            }
        }
        SyntheticKind::TexturedBox => {
            scene.primitives = vec![cuboid([-0.4, -0.4, -0.4], [0.4, 0.4, 0.4], [0.9, 0.2, 0.2], Some(([0.1, 0.1, 0.6], 0.2)))];
            scene.target = ([0.0, 0.0, 0.0], 0.4);
            for _ in 0..spec.views {
                cameras.push(orbit_camera(&mut rng, spec.resolution, -60.0, 60.0));
            }
        }
    }
    let views = cameras
        .into_iter()
        .enumerate()
        .map(|(i, camera)| SceneView { image: scene.render(&camera), file: format!("view_{i:03}.png").into(), camera })
        .collect();
    Ok((SceneDataset::new(views, Some(bbox))?, scene))
}
