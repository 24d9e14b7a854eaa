//! Pinhole cameras with rigid camera-to-world poses.
//!
//! Camera space is +x right, +y down, +z forward into the scene. Pixel
//! `(u, v)` covers `[u, u+1) x [v, v+1)` and its ray passes through the
//! pixel center.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Orthonormality tolerance enforced on every constructed camera.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl CameraModel {
    /// Builds a camera from intrinsics and a row-major 4x4 camera-to-world transform.
    pub fn new(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        c2w: [f64; 16],
    ) -> Result<Self> {
        Self::with_tolerance(width, height, fx, fy, cx, cy, c2w, ROTATION_TOLERANCE)
    }

    /// Like [`CameraModel::new`] but accepts rotations off by up to `tolerance`,
    /// re-orthonormalizing anything outside [`ROTATION_TOLERANCE`].
    #[allow(clippy::too_many_arguments)]
    pub fn with_tolerance(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        c2w: [f64; 16],
        tolerance: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("camera dimensions must be positive"));
        }
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if c2w.iter().chain([cx, cy].iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("camera parameters must be finite"));
        }
        let bottom = [c2w[12], c2w[13], c2w[14], c2w[15]];
        if bottom
            .iter()
            .zip([0.0, 0.0, 0.0, 1.0])
            .any(|(a, b)| (a - b).abs() > tolerance)
        {
            return Err(Error::Validation(format!(
                "c2w bottom row must be [0, 0, 0, 1], got {bottom:?}"
            )));
        }
        let mut rotation = Matrix3::new(
            c2w[0], c2w[1], c2w[2], c2w[4], c2w[5], c2w[6], c2w[8], c2w[9], c2w[10],
        );
        let err = orthonormality_error(&rotation);
        if err > tolerance || rotation.determinant() <= 0.0 {
            return Err(Error::Validation(format!(
                "camera rotation is not a proper orthonormal matrix (max error {err:.3e})"
            )));
        }
        if err > ROTATION_TOLERANCE {
            rotation = orthonormalize(&rotation);
        }
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation: Vec3::new(c2w[3], c2w[7], c2w[11]),
        })
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction.
    /// Principal point at the image center, square pixels.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, width: u32, height: u32, fov_y_deg: f64) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        let fy = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Self {
            width,
            height,
            fx: fy,
            fy,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            rotation,
            translation: eye,
        }
    }

    /// Row-major camera-to-world transform.
    pub fn c2w(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Ray through the center of pixel `(u, v)`.
    pub fn ray(&self, u: u32, v: u32) -> Ray {
        self.ray_through(u as f64 + 0.5, v as f64 + 0.5)
    }

    /// Ray through continuous image coordinates (pixel centers sit at `k + 0.5`).
    pub fn ray_through(&self, x: f64, y: f64) -> Ray {
        let d = Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0);
        Ray {
            origin: self.translation,
            dir: (self.rotation * d).normalize(),
        }
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.tr_mul(&(p - self.translation))
    }

    /// Continuous image coordinates of `p`, or `None` when `p` is not in front of the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let c = self.to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// Pixel containing the projection of `p`, if it lands inside the image.
    pub fn pixel_of(&self, p: &Vec3) -> Option<(u32, u32)> {
        let (x, y) = self.project(p)?;
        let (u, v) = (x.floor(), y.floor());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as u32, v as u32))
    }

    /// Same pose and field of view at a different resolution.
    pub fn resized(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            width,
            height,
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            ..self.clone()
        }
    }
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    u * v_t
}
