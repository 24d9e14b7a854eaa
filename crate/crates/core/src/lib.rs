//! Region-constrained editing of radiance fields driven by 2D inpainting.
//!
//! A learnable density/color field is edited only inside a region lifted
//! from a few posed silhouettes (or a posed mesh). Training images are
//! periodically replaced by inpainted renders while a visibility-weighted
//! penalty holds everything outside the region to a frozen copy of the
//! original field.

pub mod camera;
pub mod desk;
pub mod edit_loss;
pub mod error;
pub mod field;
pub mod hull;
pub mod idu;
pub mod imaging;
pub mod inpaint;
pub mod maskproj;
pub mod real;
pub mod scene;

pub use camera::{CameraModel, Ray, Vec3};
pub use error::{Error, Result};
pub use field::{Aabb, FieldConfig, RadianceField};
pub use hull::{hull_from_masks, PosedMask, VisualHull};
pub use imaging::{CropRect, FloatMask, MaskImage, RgbImage};
