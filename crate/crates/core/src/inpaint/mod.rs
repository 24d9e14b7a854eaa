//! 2D inpainting behind a uniform contract.
//!
//! A backend receives an image, a binary mask (set = inpaint here), optional
//! conditioning, a strength `s ∈ [0, 1]` and a seed, and returns an image of
//! the same size. `s = 1` asks for content generated from pure noise, `s = 0`
//! for the input back unchanged. Backends must leave clear pixels alone;
//! callers re-composite with [`composite_masked`] regardless.

pub mod mock;
pub mod remote;
pub mod wire;

use std::time::Duration;

use crate::error::{Error, Result};
use crate::imaging::{MaskImage, RgbImage};

pub use mock::{mock_inpaint, MockBackend, MockTarget};
pub use remote::RemoteBackend;

#[derive(Clone, Debug, Default, PartialEq)]
pub enum Conditioning {
    /// The backend's own default (the mock's built-in target).
    #[default]
    None,
    Prompt(String),
    Reference(RgbImage),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InpaintRequest {
    pub image: RgbImage,
    pub mask: MaskImage,
    pub conditioning: Conditioning,
    pub strength: f64,
    pub seed: u64,
    /// Opaque denoising step hint.
    pub steps: Option<u32>,
}

impl InpaintRequest {
    pub fn new(image: RgbImage, mask: MaskImage, strength: f64, seed: u64) -> Self {
        Self { image, mask, conditioning: Conditioning::None, strength, seed, steps: None }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.image.width, self.image.height) != (self.mask.width, self.mask.height) {
            return Err(Error::Protocol(format!(
                "image is {}x{} but mask is {}x{}",
                self.image.width, self.image.height, self.mask.width, self.mask.height
            )));
        }
        check_strength(self.strength)
    }
}

pub(crate) fn check_strength(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::invalid(format!("strength {s} outside [0, 1]")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InpaintResponse {
    pub image: RgbImage,
}

pub trait InpaintBackend: Send + Sync {
    fn inpaint(&self, request: &InpaintRequest) -> Result<InpaintResponse>;

    /// Short description for logs.
    fn describe(&self) -> String;
}

impl<B: InpaintBackend + ?Sized> InpaintBackend for Box<B> {
    fn inpaint(&self, request: &InpaintRequest) -> Result<InpaintResponse> {
        (**self).inpaint(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<B: InpaintBackend + ?Sized> InpaintBackend for std::sync::Arc<B> {
    fn inpaint(&self, request: &InpaintRequest) -> Result<InpaintResponse> {
        (**self).inpaint(request)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// `base` with the pixels set in `mask` taken from `patch`.
pub fn composite_masked(base: &RgbImage, patch: &RgbImage, mask: &MaskImage) -> Result<RgbImage> {
    if (base.width, base.height) != (patch.width, patch.height) || (base.width, base.height) != (mask.width, mask.height) {
        return Err(Error::invalid("composite inputs differ in size"));
    }
    let mut out = base.clone();
    for (x, y) in mask.iter_set() {
        out.set(x, y, patch.get(x, y));
    }
    Ok(out)
}

/// Builds a backend from a short description:
/// `mock:solid:R,G,B`, `mock:tile:<png path>`, `mock:smooth` or an `http://` base URL.
pub fn backend_from_spec(spec: &str, timeout: Duration, retries: u32) -> Result<Box<dyn InpaintBackend>> {
    if let Some(rest) = spec.strip_prefix("mock:") {
        return Ok(Box::new(MockBackend::new(MockTarget::parse(rest)?)));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Box::new(RemoteBackend::new(spec, timeout, retries)));
    }
    Err(Error::invalid(format!("unknown backend {spec:?}; expected mock:<target> or an http(s) URL")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_keeps_clear_pixels() {
        let base = RgbImage::filled(4, 4, [0.1, 0.2, 0.3]);
        let patch = RgbImage::filled(4, 4, [1.0, 0.0, 0.0]);
        let mask = MaskImage::from_fn(4, 4, |u, v| u == v);
        let out = composite_masked(&base, &patch, &mask).unwrap();
        for v in 0..4 {
            for u in 0..4 {
                assert_eq!(out.get(u, v), if u == v { [1.0, 0.0, 0.0] } else { [0.1, 0.2, 0.3] });
            }
        }
    }

    #[test]
    fn request_checks_sizes_and_strength() {
        let r = InpaintRequest::new(RgbImage::new(4, 4), MaskImage::new(4, 3), 0.5, 0);
        assert!(matches!(r.validate(), Err(Error::Protocol(_))));
        let r = InpaintRequest::new(RgbImage::new(4, 4), MaskImage::new(4, 4), 1.5, 0);
        assert!(matches!(r.validate(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn specs_parse() {
        let d = Duration::from_secs(1);
        assert!(backend_from_spec("mock:solid:1,0,0", d, 0).is_ok());
        assert!(backend_from_spec("mock:smooth", d, 0).is_ok());
        assert!(backend_from_spec("http://127.0.0.1:9", d, 0).is_ok());
        assert!(backend_from_spec("mock:solid:1,0", d, 0).is_err());
        assert!(backend_from_spec("ftp://x", d, 0).is_err());
    }
}
