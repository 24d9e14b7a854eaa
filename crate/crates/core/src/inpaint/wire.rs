//! JSON bodies of `POST /v1/inpaint`.
//!
//! Images travel as base64 PNG. The mask is 8-bit grayscale where a value
//! ≥ 128 means "inpaint here". Errors carry `{"error": "..."}`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Conditioning, InpaintRequest};
use crate::error::{Error, Result};
use crate::imaging::{MaskImage, RgbImage};

pub const INPAINT_PATH: &str = "/v1/inpaint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub image: String,
    pub mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    pub strength: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub image: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}

pub fn encode_png(png: &[u8]) -> String {
    STANDARD.encode(png)
}

pub fn decode_b64(context: &str, text: &str) -> Result<Vec<u8>> {
    STANDARD.decode(text).map_err(|e| Error::Protocol(format!("{context}: invalid base64: {e}")))
}

impl WireRequest {
    pub fn from_request(req: &InpaintRequest) -> Result<Self> {
        let (prompt, reference_image) = match &req.conditioning {
            Conditioning::None => (None, None),
            Conditioning::Prompt(p) => (Some(p.clone()), None),
            Conditioning::Reference(img) => (None, Some(encode_png(&img.to_png()?))),
        };
        Ok(Self {
            image: encode_png(&req.image.to_png()?),
            mask: encode_png(&req.mask.to_png()?),
            prompt,
            reference_image,
            strength: req.strength,
            seed: req.seed,
            steps: req.steps,
        })
    }

    /// Decodes and validates a request body. Every failure is a protocol error.
    pub fn into_request(self) -> Result<InpaintRequest> {
        let png = |field: &str, text: &str| -> Result<Vec<u8>> { decode_b64(field, text) };
        let image = RgbImage::from_png(&png("image", &self.image)?)
            .map_err(|e| Error::Protocol(format!("image: {e}")))?;
        let mask = MaskImage::from_png(&png("mask", &self.mask)?).map_err(|e| Error::Protocol(format!("mask: {e}")))?;
        let conditioning = match (self.prompt, self.reference_image) {
            (Some(_), Some(_)) => return Err(Error::Protocol("prompt and reference_image are exclusive".into())),
            (Some(p), None) => Conditioning::Prompt(p),
            (None, Some(r)) => Conditioning::Reference(
                RgbImage::from_png(&png("reference_image", &r)?)
                    .map_err(|e| Error::Protocol(format!("reference_image: {e}")))?,
            ),
            (None, None) => Conditioning::None,
        };
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::Protocol(format!("strength {} outside [0, 1]", self.strength)));
        }
        let req = InpaintRequest { image, mask, conditioning, strength: self.strength, seed: self.seed, steps: self.steps };
        req.validate()?;
        Ok(req)
    }
}

impl WireResponse {
    pub fn from_image(image: &RgbImage) -> Result<Self> {
        Ok(Self { image: encode_png(&image.to_png()?) })
    }

    pub fn into_image(self) -> Result<RgbImage> {
        let bytes = decode_b64("response image", &self.image)?;
        RgbImage::from_png(&bytes).map_err(|e| Error::Protocol(format!("response image: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_round_trips_through_json() {
        let mut img = RgbImage::new(3, 2);
        img.set(1, 1, [1.0, 0.0, 0.2].map(|v: f32| crate::imaging::from_u8(crate::imaging::to_u8(v))));
        let mask = MaskImage::from_fn(3, 2, |u, _| u == 1);
        let mut req = InpaintRequest::new(img, mask, 0.75, 42);
        req.conditioning = Conditioning::Prompt("a red hat".into());
        req.steps = Some(20);
        let json = serde_json::to_string(&WireRequest::from_request(&req).unwrap()).unwrap();
        let back: WireRequest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_request().unwrap(), req);
    }

    #[test]
    fn optional_fields_are_omitted() {
        let req = InpaintRequest::new(RgbImage::new(1, 1), MaskImage::new(1, 1), 1.0, 0);
        let v = serde_json::to_value(WireRequest::from_request(&req).unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["image", "mask", "seed", "strength"]);
    }

    #[test]
    fn garbage_is_a_protocol_error() {
        let bad = WireResponse { image: "!!".into() };
        assert!(matches!(bad.into_image(), Err(Error::Protocol(_))));
    }
}
