//! Deterministic stand-in for a diffusion inpainter.
//!
//! Masked pixels become `(1 − s)·input + s·target`; clear pixels are copied.

use super::{check_strength, Conditioning, InpaintBackend, InpaintRequest, InpaintResponse};
use crate::error::{Error, Result};
use crate::imaging::{MaskImage, Rgb, RgbImage};

const SMOOTH_MAX_SWEEPS: usize = 2000;
const SMOOTH_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub enum MockTarget {
    Solid(Rgb),
    /// Tiled reference, anchored at the mask's bounding-box corner.
    Tile(RgbImage),
    /// Harmonic interpolation of the colors bordering the mask.
    Smooth,
}

impl MockTarget {
    /// Parses `solid:R,G,B`, `tile:<png path>` or `smooth`.
    pub fn parse(spec: &str) -> Result<Self> {
        if spec == "smooth" {
            return Ok(MockTarget::Smooth);
        }
        if let Some(rgb) = spec.strip_prefix("solid:") {
            let parts: Vec<f32> = rgb
                .split(',')
                .map(|p| p.trim().parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::invalid(format!("solid color {rgb:?}: {e}")))?;
            if parts.len() != 3 || parts.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::invalid(format!("solid color {rgb:?} needs three values in [0, 1]")));
            }
            return Ok(MockTarget::Solid([parts[0], parts[1], parts[2]]));
        }
        if let Some(path) = spec.strip_prefix("tile:") {
            return Ok(MockTarget::Tile(RgbImage::load(path)?));
        }
        Err(Error::invalid(format!("unknown mock target {spec:?}")))
    }
}

/// Blends `image` toward `target` inside `mask` with strength `s`.
pub fn mock_inpaint(image: &RgbImage, mask: &MaskImage, target: &MockTarget, s: f64) -> Result<RgbImage> {
    check_strength(s)?;
    if (image.width, image.height) != (mask.width, mask.height) {
        return Err(Error::invalid("image and mask differ in size"));
    }
    let goal = match target {
        MockTarget::Solid(c) => RgbImage::filled(image.width, image.height, *c),
        MockTarget::Tile(reference) => tile(image, mask, reference)?,
        MockTarget::Smooth => harmonic_fill(image, mask),
    };
    let mut out = image.clone();
    for (x, y) in mask.iter_set() {
        let (a, b) = (image.get(x, y), goal.get(x, y));
        out.set(x, y, [0, 1, 2].map(|k| ((1.0 - s) * a[k] as f64 + s * b[k] as f64) as f32));
    }
    Ok(out)
}

fn tile(image: &RgbImage, mask: &MaskImage, reference: &RgbImage) -> Result<RgbImage> {
    if reference.width == 0 || reference.height == 0 {
        return Err(Error::invalid("tile reference is empty"));
    }
    let (x0, y0) = mask.bbox().map(|b| (b.0, b.1)).unwrap_or((0, 0));
    let mut out = RgbImage::new(image.width, image.height);
    for y in 0..image.height {
        for x in 0..image.width {
            let u = (x as i64 - x0 as i64).rem_euclid(reference.width as i64) as u32;
            let v = (y as i64 - y0 as i64).rem_euclid(reference.height as i64) as u32;
            out.set(x, y, reference.get(u, v));
        }
    }
    Ok(out)
}

/// Solves Laplace's equation inside the mask with the surrounding pixels as
/// boundary values, by Gauss–Seidel sweeps from the mean boundary color.
/// A mask covering the whole image fills with mid grey.
fn harmonic_fill(image: &RgbImage, mask: &MaskImage) -> RgbImage {
    let (w, h) = (image.width as i64, image.height as i64);
    let idx = |x: i64, y: i64| (y * w + x) as usize;
    let mut field: Vec<[f64; 3]> = image.data.iter().map(|c| c.map(|v| v as f64)).collect();
    let masked: Vec<(i64, i64)> = mask.iter_set().map(|(x, y)| (x as i64, y as i64)).collect();
    let neighbors = |x: i64, y: i64| {
        [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
            .into_iter()
            .filter(move |&(u, v)| u >= 0 && v >= 0 && u < w && v < h)
    };

    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for &(x, y) in &masked {
        for (u, v) in neighbors(x, y) {
            if !mask.get(u as u32, v as u32) {
                let c = field[idx(u, v)];
                (0..3).for_each(|k| sum[k] += c[k]);
                n += 1;
            }
        }
    }
    let start = if n == 0 { [0.5; 3] } else { sum.map(|s| s / n as f64) };
    for &(x, y) in &masked {
        field[idx(x, y)] = start;
    }
    if n > 0 {
        for _ in 0..SMOOTH_MAX_SWEEPS {
            let mut change: f64 = 0.0;
            for &(x, y) in &masked {
                let mut acc = [0.0; 3];
                let mut count = 0.0;
                for (u, v) in neighbors(x, y) {
                    let c = field[idx(u, v)];
                    (0..3).for_each(|k| acc[k] += c[k]);
                    count += 1.0;
                }
                let old = field[idx(x, y)];
                let new = acc.map(|a| a / count);
                change = change.max((0..3).map(|k| (new[k] - old[k]).abs()).fold(0.0, f64::max));
                field[idx(x, y)] = new;
            }
            if change < SMOOTH_TOLERANCE {
                break;
            }
        }
    }
    RgbImage {
        width: image.width,
        height: image.height,
        data: field.into_iter().map(|c| c.map(|v| v as f32)).collect(),
    }
}

/// In-process backend around [`mock_inpaint`]. A reference-image
/// conditioning overrides the configured target with a tile of that image.
#[derive(Clone, Debug)]
pub struct MockBackend {
    pub target: MockTarget,
}

impl MockBackend {
    pub fn new(target: MockTarget) -> Self {
        Self { target }
    }
}

impl InpaintBackend for MockBackend {
    fn inpaint(&self, request: &InpaintRequest) -> Result<InpaintResponse> {
        request.validate()?;
        let tiled;
        let target = match &request.conditioning {
            Conditioning::Reference(img) => {
                tiled = MockTarget::Tile(img.clone());
                &tiled
            }
            _ => &self.target,
        };
        let image = mock_inpaint(&request.image, &request.mask, target, request.strength)?;
        Ok(InpaintResponse { image })
    }

    fn describe(&self) -> String {
        match &self.target {
            MockTarget::Solid(c) => format!("mock:solid:{},{},{}", c[0], c[1], c[2]),
            MockTarget::Tile(r) => format!("mock:tile({}x{})", r.width, r.height),
            MockTarget::Smooth => "mock:smooth".into(),
        }
    }
}
