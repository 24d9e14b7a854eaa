//! In-memory images and masks plus their PNG codecs.
//!
//! Colors live in linear `[0, 1]` floats. 8-bit conversion happens only at
//! file and wire boundaries.

use std::io::Cursor;
use std::path::Path;

use bitvec::vec::BitVec;
use image::{GrayImage, ImageFormat, RgbImage as Rgb8Image};

use crate::error::{Error, Result};

pub type Rgb = [f32; 3];

/// Quantizes a `[0, 1]` value to 8 bits (`round(255 v)`).
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn from_u8(v: u8) -> f32 {
    v as f32 / 255.0
}

/// Axis-aligned pixel rectangle. Square unless the image is too narrow to fit one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl CropRect {
    pub fn full(width: u32, height: u32) -> Self {
        Self { x: 0, y: 0, width, height }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<Rgb>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        Self {
            width,
            height,
            data: vec![color; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = c;
    }

    pub fn same_size<T: Sized2d>(&self, other: &T) -> bool {
        (self.width, self.height) == other.size()
    }

    pub fn crop(&self, rect: CropRect) -> RgbImage {
        let mut out = RgbImage::new(rect.width, rect.height);
        for y in 0..rect.height {
            for x in 0..rect.width {
                out.set(x, y, self.get(rect.x + x, rect.y + y));
            }
        }
        out
    }

    pub fn to_rgb8(&self) -> Rgb8Image {
        Rgb8Image::from_fn(self.width, self.height, |x, y| {
            let c = self.get(x, y);
            image::Rgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])])
        })
    }

    pub fn from_rgb8(img: &Rgb8Image) -> Self {
        let data = img
            .pixels()
            .map(|p| [from_u8(p[0]), from_u8(p[1]), from_u8(p[2])])
            .collect();
        Self {
            width: img.width(),
            height: img.height(),
            data,
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(|buf| self.to_rgb8().write_to(buf, ImageFormat::Png))
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_png(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png()?).map_err(|e| Error::io(path, e))
    }

    /// Copy with every value rounded to the nearest 8-bit level.
    pub fn quantized(&self) -> RgbImage {
        Self::from_rgb8(&self.to_rgb8())
    }
}

/// Binary bitmap, one bit per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskImage {
    pub width: u32,
    pub height: u32,
    bits: BitVec,
}

impl MaskImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: BitVec::repeat(false, width as usize * height as usize),
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: BitVec::repeat(true, width as usize * height as usize),
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits.set(y as usize * w + x as usize, v);
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    /// Set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter_ones()
            .map(move |i| ((i % w) as u32, (i / w) as u32))
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        self.iter_set().fold(None, |acc, (x, y)| {
            Some(match acc {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            })
        })
    }

    pub fn crop(&self, rect: CropRect) -> MaskImage {
        MaskImage::from_fn(rect.width, rect.height, |x, y| self.get(rect.x + x, rect.y + y))
    }

    /// Pixelwise union with another mask of the same size.
    pub fn union(&self, other: &MaskImage) -> MaskImage {
        assert_eq!(self.size(), other.size(), "mask size mismatch");
        let mut bits = self.bits.clone();
        bits |= other.bits.clone();
        MaskImage {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// Values `>= 128` are inside.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y)[0] >= 128)
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(|buf| self.to_gray().write_to(buf, ImageFormat::Png))
    }

    /// Decodes any PNG, thresholding its luma at 128.
    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Ok(Self::from_gray(&img.to_luma8()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_png(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png()?).map_err(|e| Error::io(path, e))
    }
}

/// Soft mask with values clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatMask {
    pub width: u32,
    pub height: u32,
    data: Vec<f32>,
}

impl FloatMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f32) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.set(x, y, f(x, y));
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Stores `v` clamped to `[0, 1]`; NaN becomes 0.
    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| image::Luma([to_u8(self.get(x, y))]))
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(|buf| self.to_gray().write_to(buf, ImageFormat::Png))
    }
}

/// PSNR in dB (peak 1) between `a` and `b` over pixels where `select` holds.
/// `None` when no pixel is selected; infinite for identical pixels.
pub fn psnr_where(a: &RgbImage, b: &RgbImage, select: impl Fn(u32, u32) -> bool) -> Result<Option<f64>> {
    if !a.same_size(b) {
        return Err(Error::invalid("PSNR of images with different sizes"));
    }
    let (mut sum, mut n) = (0.0f64, 0usize);
    for y in 0..a.height {
        for x in 0..a.width {
            if select(x, y) {
                let (p, q) = (a.get(x, y), b.get(x, y));
                sum += (0..3).map(|c| (p[c] as f64 - q[c] as f64).powi(2)).sum::<f64>();
                n += 3;
            }
        }
    }
    Ok((n > 0).then(|| -10.0 * (sum / n as f64).log10()))
}

/// Mean color over pixels where `select` holds.
pub fn mean_color_where(img: &RgbImage, select: impl Fn(u32, u32) -> bool) -> Option<[f64; 3]> {
    let (mut sum, mut n) = ([0.0f64; 3], 0usize);
    for y in 0..img.height {
        for x in 0..img.width {
            if select(x, y) {
                let c = img.get(x, y);
                (0..3).for_each(|k| sum[k] += c[k] as f64);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum.map(|v| v / n as f64))
}

pub trait Sized2d {
    fn size(&self) -> (u32, u32);
}

impl Sized2d for RgbImage {
    fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

impl Sized2d for MaskImage {
    fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

impl Sized2d for FloatMask {
    fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

fn encode_png(
    write: impl FnOnce(&mut Cursor<Vec<u8>>) -> std::result::Result<(), image::ImageError>,
) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    write(&mut buf)?;
    Ok(buf.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gray_threshold_is_128() {
        let img = GrayImage::from_fn(3, 1, |x, _| image::Luma([[127u8, 128, 255][x as usize]]));
        let m = MaskImage::from_gray(&img);
        assert!(!m.get(0, 0) && m.get(1, 0) && m.get(2, 0));
    }

    #[test]
    fn bbox_and_crop() {
        let mut m = MaskImage::new(8, 6);
        m.set(2, 1, true);
        m.set(5, 4, true);
        assert_eq!(m.bbox(), Some((2, 1, 5, 4)));
        let c = m.crop(CropRect { x: 2, y: 1, width: 4, height: 4 });
        assert!(c.get(0, 0) && c.get(3, 3));
        assert_eq!(c.count(), 2);
        assert_eq!(MaskImage::new(3, 3).bbox(), None);
    }

    #[test]
    fn masked_psnr_and_mean() {
        let a = RgbImage::filled(4, 4, [0.5; 3]);
        let mut b = a.clone();
        b.set(0, 0, [0.6, 0.5, 0.5]);
        // one channel off by 0.1 over 3 samples: mse = 0.01 / 3
        let p = psnr_where(&a, &b, |x, y| x == 0 && y == 0).unwrap().unwrap();
        assert!((p - 10.0 * 300f64.log10()).abs() < 1e-4);
        assert_eq!(psnr_where(&a, &b, |x, _| x > 0).unwrap(), Some(f64::INFINITY));
        assert_eq!(psnr_where(&a, &b, |_, _| false).unwrap(), None);
        let m = mean_color_where(&b, |x, y| x + y == 0).unwrap();
        assert!((m[0] - 0.6).abs() < 1e-6);
    }

    #[test]
    fn float_mask_clamps() {
        let mut m = FloatMask::new(2, 1);
        m.set(0, 0, 1.7);
        m.set(1, 0, f32::NAN);
        assert_eq!(m.values(), &[1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn png_round_trip_is_lossless_for_8bit(pixels in prop::collection::vec(any::<[u8; 3]>(), 12)) {
            let img = Rgb8Image::from_fn(4, 3, |x, y| image::Rgb(pixels[(y * 4 + x) as usize]));
            let decoded = RgbImage::from_rgb8(&img);
            let again = RgbImage::from_png(&decoded.to_png().unwrap()).unwrap();
            prop_assert_eq!(again.to_rgb8(), img);
        }

        #[test]
        fn mask_png_round_trip(bits in prop::collection::vec(any::<bool>(), 20)) {
            let m = MaskImage::from_fn(5, 4, |x, y| bits[(y * 5 + x) as usize]);
            prop_assert_eq!(MaskImage::from_png(&m.to_png().unwrap()).unwrap(), m);
        }
    }
}
