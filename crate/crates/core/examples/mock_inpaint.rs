//! The mock inpainting backend at several strengths. Writes the results
//! into `target/mock_inpaint`.

use hullpaint::inpaint::{InpaintBackend, InpaintRequest, MockBackend, MockTarget};
use hullpaint::{MaskImage, RgbImage};

fn main() -> hullpaint::Result<()> {
    let out = std::path::Path::new("target/mock_inpaint");
    std::fs::create_dir_all(out).map_err(|e| hullpaint::Error::Io { path: out.into(), source: e })?;
    let mask = MaskImage::from_fn(64, 64, |x, y| (x as i32 - 32).pow(2) + (y as i32 - 32).pow(2) < 200);
    // A gradient with a yellow blob under the mask.
    let mut image = RgbImage::new(64, 64);
    for y in 0..64 {
        for x in 0..64 {
            let c = if mask.get(x, y) { [1.0, 0.9, 0.0] } else { [x as f32 / 63.0, y as f32 / 63.0, 0.5] };
            image.set(x, y, c);
        }
    }
    for target in ["solid:1,0,0", "smooth"] {
        let backend = MockBackend::new(MockTarget::parse(target)?);
        for strength in [1.0, 0.6, 0.2] {
            let resp = backend.inpaint(&InpaintRequest::new(image.clone(), mask.clone(), strength, 0))?;
            let c = resp.image.get(32, 32);
            println!("{target} s={strength}: center [{:.3}, {:.3}, {:.3}]", c[0], c[1], c[2]);
            resp.image.save(out.join(format!("{}_{strength}.png", target.replace([':', ','], "_"))))?;
        }
    }
    Ok(())
}
