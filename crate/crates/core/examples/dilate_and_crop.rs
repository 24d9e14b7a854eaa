//! Dilates a mask with a disc and draws the crops an inpainter would see.

use hullpaint::maskproj::{dilate, disc_offsets, select_crop, DEFAULT_DILATION};
use hullpaint::MaskImage;

fn main() -> hullpaint::Result<()> {
    let mask = MaskImage::from_fn(96, 64, |x, y| (30..46).contains(&x) && (20..30).contains(&y));
    println!("disc of diameter {DEFAULT_DILATION}: {} offsets", disc_offsets(DEFAULT_DILATION)?.len());
    let dilated = dilate(&mask, DEFAULT_DILATION)?;
    println!("mask {} pixels, dilated {} pixels, bbox {:?}", mask.count(), dilated.count(), dilated.bbox());
    for seed in 0..4 {
        let c = select_crop(&dilated, (1.5, 2.5), seed)?;
        println!("seed {seed}: crop {c:?}");
    }
    Ok(())
}
