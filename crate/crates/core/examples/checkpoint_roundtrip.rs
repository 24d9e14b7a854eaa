//! Writes a field checkpoint with metadata and an extra tensor, reads it back
//! and compares.

use hullpaint::field::Tensor;
use hullpaint::scene::Checkpoint;
use hullpaint::{FieldConfig, RadianceField};

fn main() -> hullpaint::Result<()> {
    let field = RadianceField::<f32>::new(FieldConfig::default(), 7)?;
    let mut ckpt = Checkpoint::new(field);
    ckpt.meta = serde_json::json!({"note": "example"});
    ckpt.extra.push(Tensor { name: "scratch".into(), shape: vec![2, 2], data: vec![1.0, 2.0, 3.0, 4.0] });
    let bytes = ckpt.to_bytes()?;
    println!("{} parameters, {} bytes, magic {:?}", ckpt.field.param_count(), bytes.len(), std::str::from_utf8(&bytes[..4]));
    let back = Checkpoint::from_bytes(&bytes)?;
    println!("identical after reload: {}", back == ckpt);
    let mut bad = bytes.clone();
    bad[4] = 9;
    println!("version 9: {}", Checkpoint::from_bytes(&bad).unwrap_err());
    Ok(())
}
