//! The out-of-region penalty on a two-ray batch: only samples outside the
//! region count, weighted by how visible they are in either field.

use hullpaint::edit_loss::{l_out, ConstraintSampleBatch, DensityResidual, EditLossWeights, SampleValues};

fn s(sigma: f64, color: [f64; 3], weight: f64) -> SampleValues {
    SampleValues { sigma, color, weight }
}

fn main() -> hullpaint::Result<()> {
    let frozen = vec![s(0.0, [0.5; 3], 0.0), s(5.0, [0.2, 0.4, 0.9], 0.8), s(1.0, [0.3; 3], 0.1), s(3.0, [0.8; 3], 0.6)];
    let mut edited = frozen.clone();
    // Recolor the in-region sample freely; drift slightly outside.
    edited[1].color = [1.0, 0.0, 0.0];
    edited[3].sigma = 3.2;
    let batch = ConstraintSampleBatch {
        edited,
        frozen,
        deltas: vec![0.05; 4],
        inside: vec![false, true, false, false],
        ray_offsets: vec![0, 3, 4],
    };
    for residual in [DensityResidual::Density, DensityResidual::Opacity] {
        let w = EditLossWeights { residual, ..EditLossWeights::default() };
        println!("{residual:?}: L_out = {:.6}", l_out(&batch, &w)?);
    }
    Ok(())
}
