//! Alpha compositing of a handful of samples along one ray.

use hullpaint::field::render::{composite, opacity};

fn main() -> hullpaint::Result<()> {
    let sigmas = [0.0, 0.5, 2f64.ln(), 4.0, 20.0];
    let deltas = [0.5; 5];
    let colors = [[1.0, 1.0, 1.0], [0.9, 0.1, 0.1], [0.1, 0.9, 0.1], [0.1, 0.1, 0.9], [0.0, 0.0, 0.0]];
    let c = composite(&sigmas, &colors, &deltas)?;
    for (i, w) in c.weights.iter().enumerate() {
        println!("sample {i}: sigma {:6.3}  opacity {:.4}  weight {:.4}", sigmas[i], opacity(sigmas[i] * deltas[i]), w);
    }
    println!("color [{:.4}, {:.4}, {:.4}], residual transmittance {:.3e}", c.color[0], c.color[1], c.color[2], c.transmittance);
    println!("sum of weights + transmittance = {}", c.weights.iter().sum::<f64>() + c.transmittance);
    Ok(())
}
