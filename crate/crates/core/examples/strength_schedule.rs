//! Inpainting strength at every dataset update of a schedule.

use hullpaint::idu::{strength_at, update_steps};

fn main() -> hullpaint::Result<()> {
    for (n_steps, n_update) in [(3000, 200), (90_000, 6000)] {
        let line: Vec<String> = update_steps(n_steps, n_update)
            .map(|n| strength_at(n, n_steps).map(|s| format!("{n}:{s:.3}")))
            .collect::<hullpaint::Result<_>>()?;
        println!("N={n_steps}, every {n_update}: {}", line.join(" "));
    }
    Ok(())
}
