//! Recolors the sphere of the sphere-in-box scene red and reports how much
//! of the edit leaked outside the region, with and without the
//! out-of-region penalty.
//!
//! `DESK_STEPS`, `DESK_UPDATE` and `DESK_FIT_STEPS` shrink the run.

use std::time::Instant;

use hullpaint::desk::{edit_metrics, prepare_desk_scene, DeskOptions};
use hullpaint::idu::{run_edit_job, JobOptions};
use hullpaint::inpaint::{backend_from_spec, Conditioning};

fn env_u64(name: &str) -> Option<u64> {
    std::env::var(name).ok()?.parse().ok()
}

fn main() -> hullpaint::Result<()> {
    env_logger::init();
    let mut opts = DeskOptions::default();
    if let Some(n) = env_u64("DESK_FIT_STEPS") {
        opts.fit_steps = n;
    }
    let mut config = opts.job_config();
    config.n_steps = env_u64("DESK_STEPS").unwrap_or(config.n_steps);
    config.n_update = env_u64("DESK_UPDATE").unwrap_or(config.n_update);

    let t = Instant::now();
    let desk = prepare_desk_scene(&opts, &config.sampling)?;
    println!(
        "fitted original in {:.1}s, final loss {:.5}",
        t.elapsed().as_secs_f64(),
        desk.fit_losses.last().copied().unwrap_or(f64::NAN)
    );

    let backend = backend_from_spec(&config.backend, config.backend_timeout(), config.backend_retries)?;
    let cameras = desk.dataset.cameras();
    for constrained in [true, false] {
        let t = Instant::now();
        let cfg = hullpaint::idu::EditJobConfig { constrained, ..config.clone() };
        let out = run_edit_job(
            &cfg,
            desk.dataset.clone(),
            &desk.original,
            &desk.hull,
            backend.as_ref(),
            &Conditioning::None,
            JobOptions::default(),
        )?;
        let m = edit_metrics(&desk.original, &out.field, &cameras, &out.masks, &cfg.sampling)?;
        println!(
            "constrained={constrained}: {:.1}s, outside PSNR mean {:.2} dB min {:.2} dB, inside mean [{:.3}, {:.3}, {:.3}]",
            t.elapsed().as_secs_f64(),
            m.mean_outside_psnr,
            m.min_outside_psnr(),
            m.inside_mean[0],
            m.inside_mean[1],
            m.inside_mean[2]
        );
    }
    Ok(())
}
