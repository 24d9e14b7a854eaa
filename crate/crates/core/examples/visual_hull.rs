//! Carves a visual hull from three silhouettes of a sphere and checks which
//! points fall inside it.

use std::time::Instant;

use hullpaint::scene::{generate_synthetic_scene, SyntheticKind, SyntheticSpec};
use hullpaint::{hull_from_masks, Vec3};

fn main() -> hullpaint::Result<()> {
    let spec = SyntheticSpec { kind: SyntheticKind::SphereInBox, views: 12, resolution: 96 };
    let (dataset, scene) = generate_synthetic_scene(&spec, 0)?;
    let cameras = dataset.cameras();

    for n in [1, 2, 3, 6] {
        let step = cameras.len() / n;
        let chosen: Vec<_> = cameras.iter().step_by(step).take(n).cloned().collect();
        let hull = hull_from_masks(scene.target_silhouettes(&chosen, 0.0)?)?;
        // Fraction of a grid inside the hull versus inside the sphere itself.
        let (mut in_hull, mut in_target) = (0usize, 0usize);
        let k = 40;
        for i in 0..k * k * k {
            let p = Vec3::new((i % k) as f64, ((i / k) % k) as f64, (i / (k * k)) as f64) / (k as f64 - 1.0) * 2.0
                - Vec3::repeat(1.0);
            in_hull += usize::from(hull.contains(&p));
            in_target += usize::from(scene.in_target(&p, 0.0));
        }
        println!("{n} silhouette(s): {in_hull} grid points in the hull, {in_target} in the sphere");
    }

    let hull = hull_from_masks(scene.target_silhouettes(&cameras[..3], 0.0)?)?;
    let points: Vec<Vec3> = (0..1_000_000).map(|i| Vec3::new((i % 997) as f64 / 498.5 - 1.0, 0.1, 0.0)).collect();
    let t = Instant::now();
    let hits = points.iter().filter(|p| hull.contains(p)).count();
    println!("{hits} hits, {:.2e} queries/s", points.len() as f64 / t.elapsed().as_secs_f64());
    Ok(())
}
