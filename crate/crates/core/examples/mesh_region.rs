//! Region from a placed mesh: a cube scaled and moved onto the sphere, its
//! silhouettes rasterized from six axis cameras.

use hullpaint::hull::PosedMesh;
use hullpaint::idu::{hull_from_mesh, mesh_silhouette_cameras};
use hullpaint::Vec3;

fn main() -> hullpaint::Result<()> {
    let cube = PosedMesh::cube(Vec3::zeros(), 1.0);
    // Row-major: uniform scale 0.3, then translate to (0, -0.2, 0).
    let transform = [0.3, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0, -0.2, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 1.0];
    let hull = hull_from_mesh(&cube, &transform, 128, None)?;
    for (i, v) in hull.views().iter().enumerate() {
        println!("silhouette {i}: {} pixels", v.mask.count());
    }
    for p in [Vec3::new(0.0, -0.2, 0.0), Vec3::new(0.29, -0.49, 0.29), Vec3::new(0.0, 0.2, 0.0)] {
        println!("{:?} inside: {}", p.as_slice(), hull.contains(&p));
    }
    let placed = cube.transformed(&transform)?;
    let cams = mesh_silhouette_cameras(&placed, 128);
    println!("silhouette cameras at distance {:.3}", (cams[0].center() - Vec3::new(0.0, -0.2, 0.0)).norm());
    println!("{}", placed.to_obj().lines().take(2).collect::<Vec<_>>().join("\n"));
    Ok(())
}
