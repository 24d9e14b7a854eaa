//! Silhouettes from a posed triangle mesh.
//!
//! Every triangle is drawn, front or back facing, in white on black. A pixel
//! is set iff its center is covered by some triangle at camera depth z > 0.
//! Triangles are clipped against a near plane just in front of the camera,
//! and edge ties follow the top-left rule.

use std::path::Path;

use rayon::prelude::*;

use super::PosedMask;
use crate::camera::{CameraModel, Vec3};
use crate::error::{Error, Result};
use crate::imaging::MaskImage;

const NEAR_CLIP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct PosedMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
}

impl PosedMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("non-finite vertex {v:?}")));
        }
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::invalid(format!("triangle {t:?} indexes past {n} vertices")));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Parses the `v` and triangular `f` records of an ASCII OBJ file.
    /// Face tokens may carry `/vt/vn` suffixes and negative indices.
    /// Other records are skipped with a warning.
    pub fn parse_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut skipped = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let ctx = || format!("OBJ line {}", lineno + 1);
            let line = line.split('#').next().unwrap_or("").trim();
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                None => {}
                Some("v") => {
                    let xyz: Vec<f64> = tokens
                        .take(3)
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::parse(ctx(), e.to_string()))?;
                    if xyz.len() != 3 {
                        return Err(Error::parse(ctx(), "vertex needs three coordinates"));
                    }
                    vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = tokens
                        .map(|t| resolve_index(t, vertices.len()))
                        .collect::<std::result::Result<_, String>>()
                        .map_err(|e| Error::parse(ctx(), e))?;
                    if idx.len() != 3 {
                        return Err(Error::parse(ctx(), format!("face has {} vertices; only triangles are supported", idx.len())));
                    }
                    triangles.push([idx[0], idx[1], idx[2]]);
                }
                Some(_) => skipped += 1,
            }
        }
        if skipped > 0 {
            log::warn!("ignored {skipped} OBJ records other than v and f");
        }
        Self::new(vertices, triangles)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_obj(&text)
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }

    /// Applies a 4×4 row-major affine transform (rotation, uniform scale, translation).
    pub fn transformed(&self, m: &[f64; 16]) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) || m[12..] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Validation("mesh transform must be affine with bottom row 0 0 0 1".into()));
        }
        let vertices = self
            .vertices
            .iter()
            .map(|p| {
                Vec3::new(
                    m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
                    m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
                    m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11],
                )
            })
            .collect();
        Ok(Self { vertices, triangles: self.triangles.clone() })
    }

    /// Axis-aligned cube of half-size `half`, 12 triangles.
    pub fn cube(center: Vec3, half: f64) -> Self {
        let vertices = (0..8)
            .map(|i| {
                let s = |b: usize| if i >> b & 1 == 1 { half } else { -half };
                center + Vec3::new(s(0), s(1), s(2))
            })
            .collect();
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        Self { vertices, triangles }
    }

    /// Latitude-longitude sphere with `stacks` ≥ 2 and `slices` ≥ 3.
    pub fn uv_sphere(center: Vec3, radius: f64, stacks: u32, slices: u32) -> Self {
        let (stacks, slices) = (stacks.max(2), slices.max(3));
        let mut vertices = vec![center + Vec3::new(0.0, 0.0, radius)];
        for i in 1..stacks {
            let theta = std::f64::consts::PI * i as f64 / stacks as f64;
            for j in 0..slices {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
                vertices.push(center + radius * Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
            }
        }
        vertices.push(center - Vec3::new(0.0, 0.0, radius));
        let south = vertices.len() as u32 - 1;
        let ring = |i: u32, j: u32| 1 + (i - 1) * slices + j % slices;
        let mut triangles = Vec::new();
        for j in 0..slices {
            triangles.push([0, ring(1, j), ring(1, j + 1)]);
            triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        Self { vertices, triangles }
    }
}

fn resolve_index(token: &str, count: usize) -> std::result::Result<u32, String> {
    let head = token.split('/').next().unwrap_or("");
    let i: i64 = head.parse().map_err(|_| format!("bad face index {token:?}"))?;
    let resolved = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || resolved < 0 || resolved >= count as i64 {
        return Err(format!("face index {i} out of range for {count} vertices"));
    }
    Ok(resolved as u32)
}

/// Six cameras on the coordinate axes looking at `center` from `distance`.
pub fn axis_cameras(center: Vec3, distance: f64, resolution: u32, fov_y_deg: f64) -> Vec<CameraModel> {
    let dirs = [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()];
    dirs.iter()
        .map(|d| {
            let up = if d.y != 0.0 { Vec3::z() } else { Vec3::y() };
            CameraModel::look_at(center + distance * d, center, up, resolution, resolution, fov_y_deg)
        })
        .collect()
}

/// Rasterized coverage of `mesh` in `camera`.
pub fn rasterize(mesh: &PosedMesh, camera: &CameraModel) -> MaskImage {
    let mut mask = MaskImage::new(camera.width, camera.height);
    let mut poly = Vec::with_capacity(4);
    for t in &mesh.triangles {
        let cam_pts = t.map(|i| camera.to_camera(&mesh.vertices[i as usize]));
        clip_near(&cam_pts, &mut poly);
        if poly.len() < 3 {
            continue;
        }
        let px: Vec<[f64; 2]> = poly
            .iter()
            .map(|c| [camera.fx * c.x / c.z + camera.cx, camera.fy * c.y / c.z + camera.cy])
            .collect();
        for k in 1..px.len() - 1 {
            fill_triangle(&mut mask, px[0], px[k], px[k + 1]);
        }
    }
    mask
}

/// Clips a camera-space triangle to z ≥ NEAR_CLIP.
fn clip_near(tri: &[Vec3; 3], out: &mut Vec<Vec3>) {
    out.clear();
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let (ina, inb) = (a.z >= NEAR_CLIP, b.z >= NEAR_CLIP);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let s = (NEAR_CLIP - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * s;
            p.z = NEAR_CLIP;
            out.push(p);
        }
    }
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Whether the directed edge a→b is a top or left edge for the winding used
/// in [`fill_triangle`] (interior where `edge > 0`, image y pointing down).
#[inline]
fn top_left(a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

fn fill_triangle(mask: &mut MaskImage, a: [f64; 2], mut b: [f64; 2], mut c: [f64; 2]) {
    let area = edge(a, b, c);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        std::mem::swap(&mut b, &mut c);
    }
    let (w, h) = (mask.width as f64, mask.height as f64);
    let lo_x = a[0].min(b[0]).min(c[0]).floor().max(0.0);
    let hi_x = a[0].max(b[0]).max(c[0]).ceil().min(w - 1.0);
    let lo_y = a[1].min(b[1]).min(c[1]).floor().max(0.0);
    let hi_y = a[1].max(b[1]).max(c[1]).ceil().min(h - 1.0);
    if lo_x > hi_x || lo_y > hi_y {
        return;
    }
    let edges = [(b, c), (c, a), (a, b)];
    let bias = edges.map(|(p, q)| top_left(p, q));
    for v in lo_y as u32..=hi_y as u32 {
        for u in lo_x as u32..=hi_x as u32 {
            let p = [u as f64 + 0.5, v as f64 + 0.5];
            let covered = edges.iter().zip(&bias).all(|(&(p0, p1), &tl)| {
                let e = edge(p0, p1, p);
                e > 0.0 || (e == 0.0 && tl)
            });
            if covered {
                mask.set(u, v, true);
            }
        }
    }
}

/// One silhouette per camera. Cameras that see nothing get an all-clear mask
/// and a warning.
pub fn silhouettes_from_mesh(mesh: &PosedMesh, cameras: &[CameraModel]) -> Result<Vec<PosedMask>> {
    if cameras.is_empty() {
        return Err(Error::invalid("at least one camera is required"));
    }
    cameras
        .par_iter()
        .enumerate()
        .map(|(i, cam)| {
            let mask = rasterize(mesh, cam);
            if mask.is_empty() {
                log::warn!("mesh is not visible from silhouette camera {i}");
            }
            PosedMask::new(cam.clone(), mask)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn front_camera() -> CameraModel {
        CameraModel::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::y(), 16, 16, 60.0)
    }

    #[test]
    fn parses_triangles_and_rejects_quads() {
        let m = PosedMesh::parse_obj("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(PosedMesh::parse_obj(quad), Err(Error::Parse { .. })));
        assert!(PosedMesh::parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
        assert!(PosedMesh::parse_obj("v 0 0 0\n").is_err());
    }

    #[test]
    fn obj_round_trip() {
        let cube = PosedMesh::cube(Vec3::new(0.5, -0.25, 1.0), 0.5);
        assert_eq!(PosedMesh::parse_obj(&cube.to_obj()).unwrap(), cube);
    }

    #[test]
    fn huge_triangle_covers_everything() {
        let m = PosedMesh::new(
            vec![Vec3::new(-100.0, -100.0, 0.0), Vec3::new(100.0, -100.0, 0.0), Vec3::new(0.0, 200.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(rasterize(&m, &front_camera()).count(), 256);
    }

    #[test]
    fn mesh_behind_camera_is_invisible() {
        let m = PosedMesh::cube(Vec3::new(0.0, 0.0, -6.0), 0.5);
        let masks = silhouettes_from_mesh(&m, &[front_camera()]).unwrap();
        assert!(masks[0].mask.is_empty());
    }

    #[test]
    fn triangle_crossing_the_camera_plane_is_clipped() {
        // One vertex behind the camera: only the part in front may be drawn.
        let m = PosedMesh::new(
            vec![Vec3::new(-0.2, 0.0, 0.0), Vec3::new(0.2, 0.0, 0.0), Vec3::new(0.0, 0.0, -10.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let mask = rasterize(&m, &front_camera());
        assert!(mask.count() < 256);
    }

    #[test]
    fn shared_edges_are_not_double_counted_or_dropped() {
        // Two triangles of a square split on an edge passing through pixel centers.
        let cam = CameraModel::new(8, 8, 1.0, 1.0, 0.0, 0.0, [1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1.]).unwrap();
        let v = |x: f64, y: f64| Vec3::new(x, y, 1.0);
        let square = PosedMesh::new(vec![v(0.5, 0.5), v(6.5, 0.5), v(6.5, 6.5), v(0.5, 6.5)], vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let whole = rasterize(&square, &cam);
        let lower = rasterize(&PosedMesh::new(square.vertices.clone(), vec![[0, 1, 2]]).unwrap(), &cam);
        let upper = rasterize(&PosedMesh::new(square.vertices.clone(), vec![[0, 2, 3]]).unwrap(), &cam);
        assert_eq!(lower.count() + upper.count(), whole.count());
    }

    #[test]
    fn axis_cameras_look_at_center() {
        let c = Vec3::new(0.1, 0.2, 0.3);
        for cam in axis_cameras(c, 3.0, 16, 45.0) {
            let (x, y) = cam.project(&c).unwrap();
            assert!((x - 8.0).abs() < 1e-9 && (y - 8.0).abs() < 1e-9);
        }
    }
}
