use rand::Rng;

use super::{ConvexPrimitive, PointCloud, PrimitiveShape, TriangleMesh, Vec3};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// `n` points sampled uniformly by area over the mesh, each carrying the
/// normal of the triangle it was drawn from. Deterministic in `seed`.
pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for t in 0..mesh.triangles().len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    let mut rng = rng_from_seed(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangles()[t].map(|k| mesh.vertices()[k]);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        points.push(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
        normals.push(mesh.face_normal(t));
    }
    PointCloud::with_normals(points, normals)
}

/// `n` points uniformly distributed over the analytic surface of a primitive,
/// in the primitive's parent frame.
pub fn sample_primitive_surface<R: Rng>(prim: &ConvexPrimitive, n: usize, rng: &mut R) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let local = match &prim.shape {
            PrimitiveShape::Sphere { radius } => unit_sphere(rng) * *radius,
            PrimitiveShape::Capsule { a, b, radius } => {
                let axis = b - a;
                let len = axis.norm();
                let cyl = 2.0 * len;
                let caps = 4.0 * radius;
                let dir = axis / len;
                let perp1 = if dir.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
                let u = dir.cross(&perp1).normalize();
                let v = dir.cross(&u);
                if rng.random::<f64>() * (cyl + caps) < cyl {
                    let t: f64 = rng.random();
                    let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                    a + axis * t + (u * phi.cos() + v * phi.sin()) * *radius
                } else {
                    let s = unit_sphere(rng);
                    let base = if s.dot(&dir) >= 0.0 { *b } else { *a };
                    base + s * *radius
                }
            }
            PrimitiveShape::Box { half_extents: h } => {
                let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random::<f64>() * total;
                let mut axis = 2;
                for (k, a) in areas.iter().enumerate() {
                    if pick < *a {
                        axis = k;
                        break;
                    }
                    pick -= a;
                }
                let mut p = Vec3::new(
                    rng.random_range(-h.x..h.x),
                    rng.random_range(-h.y..h.y),
                    rng.random_range(-h.z..h.z),
                );
                p[axis] = if rng.random::<bool>() { h[axis] } else { -h[axis] };
                p
            }
        };
        out.push(prim.pose.transform_point(&local.into()).coords);
    }
    out
}

fn unit_sphere<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}
