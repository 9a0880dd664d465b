//! Geometry kernels shared by the synthesis, metric and learning code.

mod bvh;
pub mod io;
mod mesh;
mod obb;
mod primitive;
mod sampling;

pub use mesh::{mesh_signed_distance, ClosestFeature, SurfaceHit, TriangleMesh};
pub use obb::{oriented_bounding_box, OrientedBoundingBox};
pub use primitive::{primitive_signed_distance, ConvexPrimitive, PrimitiveShape};
pub use sampling::{sample_primitive_surface, sample_surface_points};

#[cfg(test)]
pub(crate) use mesh::tests::cube as test_cube;

use crate::error::{Error, Result};
use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// A set of points with optional per-point unit normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            normals: None,
        }
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::invalid(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if let Some((i, n)) = normals
            .iter()
            .enumerate()
            .find(|(_, n)| (n.norm() - 1.0).abs() > 1e-6)
        {
            return Err(Error::invalid(format!(
                "normal {i} has length {}",
                n.norm()
            )));
        }
        Ok(PointCloud {
            points,
            normals: Some(normals),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        centroid(&self.points)
    }

    /// Sub-cloud at the given indices. Indices must be in range.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }
}

pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let sum: Vec3 = points.iter().sum();
    Some(sum / points.len() as f64)
}

/// Index and squared distance of the point in `cloud` nearest to `p`.
#[inline]
pub fn nearest_index(p: &Vec3, cloud: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, q) in cloud.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Symmetric Chamfer distance: mean squared nearest-neighbour distance from
/// `p` to `q` plus the same from `q` to `p`. Units are squared input units.
pub fn chamfer_distance(p: &[Vec3], q: &[Vec3]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::invalid("chamfer distance of an empty cloud"));
    }
    let forward: f64 = p.iter().map(|x| nearest_index(x, q).1).sum::<f64>() / p.len() as f64;
    let backward: f64 = q.iter().map(|y| nearest_index(y, p).1).sum::<f64>() / q.len() as f64;
    Ok(forward + backward)
}

/// Chamfer distance and its gradient with respect to every point of `p`
/// (`q` held fixed). Ties in the nearest-neighbour search resolve to the
/// lowest index.
pub fn chamfer_with_gradient(p: &[Vec3], q: &[Vec3]) -> Result<(f64, Vec<Vec3>)> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::invalid("chamfer distance of an empty cloud"));
    }
    let np = p.len() as f64;
    let nq = q.len() as f64;
    let mut grad = vec![Vec3::zeros(); p.len()];
    let mut value = 0.0;
    for (i, x) in p.iter().enumerate() {
        let (j, d) = nearest_index(x, q);
        value += d / np;
        grad[i] += (x - q[j]) * (2.0 / np);
    }
    for y in q {
        let (i, d) = nearest_index(y, p);
        value += d / nq;
        grad[i] += (p[i] - y) * (2.0 / nq);
    }
    Ok((value, grad))
}

/// Smallest gap between the best and second-best squared nearest-neighbour
/// distances over both Chamfer directions. Small values mean the Chamfer
/// distance is close to a non-differentiable switch.
pub fn chamfer_tie_margin(p: &[Vec3], q: &[Vec3]) -> f64 {
    fn gap(a: &[Vec3], b: &[Vec3]) -> f64 {
        let mut worst = f64::INFINITY;
        if b.len() < 2 {
            return worst;
        }
        for x in a {
            let (mut d0, mut d1) = (f64::INFINITY, f64::INFINITY);
            for y in b {
                let d = (x - y).norm_squared();
                if d < d0 {
                    d1 = d0;
                    d0 = d;
                } else if d < d1 {
                    d1 = d;
                }
            }
            worst = worst.min(d1 - d0);
        }
        worst
    }
    gap(p, q).min(gap(q, p))
}

/// Closed surface of revolution about +z from a `(radius, z)` profile that
/// runs bottom to top. Zero-radius profile points become poles, so a profile
/// starting and ending on the axis yields a watertight mesh.
pub fn revolve_profile(profile: &[(f64, f64)], segments: usize) -> Result<TriangleMesh> {
    let (v, t) = primitive::lathe(profile, segments.max(3));
    TriangleMesh::new(v, t)
}

/// `v` with the component along unit `axis` removed, renormalized.
pub fn orthonormalize_against(v: &Vec3, axis: &Vec3) -> Option<Vec3> {
    let w = v - axis * axis.dot(v);
    let n = w.norm();
    (n > 1e-9).then(|| w / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn chamfer_examples() {
        let p = [v(0., 0., 0.), v(1., 1., 1.)];
        assert_eq!(chamfer_distance(&p, &p).unwrap(), 0.0);

        let a = [v(0., 0., 0.)];
        let b = [v(0., 0., 0.), v(1., 0., 0.)];
        assert!((chamfer_distance(&a, &b).unwrap() - 0.5).abs() < 1e-12);

        let c = [v(0., 3., 4.)];
        assert!((chamfer_distance(&a, &c).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn chamfer_rejects_empty() {
        assert!(matches!(
            chamfer_distance(&[], &[v(0., 0., 0.)]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn chamfer_gradient_matches_finite_differences() {
        let p = vec![v(0.1, 0.2, 0.0), v(-0.3, 0.5, 0.2), v(0.9, -0.1, 0.4)];
        let q = vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.3), v(-0.2, 0.7, 0.1), v(0.5, 0.5, 0.5)];
        let (_, g) = chamfer_with_gradient(&p, &q).unwrap();
        let h = 1e-6;
        for i in 0..p.len() {
            for k in 0..3 {
                let mut pp = p.clone();
                pp[i][k] += h;
                let mut pm = p.clone();
                pm[i][k] -= h;
                let fd = (chamfer_distance(&pp, &q).unwrap() - chamfer_distance(&pm, &q).unwrap()) / (2.0 * h);
                assert!((fd - g[i][k]).abs() < 1e-6, "{fd} vs {}", g[i][k]);
            }
        }
    }

    fn cloud() -> impl Strategy<Value = Vec<Vec3>> {
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..20)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn chamfer_is_symmetric_nonnegative_and_scales_quadratically(
            p in cloud(), q in cloud(), s in 0.1..5.0f64
        ) {
            let d = chamfer_distance(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!((d - chamfer_distance(&q, &p).unwrap()).abs() <= 1e-12 * (1.0 + d));
            prop_assert_eq!(chamfer_distance(&p, &p).unwrap(), 0.0);
            let sp: Vec<Vec3> = p.iter().map(|x| x * s).collect();
            let sq: Vec<Vec3> = q.iter().map(|x| x * s).collect();
            let ds = chamfer_distance(&sp, &sq).unwrap();
            prop_assert!((ds - s * s * d).abs() <= 1e-9 * (1.0 + ds));
        }
    }
}
