use nalgebra::{Matrix3, SymmetricEigen};

use super::Vec3;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OrientedBoundingBox {
    pub center: Vec3,
    /// Orthonormal, right-handed, sorted by decreasing point variance.
    pub axes: [Vec3; 3],
    pub half_extents: Vec3,
}

impl OrientedBoundingBox {
    /// Full length of the longest side.
    pub fn max_extent(&self) -> f64 {
        2.0 * self.half_extents.max()
    }

    pub fn contains(&self, p: &Vec3, slack: f64) -> bool {
        let d = p - self.center;
        (0..3).all(|k| d.dot(&self.axes[k]).abs() <= self.half_extents[k] + slack)
    }
}

/// Box aligned with the principal axes of the point covariance, tight along
/// each axis.
pub fn oriented_bounding_box(points: &[Vec3]) -> Result<OrientedBoundingBox> {
    if points.is_empty() {
        return Err(Error::invalid("bounding box of an empty cloud"));
    }
    let n = points.len() as f64;
    let mean: Vec3 = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = order.map(|k| {
        let mut a: Vec3 = eig.eigenvectors.column(k).into_owned();
        // canonical sign: largest-magnitude component positive
        let imax = a.iamax();
        if a[imax] < 0.0 {
            a = -a;
        }
        a
    });
    // re-orthonormalize and make right-handed
    axes[0] = axes[0].normalize();
    axes[1] = (axes[1] - axes[0] * axes[0].dot(&axes[1])).normalize();
    axes[2] = axes[0].cross(&axes[1]);

    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        let d = p - mean;
        let c = Vec3::new(d.dot(&axes[0]), d.dot(&axes[1]), d.dot(&axes[2]));
        lo = lo.inf(&c);
        hi = hi.sup(&c);
    }
    let mid = (lo + hi) * 0.5;
    let center = mean + axes[0] * mid.x + axes[1] * mid.y + axes[2] * mid.z;
    Ok(OrientedBoundingBox {
        center,
        axes,
        half_extents: (hi - lo) * 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn box_corners(sx: f64, sy: f64, sz: f64) -> Vec<Vec3> {
        (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { -sx } else { sx } / 2.0,
                    if i & 2 == 0 { -sy } else { sy } / 2.0,
                    if i & 4 == 0 { -sz } else { sz } / 2.0,
                )
            })
            .collect()
    }

    fn sorted(v: Vec3) -> [f64; 3] {
        let mut a = [v.x, v.y, v.z];
        a.sort_by(f64::total_cmp);
        a
    }

    #[test]
    fn box_of_a_box() {
        let obb = oriented_bounding_box(&box_corners(0.1, 0.2, 0.3)).unwrap();
        let e = sorted(obb.half_extents);
        for (a, b) in e.iter().zip([0.05, 0.10, 0.15]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((obb.max_extent() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn single_point_is_degenerate() {
        let p = Vec3::new(0.3, -0.2, 1.0);
        let obb = oriented_bounding_box(&[p, p, p]).unwrap();
        assert_eq!(obb.half_extents, Vec3::zeros());
        assert!((obb.center - p).norm() < 1e-12);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(oriented_bounding_box(&[]).is_err());
    }

    #[test]
    fn rotated_box_keeps_extents() {
        let r = Rotation3::from_euler_angles(0.3, -0.8, 1.2);
        let pts: Vec<Vec3> = box_corners(0.1, 0.2, 0.3).iter().map(|p| r * p + Vec3::new(1.0, 2.0, 3.0)).collect();
        let obb = oriented_bounding_box(&pts).unwrap();
        let e = sorted(obb.half_extents);
        for (a, b) in e.iter().zip([0.05, 0.10, 0.15]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn contains_points_and_is_rotation_invariant(
            pts in prop::collection::vec((-1.0..1.0f64, -0.5..0.5f64, -0.2..0.2f64), 5..40),
            rx in -3.0..3.0f64, ry in -3.0..3.0f64, rz in -3.0..3.0f64
        ) {
            let pts: Vec<Vec3> = pts.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect();
            let obb = oriented_bounding_box(&pts).unwrap();
            for p in &pts {
                prop_assert!(obb.contains(p, 1e-6));
            }
            for i in 0..3 {
                for j in 0..3 {
                    let d = obb.axes[i].dot(&obb.axes[j]);
                    let expected = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((d - expected).abs() < 1e-6);
                }
            }
            // only meaningful when principal values are well separated
            let eig = SymmetricEigen::new({
                let m: Vec3 = pts.iter().sum::<Vec3>() / pts.len() as f64;
                pts.iter().fold(Matrix3::zeros(), |c, p| c + (p - m) * (p - m).transpose())
            });
            let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            prop_assume!(ev[1] - ev[0] > 1e-3 * ev[2] && ev[2] - ev[1] > 1e-3 * ev[2]);
            let r = Rotation3::from_euler_angles(rx, ry, rz);
            let rotated: Vec<Vec3> = pts.iter().map(|p| r * p).collect();
            let robb = oriented_bounding_box(&rotated).unwrap();
            prop_assert!((robb.max_extent() - obb.max_extent()).abs() < 1e-6);
        }
    }
}
