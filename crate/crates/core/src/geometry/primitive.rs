use nalgebra::{Isometry3, Point3};

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum PrimitiveShape {
    Sphere { radius: f64 },
    /// Segment `a`-`b` swept by a sphere of `radius`, in the primitive frame.
    Capsule { a: Vec3, b: Vec3, radius: f64 },
    /// Box centred on the primitive frame origin.
    Box { half_extents: Vec3 },
}

/// Convex collision shape placed by a rigid `pose` in its parent frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPrimitive {
    pub shape: PrimitiveShape,
    pub pose: Isometry3<f64>,
}

impl ConvexPrimitive {
    pub fn new(shape: PrimitiveShape, pose: Isometry3<f64>) -> Result<Self> {
        let ok = match &shape {
            PrimitiveShape::Sphere { radius } => *radius > 0.0,
            PrimitiveShape::Capsule { radius, .. } => *radius > 0.0,
            PrimitiveShape::Box { half_extents } => half_extents.iter().all(|&h| h > 0.0),
        };
        if !ok {
            return Err(Error::invalid(format!("non-positive primitive size in {shape:?}")));
        }
        Ok(ConvexPrimitive { shape, pose })
    }

    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        Self::new(
            PrimitiveShape::Sphere { radius },
            Isometry3::translation(center.x, center.y, center.z),
        )
    }

    pub fn capsule(a: Vec3, b: Vec3, radius: f64) -> Result<Self> {
        Self::new(PrimitiveShape::Capsule { a, b, radius }, Isometry3::identity())
    }

    pub fn cuboid(half_extents: Vec3, pose: Isometry3<f64>) -> Result<Self> {
        Self::new(PrimitiveShape::Box { half_extents }, pose)
    }

    /// The same primitive expressed in the frame where `frame` maps its
    /// parent frame.
    pub fn transformed(&self, frame: &Isometry3<f64>) -> ConvexPrimitive {
        ConvexPrimitive {
            shape: self.shape.clone(),
            pose: frame * self.pose,
        }
    }

    /// Signed distance in the primitive frame and its gradient (primitive
    /// frame). On medial points the gradient is a valid subgradient choice.
    fn local_sdf(&self, q: &Vec3) -> (f64, Vec3) {
        match &self.shape {
            PrimitiveShape::Sphere { radius } => {
                let n = q.norm();
                let g = if n > 0.0 { q / n } else { Vec3::x() };
                (n - radius, g)
            }
            PrimitiveShape::Capsule { a, b, radius } => {
                let ab = b - a;
                let t = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                let d = q - (a + ab * t);
                let n = d.norm();
                let g = if n > 0.0 {
                    d / n
                } else {
                    any_perpendicular(&ab)
                };
                (n - radius, g)
            }
            PrimitiveShape::Box { half_extents } => {
                let over = q.abs() - half_extents;
                let outside = over.sup(&Vec3::zeros());
                let on = outside.norm();
                if on > 0.0 {
                    let g = Vec3::from_fn(|k, _| outside[k] * q[k].signum()) / on;
                    (on, g)
                } else {
                    let (mut k, mut m) = (0, over[0]);
                    for j in 1..3 {
                        if over[j] > m {
                            k = j;
                            m = over[j];
                        }
                    }
                    let mut g = Vec3::zeros();
                    g[k] = if q[k] < 0.0 { -1.0 } else { 1.0 };
                    (m, g)
                }
            }
        }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.signed_distance_with_gradient(p).0
    }

    /// Signed distance of `p` (parent frame) and its gradient with respect to
    /// `p`, also in the parent frame.
    pub fn signed_distance_with_gradient(&self, p: &Vec3) -> (f64, Vec3) {
        let q = self.pose.inverse_transform_point(&Point3::from(*p)).coords;
        let (d, g) = self.local_sdf(&q);
        (d, self.pose.rotation * g)
    }

    /// Centre and radius of a sphere enclosing the primitive (parent frame).
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        let (c, r) = match &self.shape {
            PrimitiveShape::Sphere { radius } => (Vec3::zeros(), *radius),
            PrimitiveShape::Capsule { a, b, radius } => ((a + b) * 0.5, (b - a).norm() * 0.5 + radius),
            PrimitiveShape::Box { half_extents } => (Vec3::zeros(), half_extents.norm()),
        };
        (self.pose.transform_point(&Point3::from(c)).coords, r)
    }

    pub fn surface_area(&self) -> f64 {
        use std::f64::consts::PI;
        match &self.shape {
            PrimitiveShape::Sphere { radius } => 4.0 * PI * radius * radius,
            PrimitiveShape::Capsule { a, b, radius } => {
                4.0 * PI * radius * radius + 2.0 * PI * radius * (b - a).norm()
            }
            PrimitiveShape::Box { half_extents: h } => 8.0 * (h.x * h.y + h.y * h.z + h.z * h.x),
        }
    }

    /// Triangulated surface in the parent frame, outward wound.
    pub fn tessellate(&self, segments: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
        let segments = segments.max(4);
        let (verts, tris) = match &self.shape {
            PrimitiveShape::Sphere { radius } => {
                let mut profile = hemisphere_profile(*radius, 0.0, segments / 2, false);
                profile.extend(hemisphere_profile(*radius, 0.0, segments / 2, true));
                lathe(&profile, segments)
            }
            PrimitiveShape::Capsule { a, b, radius } => {
                let axis = b - a;
                let len = axis.norm();
                let mut profile = hemisphere_profile(*radius, 0.0, segments / 2, false);
                profile.extend(hemisphere_profile(*radius, len, segments / 2, true));
                let (v, t) = lathe(&profile, segments);
                let rot = nalgebra::UnitQuaternion::rotation_between(&Vec3::z(), &axis)
                    .unwrap_or_else(|| nalgebra::UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI));
                (v.into_iter().map(|p| rot * p + a).collect(), t)
            }
            PrimitiveShape::Box { half_extents: h } => {
                let v: Vec<Vec3> = (0..8)
                    .map(|i| {
                        Vec3::new(
                            if i & 1 == 0 { -h.x } else { h.x },
                            if i & 2 == 0 { -h.y } else { h.y },
                            if i & 4 == 0 { -h.z } else { h.z },
                        )
                    })
                    .collect();
                let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
                let t = quads
                    .iter()
                    .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
                    .collect();
                (v, t)
            }
        };
        let verts = verts
            .into_iter()
            .map(|p| self.pose.transform_point(&Point3::from(p)).coords)
            .collect();
        (verts, tris)
    }
}

/// Signed distance of every point to a primitive (negative inside).
pub fn primitive_signed_distance(prim: &ConvexPrimitive, points: &PointCloud) -> Vec<f64> {
    points.points.iter().map(|p| prim.signed_distance(p)).collect()
}

fn any_perpendicular(v: &Vec3) -> Vec3 {
    let trial = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    v.cross(&trial).normalize()
}

/// (radius, z) samples of a quarter circle. `upper` runs from the equator at
/// `z0` to the pole above it; otherwise from the pole below `z0` up to the
/// equator.
fn hemisphere_profile(radius: f64, z0: f64, steps: usize, upper: bool) -> Vec<(f64, f64)> {
    let steps = steps.max(2);
    (0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64 * std::f64::consts::FRAC_PI_2;
            if upper {
                (radius * t.cos(), z0 + radius * t.sin())
            } else {
                (radius * t.sin(), z0 - radius * t.cos())
            }
        })
        .collect()
}

/// Surface of revolution about z from a (radius, z) profile running bottom
/// to top. Profile points with zero radius collapse to a single pole vertex.
pub(crate) fn lathe(profile: &[(f64, f64)], segments: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut verts: Vec<Vec3> = Vec::new();
    let mut rings: Vec<Vec<usize>> = Vec::new();
    let mut last_z = f64::NEG_INFINITY;
    for &(r, z) in profile {
        // skip duplicated rings (e.g. where two profile pieces meet)
        if let Some(prev) = rings.last() {
            let pv = verts[prev[0]];
            let pr: f64 = Vec3::new(pv[0], pv[1], 0.0).norm();
            if (z - last_z).abs() < 1e-15 && (pr - r).abs() < 1e-15 {
                continue;
            }
        }
        last_z = z;
        if r <= 1e-12 {
            verts.push(Vec3::new(0.0, 0.0, z));
            rings.push(vec![verts.len() - 1]);
        } else {
            let ring = (0..segments)
                .map(|s| {
                    let a = s as f64 / segments as f64 * std::f64::consts::TAU;
                    verts.push(Vec3::new(r * a.cos(), r * a.sin(), z));
                    verts.len() - 1
                })
                .collect();
            rings.push(ring);
        }
    }
    let mut tris = Vec::new();
    for w in rings.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        match (lo.len(), hi.len()) {
            (1, 1) => {}
            (1, _) => {
                for s in 0..segments {
                    tris.push([lo[0], hi[(s + 1) % segments], hi[s]]);
                }
            }
            (_, 1) => {
                for s in 0..segments {
                    tris.push([lo[s], lo[(s + 1) % segments], hi[0]]);
                }
            }
            _ => {
                for s in 0..segments {
                    let s1 = (s + 1) % segments;
                    tris.push([lo[s], lo[s1], hi[s1]]);
                    tris.push([lo[s], hi[s1], hi[s]]);
                }
            }
        }
    }
    (verts, tris)
}
