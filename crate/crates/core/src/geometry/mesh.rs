use std::collections::HashMap;

use nalgebra::Matrix3;

use super::bvh::{Aabb, Bvh};
use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

/// Triangles with area below this are dropped at construction.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Which part of a triangle a closest point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosestFeature {
    /// Corner `k` of the triangle.
    Vertex(usize),
    /// Edge from corner `k` to corner `(k + 1) % 3`.
    Edge(usize),
    Face,
}

/// Result of a closest-point query against a mesh.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceHit {
    pub point: Vec3,
    /// Outward angle-weighted pseudo-normal of the closest feature.
    pub normal: Vec3,
    pub distance: f64,
    pub triangle: usize,
    pub feature: ClosestFeature,
    /// Jacobian of `point` with respect to the query position, valid while
    /// the closest feature does not change.
    pub jacobian: Matrix3<f64>,
}

/// An indexed triangle mesh with its acceleration structures.
///
/// Construction drops degenerate triangles, computes face and pseudo-normals
/// and builds a bounding volume hierarchy. The mesh is immutable afterwards.
#[derive(Clone, Debug)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    face_normals: Vec<Vec3>,
    edge_normals: HashMap<(usize, usize), Vec3>,
    vertex_normals: Vec<Vec3>,
    bvh: Bvh,
    bounds: Aabb,
    closed: bool,
    dropped: usize,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        if let Some((i, t)) = triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|&k| k >= vertices.len()))
        {
            return Err(Error::invalid(format!(
                "triangle {i} references vertex {:?} but the mesh has {} vertices",
                t,
                vertices.len()
            )));
        }
        let before = triangles.len();
        let triangles: Vec<[usize; 3]> = triangles
            .into_iter()
            .filter(|t| triangle_area(&vertices, t) >= DEGENERATE_AREA)
            .collect();
        let dropped = before - triangles.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangles");
        }
        if triangles.is_empty() {
            return Err(Error::invalid("mesh has only degenerate triangles"));
        }

        let face_normals: Vec<Vec3> = triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|k| vertices[k]);
                (b - a).cross(&(c - a)).normalize()
            })
            .collect();

        let mut edge_sum: HashMap<(usize, usize), (Vec3, usize)> = HashMap::new();
        let mut vertex_sum = vec![Vec3::zeros(); vertices.len()];
        for (f, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                let e = edge_sum.entry((i.min(j), i.max(j))).or_insert((Vec3::zeros(), 0));
                e.0 += face_normals[f];
                e.1 += 1;
                let prev = vertices[t[(k + 2) % 3]];
                let next = vertices[j];
                let here = vertices[i];
                let u = (next - here).normalize();
                let w = (prev - here).normalize();
                let angle = u.dot(&w).clamp(-1.0, 1.0).acos();
                vertex_sum[i] += face_normals[f] * angle;
            }
        }
        let closed = edge_sum.values().all(|(_, n)| *n == 2);
        let edge_normals = edge_sum
            .into_iter()
            .map(|(k, (n, _))| (k, n.try_normalize(1e-12).unwrap_or(n)))
            .collect();
        let vertex_normals = vertex_sum
            .into_iter()
            .map(|n| n.try_normalize(1e-12).unwrap_or(n))
            .collect();

        let tri_bounds: Vec<Aabb> = triangles
            .iter()
            .map(|t| {
                let mut b = Aabb::empty();
                for &k in t {
                    b.grow(&vertices[k]);
                }
                b
            })
            .collect();
        let bvh = Bvh::build(&tri_bounds);
        let bounds = bvh.root_bounds().expect("non-empty mesh");

        Ok(TriangleMesh {
            vertices,
            triangles,
            face_normals,
            edge_normals,
            vertex_normals,
            bvh,
            bounds,
            closed,
            dropped,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn face_normal(&self, tri: usize) -> Vec3 {
        self.face_normals[tri]
    }

    pub fn triangle_area(&self, tri: usize) -> f64 {
        triangle_area(&self.vertices, &self.triangles[tri])
    }

    /// Number of degenerate triangles dropped at construction.
    pub fn dropped_triangles(&self) -> usize {
        self.dropped
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        (self.bounds.min, self.bounds.max)
    }

    /// Copy with every vertex mapped through `f`. Orientation-reversing maps
    /// are not supported.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        TriangleMesh::new(self.vertices.iter().map(f).collect(), self.triangles.clone())
    }

    /// Closest surface point to `p` with its outward pseudo-normal.
    pub fn nearest_surface_point(&self, p: &Vec3) -> SurfaceHit {
        let (tri, d2) = self
            .bvh
            .nearest(p, |t| {
                let [a, b, c] = self.triangles[t].map(|k| self.vertices[k]);
                (closest_point_on_triangle(p, &a, &b, &c).0 - p).norm_squared()
            })
            .expect("non-empty mesh");
        let t = self.triangles[tri];
        let [a, b, c] = t.map(|k| self.vertices[k]);
        let (point, feature) = closest_point_on_triangle(p, &a, &b, &c);
        let (normal, jacobian) = match feature {
            ClosestFeature::Face => {
                let n = self.face_normals[tri];
                (n, Matrix3::identity() - n * n.transpose())
            }
            ClosestFeature::Edge(k) => {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                let e = (self.vertices[j] - self.vertices[i]).normalize();
                (self.edge_normals[&(i.min(j), i.max(j))], e * e.transpose())
            }
            ClosestFeature::Vertex(k) => (self.vertex_normals[t[k]], Matrix3::zeros()),
        };
        SurfaceHit {
            point,
            normal,
            distance: d2.sqrt(),
            triangle: tri,
            feature,
            jacobian,
        }
    }

    /// Generalized winding number of the surface around `p`; ~1 inside a
    /// closed outward-oriented surface, ~0 outside.
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        if self.closed && !self.bounds.contains(p) {
            return 0.0;
        }
        let mut total = 0.0;
        for t in &self.triangles {
            let a = self.vertices[t[0]] - p;
            let b = self.vertices[t[1]] - p;
            let c = self.vertices[t[2]] - p;
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            total += 2.0 * num.atan2(den);
        }
        total / (4.0 * std::f64::consts::PI)
    }

    pub fn is_inside(&self, p: &Vec3) -> bool {
        self.winding_number(p).abs() >= 0.5
    }

    /// Signed distance of a single point: negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let d = self.nearest_surface_point(p).distance;
        if self.is_inside(p) {
            -d
        } else {
            d
        }
    }

    /// Signed distance for every point of `points`.
    pub fn signed_distances(&self, points: &[Vec3]) -> Vec<f64> {
        points.iter().map(|p| self.signed_distance(p)).collect()
    }

    /// Minimum signed distance over `points`.
    pub fn min_signed_distance(&self, points: &[Vec3]) -> Option<f64> {
        points.iter().map(|p| self.signed_distance(p)).reduce(f64::min)
    }
}

/// Signed distances of a point cloud to a mesh (negative inside).
pub fn mesh_signed_distance(mesh: &TriangleMesh, points: &PointCloud) -> Result<Vec<f64>> {
    Ok(mesh.signed_distances(&points.points))
}

fn triangle_area(vertices: &[Vec3], t: &[usize; 3]) -> f64 {
    let [a, b, c] = t.map(|k| vertices[k]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5) together with the feature it lies on.
pub(crate) fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, ClosestFeature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, ClosestFeature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, ClosestFeature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, ClosestFeature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, ClosestFeature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, ClosestFeature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, ClosestFeature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, ClosestFeature::Face)
}
