//! Affordance-annotated objects.
//!
//! An object is a closed triangle mesh plus a deterministic surface sample
//! `P_O` on which two index sets are annotated: the functional part `A_OF`
//! (where the tool acts, e.g. a trigger) and the grasping part `A_OG` (where
//! the hand holds it). The object's scale is the maximum extent of the
//! oriented bounding box of its surface sample.

use std::path::Path;

use log::warn;
use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::io::load_mesh;
use crate::geometry::{
    centroid, orthonormalize_against, oriented_bounding_box, sample_surface_points, PointCloud, TriangleMesh, Vec3,
};

/// Sine of the smallest accepted angle between the mean functional normal
/// and GF.
const PARALLEL_TOLERANCE: f64 = 0.02;

/// Default surface sample size when an annotation omits `n_points`.
pub const DEFAULT_SURFACE_POINTS: usize = 2048;

/// Object grasp-to-functional (GF) and force-application (FA) axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectAxes {
    pub gf: Vec3,
    pub fa: Vec3,
}

impl ObjectAxes {
    /// Normalize `gf` and re-orthogonalize `fa` against it.
    pub fn orthonormalized(gf: Vec3, fa: Vec3) -> Result<Self> {
        let gf = gf
            .try_normalize(1e-12)
            .ok_or_else(|| Error::DegenerateGeometry("zero grasp-to-functional axis".into()))?;
        let fa = orthonormalize_against(&fa, &gf)
            .ok_or_else(|| Error::DegenerateGeometry("force-application axis is parallel to the grasp-to-functional axis".into()))?;
        Ok(ObjectAxes { gf, fa })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxesOverride {
    pub gf: [f64; 3],
    pub fa: [f64; 3],
}

/// Per-object annotation document.
///
/// Parts are given either as index sets into the sampled surface or as a
/// painted per-point label array (`labels`, one of `"functional"`,
/// `"grasping"`, `"both"` or `"none"` per point), which is converted to
/// index sets on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    #[serde(default)]
    pub id: Option<String>,
    pub category: String,
    pub seed: u64,
    #[serde(default = "default_points")]
    pub n_points: usize,
    /// Real-world size of the object (OBB max extent, m). The mesh is
    /// rescaled to it on load.
    #[serde(default)]
    pub native_scale: Option<f64>,
    #[serde(default)]
    pub functional_indices: Vec<usize>,
    #[serde(default)]
    pub grasping_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<PaintLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<AxesOverride>,
}

fn default_points() -> usize {
    DEFAULT_SURFACE_POINTS
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaintLabel {
    None,
    Functional,
    Grasping,
    Both,
}

/// Convert painted per-point labels into (functional, grasping) index sets.
pub fn labels_to_indices(labels: &[PaintLabel]) -> (Vec<usize>, Vec<usize>) {
    let mut f = Vec::new();
    let mut g = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        if matches!(l, PaintLabel::Functional | PaintLabel::Both) {
            f.push(i);
        }
        if matches!(l, PaintLabel::Grasping | PaintLabel::Both) {
            g.push(i);
        }
    }
    (f, g)
}

/// Inverse of [`labels_to_indices`] for a cloud of `n` points.
pub fn indices_to_labels(n: usize, functional: &[usize], grasping: &[usize]) -> Vec<PaintLabel> {
    let mut out = vec![PaintLabel::None; n];
    for &i in functional {
        out[i] = PaintLabel::Functional;
    }
    for &i in grasping {
        out[i] = if out[i] == PaintLabel::Functional {
            PaintLabel::Both
        } else {
            PaintLabel::Grasping
        };
    }
    out
}

impl Annotation {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::load(path.display().to_string(), e.to_string()))
    }

    /// Index sets, converting painted labels when present.
    fn parts(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        match &self.labels {
            Some(labels) => {
                if !self.functional_indices.is_empty() || !self.grasping_indices.is_empty() {
                    return Err(Error::load("labels", "give either painted labels or index sets, not both"));
                }
                if labels.len() != self.n_points {
                    return Err(Error::load(
                        "labels",
                        format!("{} labels for {} surface points", labels.len(), self.n_points),
                    ));
                }
                Ok(labels_to_indices(labels))
            }
            None => Ok((self.functional_indices.clone(), self.grasping_indices.clone())),
        }
    }
}

/// An object with its surface sample and annotated parts at one scale.
#[derive(Clone, Debug)]
pub struct AffordanceObject {
    pub id: String,
    pub category: String,
    pub mesh: TriangleMesh,
    /// `P_O`, with outward normals.
    pub surface: PointCloud,
    /// `A_OF` as indices into `surface`.
    pub functional: Vec<usize>,
    /// `A_OG` as indices into `surface`.
    pub grasping: Vec<usize>,
    /// OBB max extent of `surface` (m).
    pub scale: f64,
    pub axes_override: Option<ObjectAxes>,
}

fn check_part(name: &str, idx: &[usize], n: usize) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::load(name, "part is empty"));
    }
    if let Some(bad) = idx.iter().find(|&&i| i >= n) {
        return Err(Error::load(name, format!("index {bad} is out of range for {n} surface points")));
    }
    Ok(())
}

/// OBB max extent of a point set.
pub fn obb_scale(points: &[Vec3]) -> Result<f64> {
    Ok(oriented_bounding_box(points)?.max_extent())
}

impl AffordanceObject {
    /// Build an object from a mesh and annotation. The surface is sampled
    /// with the annotation's seed, then everything is rescaled to the
    /// annotation's native scale if one is given.
    pub fn from_parts(id: String, mesh: TriangleMesh, ann: &Annotation) -> Result<Self> {
        if ann.n_points == 0 {
            return Err(Error::load("n_points", "must be positive"));
        }
        let (functional, grasping) = ann.parts()?;
        check_part("functional_indices", &functional, ann.n_points)?;
        check_part("grasping_indices", &grasping, ann.n_points)?;
        let surface = sample_surface_points(&mesh, ann.n_points, ann.seed)?;
        let axes_override = ann
            .axes
            .as_ref()
            .map(|a| ObjectAxes::orthonormalized(Vec3::from(a.gf), Vec3::from(a.fa)))
            .transpose()
            .map_err(|e| Error::load("axes", e.to_string()))?;
        let scale = obb_scale(&surface.points)?;
        let obj = AffordanceObject {
            id,
            category: ann.category.clone(),
            mesh,
            surface,
            functional,
            grasping,
            scale,
            axes_override,
        };
        match ann.native_scale {
            Some(s) if s <= 0.0 => Err(Error::load("native_scale", "must be positive")),
            Some(s) if (s - obj.scale).abs() > 1e-9 => obj.rescaled(s),
            _ => Ok(obj),
        }
    }

    pub fn functional_points(&self) -> Vec<Vec3> {
        self.functional.iter().map(|&i| self.surface.points[i]).collect()
    }

    pub fn grasping_points(&self) -> Vec<Vec3> {
        self.grasping.iter().map(|&i| self.surface.points[i]).collect()
    }

    /// Outward surface normals of the sample (always present for loaded
    /// objects).
    pub fn normals(&self) -> &[Vec3] {
        self.surface.normals.as_deref().expect("object surface carries normals")
    }

    /// Uniformly scale about the surface centroid so that the OBB max extent
    /// becomes `target`.
    pub fn rescaled(&self, target: f64) -> Result<Self> {
        if !(target > 0.0) || !target.is_finite() {
            return Err(Error::invalid(format!("target scale must be positive, got {target}")));
        }
        let c = self.surface.centroid().expect("non-empty surface");
        let k = target / self.scale;
        let map = |p: &Vec3| c + (p - c) * k;
        let mesh = self.mesh.map_vertices(map)?;
        let points: Vec<Vec3> = self.surface.points.iter().map(map).collect();
        let surface = PointCloud {
            points,
            normals: self.surface.normals.clone(),
        };
        let scale = obb_scale(&surface.points)?;
        if (scale - target).abs() > 1e-4 {
            warn!("rescaled {} to {scale} instead of {target}", self.id);
        }
        Ok(AffordanceObject {
            mesh,
            surface,
            scale,
            ..self.clone()
        })
    }

    /// Apply a rigid transform to mesh, samples, normals and axis overrides.
    pub fn transformed(&self, t: &Isometry3<f64>) -> Result<Self> {
        let map = |p: &Vec3| t.transform_point(&(*p).into()).coords;
        let mesh = self.mesh.map_vertices(map)?;
        let surface = PointCloud {
            points: self.surface.points.iter().map(map).collect(),
            normals: self
                .surface
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.rotation * n).collect()),
        };
        Ok(AffordanceObject {
            mesh,
            surface,
            axes_override: self.axes_override.map(|a| ObjectAxes {
                gf: t.rotation * a.gf,
                fa: t.rotation * a.fa,
            }),
            ..self.clone()
        })
    }
}

/// Load a mesh (`.obj` or `.ply`) and its annotation document. The object id
/// is the annotation's `id` or the mesh file stem.
pub fn load_object(mesh_path: &Path, annotation_path: &Path) -> Result<AffordanceObject> {
    let mesh = load_mesh(mesh_path)?;
    let ann = Annotation::load(annotation_path)?;
    let id = ann.id.clone().unwrap_or_else(|| {
        mesh_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "object".into())
    });
    AffordanceObject::from_parts(id, mesh, &ann).map_err(|e| match e {
        Error::Load { path, message } => Error::load(format!("{}: {path}", annotation_path.display()), message),
        other => other,
    })
}

/// Find every `<stem>.json` annotation in `dir` with a sibling `<stem>.obj`
/// or `<stem>.ply` mesh, sorted by stem.
pub fn discover_objects(dir: &Path) -> Result<Vec<(std::path::PathBuf, std::path::PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let mesh = ["obj", "ply"]
            .iter()
            .map(|ext| path.with_extension(ext))
            .find(|p| p.exists());
        if let Some(mesh) = mesh {
            out.push((mesh, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Object GF and FA axes.
///
/// GF points from the grasping part centroid to the functional part
/// centroid. FA is the negated mean outward normal of the functional part
/// (the direction of pressing into it), orthogonalized against GF. An
/// annotation override takes precedence.
pub fn object_axes(obj: &AffordanceObject) -> Result<ObjectAxes> {
    if let Some(a) = obj.axes_override {
        return Ok(a);
    }
    let f = centroid(&obj.functional_points()).ok_or_else(|| Error::invalid("empty functional part"))?;
    let g = centroid(&obj.grasping_points()).ok_or_else(|| Error::invalid("empty grasping part"))?;
    let gf = f - g;
    if gf.norm() < 1e-6 {
        return Err(Error::DegenerateGeometry(format!(
            "{}: functional and grasping part centroids coincide",
            obj.id
        )));
    }
    let gf = gf.normalize();
    let normals = obj.normals();
    let mean_n = obj.functional.iter().map(|&i| normals[i]).sum::<Vec3>() / obj.functional.len() as f64;
    let press = -mean_n;
    let tangential = press - gf * gf.dot(&press);
    // a nearly parallel normal leaves only sampling noise after projection
    if tangential.norm() < PARALLEL_TOLERANCE * press.norm() {
        return Err(Error::DegenerateGeometry(format!(
            "{}: functional part normal is parallel to the grasp-to-functional axis; set `axes` in the annotation",
            obj.id
        )));
    }
    let fa = orthonormalize_against(&press, &gf).ok_or_else(|| {
        Error::DegenerateGeometry(format!(
            "{}: functional part normal is parallel to the grasp-to-functional axis; set `axes` in the annotation",
            obj.id
        ))
    })?;
    Ok(ObjectAxes { gf, fa })
}

/// Size range for one object category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryScaleRange {
    pub category: String,
    pub s_low: f64,
    pub s_high: f64,
    #[serde(default = "default_n_scales")]
    pub n_scales: usize,
}

fn default_n_scales() -> usize {
    15
}

impl CategoryScaleRange {
    pub fn new(category: impl Into<String>, s_low: f64, s_high: f64, n_scales: usize) -> Result<Self> {
        let r = CategoryScaleRange {
            category: category.into(),
            s_low,
            s_high,
            n_scales,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_low > 0.0 && self.s_low < self.s_high && self.s_high.is_finite()) {
            return Err(Error::invalid(format!(
                "scale range for {:?} needs 0 < s_low < s_high, got ({}, {})",
                self.category, self.s_low, self.s_high
            )));
        }
        if self.n_scales == 0 {
            return Err(Error::invalid(format!("scale range for {:?} needs n_scales >= 1", self.category)));
        }
        Ok(())
    }
}

/// `n_scales` linearly spaced scales, both endpoints included. A single
/// scale is `s_low`.
pub fn sample_scales(range: &CategoryScaleRange) -> Vec<f64> {
    let n = range.n_scales;
    if n == 1 {
        return vec![range.s_low];
    }
    let step = (range.s_high - range.s_low) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { range.s_high } else { range.s_low + step * i as f64 })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::revolve_profile;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    /// Closed cylinder of radius 0.03 and height 0.2 along z, centred at the
    /// origin. Grasping part: lower shaft; functional part: a patch on the
    /// +x side near the top.
    pub(crate) fn cylinder() -> AffordanceObject {
        let mesh = revolve_profile(&[(0.0, -0.1), (0.03, -0.1), (0.03, 0.1), (0.0, 0.1)], 48).unwrap();
        let surface = sample_surface_points(&mesh, 1024, 7).unwrap();
        let side = |i: usize| surface.normals.as_ref().unwrap()[i].z.abs() < 1e-9;
        let functional: Vec<usize> = (0..surface.len())
            .filter(|&i| {
                let p = surface.points[i];
                side(i) && p.z > 0.05 && p.z < 0.09 && p.y.atan2(p.x).abs() < 0.4
            })
            .collect();
        let grasping: Vec<usize> = (0..surface.len())
            .filter(|&i| side(i) && surface.points[i].z < 0.0 && surface.points[i].x > 0.0)
            .collect();
        let ann = Annotation {
            id: Some("cylinder".into()),
            category: "cylinder".into(),
            seed: 7,
            n_points: 1024,
            native_scale: None,
            functional_indices: functional,
            grasping_indices: grasping,
            labels: None,
            axes: None,
        };
        AffordanceObject::from_parts("cylinder".into(), mesh, &ann).unwrap()
    }

    #[test]
    fn cylinder_axes() {
        let obj = cylinder();
        assert_relative_eq!(obj.scale, 0.2, epsilon = 1e-3);
        let a = object_axes(&obj).unwrap();
        // oracle: recompute from the raw parts
        let f = obj.functional_points().iter().sum::<Vec3>() / obj.functional.len() as f64;
        let g = obj.grasping_points().iter().sum::<Vec3>() / obj.grasping.len() as f64;
        assert_relative_eq!(a.gf, (f - g).normalize(), epsilon = 1e-12);
        assert!(a.gf.z > 0.8 && a.gf.x > 0.0, "{:?}", a.gf);
        assert!(a.fa.x < -0.9, "{:?}", a.fa);
        assert!(a.gf.dot(&a.fa).abs() < 1e-12);
    }

    #[test]
    fn override_axes_pass_through() {
        let mut obj = cylinder();
        obj.axes_override = Some(ObjectAxes::orthonormalized(Vec3::new(0.0, 0.0, 2.0), Vec3::new(-1.0, 0.0, 1.0)).unwrap());
        let a = object_axes(&obj).unwrap();
        assert_relative_eq!(a.gf, Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(a.fa, -Vec3::x(), epsilon = 1e-15);
    }

    #[test]
    fn coincident_centroids_are_degenerate() {
        let mut obj = cylinder();
        obj.grasping = obj.functional.clone();
        assert!(matches!(object_axes(&obj), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn parallel_normal_needs_override() {
        let mut obj = cylinder();
        // top cap only: normal +z, grasping bottom cap: GF = +z
        let n = obj.normals().to_vec();
        obj.functional = (0..n.len()).filter(|&i| n[i].z > 0.5).collect();
        obj.grasping = (0..n.len()).filter(|&i| n[i].z < -0.5).collect();
        match object_axes(&obj) {
            Err(Error::DegenerateGeometry(m)) => assert!(m.contains("axes"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn annotation_validation() {
        let obj = cylinder();
        let mut ann = Annotation {
            id: None,
            category: "cylinder".into(),
            seed: 7,
            n_points: 64,
            native_scale: None,
            functional_indices: vec![1, 64],
            grasping_indices: vec![2],
            labels: None,
            axes: None,
        };
        match AffordanceObject::from_parts("c".into(), obj.mesh.clone(), &ann) {
            Err(Error::Load { path, message }) => {
                assert_eq!(path, "functional_indices");
                assert!(message.contains("64"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        ann.functional_indices.clear();
        assert!(matches!(
            AffordanceObject::from_parts("c".into(), obj.mesh.clone(), &ann),
            Err(Error::Load { .. })
        ));
    }

    #[test]
    fn painted_labels_round_trip() {
        let f = vec![0, 3, 4];
        let g = vec![4, 5];
        let labels = indices_to_labels(7, &f, &g);
        assert_eq!(labels[4], PaintLabel::Both);
        assert_eq!(labels_to_indices(&labels), (f.clone(), g.clone()));

        let obj = cylinder();
        let ann = Annotation {
            id: None,
            category: "c".into(),
            seed: 1,
            n_points: 7,
            native_scale: None,
            functional_indices: vec![],
            grasping_indices: vec![],
            labels: Some(labels),
            axes: None,
        };
        let o = AffordanceObject::from_parts("c".into(), obj.mesh.clone(), &ann).unwrap();
        assert_eq!(o.functional, f);
        assert_eq!(o.grasping, g);
    }

    #[test]
    fn native_scale_rescales_on_load() {
        let obj = cylinder();
        let ann = Annotation {
            id: None,
            category: "c".into(),
            seed: 7,
            n_points: 256,
            native_scale: Some(0.3),
            functional_indices: vec![0],
            grasping_indices: vec![1],
            labels: None,
            axes: None,
        };
        let o = AffordanceObject::from_parts("c".into(), obj.mesh.clone(), &ann).unwrap();
        assert!((o.scale - 0.3).abs() < 1e-4);
    }

    #[test]
    fn rescale_halves_distances() {
        let obj = cylinder().rescaled(0.3).unwrap();
        let half = obj.rescaled(0.15).unwrap();
        assert!((half.scale - 0.15).abs() < 1e-4);
        for (i, j) in [(0, 1), (5, 900), (17, 333)] {
            let d0 = (obj.surface.points[i] - obj.surface.points[j]).norm();
            let d1 = (half.surface.points[i] - half.surface.points[j]).norm();
            assert!((d1 - d0 / 2.0).abs() < 1e-6);
        }
        assert_eq!(half.functional, obj.functional);
        assert_eq!(half.grasping, obj.grasping);
        assert_eq!(half.surface.normals, obj.surface.normals);

        let same = obj.rescaled(obj.scale).unwrap();
        let back = half.rescaled(obj.scale).unwrap();
        for k in 0..obj.surface.len() {
            assert!((same.surface.points[k] - obj.surface.points[k]).norm() < 1e-6);
            assert!((back.surface.points[k] - obj.surface.points[k]).norm() < 1e-5);
        }
        assert!(matches!(obj.rescaled(0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(obj.rescaled(-1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn scale_sampling() {
        let r = CategoryScaleRange::new("x", 0.1, 0.3, 15).unwrap();
        let s = sample_scales(&r);
        assert_eq!(s.len(), 15);
        assert_eq!(s[0], 0.1);
        assert_eq!(s[14], 0.3);
        for w in s.windows(2) {
            assert!((w[1] - w[0] - 0.2 / 14.0).abs() < 1e-12);
        }
        assert_eq!(sample_scales(&CategoryScaleRange::new("x", 0.1, 0.3, 1).unwrap()), vec![0.1]);
        assert_eq!(sample_scales(&CategoryScaleRange::new("x", 0.1, 0.3, 2).unwrap()), vec![0.1, 0.3]);
        assert!(CategoryScaleRange::new("x", 0.3, 0.1, 3).is_err());
        assert!(CategoryScaleRange::new("x", 0.0, 0.1, 3).is_err());
        assert!(CategoryScaleRange::new("x", 0.1, 0.2, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn axes_rotate_with_object(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64, s in 0.05..0.5f64) {
            let obj = cylinder();
            let r = UnitQuaternion::from_scaled_axis(Vec3::new(a, b, c));
            let t = Isometry3::from_parts(Vec3::new(0.3, -0.2, 0.1).into(), r);
            let ax = object_axes(&obj).unwrap();
            let moved = object_axes(&obj.transformed(&t).unwrap()).unwrap();
            prop_assert!((r * ax.gf - moved.gf).norm() < 1e-9);
            prop_assert!((r * ax.fa - moved.fa).norm() < 1e-9);
            let scaled = object_axes(&obj.rescaled(s).unwrap()).unwrap();
            prop_assert!((ax.gf - scaled.gf).norm() < 1e-9);
            prop_assert!((ax.fa - scaled.fa).norm() < 1e-9);
        }

        #[test]
        fn scales_strictly_increase(lo in 0.01..1.0f64, span in 0.01..1.0f64, n in 2usize..40) {
            let s = sample_scales(&CategoryScaleRange::new("x", lo, lo + span, n).unwrap());
            prop_assert_eq!(s.len(), n);
            prop_assert_eq!(s[0], lo);
            prop_assert_eq!(s[n - 1], lo + span);
            prop_assert!(s.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
