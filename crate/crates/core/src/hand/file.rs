//! Hand description files.
//!
//! JSON documents with `links`, `joints`, `anchors`, optional
//! `grasp_center` and `axes` sections. Lengths are metres, angles radians,
//! quaternions `[w, x, y, z]`. Links and anchors reference links by name.
//! See `docs/hand-format.md` for the full schema.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::model::{Anchor, HandModel, Joint, Link, Part, ThumbAxis};
use crate::error::{Error, Result};
use crate::geometry::{ConvexPrimitive, Vec3};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandFile {
    pub name: String,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    pub anchors: AnchorsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp_center: Option<[f64; 3]>,
    pub axes: AxesSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub name: String,
    pub part: Part,
    pub primitives: Vec<PrimitiveSpec>,
    #[serde(default)]
    pub surface_points: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PrimitiveSpec {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Capsule {
        a: [f64; 3],
        b: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        #[serde(default = "identity_quat")]
        rotation: [f64; 4],
        half_extents: [f64; 3],
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub translation: [f64; 3],
    #[serde(default = "identity_quat")]
    pub rotation: [f64; 4],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    pub parent: String,
    pub child: String,
    pub axis: [f64; 3],
    pub origin: PoseSpec,
    pub limits: [f64; 2],
    #[serde(default)]
    pub flexion: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub link: String,
    pub point: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorsSpec {
    pub functional: BTreeMap<Part, Vec<AnchorSpec>>,
    pub grasping: Vec<AnchorSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThumbAxisSpec {
    pub name: String,
    pub link: String,
    pub point: [f64; 3],
    pub press: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxesSpec {
    /// Press direction per finger in the palm frame.
    pub press: BTreeMap<Part, [f64; 3]>,
    pub thumb_gf: Vec<ThumbAxisSpec>,
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn quat(q: [f64; 4], path: &str) -> Result<UnitQuaternion<f64>> {
    let q = Quaternion::new(q[0], q[1], q[2], q[3]);
    if (q.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::load(path, format!("quaternion norm {} is not 1", q.norm())));
    }
    Ok(Unit::new_normalize(q))
}

pub fn load_hand(path: &Path) -> Result<HandModel> {
    let text = std::fs::read_to_string(path)?;
    parse_hand(&text).map_err(|e| match e {
        Error::Load { path: field, message } => Error::load(format!("{}: {field}", path.display()), message),
        other => other,
    })
}

pub fn parse_hand(text: &str) -> Result<HandModel> {
    let file: HandFile = serde_json::from_str(text).map_err(|e| Error::load("<document>", e.to_string()))?;
    file.into_model()
}

impl HandFile {
    pub fn into_model(self) -> Result<HandModel> {
        let mut index = BTreeMap::new();
        for (i, l) in self.links.iter().enumerate() {
            if index.insert(l.name.clone(), i).is_some() {
                return Err(Error::load(format!("links[{i}].name"), format!("duplicate link name {:?}", l.name)));
            }
        }
        let find = |name: &str, path: String| -> Result<usize> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::load(path, format!("unknown link {name:?}")))
        };

        let mut links = Vec::with_capacity(self.links.len());
        for (i, l) in self.links.iter().enumerate() {
            let mut prims = Vec::new();
            for (k, p) in l.primitives.iter().enumerate() {
                let path = format!("links[{i}].primitives[{k}]");
                let prim = match p {
                    PrimitiveSpec::Sphere { center, radius } => ConvexPrimitive::sphere(Vec3::from(*center), *radius),
                    PrimitiveSpec::Capsule { a, b, radius } => {
                        if (Vec3::from(*a) - Vec3::from(*b)).norm() < 1e-9 {
                            return Err(Error::load(path, "capsule endpoints coincide"));
                        }
                        ConvexPrimitive::capsule(Vec3::from(*a), Vec3::from(*b), *radius)
                    }
                    PrimitiveSpec::Box { center, rotation, half_extents } => ConvexPrimitive::cuboid(
                        Vec3::from(*half_extents),
                        Isometry3::from_parts(Translation3::from(Vec3::from(*center)), quat(*rotation, &path)?),
                    ),
                }
                .map_err(|e| Error::load(path.clone(), e.to_string()))?;
                prims.push(prim);
            }
            links.push(Link {
                name: l.name.clone(),
                part: l.part,
                primitives: prims,
                surface_points: l.surface_points.iter().map(|p| Vec3::from(*p)).collect(),
            });
        }

        let mut joints = Vec::with_capacity(self.joints.len());
        for (j, s) in self.joints.iter().enumerate() {
            let axis = Vec3::from(s.axis);
            if axis.norm() < 1e-9 {
                return Err(Error::load(format!("joints[{j}].axis"), "zero axis"));
            }
            if (axis.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::load(format!("joints[{j}].axis"), "axis is not unit length"));
            }
            joints.push(Joint {
                name: s.name.clone(),
                parent: find(&s.parent, format!("joints[{j}].parent"))?,
                child: find(&s.child, format!("joints[{j}].child"))?,
                axis: Unit::new_normalize(axis),
                origin: Isometry3::from_parts(
                    Translation3::from(Vec3::from(s.origin.translation)),
                    quat(s.origin.rotation, &format!("joints[{j}].origin.rotation"))?,
                ),
                lower: s.limits[0],
                upper: s.limits[1],
                flexion: s.flexion,
            });
        }

        let anchor = |a: &AnchorSpec, path: String| -> Result<Anchor> {
            Ok(Anchor {
                link: find(&a.link, path)?,
                point: Vec3::from(a.point),
            })
        };
        let mut functional = BTreeMap::new();
        for (part, list) in &self.anchors.functional {
            if !part.is_finger() {
                return Err(Error::load(format!("anchors.functional.{part}"), "functional anchors must belong to a finger"));
            }
            let v = list
                .iter()
                .enumerate()
                .map(|(i, a)| anchor(a, format!("anchors.functional.{part}[{i}].link")))
                .collect::<Result<Vec<_>>>()?;
            functional.insert(*part, v);
        }
        let grasping = self
            .anchors
            .grasping
            .iter()
            .enumerate()
            .map(|(i, a)| anchor(a, format!("anchors.grasping[{i}].link")))
            .collect::<Result<Vec<_>>>()?;
        let thumb_axes = self
            .axes
            .thumb_gf
            .iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(ThumbAxis {
                    name: t.name.clone(),
                    link: find(&t.link, format!("axes.thumb_gf[{i}].link"))?,
                    point: Vec3::from(t.point),
                    press: Vec3::from(t.press),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let press = self.axes.press.iter().map(|(k, v)| (*k, Vec3::from(*v))).collect();

        HandModel::new(
            self.name,
            links,
            joints,
            functional,
            grasping,
            self.grasp_center.map(Vec3::from),
            press,
            thumb_axes,
        )
    }
}
