use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Isometry3, Unit};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexPrimitive, Vec3};

use super::GraspConfiguration;

/// Hand part a link belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Palm,
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Part {
    pub const FINGERS: [Part; 5] = [Part::Thumb, Part::Index, Part::Middle, Part::Ring, Part::Little];

    pub fn name(self) -> &'static str {
        match self {
            Part::Palm => "palm",
            Part::Thumb => "thumb",
            Part::Index => "index",
            Part::Middle => "middle",
            Part::Ring => "ring",
            Part::Little => "little",
        }
    }

    pub fn is_finger(self) -> bool {
        self != Part::Palm
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Part::Palm, Part::Thumb, Part::Index, Part::Middle, Part::Ring, Part::Little]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown hand part {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub part: Part,
    /// Collision primitives in the link frame.
    pub primitives: Vec<ConvexPrimitive>,
    /// Surface samples in the link frame.
    pub surface_points: Vec<Vec3>,
}

/// Revolute joint. The child link frame is `origin * rotation(axis, angle)`
/// relative to the parent link frame.
#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub parent: usize,
    pub child: usize,
    pub axis: Unit<Vec3>,
    pub origin: Isometry3<f64>,
    pub lower: f64,
    pub upper: f64,
    /// Flexes the finger toward the palm side; set to the initial flexion
    /// angle by the axis-alignment initializer.
    pub flexion: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub link: usize,
    pub point: Vec3,
}

/// One of the three thumb grasp-to-functional axis definitions: the axis
/// runs from the grasp centre to `point` on `link`; `press` is the force
/// direction in the palm frame.
#[derive(Clone, Debug)]
pub struct ThumbAxis {
    pub name: String,
    pub link: usize,
    pub point: Vec3,
    pub press: Vec3,
}

#[derive(Clone, Debug)]
pub struct HandModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub root: usize,
    pub functional_anchors: BTreeMap<Part, Vec<Anchor>>,
    pub grasping_anchors: Vec<Anchor>,
    /// Palm frame.
    pub grasp_center: Vec3,
    /// Press direction per finger, palm frame.
    pub press_axes: BTreeMap<Part, Vec3>,
    pub thumb_axes: Vec<ThumbAxis>,
    // derived
    pub(crate) joint_order: Vec<usize>,
    pub(crate) chains: Vec<Vec<usize>>,
    pub(crate) link_spheres: Vec<(Vec3, f64)>,
    pub(crate) part_links: BTreeMap<Part, Vec<usize>>,
}

impl HandModel {
    /// Assemble and validate a hand. Checks the joint tree, limits and
    /// anchor references and derives the traversal tables.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        links: Vec<Link>,
        joints: Vec<Joint>,
        functional_anchors: BTreeMap<Part, Vec<Anchor>>,
        grasping_anchors: Vec<Anchor>,
        grasp_center: Option<Vec3>,
        press_axes: BTreeMap<Part, Vec3>,
        thumb_axes: Vec<ThumbAxis>,
    ) -> Result<Self> {
        let nl = links.len();
        if nl == 0 {
            return Err(Error::load("links", "hand has no links"));
        }
        for (i, l) in links.iter().enumerate() {
            if l.primitives.is_empty() {
                return Err(Error::load(format!("links[{i}].primitives"), format!("link {:?} has no primitives", l.name)));
            }
        }
        let mut parent_joint: Vec<Option<usize>> = vec![None; nl];
        for (j, joint) in joints.iter().enumerate() {
            if joint.parent >= nl || joint.child >= nl {
                return Err(Error::load(format!("joints[{j}]"), "link index out of range"));
            }
            if joint.lower > joint.upper {
                return Err(Error::load(
                    format!("joints[{j}].limits"),
                    format!("joint {:?} has lower limit {} above upper limit {}", joint.name, joint.lower, joint.upper),
                ));
            }
            if (joint.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::load(format!("joints[{j}].axis"), "axis is not unit length"));
            }
            if let Some(prev) = parent_joint[joint.child] {
                return Err(Error::load(
                    format!("joints[{j}].child"),
                    format!("link {:?} has two parent joints ({:?} and {:?})", links[joint.child].name, joints[prev].name, joint.name),
                ));
            }
            parent_joint[joint.child] = Some(j);
        }
        let roots: Vec<usize> = (0..nl).filter(|&l| parent_joint[l].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::load("joints", format!("joint graph must have exactly one root link, found {}", roots.len())));
        }
        let root = roots[0];
        if links[root].part != Part::Palm {
            return Err(Error::load("joints", format!("root link {:?} is not part of the palm", links[root].name)));
        }

        // walk up from every link; a cycle never reaches the root
        let mut chains = vec![Vec::new(); nl];
        for (l, chain) in chains.iter_mut().enumerate() {
            let mut cur = l;
            let mut steps = 0;
            while let Some(j) = parent_joint[cur] {
                chain.push(j);
                cur = joints[j].parent;
                steps += 1;
                if steps > nl {
                    return Err(Error::load("joints", format!("cycle in joint graph through link {:?}", links[l].name)));
                }
            }
            chain.reverse();
        }
        let mut joint_order: Vec<usize> = (0..joints.len()).collect();
        joint_order.sort_by_key(|&j| (chains[joints[j].child].len(), j));

        let check_anchor = |a: &Anchor, path: String| -> Result<()> {
            if a.link >= nl {
                return Err(Error::load(path, "anchor references a missing link"));
            }
            Ok(())
        };
        for (part, list) in &functional_anchors {
            if list.is_empty() {
                return Err(Error::load(format!("anchors.functional.{part}"), "empty anchor list"));
            }
            for (i, a) in list.iter().enumerate() {
                check_anchor(a, format!("anchors.functional.{part}[{i}]"))?;
            }
        }
        if grasping_anchors.is_empty() {
            return Err(Error::load("anchors.grasping", "empty anchor list"));
        }
        for (i, a) in grasping_anchors.iter().enumerate() {
            check_anchor(a, format!("anchors.grasping[{i}]"))?;
        }
        if thumb_axes.len() != 3 {
            return Err(Error::load(
                "axes.thumb_gf",
                format!("the thumb needs exactly 3 grasp-to-functional axes, found {}", thumb_axes.len()),
            ));
        }
        for (i, t) in thumb_axes.iter().enumerate() {
            if t.link >= nl {
                return Err(Error::load(format!("axes.thumb_gf[{i}].link"), "missing link"));
            }
            if t.press.norm() < 1e-9 {
                return Err(Error::load(format!("axes.thumb_gf[{i}].press"), "zero press direction"));
            }
        }
        for (part, list) in &functional_anchors {
            if *part != Part::Thumb && !press_axes.contains_key(part) {
                return Err(Error::load(format!("axes.press.{part}"), "functional finger without a press direction"));
            }
            let _ = list;
        }

        let grasp_center = grasp_center.unwrap_or_else(|| {
            // default: centroid of the grasping anchors at rest, palm frame
            let rest = rest_poses(&links, &joints, &joint_order, root);
            grasping_anchors
                .iter()
                .map(|a| rest[a.link].transform_point(&a.point.into()).coords)
                .sum::<Vec3>()
                / grasping_anchors.len() as f64
        });

        let link_spheres = links
            .iter()
            .map(|l| {
                let spheres: Vec<(Vec3, f64)> = l.primitives.iter().map(|p| p.bounding_sphere()).collect();
                let c = spheres.iter().map(|s| s.0).sum::<Vec3>() / spheres.len() as f64;
                let r = spheres.iter().map(|(sc, sr)| (sc - c).norm() + sr).fold(0.0, f64::max);
                (c, r)
            })
            .collect();
        let mut part_links: BTreeMap<Part, Vec<usize>> = BTreeMap::new();
        for (i, l) in links.iter().enumerate() {
            part_links.entry(l.part).or_default().push(i);
        }

        Ok(HandModel {
            name,
            links,
            joints,
            root,
            functional_anchors,
            grasping_anchors,
            grasp_center,
            press_axes: press_axes.into_iter().map(|(k, v)| (k, v.normalize())).collect(),
            thumb_axes: thumb_axes
                .into_iter()
                .map(|mut t| {
                    t.press = t.press.normalize();
                    t
                })
                .collect(),
            joint_order,
            chains,
            link_spheres,
            part_links,
        })
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// Parts present in the hand, with the links making up each.
    pub fn parts(&self) -> &BTreeMap<Part, Vec<usize>> {
        &self.part_links
    }

    /// Joints on the path from the root to `link`, root first.
    pub fn chain(&self, link: usize) -> &[usize] {
        &self.chains[link]
    }

    /// Bounding sphere of a link's primitives in the link frame.
    pub fn link_sphere(&self, link: usize) -> (Vec3, f64) {
        self.link_spheres[link]
    }

    pub fn total_surface_points(&self) -> usize {
        self.links.iter().map(|l| l.surface_points.len()).sum()
    }

    pub fn check_config(&self, config: &GraspConfiguration) -> Result<()> {
        if config.joint_angles.len() != self.joints.len() {
            return Err(Error::invalid(format!(
                "configuration has {} joint angles, hand {:?} has {} joints",
                config.joint_angles.len(),
                self.name,
                self.joints.len()
            )));
        }
        Ok(())
    }

    /// Clamp every joint angle into its limits.
    pub fn project_to_limits(&self, config: &mut GraspConfiguration) {
        for (a, j) in config.joint_angles.iter_mut().zip(&self.joints) {
            *a = a.clamp(j.lower, j.upper);
        }
    }

    pub fn within_limits(&self, config: &GraspConfiguration) -> bool {
        config
            .joint_angles
            .iter()
            .zip(&self.joints)
            .all(|(a, j)| *a >= j.lower && *a <= j.upper)
    }

    /// Identity root pose with every flexion joint at `flex` and all other
    /// joints at zero, each clamped into its limits.
    pub fn flexed_configuration(&self, flex: f64) -> GraspConfiguration {
        let mut c = GraspConfiguration::identity(self.joints.len());
        for (a, j) in c.joint_angles.iter_mut().zip(&self.joints) {
            *a = if j.flexion { flex } else { 0.0 };
        }
        self.project_to_limits(&mut c);
        c
    }
}

/// Link poses at the identity configuration.
pub(crate) fn rest_poses(links: &[Link], joints: &[Joint], order: &[usize], root: usize) -> Vec<Isometry3<f64>> {
    let mut poses = vec![Isometry3::identity(); links.len()];
    poses[root] = Isometry3::identity();
    for &j in order {
        let joint = &joints[j];
        poses[joint.child] = poses[joint.parent] * joint.origin;
    }
    poses
}
