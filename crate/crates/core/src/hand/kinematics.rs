use nalgebra::{Isometry3, Point3, UnitQuaternion};

use super::model::{Anchor, HandModel, Part};
use super::GraspConfiguration;
use crate::error::{Error, Result};
use crate::geometry::{orthonormalize_against, PointCloud, Vec3};

/// World-frame link poses for one configuration, plus the joint frames
/// needed to push point gradients back onto the configuration.
#[derive(Clone, Debug)]
pub struct HandPose {
    pub links: Vec<Isometry3<f64>>,
    root_translation: Vec3,
    joint_axes: Vec<Vec3>,
    joint_origins: Vec<Vec3>,
}

pub fn forward_kinematics(hand: &HandModel, config: &GraspConfiguration) -> Result<HandPose> {
    hand.check_config(config)?;
    let mut links = vec![Isometry3::identity(); hand.links.len()];
    let mut joint_axes = vec![Vec3::zeros(); hand.joints.len()];
    let mut joint_origins = vec![Vec3::zeros(); hand.joints.len()];
    links[hand.root] = config.root_pose();
    for &j in &hand.joint_order {
        let joint = &hand.joints[j];
        let frame = links[joint.parent] * joint.origin;
        joint_axes[j] = frame.rotation * joint.axis.into_inner();
        joint_origins[j] = frame.translation.vector;
        let rot = UnitQuaternion::from_axis_angle(&joint.axis, config.joint_angles[j]);
        links[joint.child] = frame * rot;
    }
    Ok(HandPose {
        links,
        root_translation: config.translation,
        joint_axes,
        joint_origins,
    })
}

impl HandPose {
    #[inline]
    pub fn point(&self, link: usize, local: &Vec3) -> Vec3 {
        self.links[link].transform_point(&Point3::from(*local)).coords
    }

    pub fn anchor(&self, a: &Anchor) -> Vec3 {
        self.point(a.link, &a.point)
    }

    pub fn joint_axis(&self, joint: usize) -> Vec3 {
        self.joint_axes[joint]
    }

    pub fn joint_origin(&self, joint: usize) -> Vec3 {
        self.joint_origins[joint]
    }

    /// Accumulate the tangent-space gradient induced by a loss gradient `g`
    /// acting at world point `p`, where `p` moves rigidly with `link`.
    ///
    /// Layout of `out`: translation (3), world-frame rotation increment (3),
    /// one entry per joint.
    #[inline]
    pub fn accumulate(&self, hand: &HandModel, link: usize, p: &Vec3, g: &Vec3, out: &mut [f64]) {
        out[0] += g.x;
        out[1] += g.y;
        out[2] += g.z;
        let r = (p - self.root_translation).cross(g);
        out[3] += r.x;
        out[4] += r.y;
        out[5] += r.z;
        for &j in hand.chain(link) {
            out[6 + j] += self.joint_axes[j].dot(&(p - self.joint_origins[j]).cross(g));
        }
    }

    /// Every link's surface samples in the world frame, with the owning link.
    pub fn surface_points(&self, hand: &HandModel) -> (Vec<Vec3>, Vec<usize>) {
        let n = hand.total_surface_points();
        let mut pts = Vec::with_capacity(n);
        let mut owner = Vec::with_capacity(n);
        for (i, l) in hand.links.iter().enumerate() {
            for p in &l.surface_points {
                pts.push(self.point(i, p));
                owner.push(i);
            }
        }
        (pts, owner)
    }
}

/// Union of link surface clouds posed by forward kinematics.
pub fn hand_surface_points(hand: &HandModel, config: &GraspConfiguration) -> Result<PointCloud> {
    let pose = forward_kinematics(hand, config)?;
    Ok(PointCloud::new(pose.surface_points(hand).0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorSet {
    Functional(Part),
    Grasping,
}

impl HandModel {
    pub fn anchors(&self, set: AnchorSet) -> Result<&[Anchor]> {
        match set {
            AnchorSet::Grasping => Ok(&self.grasping_anchors),
            AnchorSet::Functional(part) => self
                .functional_anchors
                .get(&part)
                .map(|v| v.as_slice())
                .ok_or_else(|| Error::invalid(format!("hand {:?} has no functional anchors for {part}", self.name))),
        }
    }
}

/// World-frame positions of an anchor set.
pub fn anchor_positions(hand: &HandModel, config: &GraspConfiguration, set: AnchorSet) -> Result<PointCloud> {
    let anchors = hand.anchors(set)?;
    let pose = forward_kinematics(hand, config)?;
    Ok(PointCloud::new(anchors.iter().map(|a| pose.anchor(a)).collect()))
}

/// Hand grasp-to-functional (GF) and force-application (FA) axes in the
/// world frame.
///
/// GF runs from the grasp centre to the centroid of the finger's functional
/// anchors, or to the selected thumb axis point when the thumb is the
/// functional finger. FA is the declared press direction, rotated with the
/// root and re-orthogonalized against GF.
pub fn hand_axes(
    hand: &HandModel,
    config: &GraspConfiguration,
    finger: Part,
    thumb_variant: Option<usize>,
) -> Result<(Vec3, Vec3)> {
    let pose = forward_kinematics(hand, config)?;
    hand_axes_from_pose(hand, &pose, finger, thumb_variant)
}

pub(crate) fn hand_axes_from_pose(
    hand: &HandModel,
    pose: &HandPose,
    finger: Part,
    thumb_variant: Option<usize>,
) -> Result<(Vec3, Vec3)> {
    let center = pose.point(hand.root, &hand.grasp_center);
    let root_rot = pose.links[hand.root].rotation;
    let (target, press) = match (finger, thumb_variant) {
        (Part::Thumb, Some(v)) => {
            let axis = hand
                .thumb_axes
                .get(v)
                .ok_or_else(|| Error::invalid(format!("thumb variant {v} out of range (0..3)")))?;
            (pose.point(axis.link, &axis.point), axis.press)
        }
        (Part::Thumb, None) => return Err(Error::invalid("thumb as functional finger needs a thumb variant")),
        (Part::Palm, _) => return Err(Error::invalid("the palm is not a functional finger")),
        (f, Some(_)) => return Err(Error::invalid(format!("thumb variant given for {f}"))),
        (f, None) => {
            let anchors = hand.anchors(AnchorSet::Functional(f))?;
            let c = anchors.iter().map(|a| pose.anchor(a)).sum::<Vec3>() / anchors.len() as f64;
            let press = *hand
                .press_axes
                .get(&f)
                .ok_or_else(|| Error::invalid(format!("no press direction for {f}")))?;
            (c, press)
        }
    };
    let gf = (target - center)
        .try_normalize(1e-9)
        .ok_or_else(|| Error::DegenerateGeometry("functional target coincides with the grasp centre".into()))?;
    let fa = orthonormalize_against(&(root_rot * press), &gf)
        .ok_or_else(|| Error::DegenerateGeometry("press direction is parallel to the grasp-to-functional axis".into()))?;
    Ok((gf, fa))
}
