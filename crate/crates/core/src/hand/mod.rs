//! Articulated hand models.
//!
//! A hand is a tree of links joined by revolute joints and rooted at the
//! palm. Each link carries convex collision primitives and a pre-sampled
//! surface cloud; anchor points on the links define the hand's functional
//! and grasping regions.

mod config;
mod file;
mod kinematics;
mod model;
mod posed;

pub use config::GraspConfiguration;
pub use file::{
    load_hand, parse_hand, AnchorSpec, AnchorsSpec, AxesSpec, HandFile, JointSpec, LinkSpec, PoseSpec, PrimitiveSpec, ThumbAxisSpec,
};
pub use kinematics::{anchor_positions, forward_kinematics, hand_axes, hand_surface_points, AnchorSet, HandPose};
pub use model::{Anchor, HandModel, Joint, Link, Part, ThumbAxis};
pub use posed::{PartDistance, PosedHand};

#[cfg(test)]
pub(crate) mod tests;
