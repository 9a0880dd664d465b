//! Functional dexterous grasp synthesis.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: point clouds, triangle meshes, convex primitives, Chamfer
//!   distance, signed distances and oriented bounding boxes.
//! - [`hand`]: articulated hand models with forward kinematics, anchor sets
//!   and hand axes.
//! - [`affordance`]: affordance-annotated objects, rescaling and object axes.
//! - [`synthesis`]: axis-alignment initialization and gradient-based
//!   optimization of the five-term grasp loss.
//! - [`quality`]: grasp metrics, dataset filtering and the wrench-resistance
//!   check.
//! - [`net`]: a small conditional VAE that learns grasps from a synthesized
//!   dataset.
//! - [`dataset`]: the line-delimited grasp record format.
//! - [`pipeline`]: dataset generation over objects and scales.

pub mod affordance;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod hand;
pub mod net;
pub mod pipeline;
pub mod quality;
pub mod rng;
pub mod synthesis;

#[cfg(test)]
pub(crate) mod test_support;

pub use affordance::AffordanceObject;
pub use error::{Error, Result};
pub use geometry::{PointCloud, TriangleMesh, Vec3};
pub use hand::{GraspConfiguration, HandModel, Part};
