//! Functional grasp synthesis.
//!
//! A grasp is found in two stages. Axis-alignment initialization rotates the
//! hand so that its grasp-to-functional (GF) and force-application (FA) axes
//! match the object's, then moves it onto the object until first contact.
//! Adam then minimizes the weighted sum of five losses over the root pose and
//! joint angles:
//!
//! - `L_F`: Chamfer distance between the functional finger's anchors and the
//!   object's functional part,
//! - `L_G`: Chamfer distance between the hand's grasping anchors and the
//!   object's grasping part,
//! - `L_FC`: norm of the net wrench of unit contact forces,
//! - `L_IP`: depth of object points inside hand parts,
//! - `L_SP`: depth of hand parts inside each other.

mod batch;
mod init;
mod losses;
mod optimize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::affordance::AffordanceObject;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::hand::{Anchor, AnchorSet, HandModel, Part, PosedHand};

pub use batch::{run_single, synthesize_batch, RunOutcome, SynthesisRun};
pub use init::{axis_align_init, axis_align_init_with, InitPerturbation};
pub use losses::{
    detect_contacts, kink_margin, loss_force_closure, loss_functional, loss_gradient, loss_grasping,
    loss_interpenetration, loss_self_penetration, total_loss, ContactSet, LossTerms, LossWeights,
    EMPTY_CONTACT_PENALTY,
};
pub use optimize::{optimize_grasp, write_trajectory_csv, OptimizationResult, TrajectoryStep};

/// Which hand region actuates the object's functional part: a finger, or
/// the thumb with one of its three GF axis variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FunctionalMode {
    Finger(Part),
    /// Thumb with a fixed variant, or `None` to draw one per run.
    Thumb(Option<usize>),
}

impl FunctionalMode {
    pub fn finger(self) -> Part {
        match self {
            FunctionalMode::Finger(p) => p,
            FunctionalMode::Thumb(_) => Part::Thumb,
        }
    }
}

impl fmt::Display for FunctionalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalMode::Finger(p) => write!(f, "{p}"),
            FunctionalMode::Thumb(None) => write!(f, "thumb"),
            FunctionalMode::Thumb(Some(v)) => write!(f, "thumb:{v}"),
        }
    }
}

impl FromStr for FunctionalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(v) = s.strip_prefix("thumb:") {
            let v: usize = v
                .parse()
                .map_err(|_| Error::Parse(format!("bad thumb variant in {s:?}")))?;
            if v > 2 {
                return Err(Error::Parse(format!("thumb variant must be 0, 1 or 2, got {v}")));
            }
            return Ok(FunctionalMode::Thumb(Some(v)));
        }
        match s.parse::<Part>()? {
            Part::Thumb => Ok(FunctionalMode::Thumb(None)),
            Part::Palm => Err(Error::Parse("the palm cannot be the functional finger".into())),
            p => Ok(FunctionalMode::Finger(p)),
        }
    }
}

impl Serialize for FunctionalMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FunctionalMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Optimizer and initialization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Adam step for rotation and joint angles (rad).
    pub step_size: f64,
    /// Adam step for the root translation (m).
    pub translation_step: f64,
    pub max_steps: usize,
    pub adam_betas: (f64, f64),
    /// Anchors closer than this to the object surface become contacts (m).
    pub contact_threshold: f64,
    /// Initial angle of every flexion joint (rad).
    pub init_flex: f64,
    pub seed: u64,
    /// Stop once the best loss has not improved for this many steps
    /// (0 disables early stopping).
    pub patience: usize,
    /// Candidate functional regions; each run draws one.
    pub functional_modes: Vec<FunctionalMode>,
    /// Half-widths of the per-run random perturbation of the
    /// initialization: rotation about the object GF axis (rad), offset
    /// along it (m) and flexion (rad).
    pub jitter_rotation: f64,
    pub jitter_offset: f64,
    pub jitter_flex: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            step_size: 0.002,
            translation_step: 0.0003,
            max_steps: 200,
            adam_betas: (0.9, 0.999),
            contact_threshold: 0.005,
            init_flex: 0.2,
            seed: 0,
            patience: 40,
            functional_modes: vec![FunctionalMode::Finger(Part::Index)],
            jitter_rotation: 0.15,
            jitter_offset: 0.005,
            jitter_flex: 0.05,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        if !(self.contact_threshold > 0.0) {
            return Err(Error::invalid("contact_threshold must be positive"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size must be positive"));
        }
        if !(self.translation_step > 0.0 && self.translation_step.is_finite()) {
            return Err(Error::invalid("translation_step must be positive"));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if self.functional_modes.is_empty() {
            return Err(Error::invalid("at least one functional mode is required"));
        }
        Ok(())
    }
}

/// A hand, an object and the functional region that should actuate it.
#[derive(Clone, Debug)]
pub struct GraspTask<'a> {
    pub hand: &'a HandModel,
    pub object: &'a AffordanceObject,
    pub finger: Part,
    pub thumb_variant: Option<usize>,
    pub(crate) functional_anchors: Vec<Anchor>,
    /// Functional and grasping anchors, the contact candidates.
    pub(crate) contact_anchors: Vec<Anchor>,
    pub(crate) functional_points: Vec<Vec3>,
    pub(crate) grasping_points: Vec<Vec3>,
}

impl<'a> GraspTask<'a> {
    pub fn new(
        hand: &'a HandModel,
        object: &'a AffordanceObject,
        finger: Part,
        thumb_variant: Option<usize>,
    ) -> Result<Self> {
        match (finger, thumb_variant) {
            (Part::Thumb, None) => return Err(Error::invalid("thumb as functional finger needs a thumb variant")),
            (Part::Thumb, Some(v)) if v >= hand.thumb_axes.len() => {
                return Err(Error::invalid(format!("thumb variant {v} out of range")))
            }
            (Part::Thumb, Some(_)) => {}
            (f, Some(_)) => return Err(Error::invalid(format!("thumb variant given for {f}"))),
            (_, None) => {}
        }
        let functional_anchors = hand.anchors(AnchorSet::Functional(finger))?.to_vec();
        if object.functional.is_empty() || object.grasping.is_empty() {
            return Err(Error::invalid(format!("object {} has an empty part", object.id)));
        }
        let mut contact_anchors = functional_anchors.clone();
        contact_anchors.extend(hand.grasping_anchors.iter().cloned());
        Ok(GraspTask {
            hand,
            object,
            finger,
            thumb_variant,
            functional_anchors,
            contact_anchors,
            functional_points: object.functional_points(),
            grasping_points: object.grasping_points(),
        })
    }

    /// Task for a functional mode whose thumb variant is already fixed.
    pub fn for_mode(hand: &'a HandModel, object: &'a AffordanceObject, mode: FunctionalMode) -> Result<Self> {
        match mode {
            FunctionalMode::Finger(p) => Self::new(hand, object, p, None),
            FunctionalMode::Thumb(v) => Self::new(hand, object, Part::Thumb, Some(v.unwrap_or(0))),
        }
    }

    pub(crate) fn functional_anchor_positions(&self, posed: &PosedHand) -> Vec<Vec3> {
        self.functional_anchors.iter().map(|a| posed.pose.anchor(a)).collect()
    }

    pub(crate) fn grasping_anchor_positions(&self, posed: &PosedHand) -> Vec<Vec3> {
        self.hand.grasping_anchors.iter().map(|a| posed.pose.anchor(a)).collect()
    }
}
