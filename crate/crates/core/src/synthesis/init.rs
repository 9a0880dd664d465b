use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, Unit, UnitQuaternion};

use super::losses::{total_loss, LossWeights};
use super::{GraspTask, OptimizerSettings};
use crate::affordance::object_axes;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::hand::{GraspConfiguration, Part, PosedHand};

/// Contact is declared once the closest hand sample is this near the
/// object surface (m).
const CONTACT_GAP: f64 = 5e-5;
/// Total travel allowed while approaching the object (m).
const MAX_TRAVEL: f64 = 1.0;
const MAX_MARCH_STEPS: usize = 10_000;

/// Random departure from the canonical initialization.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InitPerturbation {
    /// Extra rotation about the object GF axis (rad).
    pub rotation: f64,
    /// Shift of the aim point along the object GF axis (m).
    pub offset: f64,
    /// Added to the flexion angle (rad).
    pub flex: f64,
}

/// Axis-alignment initialization without perturbation. Both signs of the
/// object FA axis are tried; the one with the lower initial loss, force
/// closure term excluded, wins.
pub fn axis_align_init(task: &GraspTask, settings: &OptimizerSettings) -> Result<GraspConfiguration> {
    axis_align_init_with(task, settings, &LossWeights::default(), &InitPerturbation::default())
}

/// Axis-alignment initialization.
///
/// 1. Rotate the hand so its GF axis matches the object's, then about that
///    axis so its FA axis matches the object's (either sign).
/// 2. Place the hand's functional target on the far side of the object's
///    functional part, well clear of the object, and move it along the
///    object FA axis. Steps equal the current gap between the hand samples
///    and the mesh, so no sample can cross the surface; the march stops at
///    first contact.
/// 3. Flexion joints sit at `init_flex`.
pub fn axis_align_init_with(
    task: &GraspTask,
    settings: &OptimizerSettings,
    weights: &LossWeights,
    perturbation: &InitPerturbation,
) -> Result<GraspConfiguration> {
    let hand = task.hand;
    let obj = task.object;
    let axes = object_axes(obj)?;

    let mut base = hand.flexed_configuration(settings.init_flex + perturbation.flex);
    for (a, j) in base.joint_angles.iter_mut().zip(&hand.joints) {
        if !j.flexion {
            *a = 0.0;
        }
    }
    hand.project_to_limits(&mut base);
    let posed = PosedHand::new(hand, &base)?;
    let (gf_h, fa_h) = crate::hand::hand_axes(hand, &base, task.finger, task.thumb_variant)?;
    let target_h = functional_target(task, &posed);
    let hand_radius = posed
        .points
        .iter()
        .map(|p| (p - target_h).norm())
        .fold(0.0, f64::max);

    let centroid = obj.surface.centroid().expect("non-empty surface");
    let obj_radius = obj
        .surface
        .points
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(0.0, f64::max);
    let target_o = task.functional_points.iter().sum::<Vec3>() / task.functional_points.len() as f64
        + axes.gf * perturbation.offset;
    let standoff = hand_radius + 2.0 * obj_radius + 0.01;

    let spin = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(axes.gf), perturbation.rotation);
    let mut best: Option<(f64, GraspConfiguration)> = None;
    for sign in [1.0, -1.0] {
        let r = spin * align_frames(&gf_h, &fa_h, &axes.gf, &(axes.fa * sign));
        let start = target_o - axes.fa * standoff - r * target_h;
        let root = Isometry3::from_parts(Translation3::from(start), r);
        let mut config = base.with_root(&root);
        march(task, &mut config, &axes.fa)?;
        let (_, terms) = total_loss(task, &config, weights, settings.contact_threshold)?;
        let loss = terms.weighted(&LossWeights { lambda_fc: 0.0, ..*weights });
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, config));
        }
    }
    Ok(best.expect("two candidates").1)
}

/// Endpoint of the hand GF axis in the world frame.
fn functional_target(task: &GraspTask, posed: &PosedHand) -> Vec3 {
    match (task.finger, task.thumb_variant) {
        (Part::Thumb, Some(v)) => {
            let axis = &task.hand.thumb_axes[v];
            posed.pose.point(axis.link, &axis.point)
        }
        _ => {
            let pts = task.functional_anchor_positions(posed);
            pts.iter().sum::<Vec3>() / pts.len() as f64
        }
    }
}

/// Rotation taking the orthonormal pair (a1, a2) onto (b1, b2).
fn align_frames(a1: &Vec3, a2: &Vec3, b1: &Vec3, b2: &Vec3) -> UnitQuaternion<f64> {
    let ma = Matrix3::from_columns(&[*a1, *a2, a1.cross(a2)]);
    let mb = Matrix3::from_columns(&[*b1, *b2, b1.cross(b2)]);
    let rot = Rotation3::from_matrix(&(mb * ma.transpose()));
    UnitQuaternion::from_rotation_matrix(&rot)
}

/// Translate `config` along `dir` until the hand touches the object.
///
/// The gap is the smaller of the hand samples' distance to the mesh and the
/// object samples' distance to the hand primitives, so neither surface can
/// pass through the other's samples.
fn march(task: &GraspTask, config: &mut GraspConfiguration, dir: &Vec3) -> Result<()> {
    let mesh = &task.object.mesh;
    let posed = PosedHand::new(task.hand, config)?;
    let all_links: Vec<usize> = (0..task.hand.links.len()).collect();
    let start = config.translation;
    let mut travel = 0.0;
    for _ in 0..MAX_MARCH_STEPS {
        let shift = dir * travel;
        let hand_gap = posed
            .points
            .iter()
            .map(|p| mesh.nearest_surface_point(&(p + shift)).distance)
            .fold(f64::INFINITY, f64::min);
        let object_gap = task
            .object
            .surface
            .points
            .iter()
            .filter_map(|p| posed.union_distance(&all_links, &(p - shift), hand_gap))
            .map(|d| d.distance)
            .fold(f64::INFINITY, f64::min);
        let gap = hand_gap.min(object_gap);
        if gap <= CONTACT_GAP {
            config.translation = start + shift;
            let moved: Vec<Vec3> = posed.points.iter().map(|p| p + shift).collect();
            if gap < 0.0 || mesh.min_signed_distance(&moved).unwrap_or(0.0) < 0.0 {
                return Err(Error::InitFailure(format!(
                    "{}: the hand starts inside the object",
                    task.object.id
                )));
            }
            return Ok(());
        }
        travel += gap;
        if travel > MAX_TRAVEL {
            break;
        }
    }
    Err(Error::InitFailure(format!(
        "{}: no contact within {MAX_TRAVEL} m of travel",
        task.object.id
    )))
}
