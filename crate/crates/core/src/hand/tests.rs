use std::f64::consts::FRAC_PI_2;

use approx::assert_relative_eq;
use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use proptest::prelude::*;
use serde_json::{json, Value};

use super::*;
use crate::error::Error;
use crate::geometry::Vec3;

/// Palm plus a three-link index chain. The first joint sits at x = 0.1 and
/// turns about z; the next two flex about x.
pub(crate) fn chain_hand_json() -> Value {
    json!({
        "name": "chain",
        "links": [
            {"name": "palm", "part": "palm",
             "primitives": [{"kind": "box", "center": [0, 0, 0], "half_extents": [0.04, 0.04, 0.01]}],
             "surface_points": [[0.04, 0, 0], [-0.04, 0, 0], [0, 0, 0.01]]},
            {"name": "l1", "part": "index",
             "primitives": [{"kind": "capsule", "a": [0, 0, 0], "b": [0.05, 0, 0], "radius": 0.008}],
             "surface_points": [[0.05, 0, 0.008], [0.0, 0.008, 0], [0.025, 0, -0.008]]},
            {"name": "l2", "part": "index",
             "primitives": [{"kind": "capsule", "a": [0, 0, 0], "b": [0.03, 0, 0], "radius": 0.007}],
             "surface_points": [[0.03, 0, 0.007], [0.015, 0.007, 0]]},
            {"name": "l3", "part": "index",
             "primitives": [{"kind": "sphere", "center": [0.01, 0, 0], "radius": 0.007}],
             "surface_points": [[0.017, 0, 0], [0.01, 0, 0.007]]}
        ],
        "joints": [
            {"name": "j1", "parent": "palm", "child": "l1", "axis": [0, 0, 1],
             "origin": {"translation": [0.1, 0, 0]}, "limits": [-2.0, 2.0]},
            {"name": "j2", "parent": "l1", "child": "l2", "axis": [0, 1, 0],
             "origin": {"translation": [0.05, 0, 0]}, "limits": [-0.5, 1.5], "flexion": true},
            {"name": "j3", "parent": "l2", "child": "l3", "axis": [0, 1, 0],
             "origin": {"translation": [0.03, 0, 0]}, "limits": [0.0, 1.5], "flexion": true}
        ],
        "anchors": {
            "functional": {"index": [{"link": "l3", "point": [0.01, 0, 0.007]}, {"link": "l3", "point": [0.017, 0, 0]}]},
            "grasping": [{"link": "palm", "point": [0.02, 0.02, 0.01]}, {"link": "palm", "point": [-0.02, -0.02, 0.01]},
                         {"link": "l1", "point": [0.025, 0, 0.008]}]
        },
        "axes": {
            "press": {"index": [0, 0, 1]},
            "thumb_gf": [
                {"name": "tip", "link": "l3", "point": [0.017, 0, 0], "press": [1, 0, 0]},
                {"name": "pad", "link": "l3", "point": [0.01, 0, 0.007], "press": [0, 0, 1]},
                {"name": "lateral", "link": "l2", "point": [0.015, 0.007, 0], "press": [0, 1, 0]}
            ]
        }
    })
}

pub(crate) fn chain_hand() -> HandModel {
    parse_hand(&chain_hand_json().to_string()).unwrap()
}

fn load_error(v: Value) -> (String, String) {
    match parse_hand(&v.to_string()) {
        Err(Error::Load { path, message }) => (path, message),
        other => panic!("expected load error, got {other:?}"),
    }
}

#[test]
fn loads_chain_fixture() {
    let h = chain_hand();
    assert_eq!(h.n_joints(), 3);
    assert_eq!(h.links.len(), 4);
    assert_eq!(h.root, 0);
    assert_eq!(h.chain(3), &[0, 1, 2]);
    assert_eq!(h.total_surface_points(), 10);
}

#[test]
fn default_grasp_center_is_rest_centroid_of_grasping_anchors() {
    let h = chain_hand();
    // l1 rests at x = 0.1, so its anchor sits at (0.125, 0, 0.008)
    let expected = (Vec3::new(0.02, 0.02, 0.01) + Vec3::new(-0.02, -0.02, 0.01) + Vec3::new(0.125, 0.0, 0.008)) / 3.0;
    assert_relative_eq!(h.grasp_center, expected, epsilon = 1e-12);
}

#[test]
fn rejects_inverted_limits_naming_the_joint() {
    let mut v = chain_hand_json();
    v["joints"][1]["limits"] = json!([1.0, 0.5]);
    let (path, msg) = load_error(v);
    assert_eq!(path, "joints[1].limits");
    assert!(msg.contains("\"j2\""), "{msg}");
}

#[test]
fn rejects_wrong_thumb_axis_count() {
    let mut v = chain_hand_json();
    v["axes"]["thumb_gf"].as_array_mut().unwrap().pop();
    let (path, msg) = load_error(v);
    assert_eq!(path, "axes.thumb_gf");
    assert!(msg.contains("exactly 3"), "{msg}");
}

#[test]
fn rejects_cycles_and_multiple_roots() {
    let mut v = chain_hand_json();
    // l1 -> palm closes a loop and leaves no root
    v["joints"][0]["parent"] = json!("l3");
    let (_, msg) = load_error(v);
    assert!(msg.contains("root") || msg.contains("cycle"), "{msg}");

    let mut v = chain_hand_json();
    v["joints"].as_array_mut().unwrap().remove(2);
    let (_, msg) = load_error(v);
    assert!(msg.contains("exactly one root"), "{msg}");
}

#[test]
fn rejects_unknown_links_and_fields() {
    let mut v = chain_hand_json();
    v["anchors"]["grasping"][0]["link"] = json!("nowhere");
    let (path, _) = load_error(v);
    assert_eq!(path, "anchors.grasping[0].link");

    let mut v = chain_hand_json();
    v["links"][0]["colour"] = json!("red");
    let (path, msg) = load_error(v);
    assert_eq!(path, "<document>");
    assert!(msg.contains("colour"), "{msg}");
}

#[test]
fn rejects_dimension_mismatch() {
    let h = chain_hand();
    let c = GraspConfiguration::identity(2);
    assert!(matches!(forward_kinematics(&h, &c), Err(Error::InvalidArgument(_))));
}

#[test]
fn identity_config_gives_rest_poses() {
    let h = chain_hand();
    let pose = forward_kinematics(&h, &GraspConfiguration::identity(3)).unwrap();
    let rest = model::rest_poses(&h.links, &h.joints, &h.joint_order, h.root);
    for (a, b) in pose.links.iter().zip(&rest) {
        assert_relative_eq!(a.to_homogeneous(), b.to_homogeneous(), epsilon = 1e-15);
    }
    assert_relative_eq!(pose.links[3].translation.vector, Vec3::new(0.18, 0.0, 0.0), epsilon = 1e-15);
}

#[test]
fn quarter_turn_rotates_child_chain_about_joint_axis() {
    let h = chain_hand();
    let mut c = GraspConfiguration::identity(3);
    c.joint_angles[0] = FRAC_PI_2;
    let pose = forward_kinematics(&h, &c).unwrap();
    // j1 at (0.1, 0, 0) about +z: l2's origin (0.15, 0, 0) swings to (0.1, 0.05, 0)
    assert_relative_eq!(pose.links[1].translation.vector, Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-15);
    assert_relative_eq!(pose.links[2].translation.vector, Vec3::new(0.1, 0.05, 0.0), epsilon = 1e-15);
    assert_relative_eq!(pose.links[3].translation.vector, Vec3::new(0.1, 0.08, 0.0), epsilon = 1e-15);
    assert_relative_eq!(pose.links[3].rotation * Vec3::x(), Vec3::y(), epsilon = 1e-15);
}

#[test]
fn surface_points_at_identity_are_rest_clouds() {
    let h = chain_hand();
    let cloud = hand_surface_points(&h, &GraspConfiguration::identity(3)).unwrap();
    assert_eq!(cloud.len(), 10);
    assert_relative_eq!(cloud.points[3], Vec3::new(0.15, 0.0, 0.008), epsilon = 1e-15);
    assert_relative_eq!(cloud.points[8], Vec3::new(0.197, 0.0, 0.0), epsilon = 1e-15);
}

#[test]
fn anchor_sets() {
    let h = chain_hand();
    let id = GraspConfiguration::identity(3);
    let g = anchor_positions(&h, &id, AnchorSet::Grasping).unwrap();
    assert_eq!(g.len(), 3);
    assert_relative_eq!(g.points[2], Vec3::new(0.125, 0.0, 0.008), epsilon = 1e-15);
    let f = anchor_positions(&h, &id, AnchorSet::Functional(Part::Index)).unwrap();
    assert_eq!(f.len(), 2);
    assert!(matches!(
        anchor_positions(&h, &id, AnchorSet::Functional(Part::Ring)),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn axes_at_identity_and_argument_checks() {
    let h = chain_hand();
    let id = GraspConfiguration::identity(3);
    let (gf, fa) = hand_axes(&h, &id, Part::Index, None).unwrap();
    let centroid = (Vec3::new(0.19, 0.0, 0.007) + Vec3::new(0.197, 0.0, 0.0)) / 2.0;
    assert_relative_eq!(gf, (centroid - h.grasp_center).normalize(), epsilon = 1e-12);
    let declared = Vec3::z();
    let expected_fa = (declared - gf * gf.dot(&declared)).normalize();
    assert_relative_eq!(fa, expected_fa, epsilon = 1e-12);

    assert!(matches!(hand_axes(&h, &id, Part::Thumb, None), Err(Error::InvalidArgument(_))));
    assert!(matches!(hand_axes(&h, &id, Part::Index, Some(0)), Err(Error::InvalidArgument(_))));
    assert!(matches!(hand_axes(&h, &id, Part::Thumb, Some(3)), Err(Error::InvalidArgument(_))));
    for v in 0..3 {
        let (gf, fa) = hand_axes(&h, &id, Part::Thumb, Some(v)).unwrap();
        assert!(gf.dot(&fa).abs() < 1e-12);
    }
}

#[test]
fn projection_clamps_and_is_idempotent() {
    let h = chain_hand();
    let mut c = GraspConfiguration::identity(3);
    c.joint_angles = vec![3.0, -1.0, 0.7];
    h.project_to_limits(&mut c);
    assert_eq!(c.joint_angles, vec![2.0, -0.5, 0.7]);
    let once = c.clone();
    h.project_to_limits(&mut c);
    assert_eq!(c, once);
    assert!(h.within_limits(&c));
}

fn arb_rotation() -> impl Strategy<Value = UnitQuaternion<f64>> {
    (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c)| UnitQuaternion::from_scaled_axis(Vec3::new(a, b, c)))
}

fn arb_config() -> impl Strategy<Value = GraspConfiguration> {
    (
        (-0.5..0.5f64, -0.5..0.5f64, -0.5..0.5f64),
        arb_rotation(),
        (-2.0..2.0f64, -0.5..1.5f64, 0.0..1.5f64),
    )
        .prop_map(|((x, y, z), r, (a, b, c))| GraspConfiguration {
            translation: Vec3::new(x, y, z),
            rotation: r,
            joint_angles: vec![a, b, c],
        })
}

proptest! {
    #[test]
    fn fk_composes_with_root_pose(c in arb_config()) {
        let h = chain_hand();
        let local = GraspConfiguration { translation: Vec3::zeros(), rotation: UnitQuaternion::identity(), ..c.clone() };
        let root = c.root_pose();
        let a = forward_kinematics(&h, &c).unwrap();
        let b = forward_kinematics(&h, &local).unwrap();
        for (pa, pb) in a.links.iter().zip(&b.links) {
            let composed = root * pb;
            prop_assert!((pa.to_homogeneous() - composed.to_homogeneous()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn translation_shifts_every_point(c in arb_config(), t in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)) {
        let h = chain_hand();
        let t = Vec3::new(t.0, t.1, t.2);
        let moved = GraspConfiguration { translation: c.translation + t, ..c.clone() };
        let a = hand_surface_points(&h, &c).unwrap();
        let b = hand_surface_points(&h, &moved).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!((q - p - t).norm() < 1e-12);
        }
    }

    #[test]
    fn same_link_distances_are_rigid(c in arb_config()) {
        let h = chain_hand();
        let a = hand_surface_points(&h, &GraspConfiguration::identity(3)).unwrap();
        let b = hand_surface_points(&h, &c).unwrap();
        // points 3..6 belong to l1
        for i in 3..6 {
            for j in 3..6 {
                let d0 = (a.points[i] - a.points[j]).norm();
                let d1 = (b.points[i] - b.points[j]).norm();
                prop_assert!((d0 - d1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn anchors_rotate_with_root(r in arb_rotation()) {
        let h = chain_hand();
        let id = GraspConfiguration::identity(3);
        let rotated = GraspConfiguration { rotation: r, ..id.clone() };
        let a = anchor_positions(&h, &id, AnchorSet::Grasping).unwrap();
        let b = anchor_positions(&h, &rotated, AnchorSet::Grasping).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!((r * p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn axes_are_equivariant(c in arb_config(), r in arb_rotation(), variant in 0usize..4) {
        let h = chain_hand();
        let (finger, tv) = if variant == 3 { (Part::Index, None) } else { (Part::Thumb, Some(variant)) };
        let turned = c.with_root(&(Isometry3::from_parts(Translation3::identity(), r) * c.root_pose()));
        let (gf0, fa0) = hand_axes(&h, &c, finger, tv).unwrap();
        let (gf1, fa1) = hand_axes(&h, &turned, finger, tv).unwrap();
        prop_assert!((r * gf0 - gf1).norm() < 1e-6);
        prop_assert!((r * fa0 - fa1).norm() < 1e-6);
        prop_assert!(gf1.dot(&fa1).abs() < 1e-6);
        prop_assert!((gf1.norm() - 1.0).abs() < 1e-12 && (fa1.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anchor_jacobian_matches_central_differences(c in arb_config(), g in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)) {
        let h = chain_hand();
        let g = Vec3::new(g.0, g.1, g.2);
        let anchor = h.functional_anchors[&Part::Index][1].clone();
        let pose = forward_kinematics(&h, &c).unwrap();
        let p = pose.anchor(&anchor);
        let mut analytic = vec![0.0; c.tangent_dim()];
        pose.accumulate(&h, anchor.link, &p, &g, &mut analytic);
        let step = 1e-5;
        for k in 0..c.tangent_dim() {
            let mut d = vec![0.0; c.tangent_dim()];
            d[k] = step;
            let plus = forward_kinematics(&h, &c.retract(&d)).unwrap().anchor(&anchor);
            d[k] = -step;
            let minus = forward_kinematics(&h, &c.retract(&d)).unwrap().anchor(&anchor);
            let numeric = g.dot(&(plus - minus)) / (2.0 * step);
            let scale = analytic[k].abs().max(numeric.abs()).max(1e-3);
            prop_assert!((analytic[k] - numeric).abs() / scale < 1e-4, "k={} analytic={} numeric={}", k, analytic[k], numeric);
        }
    }

    #[test]
    fn projection_never_moves_feasible_angles(a in -4.0..4.0f64, b in -4.0..4.0f64, c in -4.0..4.0f64) {
        let h = chain_hand();
        let mut cfg = GraspConfiguration::identity(3);
        cfg.joint_angles = vec![a, b, c];
        let before = cfg.joint_angles.clone();
        h.project_to_limits(&mut cfg);
        let once = cfg.clone();
        h.project_to_limits(&mut cfg);
        prop_assert_eq!(&cfg, &once);
        for ((x, y), j) in before.iter().zip(&cfg.joint_angles).zip(&h.joints) {
            prop_assert!(*y >= j.lower && *y <= j.upper);
            if *x >= j.lower && *x <= j.upper {
                prop_assert_eq!(x, y);
            }
        }
    }
}
