//! Fixture loading shared by the crate's unit tests.

use std::path::PathBuf;

use crate::affordance::{load_object, AffordanceObject};
use crate::geometry::{PointCloud, TriangleMesh, Vec3};
use crate::hand::{load_hand, HandModel};

pub(crate) fn asset(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(rel)
}

pub(crate) fn fixture_hand(name: &str) -> HandModel {
    load_hand(&asset(&format!("hands/{name}.json"))).unwrap()
}

pub(crate) fn fixture_object(name: &str) -> AffordanceObject {
    load_object(
        &asset(&format!("objects/{name}.obj")),
        &asset(&format!("objects/{name}.json")),
    )
    .unwrap()
}

pub(crate) const HANDS: [&str; 2] = ["four_finger_16dof", "five_finger_22dof"];
pub(crate) const OBJECTS: [&str; 2] = ["cylinder", "spray_bottle"];

/// Object with a hand-picked surface sample. Normals point away from the
/// sample centroid; they only matter to the axis computation.
pub(crate) fn cloud_object(mesh: TriangleMesh, points: Vec<Vec3>, functional: Vec<usize>, grasping: Vec<usize>) -> AffordanceObject {
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let normals = points
        .iter()
        .map(|p| (p - c).try_normalize(1e-12).unwrap_or_else(Vec3::z))
        .collect();
    AffordanceObject {
        id: "cloud".into(),
        category: "test".into(),
        mesh,
        surface: PointCloud {
            points,
            normals: Some(normals),
        },
        functional,
        grasping,
        scale: 1.0,
        axes_override: None,
    }
}
