use nalgebra::{Isometry3, Quaternion, Translation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Root pose plus one angle per joint.
///
/// Serialized as `{"translation": [x, y, z], "rotation": [w, x, y, z],
/// "joint_angles": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigRepr", into = "ConfigRepr")]
pub struct GraspConfiguration {
    pub translation: Vec3,
    pub rotation: UnitQuaternion<f64>,
    pub joint_angles: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConfigRepr {
    translation: [f64; 3],
    rotation: [f64; 4],
    joint_angles: Vec<f64>,
}

impl TryFrom<ConfigRepr> for GraspConfiguration {
    type Error = Error;

    fn try_from(r: ConfigRepr) -> Result<Self> {
        let [w, x, y, z] = r.rotation;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Parse(format!("rotation quaternion has norm {n}")));
        }
        // keep stored bits when already unit so records round-trip exactly
        let rotation = if (n - 1.0).abs() < 1e-12 {
            Unit::new_unchecked(q)
        } else {
            Unit::new_normalize(q)
        };
        Ok(GraspConfiguration {
            translation: Vec3::from(r.translation),
            rotation,
            joint_angles: r.joint_angles,
        })
    }
}

impl From<GraspConfiguration> for ConfigRepr {
    fn from(c: GraspConfiguration) -> Self {
        let q = c.rotation.quaternion();
        ConfigRepr {
            translation: c.translation.into(),
            rotation: [q.w, q.i, q.j, q.k],
            joint_angles: c.joint_angles,
        }
    }
}

impl GraspConfiguration {
    pub fn identity(n_joints: usize) -> Self {
        GraspConfiguration {
            translation: Vec3::zeros(),
            rotation: UnitQuaternion::identity(),
            joint_angles: vec![0.0; n_joints],
        }
    }

    pub fn root_pose(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    pub fn with_root(&self, root: &Isometry3<f64>) -> Self {
        GraspConfiguration {
            translation: root.translation.vector,
            rotation: root.rotation,
            joint_angles: self.joint_angles.clone(),
        }
    }

    /// Size of the tangent parameterization: translation, rotation increment
    /// and one entry per joint.
    pub fn tangent_dim(&self) -> usize {
        6 + self.joint_angles.len()
    }

    /// Apply a tangent step: translation is added, the rotation increment is
    /// composed on the left as an axis-angle (world-frame) rotation, and joint
    /// angles are added.
    pub fn retract(&self, delta: &[f64]) -> Self {
        assert_eq!(delta.len(), self.tangent_dim(), "tangent dimension mismatch");
        let dr = UnitQuaternion::from_scaled_axis(Vec3::new(delta[3], delta[4], delta[5]));
        let mut rotation = dr * self.rotation;
        rotation.renormalize();
        GraspConfiguration {
            translation: self.translation + Vec3::new(delta[0], delta[1], delta[2]),
            rotation,
            joint_angles: self
                .joint_angles
                .iter()
                .zip(&delta[6..])
                .map(|(a, d)| a + d)
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
            && self.joint_angles.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_roundtrip_is_exact() {
        let c = GraspConfiguration {
            translation: Vec3::new(0.1, -0.25, 1.0 / 3.0),
            rotation: UnitQuaternion::from_euler_angles(0.1, 0.7, -1.3),
            joint_angles: vec![0.2, -0.1, 1.0 / 7.0],
        };
        let s = serde_json::to_string(&c).unwrap();
        let back: GraspConfiguration = serde_json::from_str(&s).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }

    #[test]
    fn rejects_non_unit_rotation() {
        let s = r#"{"translation":[0,0,0],"rotation":[2,0,0,0],"joint_angles":[]}"#;
        assert!(serde_json::from_str::<GraspConfiguration>(s).is_err());
    }

    #[test]
    fn retract_keeps_unit_quaternion() {
        let mut c = GraspConfiguration::identity(2);
        for i in 0..1000 {
            let d = [0.0, 0.0, 0.0, 0.01 * (i as f64).sin(), 0.02, -0.03, 0.0, 0.0];
            c = c.retract(&d);
        }
        assert!((c.rotation.norm() - 1.0).abs() < 1e-12);
    }
}
