use serde::{Deserialize, Serialize};

use super::GraspTask;
use crate::error::{Error, Result};
use crate::geometry::{chamfer_distance, chamfer_tie_margin, chamfer_with_gradient, Vec3};
use crate::hand::{GraspConfiguration, HandModel, Part, PosedHand};

/// Force-closure loss when no anchor touches the object.
pub const EMPTY_CONTACT_PENALTY: f64 = 1.0;

/// Trade-off weights of the five loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_f: f64,
    pub lambda_g: f64,
    pub lambda_fc: f64,
    pub lambda_ip: f64,
    pub lambda_sp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_f: 100.0,
            lambda_g: 10.0,
            lambda_fc: 1.0,
            lambda_ip: 500.0,
            lambda_sp: 500.0,
        }
    }
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        lambda_f: 0.0,
        lambda_g: 0.0,
        lambda_fc: 0.0,
        lambda_ip: 0.0,
        lambda_sp: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("loss weight {name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("lambda_f", self.lambda_f),
            ("lambda_g", self.lambda_g),
            ("lambda_fc", self.lambda_fc),
            ("lambda_ip", self.lambda_ip),
            ("lambda_sp", self.lambda_sp),
        ]
    }
}

/// Raw (unweighted) values of the five loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub functional: f64,
    pub grasping: f64,
    pub force_closure: f64,
    pub interpenetration: f64,
    pub self_penetration: f64,
}

impl LossTerms {
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.lambda_f * self.functional
            + w.lambda_g * self.grasping
            + w.lambda_fc * self.force_closure
            + w.lambda_ip * self.interpenetration
            + w.lambda_sp * self.self_penetration
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.functional,
            self.grasping,
            self.force_closure,
            self.interpenetration,
            self.self_penetration,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Contact points with their friction cone axes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContactSet {
    pub points: Vec<Vec3>,
    /// Unit cone axes, pointing into the object.
    pub cone_axes: Vec<Vec3>,
}

impl ContactSet {
    pub fn new(points: Vec<Vec3>, cone_axes: Vec<Vec3>) -> Result<Self> {
        if points.len() != cone_axes.len() {
            return Err(Error::invalid(format!(
                "{} contact points but {} cone axes",
                points.len(),
                cone_axes.len()
            )));
        }
        if let Some(c) = cone_axes.iter().find(|c| (c.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::invalid(format!("cone axis {c:?} is not unit length")));
        }
        Ok(ContactSet { points, cone_axes })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Net wrench `(Σ c_i, Σ x_i × c_i)` of unit forces along the cone axes.
    pub fn net_wrench(&self) -> (Vec3, Vec3) {
        let f = self.cone_axes.iter().sum();
        let t = self.points.iter().zip(&self.cone_axes).map(|(x, c)| x.cross(c)).sum();
        (f, t)
    }
}

/// Contacts that feed the force-closure term, plus what is needed to
/// differentiate them.
struct DetectedContact {
    anchor: usize,
    anchor_pos: Vec3,
    point: Vec3,
    axis: Vec3,
    jacobian: nalgebra::Matrix3<f64>,
}

fn contacts_at(task: &GraspTask, posed: &PosedHand, threshold: f64) -> Vec<DetectedContact> {
    let mut out = Vec::new();
    for (k, a) in task.contact_anchors.iter().enumerate() {
        let p = posed.pose.anchor(a);
        let hit = task.object.mesh.nearest_surface_point(&p);
        if hit.distance <= threshold {
            out.push(DetectedContact {
                anchor: k,
                anchor_pos: p,
                point: hit.point,
                axis: -hit.normal,
                jacobian: hit.jacobian,
            });
        }
    }
    out
}

/// Anchors within `threshold` of the object surface become contacts at
/// their nearest surface point, with the inward surface normal as cone
/// axis. Both functional and grasping anchors are candidates.
pub fn detect_contacts(task: &GraspTask, config: &GraspConfiguration, threshold: f64) -> Result<ContactSet> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!("contact threshold must be positive, got {threshold}")));
    }
    let posed = PosedHand::new(task.hand, config)?;
    let found = contacts_at(task, &posed, threshold);
    Ok(ContactSet {
        points: found.iter().map(|c| c.point).collect(),
        cone_axes: found.iter().map(|c| c.axis).collect(),
    })
}

/// Norm of the grasp map applied to the stacked cone axes:
/// `‖(Σ c_i, Σ x_i × c_i)‖`. An empty set costs [`EMPTY_CONTACT_PENALTY`].
pub fn loss_force_closure(contacts: &ContactSet) -> f64 {
    if contacts.is_empty() {
        return EMPTY_CONTACT_PENALTY;
    }
    let (f, t) = contacts.net_wrench();
    (f.norm_squared() + t.norm_squared()).sqrt()
}

pub fn loss_functional(task: &GraspTask, config: &GraspConfiguration) -> Result<f64> {
    let posed = PosedHand::new(task.hand, config)?;
    chamfer_distance(&task.functional_anchor_positions(&posed), &task.functional_points)
}

pub fn loss_grasping(task: &GraspTask, config: &GraspConfiguration) -> Result<f64> {
    let posed = PosedHand::new(task.hand, config)?;
    chamfer_distance(&task.grasping_anchor_positions(&posed), &task.grasping_points)
}

pub fn loss_interpenetration(task: &GraspTask, config: &GraspConfiguration) -> Result<f64> {
    let posed = PosedHand::new(task.hand, config)?;
    Ok(interpenetration(task, &posed, None))
}

pub fn loss_self_penetration(hand: &HandModel, config: &GraspConfiguration) -> Result<f64> {
    let posed = PosedHand::new(hand, config)?;
    Ok(self_penetration(&posed, None))
}

/// Weighted total loss with its raw terms.
pub fn total_loss(
    task: &GraspTask,
    config: &GraspConfiguration,
    weights: &LossWeights,
    contact_threshold: f64,
) -> Result<(f64, LossTerms)> {
    let (terms, _) = evaluate(task, config, weights, contact_threshold, false)?;
    Ok((terms.weighted(weights), terms))
}

/// Gradient of the weighted total loss over the tangent parameterization:
/// translation (3), world-frame rotation increment (3), joint angles.
pub fn loss_gradient(
    task: &GraspTask,
    config: &GraspConfiguration,
    weights: &LossWeights,
    contact_threshold: f64,
) -> Result<Vec<f64>> {
    Ok(evaluate(task, config, weights, contact_threshold, true)?.1.expect("gradient requested"))
}

fn scaled(v: &Vec3, s: f64) -> Vec3 {
    v * s
}

/// Object points pushed into hand parts, summed over parts and points.
fn interpenetration(task: &GraspTask, posed: &PosedHand, mut grad: Option<(&mut [f64], f64)>) -> f64 {
    let hand = posed.hand;
    let (lo, hi) = hand_bounds(posed);
    let mut total = 0.0;
    for p in &task.object.surface.points {
        if (0..3).any(|i| p[i] < lo[i] || p[i] > hi[i]) {
            continue;
        }
        for links in hand.parts().values() {
            if let Some(d) = posed.union_distance(links, p, 0.0) {
                if d.distance < 0.0 {
                    total -= d.distance;
                    if let Some((g, w)) = grad.as_mut() {
                        posed.pose.accumulate(hand, d.link, p, &scaled(&d.gradient, *w), g);
                    }
                }
            }
        }
    }
    total
}

/// Surface samples of each part pushed into every other part.
fn self_penetration(posed: &PosedHand, mut grad: Option<(&mut [f64], f64)>) -> f64 {
    let hand = posed.hand;
    let parts: Vec<Part> = hand.parts().keys().copied().collect();
    let mut total = 0.0;
    for &pi in &parts {
        let links = posed.part_links(pi);
        for &pj in &parts {
            if pi == pj {
                continue;
            }
            for k in posed.part_points(pj) {
                let q = posed.points[k];
                if let Some(d) = posed.union_distance(links, &q, 0.0) {
                    if d.distance < 0.0 {
                        total -= d.distance;
                        if let Some((g, w)) = grad.as_mut() {
                            posed.pose.accumulate(hand, posed.owner[k], &q, &scaled(&d.gradient, -*w), g);
                            posed.pose.accumulate(hand, d.link, &q, &scaled(&d.gradient, *w), g);
                        }
                    }
                }
            }
        }
    }
    total
}

/// Axis-aligned box around every link's bounding sphere.
fn hand_bounds(posed: &PosedHand) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for l in 0..posed.hand.links.len() {
        let (c, r) = posed.link_sphere(l);
        lo = lo.inf(&(c - Vec3::repeat(r)));
        hi = hi.sup(&(c + Vec3::repeat(r)));
    }
    (lo, hi)
}

/// All five terms and, on request, the gradient of their weighted sum.
pub(crate) fn evaluate(
    task: &GraspTask,
    config: &GraspConfiguration,
    weights: &LossWeights,
    contact_threshold: f64,
    want_grad: bool,
) -> Result<(LossTerms, Option<Vec<f64>>)> {
    let hand = task.hand;
    let posed = PosedHand::new(hand, config)?;
    let mut grad = want_grad.then(|| vec![0.0; config.tangent_dim()]);

    let fa = task.functional_anchor_positions(&posed);
    let (functional, gf) = chamfer_with_gradient(&fa, &task.functional_points)?;
    let ga = task.grasping_anchor_positions(&posed);
    let (grasping, gg) = chamfer_with_gradient(&ga, &task.grasping_points)?;
    if let Some(g) = grad.as_mut() {
        if weights.lambda_f != 0.0 {
            for ((a, p), d) in task.functional_anchors.iter().zip(&fa).zip(&gf) {
                posed.pose.accumulate(hand, a.link, p, &scaled(d, weights.lambda_f), g);
            }
        }
        if weights.lambda_g != 0.0 {
            for ((a, p), d) in hand.grasping_anchors.iter().zip(&ga).zip(&gg) {
                posed.pose.accumulate(hand, a.link, p, &scaled(d, weights.lambda_g), g);
            }
        }
    }

    let contacts = contacts_at(task, &posed, contact_threshold);
    let force_closure = if contacts.is_empty() {
        EMPTY_CONTACT_PENALTY
    } else {
        let f: Vec3 = contacts.iter().map(|c| c.axis).sum();
        let t: Vec3 = contacts.iter().map(|c| c.point.cross(&c.axis)).sum();
        let value = (f.norm_squared() + t.norm_squared()).sqrt();
        if let Some(g) = grad.as_mut() {
            if weights.lambda_fc != 0.0 && value > 0.0 {
                // only the torque moves with the contact points
                let u = t / value;
                for c in &contacts {
                    let dx = c.axis.cross(&u);
                    let da = c.jacobian.transpose() * dx;
                    let link = task.contact_anchors[c.anchor].link;
                    posed.pose.accumulate(hand, link, &c.anchor_pos, &scaled(&da, weights.lambda_fc), g);
                }
            }
        }
        value
    };

    let interpenetration = interpenetration(
        task,
        &posed,
        grad.as_mut().filter(|_| weights.lambda_ip != 0.0).map(|g| (g.as_mut_slice(), weights.lambda_ip)),
    );
    let self_penetration = self_penetration(
        &posed,
        grad.as_mut().filter(|_| weights.lambda_sp != 0.0).map(|g| (g.as_mut_slice(), weights.lambda_sp)),
    );

    Ok((
        LossTerms {
            functional,
            grasping,
            force_closure,
            interpenetration,
            self_penetration,
        },
        grad,
    ))
}

/// Distance (m) from the nearest non-differentiable switch of the loss:
/// contact threshold crossings, penetration onsets, changes of the closest
/// primitive inside a part and Chamfer nearest-neighbour ties. Finite
/// differences are only meaningful when this is well above the step.
pub fn kink_margin(task: &GraspTask, config: &GraspConfiguration, contact_threshold: f64) -> Result<f64> {
    let hand = task.hand;
    let posed = PosedHand::new(hand, config)?;
    let mut margin = f64::INFINITY;

    let tie = |p: &[Vec3], q: &[Vec3]| {
        // squared-distance gap to a distance gap, conservatively
        let g = chamfer_tie_margin(p, q);
        let reach = p.iter().chain(q).map(|x| x.norm()).fold(0.0, f64::max) * 8.0 + 1e-9;
        g / reach
    };
    margin = margin.min(tie(&task.functional_anchor_positions(&posed), &task.functional_points));
    margin = margin.min(tie(&task.grasping_anchor_positions(&posed), &task.grasping_points));

    for a in &task.contact_anchors {
        let p = posed.pose.anchor(a);
        let hit = task.object.mesh.nearest_surface_point(&p);
        margin = margin.min((hit.distance - contact_threshold).abs());
        if hit.distance <= contact_threshold {
            margin = margin.min(feature_margin(task, &p));
        }
    }

    let band = 1e-2;
    let mut check = |d: Option<crate::hand::PartDistance>| {
        if let Some(d) = d {
            margin = margin.min(d.distance.abs());
            if d.distance < 0.0 {
                margin = margin.min(d.second - d.distance);
            }
        }
    };
    for p in &task.object.surface.points {
        for links in hand.parts().values() {
            check(posed.union_distance(links, p, band));
        }
    }
    let parts: Vec<Part> = hand.parts().keys().copied().collect();
    for &pi in &parts {
        for &pj in &parts {
            if pi != pj {
                for k in posed.part_points(pj) {
                    check(posed.union_distance(posed.part_links(pi), &posed.points[k], band));
                }
            }
        }
    }
    Ok(margin)
}

/// How far a query may move before its closest mesh feature can change.
fn feature_margin(task: &GraspTask, p: &Vec3) -> f64 {
    use crate::geometry::ClosestFeature;
    let mesh = &task.object.mesh;
    let hit = mesh.nearest_surface_point(p);
    let [a, b, c] = mesh.triangles()[hit.triangle].map(|k| mesh.vertices()[k]);
    match hit.feature {
        ClosestFeature::Face => {
            // distance of the projection to the triangle's edges
            let edges = [(a, b), (b, c), (c, a)];
            edges
                .iter()
                .map(|(u, v)| {
                    let e = v - u;
                    let t = ((hit.point - u).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
                    (hit.point - (u + e * t)).norm()
                })
                .fold(f64::INFINITY, f64::min)
        }
        _ => 0.0,
    }
}
