//! Grasp quality metrics, dataset filtering and the wrench-resistance check.
//!
//! All distances are in meters. `d_G` and `d_F` are raw Chamfer distances
//! (sums of mean squared nearest-neighbour distances), so their unit is
//! really m²; they are compared against the thresholds as plain numbers.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::affordance::AffordanceObject;
use crate::error::{Error, Result};
use crate::geometry::{chamfer_distance, Vec3};
use crate::hand::{AnchorSet, GraspConfiguration, HandModel, Part, PosedHand};
use crate::synthesis::ContactSet;

/// Residual (N) below which a wrench counts as resisted.
pub const WRENCH_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspMetrics {
    pub d_g: f64,
    pub d_f: f64,
    pub d_ip: f64,
    pub d_sp: f64,
    pub wrench_resistant: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    pub max_dg: f64,
    pub max_df: f64,
    pub max_dip: f64,
    pub max_dsp: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            max_dg: 0.02,
            max_df: 0.002,
            max_dip: 0.002,
            max_dsp: 0.002,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.max_dg, self.max_df, self.max_dip, self.max_dsp];
        if all.iter().all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!("filter thresholds must be positive, got {all:?}")))
        }
    }
}

/// One of the four filter metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    DG,
    DF,
    DIP,
    DSP,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::DG, Metric::DF, Metric::DIP, Metric::DSP];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::DG => "d_G",
            Metric::DF => "d_F",
            Metric::DIP => "d_IP",
            Metric::DSP => "d_SP",
        })
    }
}

/// Metrics above their threshold (comparisons are inclusive: a value equal
/// to its threshold passes).
pub fn violations(m: &GraspMetrics, t: &FilterThresholds) -> Vec<Metric> {
    let mut out = Vec::new();
    for (metric, value, limit) in [
        (Metric::DG, m.d_g, t.max_dg),
        (Metric::DF, m.d_f, t.max_df),
        (Metric::DIP, m.d_ip, t.max_dip),
        (Metric::DSP, m.d_sp, t.max_dsp),
    ] {
        // NaN never passes
        if !(value <= limit) {
            out.push(metric);
        }
    }
    out
}

pub fn passes(m: &GraspMetrics, t: &FilterThresholds) -> bool {
    violations(m, t).is_empty()
}

/// Anything that carries grasp metrics.
pub trait HasMetrics {
    fn metrics(&self) -> &GraspMetrics;
}

impl HasMetrics for GraspMetrics {
    fn metrics(&self) -> &GraspMetrics {
        self
    }
}

/// A rejected item with every metric it violated.
#[derive(Clone, Debug, PartialEq)]
pub struct Rejection<T> {
    pub item: T,
    pub reasons: Vec<Metric>,
}

/// Split items into those passing every threshold and the rest.
pub fn filter_grasps<T: HasMetrics>(items: Vec<T>, thresholds: &FilterThresholds) -> (Vec<T>, Vec<Rejection<T>>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for item in items {
        let reasons = violations(item.metrics(), thresholds);
        if reasons.is_empty() {
            kept.push(item);
        } else {
            rejected.push(Rejection { item, reasons });
        }
    }
    (kept, rejected)
}

/// Chamfer distance between the hand's grasping anchors and the object's
/// grasping part.
pub fn metric_dg(hand: &HandModel, config: &GraspConfiguration, obj: &AffordanceObject) -> Result<f64> {
    let posed = PosedHand::new(hand, config)?;
    let anchors: Vec<Vec3> = hand.grasping_anchors.iter().map(|a| posed.pose.anchor(a)).collect();
    chamfer_distance(&anchors, &obj.grasping_points())
}

/// Smallest Chamfer distance between any candidate finger's functional
/// anchors and the object's functional part.
pub fn metric_df(
    hand: &HandModel,
    config: &GraspConfiguration,
    obj: &AffordanceObject,
    candidates: &[Part],
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::invalid("d_F needs at least one candidate finger"));
    }
    let posed = PosedHand::new(hand, config)?;
    let part = obj.functional_points();
    let mut best = f64::INFINITY;
    for &f in candidates {
        let anchors: Vec<Vec3> = hand
            .anchors(AnchorSet::Functional(f))?
            .iter()
            .map(|a| posed.pose.anchor(a))
            .collect();
        best = best.min(chamfer_distance(&anchors, &part)?);
    }
    Ok(best)
}

/// Fingers with functional anchors, the default `d_F` candidates.
pub fn functional_candidates(hand: &HandModel) -> Vec<Part> {
    hand.functional_anchors.keys().copied().collect()
}

/// Depth of the deepest hand surface sample inside the object mesh; zero
/// when no sample is inside.
pub fn metric_dip(hand: &HandModel, config: &GraspConfiguration, obj: &AffordanceObject) -> Result<f64> {
    let posed = PosedHand::new(hand, config)?;
    Ok(deepest(&obj.mesh.signed_distances(&posed.points)))
}

/// `-min(min(sdf), 0)`.
pub fn deepest(sdf: &[f64]) -> f64 {
    let m = sdf.iter().copied().fold(f64::INFINITY, f64::min);
    if m < 0.0 {
        -m
    } else {
        0.0
    }
}

/// Deepest penetration of one hand part's samples into another part.
pub fn metric_dsp(hand: &HandModel, config: &GraspConfiguration) -> Result<f64> {
    Ok(PosedHand::new(hand, config)?.max_self_penetration())
}

/// Parameters of the wrench-resistance check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WrenchSettings {
    pub friction_mu: f64,
    pub cone_facets: usize,
    /// Normal force cap per contact (N).
    pub f_max: f64,
    pub object_mass: f64,
    /// Magnitude of each disturbance force (N).
    pub test_force: f64,
    pub gravity: [f64; 3],
}

impl Default for WrenchSettings {
    fn default() -> Self {
        WrenchSettings {
            friction_mu: 0.5,
            cone_facets: 8,
            f_max: 20.0,
            object_mass: 1.0,
            test_force: 10.0,
            gravity: [0.0, 0.0, -9.81],
        }
    }
}

impl WrenchSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.friction_mu >= 0.0 && self.friction_mu.is_finite()) {
            return Err(Error::invalid(format!("friction_mu must be non-negative, got {}", self.friction_mu)));
        }
        if self.cone_facets == 0 {
            return Err(Error::invalid("cone_facets must be at least 1"));
        }
        if !(self.f_max > 0.0 && self.f_max.is_finite()) {
            return Err(Error::invalid(format!("f_max must be positive, got {}", self.f_max)));
        }
        let rest = [self.object_mass, self.test_force, self.gravity[0], self.gravity[1], self.gravity[2]];
        if !rest.iter().all(|v| v.is_finite()) || self.object_mass < 0.0 || self.test_force < 0.0 {
            return Err(Error::invalid("object_mass and test_force must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Six external wrenches: gravity on the object plus the test force along
/// each of ±x, ±y, ±z, all acting at the reference point (no torque).
pub fn default_wrenches(settings: &WrenchSettings) -> Vec<[f64; 6]> {
    let g = Vec3::from(settings.gravity) * settings.object_mass;
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut f = g;
            f[axis] += sign * settings.test_force;
            out.push([f.x, f.y, f.z, 0.0, 0.0, 0.0]);
        }
    }
    out
}

/// Edge directions of a linearized friction cone around unit `axis`, each
/// with unit normal component.
pub fn cone_edges(axis: &Vec3, mu: f64, facets: usize) -> Vec<Vec3> {
    let trial = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = axis.cross(&trial).normalize();
    let t2 = axis.cross(&t1);
    (0..facets)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / facets as f64;
            axis + (t1 * th.cos() + t2 * th.sin()) * mu
        })
        .collect()
}

/// Whether the contacts can cancel every external wrench.
///
/// Each contact pushes along non-negative combinations of its cone edges,
/// with total normal force at most `f_max`. Torques are taken about the
/// origin; contact points should be expressed relative to the point the
/// external wrenches refer to. A wrench is resisted when the bounded
/// non-negative least-squares residual of `G α = -w` is at most
/// [`WRENCH_TOLERANCE`].
pub fn wrench_resistance_check(
    contacts: &ContactSet,
    friction_mu: f64,
    cone_facets: usize,
    f_max: f64,
    external_wrenches: &[[f64; 6]],
) -> Result<bool> {
    if friction_mu < 0.0 || !friction_mu.is_finite() {
        return Err(Error::invalid(format!("friction coefficient must be non-negative, got {friction_mu}")));
    }
    if cone_facets == 0 {
        return Err(Error::invalid("friction cones need at least one facet"));
    }
    if !(f_max > 0.0) {
        return Err(Error::invalid(format!("normal force cap must be positive, got {f_max}")));
    }
    for w in external_wrenches {
        if min_wrench_residual(contacts, friction_mu, cone_facets, f_max, w) > WRENCH_TOLERANCE {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Residual norm of the best bounded contact-force combination against `w`.
pub fn min_wrench_residual(contacts: &ContactSet, mu: f64, facets: usize, f_max: f64, w: &[f64; 6]) -> f64 {
    let target = -DVector::from_row_slice(w);
    let n = contacts.len();
    if n == 0 {
        return target.norm();
    }
    // unknowns: per contact `facets` edge weights then one slack, all scaled
    // by f_max so each contact's weights and slack sum to one
    let cols = n * (facets + 1);
    // weight of the cap rows relative to the wrench rows
    let cap_weight = 1e3;
    let mut a = DMatrix::zeros(6 + n, cols);
    let mut b = DVector::zeros(6 + n);
    b.rows_mut(0, 6).copy_from(&target);
    for (i, (x, c)) in contacts.points.iter().zip(&contacts.cone_axes).enumerate() {
        for (k, e) in cone_edges(c, mu, facets).iter().enumerate() {
            let col = i * (facets + 1) + k;
            let f = e * f_max;
            let t = x.cross(&f);
            for r in 0..3 {
                a[(r, col)] = f[r];
                a[(3 + r, col)] = t[r];
            }
            a[(6 + i, col)] = cap_weight;
        }
        a[(6 + i, i * (facets + 1) + facets)] = cap_weight;
        b[6 + i] = cap_weight;
    }
    let x = nnls(&a, &b);
    let r = a.rows(0, 6) * &x - &target;
    r.norm()
}

/// Lawson–Hanson non-negative least squares: `min ‖A x - b‖, x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.amax().max(1.0);
    let tol = 1e-13 * scale * scale;
    let max_outer = 3 * n + 10;

    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut z = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            z[j] = sol[k];
        }
        z
    };

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(t) = candidate else { break };
        passive[t] = true;
        for _ in 0..(3 * n + 10) {
            let z = solve_passive(&passive);
            if (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in 0..n {
                if passive[j] && z[j] <= 0.0 {
                    let d = x[j] - z[j];
                    if d > 0.0 {
                        alpha = alpha.min(x[j] / d);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x = &x + (z - &x) * alpha;
            for j in 0..n {
                if passive[j] && x[j] <= 1e-15 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if !passive[t] {
                break;
            }
        }
    }
    x
}

/// Quality settings: filter thresholds and the wrench-check parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualitySettings {
    pub thresholds: FilterThresholds,
    pub wrench: WrenchSettings,
}

impl QualitySettings {
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.wrench.validate()
    }
}

/// All metrics of a grasp. Contacts for the wrench check are those detected
/// within `contact_threshold`, taken relative to the object's surface
/// centroid.
pub fn evaluate_metrics(
    hand: &HandModel,
    config: &GraspConfiguration,
    obj: &AffordanceObject,
    contact_threshold: f64,
    settings: &WrenchSettings,
) -> Result<GraspMetrics> {
    let candidates = functional_candidates(hand);
    let posed = PosedHand::new(hand, config)?;
    let d_ip = deepest(&obj.mesh.signed_distances(&posed.points));
    let d_sp = posed.max_self_penetration();
    let contacts = grasp_contacts(hand, &posed, obj, contact_threshold);
    let center = obj.surface.centroid().expect("non-empty surface");
    let centred = ContactSet {
        points: contacts.points.iter().map(|p| p - center).collect(),
        cone_axes: contacts.cone_axes,
    };
    let wrench_resistant = !centred.is_empty()
        && wrench_resistance_check(
            &centred,
            settings.friction_mu,
            settings.cone_facets,
            settings.f_max,
            &default_wrenches(settings),
        )?;
    Ok(GraspMetrics {
        d_g: metric_dg(hand, config, obj)?,
        d_f: metric_df(hand, config, obj, &candidates)?,
        d_ip,
        d_sp,
        wrench_resistant,
    })
}

/// Contacts of every anchor (functional of all fingers, and grasping) within
/// `threshold` of the object.
fn grasp_contacts(hand: &HandModel, posed: &PosedHand, obj: &AffordanceObject, threshold: f64) -> ContactSet {
    let mut set = ContactSet::default();
    let anchors = hand
        .functional_anchors
        .values()
        .flatten()
        .chain(hand.grasping_anchors.iter());
    for a in anchors {
        let p = posed.pose.anchor(a);
        let hit = obj.mesh.nearest_surface_point(&p);
        if hit.distance <= threshold {
            set.points.push(hit.point);
            set.cone_axes.push(-hit.normal);
        }
    }
    set
}
