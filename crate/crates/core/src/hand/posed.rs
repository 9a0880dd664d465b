use super::kinematics::{forward_kinematics, HandPose};
use super::model::{HandModel, Part};
use super::GraspConfiguration;
use crate::error::Result;
use crate::geometry::{ConvexPrimitive, Vec3};

/// Signed distance to a union of link primitives, with the gradient and the
/// link owning the closest primitive.
#[derive(Clone, Copy, Debug)]
pub struct PartDistance {
    pub distance: f64,
    pub gradient: Vec3,
    pub link: usize,
    /// Distance to the runner-up primitive (infinite when there is none).
    pub second: f64,
}

/// A hand at one configuration with its collision geometry in the world
/// frame.
#[derive(Clone, Debug)]
pub struct PosedHand<'h> {
    pub hand: &'h HandModel,
    pub pose: HandPose,
    prims: Vec<Vec<ConvexPrimitive>>,
    spheres: Vec<(Vec3, f64)>,
    /// World-frame surface samples of every link, in link order.
    pub points: Vec<Vec3>,
    /// Owning link of each entry of `points`.
    pub owner: Vec<usize>,
}

impl<'h> PosedHand<'h> {
    pub fn new(hand: &'h HandModel, config: &GraspConfiguration) -> Result<Self> {
        let pose = forward_kinematics(hand, config)?;
        let prims = hand
            .links
            .iter()
            .zip(&pose.links)
            .map(|(l, t)| l.primitives.iter().map(|p| p.transformed(t)).collect())
            .collect();
        let spheres = (0..hand.links.len())
            .map(|i| {
                let (c, r) = hand.link_sphere(i);
                (pose.point(i, &c), r)
            })
            .collect();
        let (points, owner) = pose.surface_points(hand);
        Ok(PosedHand {
            hand,
            pose,
            prims,
            spheres,
            points,
            owner,
        })
    }

    /// World-frame bounding sphere of a link.
    pub fn link_sphere(&self, link: usize) -> (Vec3, f64) {
        self.spheres[link]
    }

    pub fn link_primitives(&self, link: usize) -> &[ConvexPrimitive] {
        &self.prims[link]
    }

    /// Signed distance from `p` to the union of the primitives of `links`.
    ///
    /// Links whose bounding sphere is farther than `cutoff` from `p` are
    /// skipped; `None` means no primitive lies within `cutoff`.
    pub fn union_distance(&self, links: &[usize], p: &Vec3, cutoff: f64) -> Option<PartDistance> {
        let mut best: Option<PartDistance> = None;
        let mut second = f64::INFINITY;
        for &l in links {
            let (c, r) = self.spheres[l];
            if (p - c).norm() - r > cutoff {
                continue;
            }
            for prim in &self.prims[l] {
                let (d, g) = prim.signed_distance_with_gradient(p);
                match &best {
                    Some(b) if d >= b.distance => second = second.min(d),
                    _ => {
                        if let Some(b) = &best {
                            second = b.distance;
                        }
                        best = Some(PartDistance {
                            distance: d,
                            gradient: g,
                            link: l,
                            second: f64::INFINITY,
                        });
                    }
                }
            }
        }
        best.filter(|b| b.distance <= cutoff).map(|b| PartDistance { second, ..b })
    }

    /// Links of a part.
    pub fn part_links(&self, part: Part) -> &[usize] {
        self.hand.parts().get(&part).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Surface sample indices belonging to a part.
    pub fn part_points(&self, part: Part) -> impl Iterator<Item = usize> + '_ {
        let links = self.part_links(part);
        (0..self.points.len()).filter(move |&k| links.contains(&self.owner[k]))
    }

    /// Deepest penetration of any surface sample of one part into the
    /// primitives of another, over all ordered part pairs. Zero when the
    /// parts are separated.
    pub fn max_self_penetration(&self) -> f64 {
        let parts: Vec<Part> = self.hand.parts().keys().copied().collect();
        let mut worst: f64 = 0.0;
        for &pi in &parts {
            let links = self.part_links(pi);
            for &pj in &parts {
                if pi == pj {
                    continue;
                }
                for k in self.part_points(pj) {
                    if let Some(d) = self.union_distance(links, &self.points[k], 0.0) {
                        worst = worst.max(-d.distance);
                    }
                }
            }
        }
        worst
    }
}
