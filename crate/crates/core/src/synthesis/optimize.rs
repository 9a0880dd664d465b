use std::io::Write;

use super::losses::{evaluate, LossTerms, LossWeights};
use super::{GraspTask, OptimizerSettings};
use crate::error::{Error, Result};
use crate::hand::GraspConfiguration;

const ADAM_EPS: f64 = 1e-8;

/// Loss terms evaluated at one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub step: usize,
    pub terms: LossTerms,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    /// Lowest-loss configuration visited.
    pub config: GraspConfiguration,
    pub loss: f64,
    pub terms: LossTerms,
    /// One entry per evaluated step, at most `max_steps`.
    pub trajectory: Vec<TrajectoryStep>,
}

impl OptimizationResult {
    /// Best loss seen up to and including each step.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.trajectory
            .iter()
            .scan(f64::INFINITY, |best, s| {
                *best = best.min(s.total);
                Some(*best)
            })
            .collect()
    }
}

/// Projected Adam on the tangent parameterization of the configuration.
///
/// Each step evaluates the loss and its gradient, records them, and takes
/// an Adam step: translation is added, the rotation increment is composed
/// on the left, joint angles are added and clamped into their limits. The
/// lowest-loss configuration seen is returned.
pub fn optimize_grasp(
    task: &GraspTask,
    init: &GraspConfiguration,
    weights: &LossWeights,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    settings.validate()?;
    weights.validate()?;
    let hand = task.hand;
    let mut config = init.clone();
    hand.check_config(&config)?;
    hand.project_to_limits(&mut config);

    let dim = config.tangent_dim();
    let (b1, b2) = settings.adam_betas;
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut trajectory = Vec::with_capacity(settings.max_steps);
    let mut best: Option<(f64, LossTerms, GraspConfiguration, usize)> = None;

    for step in 0..settings.max_steps {
        let (terms, grad) = evaluate(task, &config, weights, settings.contact_threshold, true)?;
        let total = terms.weighted(weights);
        let grad = grad.expect("gradient requested");
        let finite = total.is_finite() && grad.iter().all(|g| g.is_finite());
        if !finite {
            if step == 0 {
                return Err(Error::NonFinite(format!("loss is not finite at the initial configuration: {terms:?}")));
            }
            break;
        }
        trajectory.push(TrajectoryStep { step, terms, total });
        if best.as_ref().is_none_or(|b| total < b.0) {
            best = Some((total, terms, config.clone(), step));
        }
        let since = step - best.as_ref().map_or(step, |b| b.3);
        if settings.patience > 0 && since >= settings.patience {
            break;
        }
        if step + 1 == settings.max_steps {
            break;
        }

        let t = (step + 1) as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let delta: Vec<f64> = (0..dim)
            .map(|k| {
                m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
                v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
                let lr = if k < 3 { settings.translation_step } else { settings.step_size };
                -lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS)
            })
            .collect();
        config = config.retract(&delta);
        hand.project_to_limits(&mut config);
    }

    let (loss, terms, config, _) = best.expect("at least one step");
    Ok(OptimizationResult {
        config,
        loss,
        terms,
        trajectory,
    })
}

/// Write a trajectory as CSV with columns
/// `step,L_F,L_G,L_FC,L_IP,L_SP,total`.
pub fn write_trajectory_csv<W: Write>(mut w: W, trajectory: &[TrajectoryStep]) -> Result<()> {
    writeln!(w, "step,L_F,L_G,L_FC,L_IP,L_SP,total")?;
    for s in trajectory {
        let t = &s.terms;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.step, t.functional, t.grasping, t.force_closure, t.interpenetration, t.self_penetration, s.total
        )?;
    }
    Ok(())
}
