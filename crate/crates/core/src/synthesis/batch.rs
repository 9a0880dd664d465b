use rand::Rng;
use rayon::prelude::*;

use super::init::{axis_align_init_with, InitPerturbation};
use super::losses::LossWeights;
use super::optimize::{optimize_grasp, OptimizationResult};
use super::{FunctionalMode, GraspTask, OptimizerSettings};
use crate::affordance::AffordanceObject;
use crate::error::Result;
use crate::hand::{GraspConfiguration, HandModel};
use crate::quality::{evaluate_metrics, GraspMetrics, WrenchSettings};
use crate::rng::{derive_seed, rng_from_seed};

/// One completed synthesis run.
#[derive(Clone, Debug)]
pub struct SynthesisRun {
    pub index: usize,
    pub seed: u64,
    /// Functional region used, with the thumb variant resolved.
    pub mode: FunctionalMode,
    pub init: GraspConfiguration,
    pub result: OptimizationResult,
    pub metrics: GraspMetrics,
}

/// A run's outcome; failures carry the message instead of aborting the
/// batch.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub index: usize,
    pub seed: u64,
    pub run: std::result::Result<SynthesisRun, String>,
}

/// One synthesis run from its own seed: draw the functional mode and the
/// initialization perturbation, initialize, optimize and score.
pub fn run_single(
    hand: &HandModel,
    obj: &AffordanceObject,
    weights: &LossWeights,
    settings: &OptimizerSettings,
    wrench: &WrenchSettings,
    index: usize,
    seed: u64,
) -> Result<SynthesisRun> {
    settings.validate()?;
    let mut rng = rng_from_seed(seed);
    let mode = settings.functional_modes[rng.random_range(0..settings.functional_modes.len())];
    let mode = match mode {
        FunctionalMode::Thumb(None) => FunctionalMode::Thumb(Some(rng.random_range(0..hand.thumb_axes.len()))),
        m => m,
    };
    let mut jitter = |half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
    let perturbation = InitPerturbation {
        rotation: jitter(settings.jitter_rotation),
        offset: jitter(settings.jitter_offset),
        flex: jitter(settings.jitter_flex),
    };
    let task = GraspTask::for_mode(hand, obj, mode)?;
    let init = axis_align_init_with(&task, settings, weights, &perturbation)?;
    let result = optimize_grasp(&task, &init, weights, settings)?;
    let metrics = evaluate_metrics(hand, &result.config, obj, settings.contact_threshold, wrench)?;
    Ok(SynthesisRun {
        index,
        seed,
        mode,
        init,
        result,
        metrics,
    })
}

/// `n` independent runs with seeds derived from `settings.seed`, executed in
/// parallel on the current rayon pool. Results are in run order.
pub fn synthesize_batch(
    hand: &HandModel,
    obj: &AffordanceObject,
    n: usize,
    weights: &LossWeights,
    settings: &OptimizerSettings,
    wrench: &WrenchSettings,
) -> Vec<RunOutcome> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(settings.seed, i as u64);
            let run = run_single(hand, obj, weights, settings, wrench, i, seed).map_err(|e| e.to_string());
            if let Err(e) = &run {
                log::warn!("{} run {i} failed: {e}", obj.id);
            }
            RunOutcome { index: i, seed, run }
        })
        .collect()
}
