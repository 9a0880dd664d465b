//! Dataset generation: synthesis over objects and scales, and scoring of
//! network samples, producing [`GraspRecord`]s.

use rayon::prelude::*;

use crate::affordance::AffordanceObject;
use crate::config::PipelineConfig;
use crate::dataset::{GraspRecord, Provenance};
use crate::error::Result;
use crate::hand::{GraspConfiguration, HandModel};
use crate::net::GraspCvae;
use crate::quality::evaluate_metrics;
use crate::rng::{derive_seed, derive_seed2};
use crate::synthesis::{synthesize_batch, total_loss, GraspTask, SynthesisRun};

/// A synthesis run that produced no record.
#[derive(Clone, Debug, PartialEq)]
pub struct FailedRun {
    pub object_id: String,
    pub scale: f64,
    pub index: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct SynthesisReport {
    /// Records in object, scale, run order.
    pub records: Vec<GraspRecord>,
    pub failures: Vec<FailedRun>,
}

impl SynthesisReport {
    pub fn attempted(&self) -> usize {
        self.records.len() + self.failures.len()
    }
}

pub fn record_from_run(hand: &HandModel, obj: &AffordanceObject, run: &SynthesisRun) -> GraspRecord {
    GraspRecord {
        object_id: obj.id.clone(),
        category: obj.category.clone(),
        scale: obj.scale,
        hand_id: hand.name.clone(),
        config: run.result.config.clone(),
        metrics: run.metrics,
        loss_terms: run.result.terms,
        seed: run.seed,
        provenance: Provenance::Synthesized,
    }
}

/// `runs_per_scale` synthesis runs for every object at every scale of its
/// category range (`n_scales` overrides the range's count).
///
/// Object `o` at scale `k` runs a batch under master seed
/// `derive_seed2(seed, o, k)`, so each record's seed regenerates it alone.
pub fn synthesize_records(
    hand: &HandModel,
    objects: &[AffordanceObject],
    config: &PipelineConfig,
    runs_per_scale: usize,
    n_scales: Option<usize>,
    seed: u64,
) -> Result<SynthesisReport> {
    config.validate()?;
    let mut report = SynthesisReport::default();
    for (o, obj) in objects.iter().enumerate() {
        for (k, scale) in config.scales_for(obj, n_scales)?.into_iter().enumerate() {
            let scaled = obj.rescaled(scale)?;
            let mut settings = config.optimizer.clone();
            settings.seed = derive_seed2(seed, o as u64, k as u64);
            let outcomes = synthesize_batch(
                hand,
                &scaled,
                runs_per_scale,
                &config.weights,
                &settings,
                &config.quality.wrench,
            );
            for out in outcomes {
                match out.run {
                    Ok(run) => report.records.push(record_from_run(hand, &scaled, &run)),
                    Err(message) => report.failures.push(FailedRun {
                        object_id: obj.id.clone(),
                        scale,
                        index: out.index,
                        seed: out.seed,
                        message,
                    }),
                }
            }
        }
    }
    Ok(report)
}

/// Score one grasp on `obj`: metrics, and loss terms under the first
/// configured functional mode.
pub fn score_grasp(
    hand: &HandModel,
    obj: &AffordanceObject,
    config: &GraspConfiguration,
    pipeline: &PipelineConfig,
    seed: u64,
    provenance: Provenance,
) -> Result<GraspRecord> {
    let opt = &pipeline.optimizer;
    let metrics = evaluate_metrics(hand, config, obj, opt.contact_threshold, &pipeline.quality.wrench)?;
    let task = GraspTask::for_mode(hand, obj, opt.functional_modes[0])?;
    let (_, loss_terms) = total_loss(&task, config, &pipeline.weights, opt.contact_threshold)?;
    Ok(GraspRecord {
        object_id: obj.id.clone(),
        category: obj.category.clone(),
        scale: obj.scale,
        hand_id: hand.name.clone(),
        config: config.clone(),
        metrics,
        loss_terms,
        seed,
        provenance,
    })
}

/// `n` network samples on `obj` with freshly computed metrics. Each record
/// carries the seed its latent was drawn from.
pub fn sample_records(
    net: &GraspCvae,
    hand: &HandModel,
    obj: &AffordanceObject,
    n: usize,
    seed: u64,
    pipeline: &PipelineConfig,
) -> Result<Vec<GraspRecord>> {
    pipeline.validate()?;
    let grasps = net.sample(hand, obj, n, seed)?;
    grasps
        .par_iter()
        .enumerate()
        .map(|(i, c)| score_grasp(hand, obj, c, pipeline, derive_seed(seed, i as u64), Provenance::Sampled))
        .collect()
}
