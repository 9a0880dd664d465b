use std::collections::BTreeMap;
use std::io::Write;

use funcgrasp::dataset::write_record_file;
use funcgrasp::pipeline::synthesize_records;
use funcgrasp::quality::passes;

use super::{open_config, open_hand, open_objects};
use crate::{CliResult, Status, SynthesizeArgs};

pub fn synthesize(args: &SynthesizeArgs, out: &mut dyn Write) -> CliResult<Status> {
    let hand = open_hand(&args.hand)?;
    let objects = open_objects(&args.object_dir)?;
    let config = open_config(args.config.as_deref())?;
    if args.scales == Some(0) {
        return Err(crate::CliError::Input("--scales must be at least 1".into()));
    }
    let report = synthesize_records(&hand, &objects, &config, args.n, args.scales, args.seed)?;
    for f in &report.failures {
        log::warn!("{} at scale {:.4}, run {} (seed {}): {}", f.object_id, f.scale, f.index, f.seed, f.message);
    }
    write_record_file(&args.out, &hand.name, &report.records)?;

    let thresholds = &config.quality.thresholds;
    let mut per_object: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for r in &report.records {
        let e = per_object.entry(&r.object_id).or_default();
        e.0 += 1;
        e.1 += passes(&r.metrics, thresholds) as usize;
    }
    for f in &report.failures {
        per_object.entry(&f.object_id).or_default().2 += 1;
    }
    writeln!(out, "{:<20} {:>8} {:>8} {:>8}", "object", "records", "pass", "failed")?;
    for (id, (n, pass, failed)) in &per_object {
        writeln!(out, "{id:<20} {n:>8} {pass:>8} {failed:>8}")?;
    }
    writeln!(
        out,
        "wrote {} records from {} runs to {}",
        report.records.len(),
        report.attempted(),
        args.out.display()
    )?;
    if report.records.is_empty() && report.attempted() > 0 {
        return Ok(Status::AllRunsFailed);
    }
    Ok(Status::Success)
}
