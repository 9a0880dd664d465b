use std::io::Write;

use funcgrasp::dataset::{read_record_file, write_record_file};
use funcgrasp::quality::{filter_grasps, FilterThresholds, Metric};

use crate::{read_text, CliError, CliResult, FilterArgs};

/// Counts behind the filter report.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterSummary {
    pub read: usize,
    pub kept: usize,
    /// Rejections per metric, in [`Metric::ALL`] order. A record violating
    /// several metrics counts once for each.
    pub rejected_by: [usize; 4],
    pub malformed: usize,
}

fn thresholds(args: &FilterArgs) -> CliResult<FilterThresholds> {
    let Some(path) = &args.thresholds else {
        return Ok(FilterThresholds::default());
    };
    let t: FilterThresholds =
        toml::from_str(&read_text(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    t.validate()?;
    Ok(t)
}

pub fn filter(args: &FilterArgs, out: &mut dyn Write) -> CliResult<FilterSummary> {
    let t = thresholds(args)?;
    let file = read_record_file(&args.input, true)?;
    for m in &file.malformed {
        log::warn!("{}:{}: skipped: {}", args.input.display(), m.line, m.message);
    }
    let read = file.records.len();
    let (kept, rejected) = filter_grasps(file.records, &t);
    let mut summary = FilterSummary {
        read,
        kept: kept.len(),
        malformed: file.malformed.len(),
        ..Default::default()
    };
    for r in &rejected {
        for m in &r.reasons {
            let k = Metric::ALL.iter().position(|x| x == m).expect("known metric");
            summary.rejected_by[k] += 1;
        }
    }
    write_record_file(&args.out, &file.header.hand_id, &kept)?;

    writeln!(out, "read {} records, kept {}, rejected {}", read, kept.len(), rejected.len())?;
    writeln!(out, "{:<6} {:>10} {:>10}", "metric", "limit (m)", "rejected")?;
    let limits = [t.max_dg, t.max_df, t.max_dip, t.max_dsp];
    for ((m, limit), n) in Metric::ALL.iter().zip(limits).zip(summary.rejected_by) {
        writeln!(out, "{:<6} {limit:>10} {n:>10}", m.to_string())?;
    }
    if summary.malformed > 0 {
        writeln!(out, "finished with {} warnings (malformed lines skipped)", summary.malformed)?;
    }
    Ok(summary)
}
