use std::collections::BTreeMap;
use std::io::Write;

use funcgrasp::dataset::{read_record_file, GraspRecord};

use crate::{CliError, CliResult, EvalArgs};

/// Metric means of one category, in metres.
#[derive(Clone, Debug, PartialEq)]
pub struct CategorySummary {
    pub category: String,
    pub count: usize,
    pub d_g: f64,
    pub d_f: f64,
    pub d_ip: f64,
    pub d_sp: f64,
    /// Fraction of wrench-resistant grasps.
    pub wrench_rate: f64,
}

/// Per-category means, sorted by category name.
pub fn summarize(records: &[GraspRecord]) -> Vec<CategorySummary> {
    let mut groups: BTreeMap<&str, Vec<&GraspRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.category).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(category, rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&GraspRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            CategorySummary {
                category: category.to_string(),
                count: rs.len(),
                d_g: mean(|r| r.metrics.d_g),
                d_f: mean(|r| r.metrics.d_f),
                d_ip: mean(|r| r.metrics.d_ip),
                d_sp: mean(|r| r.metrics.d_sp),
                wrench_rate: mean(|r| r.metrics.wrench_resistant as u8 as f64),
            }
        })
        .collect()
}

/// Metres shown in centimetres with three decimals.
pub fn format_cm(metres: f64) -> String {
    format!("{:.3}", metres * 100.0)
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult<Vec<CategorySummary>> {
    let file = read_record_file(&args.input, false)?;
    if file.records.is_empty() {
        return Err(CliError::Input(format!("{}: no records to evaluate", args.input.display())));
    }
    let summary = summarize(&file.records);
    writeln!(
        out,
        "{:<16} {:>6} {:>9} {:>9} {:>9} {:>9} {:>8}",
        "category", "n", "d_G(cm)", "d_F(cm)", "d_IP(cm)", "d_SP(cm)", "wrench%"
    )?;
    for s in &summary {
        writeln!(
            out,
            "{:<16} {:>6} {:>9} {:>9} {:>9} {:>9} {:>8.1}",
            s.category,
            s.count,
            format_cm(s.d_g),
            format_cm(s.d_f),
            format_cm(s.d_ip),
            format_cm(s.d_sp),
            s.wrench_rate * 100.0
        )?;
    }
    Ok(summary)
}
