//! Line-delimited grasp record files.
//!
//! The first line is a JSON header naming the schema version and the hand;
//! every following line is one [`GraspRecord`]. Writing the records read
//! from a file reproduces it byte for byte.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::GraspConfiguration;
use crate::quality::{GraspMetrics, HasMetrics};
use crate::synthesis::LossTerms;

pub const SCHEMA_NAME: &str = "funcgrasp-records";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema: String,
    pub version: u32,
    pub hand_id: String,
}

impl Header {
    pub fn new(hand_id: impl Into<String>) -> Self {
        Header {
            schema: SCHEMA_NAME.into(),
            version: SCHEMA_VERSION,
            hand_id: hand_id.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthesized,
    Sampled,
}

/// One grasp with its metrics; a dataset row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspRecord {
    pub object_id: String,
    pub category: String,
    /// Maximum extent of the object's oriented bounding box (m).
    pub scale: f64,
    pub hand_id: String,
    pub config: GraspConfiguration,
    pub metrics: GraspMetrics,
    pub loss_terms: LossTerms,
    pub seed: u64,
    pub provenance: Provenance,
}

impl HasMetrics for GraspRecord {
    fn metrics(&self) -> &GraspMetrics {
        &self.metrics
    }
}

impl GraspRecord {
    /// Non-finite numbers would not survive the text format.
    pub fn check_finite(&self) -> Result<()> {
        let m = &self.metrics;
        let t = &self.loss_terms;
        let finite = self.scale.is_finite()
            && self.config.is_finite()
            && [m.d_g, m.d_f, m.d_ip, m.d_sp].iter().all(|v| v.is_finite())
            && t.as_array().iter().all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("record for {} (seed {})", self.object_id, self.seed)))
        }
    }
}

/// Writes the header on creation and one record per line after it.
pub struct RecordWriter<W: Write> {
    out: W,
    hand_id: String,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut out: W, hand_id: &str) -> Result<Self> {
        serde_json::to_writer(&mut out, &Header::new(hand_id))?;
        out.write_all(b"\n")?;
        Ok(RecordWriter {
            out,
            hand_id: hand_id.into(),
        })
    }

    pub fn write(&mut self, record: &GraspRecord) -> Result<()> {
        if record.hand_id != self.hand_id {
            return Err(Error::invalid(format!(
                "record for hand {:?} in a file for hand {:?}",
                record.hand_id, self.hand_id
            )));
        }
        record.check_finite()?;
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Write a complete record file to `path`.
pub fn write_record_file(path: &std::path::Path, hand_id: &str, records: &[GraspRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::load(path.display().to_string(), e.to_string()))?;
    let mut w = RecordWriter::new(std::io::BufWriter::new(file), hand_id)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

/// A line that could not be read as a record.
#[derive(Clone, Debug, PartialEq)]
pub struct Malformed {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordFile {
    pub header: Header,
    pub records: Vec<GraspRecord>,
    pub malformed: Vec<Malformed>,
}

fn parse_header(line: Option<std::io::Result<String>>) -> Result<Header> {
    let line = line.ok_or_else(|| Error::Parse("missing header line".into()))??;
    let header: Header =
        serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line 1: bad header: {e}")))?;
    if header.schema != SCHEMA_NAME {
        return Err(Error::Parse(format!("line 1: unknown schema {:?}", header.schema)));
    }
    if header.version != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "line 1: schema version {} is not supported (expected {SCHEMA_VERSION})",
            header.version
        )));
    }
    Ok(header)
}

fn parse_record(line: &str, header: &Header) -> std::result::Result<GraspRecord, String> {
    let r: GraspRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if r.hand_id != header.hand_id {
        return Err(format!("hand {:?} does not match the header's {:?}", r.hand_id, header.hand_id));
    }
    Ok(r)
}

/// Read a record file, collecting unreadable lines instead of failing.
/// Blank lines are ignored. The header must be valid.
pub fn read_records_lenient<R: BufRead>(input: R) -> Result<RecordFile> {
    let mut lines = input.lines();
    let header = parse_header(lines.next())?;
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line, &header) {
            Ok(r) => records.push(r),
            Err(message) => malformed.push(Malformed { line: i + 2, message }),
        }
    }
    Ok(RecordFile {
        header,
        records,
        malformed,
    })
}

/// Read a record file; any unreadable line is an error.
pub fn read_records<R: BufRead>(input: R) -> Result<RecordFile> {
    let file = read_records_lenient(input)?;
    if let Some(m) = file.malformed.first() {
        return Err(Error::Parse(format!("line {}: {}", m.line, m.message)));
    }
    Ok(file)
}

pub fn read_record_file(path: &std::path::Path, lenient: bool) -> Result<RecordFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::load(path.display().to_string(), e.to_string()))?;
    let reader = std::io::BufReader::new(file);
    let result = if lenient {
        read_records_lenient(reader)
    } else {
        read_records(reader)
    };
    result.map_err(|e| Error::load(path.display().to_string(), e.to_string()))
}
