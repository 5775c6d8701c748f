//! Trial records as JSON Lines.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::TrialRecord;

/// On-disk layout of one record. Counts are read as signed integers so that
/// negative values surface as validation errors rather than parse errors.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    index: u64,
    start_time_s: f64,
    duration_s: f64,
    x: u8,
    y: u8,
    n_pp: i64,
    n_pm: i64,
    n_mp: i64,
    n_mm: i64,
    singles: [i64; 4],
    ss_coinc: [i64; 2],
}

fn to_signed(v: u64) -> Result<i64> {
    i64::try_from(v).map_err(|_| Error::input(format!("count {v} exceeds the record format range")))
}

impl RecordLine {
    fn from_record(r: &TrialRecord) -> Result<Self> {
        let c = r.counts.map(to_signed);
        let s = r.singles.map(to_signed);
        let ss = r.same_station_coinc.map(to_signed);
        let [n_pp, n_pm, n_mp, n_mm] = c;
        let [s0, s1, s2, s3] = s;
        let [a, b] = ss;
        Ok(Self {
            index: r.index,
            start_time_s: r.start_time,
            duration_s: r.duration,
            x: r.x,
            y: r.y,
            n_pp: n_pp?,
            n_pm: n_pm?,
            n_mp: n_mp?,
            n_mm: n_mm?,
            singles: [s0?, s1?, s2?, s3?],
            ss_coinc: [a?, b?],
        })
    }

    fn into_record(self, line: usize) -> Result<TrialRecord> {
        let unsigned = |name: &str, v: i64| {
            u64::try_from(v)
                .map_err(|_| Error::validation(format!("line {line}: {name}"), format!("count {v} is negative")))
        };
        let record = TrialRecord {
            index: self.index,
            start_time: self.start_time_s,
            duration: self.duration_s,
            x: self.x,
            y: self.y,
            counts: [
                unsigned("n_pp", self.n_pp)?,
                unsigned("n_pm", self.n_pm)?,
                unsigned("n_mp", self.n_mp)?,
                unsigned("n_mm", self.n_mm)?,
            ],
            singles: [
                unsigned("singles[0]", self.singles[0])?,
                unsigned("singles[1]", self.singles[1])?,
                unsigned("singles[2]", self.singles[2])?,
                unsigned("singles[3]", self.singles[3])?,
            ],
            same_station_coinc: [
                unsigned("ss_coinc[0]", self.ss_coinc[0])?,
                unsigned("ss_coinc[1]", self.ss_coinc[1])?,
            ],
        };
        record.validate().map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        Ok(record)
    }
}

/// Writes one JSON object per line; returns the number of bytes written.
pub fn write_records<W: Write>(records: &[TrialRecord], mut out: W) -> Result<u64> {
    let mut bytes = 0u64;
    for r in records {
        let mut line = serde_json::to_vec(&RecordLine::from_record(r)?)?;
        line.push(b'\n');
        out.write_all(&line)?;
        bytes += line.len() as u64;
    }
    out.flush()?;
    Ok(bytes)
}

/// Reads and validates a JSON Lines record stream. Blank lines are skipped;
/// errors carry the 1-based line number.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let number = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: number,
            reason: e.to_string(),
        })?;
        records.push(raw.into_record(number)?);
    }
    Ok(records)
}
