use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counts::CountsTable;
use super::estimate::{estimate_chsh, sigma_stat};
use super::mle::lr_test;
use crate::error::{Error, Result};
use crate::simulator::TrialRecord;

/// Analysis of the data collected up to `elapsed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub elapsed: f64,
    pub s: f64,
    pub sigma_stat: f64,
    pub lr_sigma: f64,
    /// Naive z-scores in the order A0, A1, B0, B1.
    pub z: [f64; 4],
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub points: Vec<SeriesPoint>,
    /// Elapsed times whose prefix lacked at least one setting pair.
    pub gaps: Vec<f64>,
}

fn analyze_prefix(elapsed: f64, table: &CountsTable) -> Result<SeriesPoint> {
    let chsh = estimate_chsh(table)?;
    let report = lr_test(table)?;
    Ok(SeriesPoint {
        elapsed,
        s: chsh.s,
        sigma_stat: sigma_stat(table)?,
        lr_sigma: report.sigma,
        z: report.naive.map(|n| n.z),
        events: table.grand_total(),
    })
}

/// Analyzes growing prefixes of a time-ordered record stream at every
/// multiple of `step` up to the end of the last record.
pub fn cumulative_series(records: &[TrialRecord], step: f64) -> Result<Series> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::input(format!("series step must be finite and > 0, got {step}")));
    }
    for (i, pair) in records.windows(2).enumerate() {
        if pair[1].start_time < pair[0].start_time {
            return Err(Error::input(format!(
                "records are not time-ordered at record {}",
                i + 1
            )));
        }
    }
    for r in records {
        r.validate()?;
    }
    let end = records.iter().map(TrialRecord::end_time).fold(0.0, f64::max);
    let slack = |t: f64| t + 1e-9 * t.max(1.0);
    let mut cutoffs = Vec::new();
    let mut k = 1u64;
    while (k as f64) * step <= slack(end) {
        cutoffs.push(k as f64 * step);
        k += 1;
    }

    // running totals so each prefix is a single table lookup
    let mut prefix_tables = Vec::with_capacity(cutoffs.len());
    let mut table = CountsTable::default();
    let mut next = 0;
    for &t in &cutoffs {
        while next < records.len() && records[next].end_time() <= slack(t) {
            table.add_record(&records[next]);
            next += 1;
        }
        prefix_tables.push((t, table));
    }

    let analyzed: Vec<Option<SeriesPoint>> = prefix_tables
        .par_iter()
        .map(|(t, table)| match table.missing_setting() {
            Some(_) => Ok(None),
            None => analyze_prefix(*t, table).map(Some),
        })
        .collect::<Result<_>>()?;
    let mut series = Series {
        points: Vec::new(),
        gaps: Vec::new(),
    };
    for ((t, _), point) in prefix_tables.iter().zip(analyzed) {
        match point {
            Some(p) => series.points.push(p),
            None => series.gaps.push(*t),
        }
    }
    Ok(series)
}
