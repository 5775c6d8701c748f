use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::TrialRecord;

/// Coincidence counts aggregated per setting pair and outcome pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountsTable {
    /// `n[x][y][a][b]`, outcome index 0 for `+1` and 1 for `−1`.
    pub n: [[[[u64; 2]; 2]; 2]; 2],
}

impl CountsTable {
    pub fn new(n: [[[[u64; 2]; 2]; 2]; 2]) -> Self {
        Self { n }
    }

    /// Builds a table from the four per-setting count vectors
    /// `(n_{++}, n_{+-}, n_{-+}, n_{--})`, indexed by `2 * x + y`.
    pub fn from_settings(cells: [[u64; 4]; 4]) -> Self {
        let mut t = Self::default();
        for (k, c) in cells.iter().enumerate() {
            t.add(k / 2, k % 2, *c);
        }
        t
    }

    pub fn add(&mut self, x: usize, y: usize, counts: [u64; 4]) {
        let cell = &mut self.n[x][y];
        cell[0][0] += counts[0];
        cell[0][1] += counts[1];
        cell[1][0] += counts[2];
        cell[1][1] += counts[3];
    }

    pub fn add_record(&mut self, record: &TrialRecord) {
        self.add(usize::from(record.x), usize::from(record.y), record.counts);
    }

    /// Sums records without requiring all settings to be present.
    pub fn accumulate<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        let mut t = Self::default();
        for r in records {
            t.add_record(r);
        }
        t
    }

    /// Counts of setting `(x, y)` as `(n_{++}, n_{+-}, n_{-+}, n_{--})`.
    pub fn setting(&self, x: usize, y: usize) -> [u64; 4] {
        let c = &self.n[x][y];
        [c[0][0], c[0][1], c[1][0], c[1][1]]
    }

    /// `N[x][y]`.
    pub fn total(&self, x: usize, y: usize) -> u64 {
        self.setting(x, y).iter().sum()
    }

    pub fn grand_total(&self) -> u64 {
        (0..4).map(|k| self.total(k / 2, k % 2)).sum()
    }

    /// First setting pair without any counts, if any.
    pub fn missing_setting(&self) -> Option<(usize, usize)> {
        (0..4).map(|k| (k / 2, k % 2)).find(|&(x, y)| self.total(x, y) == 0)
    }

    pub fn check_complete(&self) -> Result<()> {
        match self.missing_setting() {
            Some((x, y)) => Err(Error::MissingSetting { x, y }),
            None => Ok(()),
        }
    }

    /// Every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        let mut t = *self;
        t.n.iter_mut().flatten().flatten().flatten().for_each(|c| *c *= k);
        t
    }
}

/// Aggregates `records` into a complete [`CountsTable`].
pub fn tabulate(records: &[TrialRecord]) -> Result<CountsTable> {
    for r in records {
        r.validate()?;
    }
    let table = CountsTable::accumulate(records);
    table.check_complete()?;
    Ok(table)
}
