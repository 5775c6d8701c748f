use serde::{Deserialize, Serialize};

use super::counts::CountsTable;
use crate::error::Result;
use crate::model::{outcome_value, CHSH_SIGNS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    /// `Ê(x, y)` indexed by `2 * x + y`.
    pub correlators: [f64; 4],
    pub s: f64,
}

fn correlator(table: &CountsTable, x: usize, y: usize) -> f64 {
    let n = table.total(x, y) as f64;
    let mut e = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            e += outcome_value(a) * outcome_value(b) * table.n[x][y][a][b] as f64;
        }
    }
    e / n
}

/// Empirical correlators and CHSH value.
pub fn estimate_chsh(table: &CountsTable) -> Result<ChshEstimate> {
    table.check_complete()?;
    let mut correlators = [0.0; 4];
    for (k, e) in correlators.iter_mut().enumerate() {
        *e = correlator(table, k / 2, k % 2);
    }
    let s = correlators.iter().zip(CHSH_SIGNS).map(|(e, sign)| sign * e).sum();
    Ok(ChshEstimate { correlators, s })
}

/// Statistical standard deviation of `Ŝ`, propagating independent Poisson
/// fluctuations of all 16 counts.
pub fn sigma_stat(table: &CountsTable) -> Result<f64> {
    table.check_complete()?;
    let mut var = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let e = correlator(table, x, y);
            let n = table.total(x, y) as f64;
            for a in 0..2 {
                for b in 0..2 {
                    let d = outcome_value(a) * outcome_value(b) - e;
                    var += table.n[x][y][a][b] as f64 * d * d / (n * n);
                }
            }
        }
    }
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NaiveLabel {
    A0,
    A1,
    B0,
    B1,
}

/// One nonsignaling condition tested on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveSignaling {
    pub label: NaiveLabel,
    /// Difference of the `+1` marginal between the partner's two settings.
    pub s_hat: f64,
    /// Binomial standard error of `s_hat`.
    pub sigma_hat: f64,
    pub z: f64,
}

fn difference(label: NaiveLabel, plus: [u64; 2], totals: [u64; 2]) -> NaiveSignaling {
    let p = [0, 1].map(|k| plus[k] as f64 / totals[k] as f64);
    let s_hat = p[0] - p[1];
    let sigma_hat = (p[0] * (1.0 - p[0]) / totals[0] as f64 + p[1] * (1.0 - p[1]) / totals[1] as f64).sqrt();
    let z = if sigma_hat > 0.0 { s_hat / sigma_hat } else { 0.0 };
    NaiveSignaling {
        label,
        s_hat,
        sigma_hat,
        z,
    }
}

/// The four nonsignaling differences `ŝ^A_{+1,x}` and `ŝ^B_{+1,y}`
/// with their z-scores, in the order A0, A1, B0, B1.
pub fn naive_signaling(table: &CountsTable) -> Result<[NaiveSignaling; 4]> {
    table.check_complete()?;
    let alice_plus = |x: usize, y: usize| table.n[x][y][0][0] + table.n[x][y][0][1];
    let bob_plus = |x: usize, y: usize| table.n[x][y][0][0] + table.n[x][y][1][0];
    let n = |x: usize, y: usize| table.total(x, y);
    Ok([
        difference(NaiveLabel::A0, [alice_plus(0, 0), alice_plus(0, 1)], [n(0, 0), n(0, 1)]),
        difference(NaiveLabel::A1, [alice_plus(1, 0), alice_plus(1, 1)], [n(1, 0), n(1, 1)]),
        difference(NaiveLabel::B0, [bob_plus(0, 0), bob_plus(1, 0)], [n(0, 0), n(1, 0)]),
        difference(NaiveLabel::B1, [bob_plus(0, 1), bob_plus(1, 1)], [n(0, 1), n(1, 1)]),
    ])
}
