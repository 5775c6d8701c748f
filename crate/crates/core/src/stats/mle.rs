//! Maximum-likelihood fit of nonsignaling correlations and the
//! likelihood-ratio test against the unrestricted per-setting fit.
//!
//! Nonsignaling correlations are parametrized by the two `+1` marginals of
//! each party and the four `(+1, +1)` joint probabilities. Every cell
//! probability is affine in these eight numbers, so the multinomial
//! log-likelihood is concave and the feasible set (all cells nonnegative) is
//! a polytope. The fit runs a damped Newton iteration that stays strictly
//! inside the polytope. When some cell has zero counts the optimum may sit
//! on the boundary; the iteration then follows the log-barrier path, which
//! amounts to adding a vanishing pseudo-count to every cell, and finishes on
//! the face where the cells heading to zero are fixed. A Lagrange duality
//! gap certifies the result.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::counts::CountsTable;
use super::estimate::{naive_signaling, NaiveSignaling};
use super::significance::{chi2_log_survival, sigma_from_log_p};
use crate::error::{Error, Result};

type Vec8 = SVector<f64, 8>;
type Mat8 = SMatrix<f64, 8, 8>;

/// Degrees of freedom of the test: 12 free per-setting probabilities
/// against 8 nonsignaling parameters.
pub const NS_TEST_DOF: u32 = 4;

/// Nonsignaling correlations: marginals `a_x = P(a=+1|x)`,
/// `b_y = P(b=+1|y)` and joints `c_xy = P(+1,+1|x,y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsParams {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub c: [[f64; 2]; 2],
}

impl NsParams {
    /// Uniformly random outcomes.
    pub const UNIFORM: NsParams = NsParams {
        a: [0.5, 0.5],
        b: [0.5, 0.5],
        c: [[0.25, 0.25], [0.25, 0.25]],
    };

    /// `(a0, a1, b0, b1, c00, c01, c10, c11)`.
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.a[0],
            self.a[1],
            self.b[0],
            self.b[1],
            self.c[0][0],
            self.c[0][1],
            self.c[1][0],
            self.c[1][1],
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        Self {
            a: [v[0], v[1]],
            b: [v[2], v[3]],
            c: [[v[4], v[5]], [v[6], v[7]]],
        }
    }

    /// Cell probabilities `(P_{++}, P_{+-}, P_{-+}, P_{--})` of setting
    /// `(x, y)`.
    pub fn cells(&self, x: usize, y: usize) -> [f64; 4] {
        let (a, b, c) = (self.a[x], self.b[y], self.c[x][y]);
        [c, a - c, b - c, 1.0 - a - b + c]
    }

    /// Smallest cell probability over all settings. Nonnegative exactly when
    /// the Fréchet bounds `max(0, a+b−1) ≤ c ≤ min(a, b)` hold.
    pub fn min_cell(&self) -> f64 {
        (0..4)
            .flat_map(|k| self.cells(k / 2, k % 2))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Cell probabilities `p[2x+y][2a+b]` of all four settings.
type Cells = [[f64; 4]; 4];

/// Per-cell weights: counts plus barrier pseudo-count.
type Weights = [[f64; 4]; 4];

/// Linear constraints `A·p = e` defining nonsignaling behaviours on the 16
/// cell probabilities: one normalization per setting, then equal marginals
/// of Alice for x = 0, 1 and of Bob for y = 0, 1.
fn constraint_rows() -> [(Cells, f64); 8] {
    let mut rows = [([[0.0; 4]; 4], 0.0); 8];
    for (k, row) in rows.iter_mut().take(4).enumerate() {
        row.0[k] = [1.0; 4];
        row.1 = 1.0;
    }
    for x in 0..2 {
        let r = &mut rows[4 + x].0;
        // P(a=+|x,y=0) − P(a=+|x,y=1): cells (+,+) and (+,−)
        r[2 * x][0] = 1.0;
        r[2 * x][1] = 1.0;
        r[2 * x + 1][0] = -1.0;
        r[2 * x + 1][1] = -1.0;
    }
    for y in 0..2 {
        let r = &mut rows[6 + y].0;
        // P(b=+|x=0,y) − P(b=+|x=1,y): cells (+,+) and (−,+)
        r[y][0] = 1.0;
        r[y][2] = 1.0;
        r[2 + y][0] = -1.0;
        r[2 + y][2] = -1.0;
    }
    rows
}

/// Counts plus the pseudo-count `μ` times the mean count per cell, so that
/// scaling the table scales every weight alike.
fn weights(table: &CountsTable, mu: f64) -> Weights {
    let unit = table.grand_total() as f64 / 16.0;
    std::array::from_fn(|k| table.setting(k / 2, k % 2).map(|n| n as f64 + mu * unit))
}

fn dot(a: &Cells, b: &Cells) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x * y).sum()
}

/// Newton direction of `Σ w·ln p` restricted to `A·p = e`.
///
/// With `D = diag(p²/w)` (the negative inverse Hessian) the step is
/// `d = D(g − Aᵀν)` where `(A D Aᵀ)ν = A D g − r` and `r = e − A·p`, so that
/// a full step also removes any constraint residual. Entries of `D` are
/// capped at `SCALING_CAP` times the largest entry of an observed cell. Only
/// cells held by a small barrier weight reach the cap, along directions
/// where the objective is nearly flat; the cap keeps the system well
/// conditioned and the step an ascent direction.
const SCALING_CAP: f64 = 1e6;

struct Direction {
    step: Cells,
    /// Half the squared Newton decrement.
    decrement: f64,
    /// Lagrange multipliers `ν` of the constraint rows.
    multipliers: Vec8,
}

fn newton_direction(w: &Weights, p: &Cells, rows: &[(Cells, f64); 8]) -> Option<Direction> {
    // cells with zero weight are held at zero
    let g: Cells =
        std::array::from_fn(|k| std::array::from_fn(|c| if w[k][c] > 0.0 { w[k][c] / p[k][c] } else { 0.0 }));
    let cap = SCALING_CAP
        * (0..16)
            .filter(|&i| w[i / 4][i % 4] >= 1.0)
            .map(|i| p[i / 4][i % 4].powi(2) / w[i / 4][i % 4])
            .fold(0.0, f64::max);
    let d_diag: Cells = std::array::from_fn(|k| {
        std::array::from_fn(|c| {
            if w[k][c] > 0.0 {
                (p[k][c] * p[k][c] / w[k][c]).min(cap)
            } else {
                0.0
            }
        })
    });
    let dg: Cells = std::array::from_fn(|k| std::array::from_fn(|c| d_diag[k][c] * g[k][c]));
    let mut m = Mat8::zeros();
    let mut rhs = Vec8::zeros();
    let mut residual = Vec8::zeros();
    for i in 0..8 {
        residual[i] = rows[i].1 - dot(&rows[i].0, p);
        rhs[i] = dot(&rows[i].0, &dg) - residual[i];
        for j in 0..8 {
            let mut s = 0.0;
            for (ri, (rj, di)) in rows[i]
                .0
                .iter()
                .flatten()
                .zip(rows[j].0.iter().flatten().zip(d_diag.iter().flatten()))
            {
                s += ri * rj * di;
            }
            m[(i, j)] = s;
        }
    }
    let nu = solve_spd(&m, &rhs)?;
    let mut step = [[0.0; 4]; 4];
    let mut decrement = 0.0;
    for k in 0..4 {
        for c in 0..4 {
            let projected = g[k][c] - (0..8).map(|i| rows[i].0[k][c] * nu[i]).sum::<f64>();
            step[k][c] = d_diag[k][c] * projected;
            decrement += projected * d_diag[k][c] * projected;
        }
    }
    // `step` is a difference of nearly equal terms; project the leftover
    // constraint error back out so that `A·step = r` holds to rounding
    let leftover = Vec8::from_fn(|i, _| residual[i] - dot(&rows[i].0, &step));
    let correction = solve_spd(&m, &leftover)?;
    for k in 0..4 {
        for c in 0..4 {
            step[k][c] += d_diag[k][c] * (0..8).map(|i| rows[i].0[k][c] * correction[i]).sum::<f64>();
        }
    }
    decrement.is_finite().then_some(Direction {
        step,
        decrement: 0.5 * decrement,
        multipliers: nu,
    })
}

/// Solves `a·x = b` for symmetric positive (semi)definite `a`. The system
/// is equilibrated to unit diagonal, factorized (with a growing ridge while
/// the factorization fails) and refined once.
fn solve_spd(a: &Mat8, b: &Vec8) -> Option<Vec8> {
    let scale = a.diagonal().map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 });
    if !scale.iter().all(|s| s.is_finite()) {
        return None;
    }
    let eq = Mat8::from_fn(|i, j| a[(i, j)] * scale[i] * scale[j]);
    let rhs = b.component_mul(&scale);
    let mut ridge = 0.0;
    let chol = loop {
        if let Some(c) = (eq + Mat8::identity() * ridge).cholesky() {
            break c;
        }
        ridge = if ridge == 0.0 { 1e-15 } else { ridge * 10.0 };
        if ridge > 1e-6 {
            return None;
        }
    };
    let mut y = chol.solve(&rhs);
    y += chol.solve(&(rhs - eq * y));
    let x = y.component_mul(&scale);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Largest step along `d` keeping every cell strictly positive.
fn max_feasible_step(p: &Cells, d: &Cells) -> f64 {
    p.iter()
        .flatten()
        .zip(d.iter().flatten())
        .filter(|(_, &di)| di < 0.0)
        .map(|(pi, di)| -pi / di)
        .fold(f64::INFINITY, f64::min)
}

/// Change of `Σ w·ln p` when moving by `t·d`, summed as `w·ln(1 + t·d/p)` so
/// that small gains are resolved at any objective scale. `None` when the
/// move leaves the positive orthant.
fn objective_change(w: &Weights, p: &Cells, d: &Cells, t: f64) -> Option<f64> {
    let mut change = 0.0;
    for k in 0..4 {
        for c in (0..4).filter(|&c| w[k][c] > 0.0) {
            let ratio = t * d[k][c] / p[k][c];
            if !(ratio > -1.0) {
                return None;
            }
            change += w[k][c] * ratio.ln_1p();
        }
    }
    Some(change)
}

struct NewtonOutcome {
    cells: Cells,
    decrement: f64,
    iterations: usize,
    /// Multipliers of the last Newton system solved.
    multipliers: Option<Vec8>,
}

const MAX_NEWTON_ITERATIONS: usize = 200;

/// A stage ends once half the squared Newton decrement, which estimates the
/// remaining gain of the concave objective, drops below this.
const DECREMENT_TOLERANCE: f64 = 1e-13;

/// Largest accepted violation of normalization or nonsignaling.
const RESIDUAL_TOLERANCE: f64 = 1e-13;

/// Damped Newton ascent on `Σ w·ln p` over the nonsignaling affine set, with
/// a fraction-to-boundary rule and Armijo backtracking. Every weight must be
/// positive. Stops early when no step gives a representable gain.
fn newton(w: &Weights, mut p: Cells, rows: &[(Cells, f64); 8]) -> NewtonOutcome {
    let mut outcome = NewtonOutcome {
        cells: p,
        decrement: f64::INFINITY,
        iterations: MAX_NEWTON_ITERATIONS,
        multipliers: None,
    };
    for iteration in 0..MAX_NEWTON_ITERATIONS {
        let Some(dir) = newton_direction(w, &p, rows) else {
            outcome.iterations = iteration;
            break;
        };
        outcome.decrement = dir.decrement;
        outcome.multipliers = Some(dir.multipliers);
        let residual = rows.iter().map(|(r, e)| (e - dot(r, &p)).abs()).fold(0.0, f64::max);
        if dir.decrement <= DECREMENT_TOLERANCE && residual <= RESIDUAL_TOLERANCE {
            outcome.iterations = iteration;
            break;
        }
        let d = dir.step;
        let slope = 2.0 * dir.decrement;
        let mut t = (0.99 * max_feasible_step(&p, &d)).min(1.0);
        let mut accepted = false;
        for _ in 0..60 {
            if let Some(change) = objective_change(w, &p, &d, t) {
                // a step that mainly restores feasibility may lose a little
                if change >= 1e-4 * t * slope || (residual > RESIDUAL_TOLERANCE && change.is_finite()) {
                    for k in 0..4 {
                        for c in 0..4 {
                            p[k][c] += t * d[k][c];
                        }
                    }
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            outcome.iterations = iteration;
            break;
        }
    }
    outcome.cells = p;
    outcome
}

/// Interior starting point: the least-squares nonsignaling projection of the
/// empirical frequencies (setting-averaged marginals, empirical joints),
/// mixed with the uniform point until every cell is at least 1e-3.
fn initial_point(table: &CountsTable) -> Cells {
    let freq = |x: usize, y: usize| {
        let n = table.setting(x, y);
        let total = table.total(x, y) as f64;
        n.map(|c| c as f64 / total)
    };
    let mut proj = [0.0; 8];
    for x in 0..2 {
        proj[x] = 0.5 * (0..2).map(|y| freq(x, y)[0] + freq(x, y)[1]).sum::<f64>();
    }
    for y in 0..2 {
        proj[2 + y] = 0.5 * (0..2).map(|x| freq(x, y)[0] + freq(x, y)[2]).sum::<f64>();
    }
    for x in 0..2 {
        for y in 0..2 {
            proj[4 + 2 * x + y] = freq(x, y)[0];
        }
    }
    let uniform = NsParams::UNIFORM.to_array();
    let mut mix = 0.25;
    loop {
        let candidate = NsParams::from_array(std::array::from_fn(|i| (1.0 - mix) * proj[i] + mix * uniform[i]));
        if candidate.min_cell() >= 1e-3 || mix >= 1.0 {
            return std::array::from_fn(|k| candidate.cells(k / 2, k % 2));
        }
        mix = (mix + 0.25).min(1.0);
    }
}

/// Nonsignaling parameters read off a nonsignaling cell table, with the
/// marginals averaged over the partner's settings.
fn params_from_cells(p: &Cells) -> NsParams {
    let alice = |x: usize| 0.5 * (0..2).map(|y| p[2 * x + y][0] + p[2 * x + y][1]).sum::<f64>();
    let bob = |y: usize| 0.5 * (0..2).map(|x| p[2 * x + y][0] + p[2 * x + y][2]).sum::<f64>();
    NsParams {
        a: [alice(0), alice(1)],
        b: [bob(0), bob(1)],
        c: [[p[0][0], p[1][0]], [p[2][0], p[3][0]]],
    }
}

/// Result of the nonsignaling maximum-likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsFit {
    pub params: NsParams,
    /// Fitted cell probabilities `P[2x+y][2a+b]`, consistent with `params`
    /// up to rounding but resolving cells far below `f64::EPSILON`.
    pub cells: [[f64; 4]; 4],
    /// Poisson log-likelihood at the fit (rates `μ_xy = N_xy`), without the
    /// `−Σ ln n!` constant.
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// `Σ_xy (N ln N − N)`: the Poisson rate factors at their optimum.
fn rate_terms(table: &CountsTable) -> f64 {
    (0..4)
        .map(|k| {
            let n = table.total(k / 2, k % 2) as f64;
            if n > 0.0 {
                n * n.ln() - n
            } else {
                0.0
            }
        })
        .sum()
}

/// Poisson log-likelihood of `table` under nonsignaling correlations
/// `params`, on the same scale as [`unconstrained_log_likelihood`].
pub fn log_likelihood(table: &CountsTable, params: &NsParams) -> f64 {
    let mut f = 0.0;
    for k in 0..4 {
        let p = params.cells(k / 2, k % 2);
        for (n, pi) in table.setting(k / 2, k % 2).into_iter().zip(p) {
            if n > 0 {
                f += n as f64 * pi.ln();
            }
        }
    }
    f + rate_terms(table)
}

/// Poisson log-likelihood at the unrestricted optimum `P = n/N`.
pub fn unconstrained_log_likelihood(table: &CountsTable) -> f64 {
    let mut f = 0.0;
    for k in 0..4 {
        let total = table.total(k / 2, k % 2) as f64;
        for n in table.setting(k / 2, k % 2) {
            if n > 0 {
                f += n as f64 * (n as f64 / total).ln();
            }
        }
    }
    f + rate_terms(table)
}

fn cells_log_likelihood(table: &CountsTable, cells: &Cells) -> f64 {
    let mut f = 0.0;
    for (k, p) in cells.iter().enumerate() {
        for (n, pi) in table.setting(k / 2, k % 2).into_iter().zip(p) {
            if n > 0 {
                f += n as f64 * pi.ln();
            }
        }
    }
    f + rate_terms(table)
}

/// Maximum-likelihood nonsignaling correlations for `table`.
///
/// Tables without empty cells have an interior optimum, found by Newton's
/// method directly. Otherwise the optimum may lie on the boundary and is
/// approached along the log-barrier path, a pseudo-count `μ` in every cell
/// decreased tenfold per stage. At `μ = 1e-8` the empty cells heading to
/// zero are fixed there and the fit is finished on that face without a
/// barrier; if that fails the barrier path continues down to `μ = 1e-16`.
/// Every candidate is certified by a Lagrange duality gap.
pub fn ns_mle(table: &CountsTable) -> Result<NsFit> {
    table.check_complete()?;
    let rows = constraint_rows();
    let tolerance = GAP_TOLERANCE * (table.grand_total() as f64).max(1e3);
    let has_empty_cell = (0..4).any(|k| table.setting(k / 2, k % 2).contains(&0));
    if !has_empty_cell {
        let path = follow_path(table, initial_point(table), &[0.0], &rows, tolerance);
        return path.certified(table, tolerance);
    }

    let schedule: Vec<f64> = (0..=16).map(|k| 10f64.powi(-k)).collect();
    let (coarse, fine) = schedule.split_at(schedule.iter().position(|&mu| mu == FACE_MU).unwrap_or(0) + 1);
    let mut best = follow_path(table, initial_point(table), coarse, &rows, tolerance);
    if best.gap <= tolerance {
        return best.certified(table, tolerance);
    }
    let start = best.last;

    let mut face = Face::from_barrier_point(table, &start);
    let reduced = face.solve(table, &start, &rows);
    let gap = face
        .multipliers(table, &reduced.cells, &rows)
        .map_or(f64::INFINITY, |nu| duality_gap(table, &reduced.cells, nu, &rows));
    best.iterations += reduced.iterations;
    if gap < best.gap {
        best.gap = gap;
        best.cells = reduced.cells;
        best.decrement = reduced.decrement;
    }
    if best.gap <= tolerance {
        return best.certified(table, tolerance);
    }

    let mut rest = follow_path(table, start, fine, &rows, tolerance);
    rest.iterations += best.iterations;
    if rest.gap < best.gap {
        best = rest;
    }
    best.certified(table, tolerance)
}

/// Face iterations stop once half the squared Newton decrement per event
/// drops below this.
const FACE_DECREMENT_TOLERANCE: f64 = 1e-26;

/// Barrier weight at which empty cells that are heading to zero are fixed
/// there.
const FACE_MU: f64 = 1e-8;

struct PathOutcome {
    /// Cells with the smallest duality gap seen.
    cells: Cells,
    gap: f64,
    decrement: f64,
    iterations: usize,
    /// Cells at the end of the last stage.
    last: Cells,
}

impl PathOutcome {
    fn certified(self, table: &CountsTable, tolerance: f64) -> Result<NsFit> {
        if !(self.gap <= tolerance) {
            return Err(Error::NonConvergence {
                iterations: self.iterations,
                gradient_norm: (2.0 * self.decrement).sqrt(),
                best_log_likelihood: cells_log_likelihood(table, &self.cells),
                best: params_from_cells(&self.cells).to_array(),
            });
        }
        Ok(NsFit {
            params: params_from_cells(&self.cells),
            cells: self.cells,
            log_likelihood: cells_log_likelihood(table, &self.cells),
            iterations: self.iterations,
        })
    }
}

/// Runs Newton over the barrier `schedule` until the duality gap drops to
/// `tolerance`.
fn follow_path(
    table: &CountsTable,
    mut cells: Cells,
    schedule: &[f64],
    rows: &[(Cells, f64); 8],
    tolerance: f64,
) -> PathOutcome {
    let mut out = PathOutcome {
        cells,
        gap: f64::INFINITY,
        decrement: f64::INFINITY,
        iterations: 0,
        last: cells,
    };
    for &mu in schedule {
        let stage = newton(&weights(table, mu), cells, rows);
        cells = stage.cells;
        out.iterations += stage.iterations;
        let gap = stage
            .multipliers
            .map_or(f64::INFINITY, |nu| duality_gap(table, &cells, nu, rows));
        if gap < out.gap || out.gap.is_infinite() {
            out.gap = gap;
            out.cells = cells;
            out.decrement = stage.decrement;
        }
        if out.gap <= tolerance {
            break;
        }
    }
    out.last = cells;
    out
}

/// Empty cells held at zero, with the prices `μ/p` they carried on the
/// barrier path.
struct Face {
    fixed: [[bool; 4]; 4],
    prices: Cells,
}

impl Face {
    /// Fixes the empty cells whose barrier price `μ/p` clearly exceeds what
    /// a cell that stays positive at the optimum would carry.
    fn from_barrier_point(table: &CountsTable, p: &Cells) -> Self {
        let fixed = std::array::from_fn(|k| {
            let n = table.setting(k / 2, k % 2);
            std::array::from_fn(|c| n[c] == 0 && p[k][c] < 1e2 * FACE_MU)
        });
        let unit = table.grand_total() as f64 / 16.0;
        let prices = std::array::from_fn(|k| std::array::from_fn(|c| FACE_MU * unit / p[k][c]));
        Self { fixed, prices }
    }

    /// Newton's method for `Σ n·ln p` on the face, without a barrier. Each
    /// step solves the full KKT system `[H Aᵀ; A 0]` over the free cells by
    /// least squares, so redundant constraints and directions the objective
    /// does not see are harmless. A free empty cell that a step drives to
    /// zero is fixed there.
    fn solve(&mut self, table: &CountsTable, start: &Cells, rows: &[(Cells, f64); 8]) -> NewtonOutcome {
        let w = weights(table, 0.0);
        // the certificate needs the point itself, not just the objective,
        // converged to rounding
        let stop = FACE_DECREMENT_TOLERANCE * table.grand_total() as f64;
        let mut p = *start;
        for k in 0..4 {
            for c in 0..4 {
                if self.fixed[k][c] {
                    p[k][c] = 0.0;
                }
            }
        }
        let mut outcome = NewtonOutcome {
            cells: p,
            decrement: f64::INFINITY,
            iterations: MAX_NEWTON_ITERATIONS,
            multipliers: None,
        };
        for iteration in 0..MAX_NEWTON_ITERATIONS {
            let free: Vec<(usize, usize)> = (0..16)
                .map(|i| (i / 4, i % 4))
                .filter(|&(k, c)| !self.fixed[k][c])
                .collect();
            project_onto_constraints(&mut p, &free, rows);
            let size = free.len() + 8;
            let mut kkt = nalgebra::DMatrix::<f64>::zeros(size, size);
            let mut rhs = nalgebra::DVector::<f64>::zeros(size);
            let mut scale = vec![1.0; free.len()];
            for (i, &(k, c)) in free.iter().enumerate() {
                if w[k][c] > 0.0 {
                    scale[i] = p[k][c] / w[k][c].sqrt();
                    kkt[(i, i)] = 1.0;
                    rhs[i] = w[k][c].sqrt();
                }
                for j in 0..8 {
                    let a = rows[j].0[k][c] * scale[i];
                    kkt[(i, free.len() + j)] = a;
                    kkt[(free.len() + j, i)] = a;
                }
            }
            let mut residual = 0.0f64;
            for j in 0..8 {
                let r = rows[j].1 - dot(&rows[j].0, &p);
                rhs[free.len() + j] = r;
                residual = residual.max(r.abs());
            }
            let svd = kkt.svd(true, true);
            let cutoff = 1e-13 * svd.singular_values.max();
            let Ok(solution) = svd.solve(&rhs, cutoff) else {
                outcome.iterations = iteration;
                break;
            };
            let mut d = [[0.0; 4]; 4];
            let mut decrement = 0.0;
            for (i, &(k, c)) in free.iter().enumerate() {
                d[k][c] = scale[i] * solution[i];
                if w[k][c] > 0.0 {
                    decrement += solution[i] * solution[i];
                }
            }
            decrement *= 0.5;
            outcome.decrement = decrement;
            // remove what the least-squares solve left of `A·d = r`
            let leftover = Vec8::from_fn(|j, _| rows[j].1 - dot(&rows[j].0, &p) - dot(&rows[j].0, &d));
            if let Some(fix) = min_norm_change(&free, rows, &leftover) {
                for &(k, c) in &free {
                    d[k][c] += fix[k][c];
                }
            }
            if !decrement.is_finite() || (decrement <= stop && residual <= RESIDUAL_TOLERANCE) {
                outcome.iterations = iteration;
                break;
            }

            // the first cell to reach zero along `d`
            let mut t_max = f64::INFINITY;
            let mut blocking = (0, 0);
            for &(k, c) in &free {
                if d[k][c] < 0.0 && -p[k][c] / d[k][c] < t_max {
                    t_max = -p[k][c] / d[k][c];
                    blocking = (k, c);
                }
            }
            let empty_blocks = t_max <= 1.0 && w[blocking.0][blocking.1] == 0.0;
            let mut t = if empty_blocks { t_max } else { (0.99 * t_max).min(1.0) };
            let mut hit = empty_blocks;
            let mut accepted = false;
            for _ in 0..60 {
                if let Some(change) = objective_change(&w, &p, &d, t) {
                    // close to the optimum the gain is below rounding and
                    // full Newton steps polish the point
                    let polishing = t == 1.0 && decrement <= DECREMENT_TOLERANCE;
                    if polishing
                        || change >= 1e-4 * t * 2.0 * decrement
                        || (residual > RESIDUAL_TOLERANCE && change.is_finite())
                    {
                        for &(k, c) in &free {
                            p[k][c] = (p[k][c] + t * d[k][c]).max(0.0);
                        }
                        if hit {
                            p[blocking.0][blocking.1] = 0.0;
                            self.fixed[blocking.0][blocking.1] = true;
                        }
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
                hit = false;
            }
            if !accepted {
                outcome.iterations = iteration;
                break;
            }
        }
        outcome.cells = p;
        outcome
    }

    /// Multipliers for the duality certificate. Prices `Aᵀν` equal `n/p` on
    /// observed cells and vanish on free empty cells, solved in least squares
    /// with each mismatch weighted by the gap it causes. Any freedom left
    /// over is spent matching the barrier prices of the fixed cells.
    fn multipliers(&self, table: &CountsTable, p: &Cells, rows: &[(Cells, f64); 8]) -> Option<Vec8> {
        use nalgebra::{DMatrix, DVector};
        let mut free = DMatrix::<f64>::zeros(16, 8);
        let mut target = DVector::<f64>::zeros(16);
        let mut fixed = DMatrix::<f64>::zeros(16, 8);
        for k in 0..4 {
            let counts = table.setting(k / 2, k % 2);
            for c in 0..4 {
                let row = 4 * k + c;
                let n = counts[c] as f64;
                if self.fixed[k][c] {
                    // relative price mismatch, target one
                    for i in 0..8 {
                        fixed[(row, i)] = rows[i].0[k][c] / self.prices[k][c];
                    }
                    continue;
                }
                let (weight, price) = if counts[c] > 0 {
                    (p[k][c] / n.sqrt(), n / p[k][c])
                } else {
                    (p[k][c], 0.0)
                };
                for i in 0..8 {
                    free[(row, i)] = weight * rows[i].0[k][c];
                }
                target[row] = weight * price;
            }
        }
        let svd = free.svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        let base = svd.solve(&target, cutoff).ok()?;
        let v_t = svd.v_t.as_ref()?;
        let null: Vec<_> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] <= cutoff)
            .map(|i| v_t.row(i).transpose())
            .collect();
        let mut nu = base.clone();
        if !null.is_empty() {
            let basis = DMatrix::from_columns(&null);
            let ones = DVector::from_fn(16, |row, _| {
                if fixed.row(row).iter().any(|&v| v != 0.0) {
                    1.0
                } else {
                    0.0
                }
            });
            let shift = (&fixed * &basis)
                .svd(true, true)
                .solve(&(ones - &fixed * &base), 1e-12)
                .ok()?;
            nu += basis * shift;
        }
        Some(Vec8::from_fn(|i, _| nu[i]))
    }
}

/// Smallest change of the `free` cells that moves `A·p` by `target`.
fn min_norm_change(free: &[(usize, usize)], rows: &[(Cells, f64); 8], target: &Vec8) -> Option<Cells> {
    let a = nalgebra::DMatrix::from_fn(8, free.len(), |j, i| rows[j].0[free[i].0][free[i].1]);
    let b = nalgebra::DVector::from_fn(8, |j, _| target[j]);
    let svd = a.svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    let delta = svd.solve(&b, cutoff).ok()?;
    let mut change = [[0.0; 4]; 4];
    for (i, &(k, c)) in free.iter().enumerate() {
        change[k][c] = delta[i];
    }
    Some(change)
}

/// Moves the `free` cells onto `A·p = e` by the smallest correction, unless
/// that would make a cell negative.
fn project_onto_constraints(p: &mut Cells, free: &[(usize, usize)], rows: &[(Cells, f64); 8]) {
    let residual = Vec8::from_fn(|j, _| rows[j].1 - dot(&rows[j].0, p));
    let Some(delta) = min_norm_change(free, rows, &residual) else {
        return;
    };
    if free.iter().all(|&(k, c)| p[k][c] + delta[k][c] >= 0.0) {
        for &(k, c) in free {
            p[k][c] += delta[k][c];
        }
    }
}

/// Accepted duality gap per observed event, with a floor of 10³ events.
const GAP_TOLERANCE: f64 = 1e-13;

/// Upper bound on `max Σ n·ln q − Σ n·ln p` over nonsignaling `q`, from the
/// Lagrange dual with multipliers `ν`.
///
/// With `c = Aᵀν ≥ 0` the dual value is `Σ_{n>0} (n·ln(n/c) − n) + νᵀe`.
/// Writing `νᵀe = Σ c·p + νᵀ(e − A·p)` gives the gap as a sum of
/// nonnegative terms `n·(u − ln(1 + u))` with `u = c·p/n − 1`, plus `c·p` on
/// empty cells, plus the residual term. Negative prices are first lifted by
/// shifting normalization multipliers; the gap is infinite when an observed
/// cell is left with zero price.
fn duality_gap(table: &CountsTable, p: &Cells, mut nu: Vec8, rows: &[(Cells, f64); 8]) -> f64 {
    // raising a normalization multiplier lifts every price of its setting
    for k in 0..4 {
        for _ in 0..4 {
            let lowest = (0..4)
                .map(|c| (0..8).map(|i| rows[i].0[k][c] * nu[i]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            if lowest >= 0.0 {
                break;
            }
            nu[k] += (-lowest).max(4.0 * f64::EPSILON * nu[k].abs());
        }
    }
    let mut gap = 0.0;
    for k in 0..4 {
        for (c, n) in table.setting(k / 2, k % 2).into_iter().enumerate() {
            let price: f64 = (0..8).map(|i| rows[i].0[k][c] * nu[i]).sum();
            if price < 0.0 || (n > 0 && price == 0.0) {
                return f64::INFINITY;
            }
            let mass = price * p[k][c];
            if n > 0 {
                let n = n as f64;
                let u = mass / n - 1.0;
                gap += n * (u - u.ln_1p());
            } else {
                gap += mass;
            }
        }
    }
    for (i, (row, e)) in rows.iter().enumerate() {
        gap += nu[i] * (e - dot(row, p));
    }
    gap
}

/// Outcome of the nonsignaling likelihood-ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalingReport {
    /// `ξ = −2(ln L − ln L₀)`.
    pub xi: f64,
    pub dof: u32,
    /// Natural log of the χ² p-value.
    pub log_p: f64,
    /// Equivalent two-sided Gaussian significance.
    pub sigma: f64,
    pub naive: [NaiveSignaling; 4],
}

impl SignalingReport {
    pub fn log10_p(&self) -> f64 {
        self.log_p / std::f64::consts::LN_10
    }
}

/// `ξ = 2 Σ n ln(n / (N·P*))` for fitted nonsignaling correlations `P*`.
pub fn likelihood_ratio_statistic(table: &CountsTable, fit: &NsParams) -> f64 {
    statistic_from_cells(table, &std::array::from_fn(|k| fit.cells(k / 2, k % 2)))
}

fn statistic_from_cells(table: &CountsTable, cells: &Cells) -> f64 {
    let mut xi = 0.0;
    for (k, p) in cells.iter().enumerate() {
        let total = table.total(k / 2, k % 2) as f64;
        for (n, pi) in table.setting(k / 2, k % 2).into_iter().zip(p) {
            if n > 0 {
                let n = n as f64;
                xi += n * (n / (total * pi)).ln();
            }
        }
    }
    (2.0 * xi).max(0.0)
}

/// Likelihood-ratio test of the nonsignaling conditions.
pub fn lr_test(table: &CountsTable) -> Result<SignalingReport> {
    let fit = ns_mle(table)?;
    let xi = statistic_from_cells(table, &fit.cells);
    let log_p = chi2_log_survival(xi, NS_TEST_DOF)?;
    Ok(SignalingReport {
        xi,
        dof: NS_TEST_DOF,
        log_p,
        sigma: sigma_from_log_p(log_p)?,
        naive: naive_signaling(table)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_from(params: &NsParams, per_setting: f64) -> CountsTable {
        let mut cells = [[0u64; 4]; 4];
        for (k, row) in cells.iter_mut().enumerate() {
            *row = params.cells(k / 2, k % 2).map(|p| (p * per_setting).round() as u64);
        }
        CountsTable::from_settings(cells)
    }

    #[test]
    fn uniform_counts_fit_uniform_point() {
        let t = CountsTable::from_settings([[40; 4]; 4]);
        let fit = ns_mle(&t).unwrap();
        for (got, want) in fit.params.to_array().iter().zip(NsParams::UNIFORM.to_array()) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((fit.log_likelihood - unconstrained_log_likelihood(&t)).abs() < 1e-9);
    }

    #[test]
    fn nonsignaling_counts_are_recovered() {
        let p = NsParams {
            a: [0.5, 0.25],
            b: [0.5, 0.75],
            c: [[0.375, 0.3], [0.125, 0.2]],
        };
        assert!(p.min_cell() > 0.0);
        let t = table_from(&p, 1000.0);
        let fit = ns_mle(&t).unwrap();
        for (got, want) in fit.params.to_array().iter().zip(p.to_array()) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!((fit.log_likelihood - unconstrained_log_likelihood(&t)).abs() < 1e-9);
        let report = lr_test(&t).unwrap();
        assert!(report.xi < 1e-9);
        assert!(report.log_p > -1e-9);
        assert!(report.sigma < 1e-6);
        assert_eq!(report.dof, 4);
    }

    #[test]
    fn boundary_nonsignaling_point_is_recovered() {
        // a PR box is nonsignaling but has half of its cells empty
        let t = CountsTable::from_settings([[50, 0, 0, 50], [0, 50, 50, 0], [50, 0, 0, 50], [50, 0, 0, 50]]);
        let fit = ns_mle(&t).unwrap();
        assert!(fit.params.min_cell() >= -1e-12);
        assert!((fit.log_likelihood - unconstrained_log_likelihood(&t)).abs() < 1e-9);
        assert!(lr_test(&t).unwrap().xi < 1e-9);
    }

    #[test]
    fn empty_cells_with_signaling() {
        // Alice answers +1 exactly when Bob's setting is 0
        let t = CountsTable::from_settings([[30, 30, 0, 0], [0, 0, 30, 30], [30, 30, 0, 0], [0, 0, 30, 30]]);
        let fit = ns_mle(&t).unwrap();
        assert!(fit.params.min_cell() >= -1e-12);
        let report = lr_test(&t).unwrap();
        assert!(report.xi > 100.0);
        assert!(fit.log_likelihood < unconstrained_log_likelihood(&t));
        // best nonsignaling fit: Alice's marginal is 1/2 for both settings
        assert!((fit.params.a[0] - 0.5).abs() < 1e-9 && (fit.params.a[1] - 0.5).abs() < 1e-9);
        assert!((report.xi - 2.0 * 240.0 * 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn signaling_data_gives_positive_statistic() {
        let t = CountsTable::from_settings([
            [300, 100, 100, 300],
            [100, 300, 300, 100],
            [350, 80, 80, 300],
            [300, 100, 100, 300],
        ]);
        let report = lr_test(&t).unwrap();
        assert!(report.xi > 1.0);
        assert!(report.log_p < 0.0);
        assert!((report.log10_p() * std::f64::consts::LN_10 - report.log_p).abs() < 1e-12);
    }

    #[test]
    fn degrees_of_freedom_equal_constraint_rank() {
        // nonsignaling equalities on the 12 free per-setting probabilities
        // (n++, n+-, n-+ of each setting): rank 4
        let mut rows: Vec<[f64; 12]> = Vec::new();
        let alice = |x: usize, y: usize| -> [f64; 12] {
            let mut r = [0.0; 12];
            let s = 3 * (2 * x + y);
            r[s] = 1.0;
            r[s + 1] = 1.0;
            r
        };
        let bob = |x: usize, y: usize| -> [f64; 12] {
            let mut r = [0.0; 12];
            let s = 3 * (2 * x + y);
            r[s] = 1.0;
            r[s + 2] = 1.0;
            r
        };
        for x in 0..2 {
            let (p, q) = (alice(x, 0), alice(x, 1));
            rows.push(std::array::from_fn(|i| p[i] - q[i]));
        }
        for y in 0..2 {
            let (p, q) = (bob(0, y), bob(1, y));
            rows.push(std::array::from_fn(|i| p[i] - q[i]));
        }
        let m = nalgebra::DMatrix::from_fn(rows.len(), 12, |i, j| rows[i][j]);
        assert_eq!(m.rank(1e-12), NS_TEST_DOF as usize);
    }

    #[test]
    fn incomplete_table_is_rejected() {
        let mut cells = [[5u64; 4]; 4];
        cells[0] = [0; 4];
        assert!(matches!(
            ns_mle(&CountsTable::from_settings(cells)),
            Err(Error::MissingSetting { .. })
        ));
    }
}
