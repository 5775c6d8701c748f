//! Oracles and fixtures shared by the integration and acceptance tests.

#![allow(dead_code)]

use std::path::PathBuf;

use bellcheck::io::parse_config;
use bellcheck::simulator::ExperimentConfig;
use bellcheck::stats::CountsTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cell probabilities `P[2x+y][2a+b]` of one behaviour.
pub type Behaviour = [[f64; 4]; 4];

/// The 24 extreme points of the two-input two-output nonsignaling
/// polytope: 16 deterministic local strategies and 8 PR boxes.
pub fn ns_vertices() -> Vec<Behaviour> {
    let mut out = Vec::with_capacity(24);
    for f in 0..4usize {
        for g in 0..4usize {
            let mut p = [[0.0; 4]; 4];
            for x in 0..2 {
                for y in 0..2 {
                    let a = (f >> x) & 1;
                    let b = (g >> y) & 1;
                    p[2 * x + y][2 * a + b] = 1.0;
                }
            }
            out.push(p);
        }
    }
    for shift in 0..8usize {
        let (alpha, beta, gamma) = (shift & 1, (shift >> 1) & 1, (shift >> 2) & 1);
        let mut p = [[0.0; 4]; 4];
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        if a ^ b == (x & y) ^ (alpha & x) ^ (beta & y) ^ gamma {
                            p[2 * x + y][2 * a + b] = 0.5;
                        }
                    }
                }
            }
        }
        out.push(p);
    }
    out
}

fn counts_of(table: &CountsTable) -> [[f64; 4]; 4] {
    std::array::from_fn(|k| table.setting(k / 2, k % 2).map(|n| n as f64))
}

fn mixture_log_likelihood(n: &[[f64; 4]; 4], vertices: &[Behaviour], w: &[f64]) -> f64 {
    let mut f = 0.0;
    for k in 0..4 {
        for c in 0..4 {
            if n[k][c] > 0.0 {
                let p: f64 = vertices.iter().zip(w).map(|(v, wi)| wi * v[k][c]).sum();
                f += n[k][c] * p.ln();
            }
        }
    }
    f
}

fn em_step(n: &[[f64; 4]; 4], vertices: &[Behaviour], w: &[f64]) -> Vec<f64> {
    let total: f64 = n.iter().flatten().sum();
    let mut next = vec![0.0; w.len()];
    for k in 0..4 {
        for c in 0..4 {
            if n[k][c] == 0.0 {
                continue;
            }
            let p: f64 = vertices.iter().zip(w).map(|(v, wi)| wi * v[k][c]).sum();
            for (i, v) in vertices.iter().enumerate() {
                next[i] += n[k][c] * w[i] * v[k][c] / p;
            }
        }
    }
    next.iter_mut().for_each(|x| *x /= total);
    next
}

/// Maximum of `Σ n·ln P` over nonsignaling behaviours, found by
/// expectation-maximization over mixture weights of the polytope vertices
/// (each setting's counts are a sample of the mixture), accelerated with
/// SQUAREM and guarded to stay monotone.
pub fn em_oracle(table: &CountsTable) -> f64 {
    let n = counts_of(table);
    let vertices = ns_vertices();
    let mut w = vec![1.0 / vertices.len() as f64; vertices.len()];
    let mut f = mixture_log_likelihood(&n, &vertices, &w);
    for _ in 0..200_000 {
        let w1 = em_step(&n, &vertices, &w);
        let w2 = em_step(&n, &vertices, &w1);
        let r: Vec<f64> = w1.iter().zip(&w).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = w2.iter().zip(&w1).zip(&r).map(|((a, b), r)| a - b - r).collect();
        let rr: f64 = r.iter().map(|x| x * x).sum();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let mut candidate = w2.clone();
        if vv > 0.0 {
            let alpha = -(rr / vv).sqrt();
            let extrapolated: Vec<f64> = w
                .iter()
                .zip(&r)
                .zip(&v)
                .map(|((w, r), v)| (w - 2.0 * alpha * r + alpha * alpha * v).max(0.0))
                .collect();
            let s: f64 = extrapolated.iter().sum();
            let extrapolated: Vec<f64> = extrapolated.iter().map(|x| x / s).collect();
            let stabilized = em_step(&n, &vertices, &extrapolated);
            if mixture_log_likelihood(&n, &vertices, &stabilized) >= mixture_log_likelihood(&n, &vertices, &w2) {
                candidate = stabilized;
            }
        }
        let next = mixture_log_likelihood(&n, &vertices, &candidate);
        let done = (next - f).abs() <= 1e-14 * f.abs().max(1.0);
        w = candidate;
        f = f.max(next);
        if done {
            break;
        }
    }
    f
}

/// `Σ n·ln P` of the constrained fit, on the oracle's scale.
pub fn fit_objective(table: &CountsTable, params: &bellcheck::stats::NsParams) -> f64 {
    let mut f = 0.0;
    for k in 0..4 {
        let p = params.cells(k / 2, k % 2);
        for (n, pi) in table.setting(k / 2, k % 2).into_iter().zip(p) {
            if n > 0 {
                f += n as f64 * pi.ln();
            }
        }
    }
    f
}

/// Fixed corpus of 50 small count tables: uniform noise, tables with empty
/// cells, and samples of signaling and nonsignaling behaviours.
pub fn table_corpus() -> Vec<CountsTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let mut out = Vec::with_capacity(50);
    while out.len() < 50 {
        let kind = out.len() % 5;
        let mut cells = [[0u64; 4]; 4];
        for (k, row) in cells.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = match kind {
                    0 => rng.random_range(0..30),
                    1 => {
                        if rng.random_bool(0.3) {
                            0
                        } else {
                            rng.random_range(1..20)
                        }
                    }
                    2 => {
                        // strongly correlated outcomes with a setting-dependent bias
                        let base = if c == 0 || c == 3 { 40 } else { 4 };
                        base + rng.random_range(0..10) + if c < 2 && k % 2 == 0 { 15 } else { 0 }
                    }
                    3 => rng.random_range(1..6),
                    _ => rng.random_range(50..200),
                };
            }
        }
        let table = CountsTable::from_settings(cells);
        if table.missing_setting().is_none() {
            out.push(table);
        }
    }
    out
}

/// Composite 5-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let mid = a + (i as f64 + 0.5) * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            total += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * total
}

/// `ln P(χ²₄ ≥ ξ)` by quadrature of the density `x/4·e^{−x/2}`, with the
/// factor `e^{−ξ/2}` taken out of the integral.
pub fn chi2_4_log_survival_quadrature(xi: f64) -> f64 {
    let tail = gauss_legendre(|u| (xi + u) / 4.0 * (-u / 2.0).exp(), 0.0, 120.0, 400);
    -xi / 2.0 + tail.ln()
}

/// Kolmogorov–Smirnov distance of `samples` from the uniform law on [0, 1].
pub fn ks_uniform_distance(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &u)| ((i as f64 + 1.0) / n - u).max(u - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS distance.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn preset_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../presets")
        .join(format!("{name}.toml"))
}

pub fn load_preset(name: &str) -> ExperimentConfig {
    let path = preset_path(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
