//! p-values and their conversion to Gaussian significance, evaluated in log
//! space so that p-values far below the smallest `f64` stay usable.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

use statrs::function::erf::erf_inv;

use crate::error::{Error, Result};

/// Natural log of the survival function `P(X ≥ xi)` of a χ² variable with an
/// even number of degrees of freedom.
///
/// With `h = xi/2` and `m = dof/2` the survival function is the finite
/// Poisson sum `e^{−h} Σ_{j<m} h^j / j!`.
pub fn chi2_log_survival(xi: f64, dof: u32) -> Result<f64> {
    if xi.is_nan() || xi < 0.0 {
        return Err(Error::input(format!("chi-square statistic must be >= 0, got {xi}")));
    }
    if dof == 0 || !dof.is_multiple_of(2) {
        return Err(Error::input(format!(
            "degrees of freedom must be even and positive, got {dof}"
        )));
    }
    if xi == 0.0 {
        return Ok(0.0);
    }
    if xi.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let h = 0.5 * xi;
    let m = dof / 2;
    if h < 1.0 {
        // p is close to one; use the complementary (lower) tail
        // e^{−h} Σ_{j≥m} h^j / j! to avoid cancellation
        let mut term = (1..=m).fold(1.0, |t, j| t * h / f64::from(j));
        let mut lower = 0.0;
        let mut j = m;
        while term > lower * 1e-18 {
            lower += term;
            j += 1;
            term *= h / f64::from(j);
        }
        Ok((-lower * (-h).exp()).ln_1p())
    } else {
        // log-sum-exp over j·ln h − ln j!
        let ln_h = h.ln();
        let mut log_terms = Vec::with_capacity(m as usize);
        let mut ln_fact = 0.0;
        for j in 0..m {
            if j > 0 {
                ln_fact += f64::from(j).ln();
            }
            log_terms.push(f64::from(j) * ln_h - ln_fact);
        }
        let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = log_terms.iter().map(|t| (t - max).exp()).sum();
        Ok(-h + max + sum.ln())
    }
}

/// `ln erfc(x)` for `x ≥ 0`, accurate far into the tail.
pub fn ln_erfc(x: f64) -> f64 {
    if x < 0.5 {
        (-libm::erf(x)).ln_1p()
    } else if x < 5.0 {
        libm::erfc(x).ln()
    } else {
        -x * x + (erfc_continued_fraction(x) / PI.sqrt()).ln()
    }
}

/// `√π·e^{x²}·erfc(x)`, from the Laplace continued fraction
/// `1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))`, evaluated with the modified
/// Lentz method. Converges quickly for `x ≥ 5`.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = 0.5 * k as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// `ln P(|Z| > s)` for a standard normal `Z`.
pub fn two_sided_log_p(s: f64) -> f64 {
    ln_erfc(s.abs() / SQRT_2)
}

/// Significance `s` solving `P(|Z| > s) = exp(log_p)`.
pub fn sigma_from_log_p(log_p: f64) -> Result<f64> {
    if log_p.is_nan() || log_p > 0.0 {
        return Err(Error::input(format!("log p-value must be <= 0, got {log_p}")));
    }
    if log_p == 0.0 {
        return Ok(0.0);
    }
    if log_p == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }

    let mut s = if log_p > -700.0 {
        // 1 − p without cancellation
        SQRT_2 * erf_inv(-log_p.exp_m1())
    } else {
        // −2 ln p ≈ s² + ln(π s²/2)
        let target = -2.0 * log_p;
        let mut s2 = target;
        for _ in 0..4 {
            s2 = target - (0.5 * PI * s2).ln();
        }
        s2.sqrt()
    };
    if !s.is_finite() {
        s = (-2.0 * log_p).sqrt();
    }

    // Newton on g(s) = ln P(|Z| > s) − log_p, which is decreasing and
    // concave, so iterates from either side settle monotonically.
    for _ in 0..100 {
        let g = two_sided_log_p(s) - log_p;
        // d/ds ln erfc(s/√2) = −√(2/π)·exp(−s²/2 − ln erfc(s/√2))
        let slope = -FRAC_2_SQRT_PI / SQRT_2 * (-0.5 * s * s - two_sided_log_p(s)).exp();
        let next = (s - g / slope).max(0.0);
        let done = (next - s).abs() <= 1e-15 * next.max(1e-300);
        s = next;
        if done {
            break;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Gauss–Legendre quadrature of `f` on `[a, b]`.
    fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
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

    /// ln ∫_ξ^∞ x/4·e^{−x/2} dx, factoring e^{−ξ/2} out of the integrand.
    fn chi2_4_log_survival_quadrature(xi: f64) -> f64 {
        let tail = gauss_legendre(|u| (xi + u) / 4.0 * (-u / 2.0).exp(), 0.0, 120.0, 400);
        -xi / 2.0 + tail.ln()
    }

    #[test]
    fn chi2_zero_is_certain() {
        assert_eq!(chi2_log_survival(0.0, 4).unwrap(), 0.0);
    }

    #[test]
    fn chi2_four_dof_reference_values() {
        // values from extended-precision quadrature of the χ²₄ density
        let p = chi2_log_survival(9.48773, 4).unwrap().exp();
        assert!((p - 0.049_999_980_111_914_13).abs() < 1e-12);
        let lp = chi2_log_survival(100.0, 4).unwrap();
        assert!((lp - (-46.068_174_367_275_67)).abs() < 1e-12);
        assert!((lp - (-50.0 + 51f64.ln())).abs() < 1e-12);
        let lp = chi2_log_survival(1000.0, 4).unwrap();
        assert!((lp - (-493.783_393_898_915_14)).abs() < 1e-10);
    }

    #[test]
    fn chi2_matches_quadrature() {
        for &xi in &[1e-3, 0.1, 1.0, 2.5, 7.0, 30.0, 150.0, 999.0] {
            let q = chi2_4_log_survival_quadrature(xi);
            let lp = chi2_log_survival(xi, 4).unwrap();
            // relative error on p equals absolute error on ln p
            assert!((lp - q).abs() < 1e-10, "xi={xi}: {lp} vs {q}");
        }
    }

    #[test]
    fn chi2_general_even_dof() {
        // dof 2: ln p = −ξ/2 exactly
        for xi in [0.3, 4.0, 77.0] {
            assert!((chi2_log_survival(xi, 2).unwrap() + xi / 2.0).abs() < 1e-14);
        }
        // dof 6: e^{−h}(1 + h + h²/2)
        let h: f64 = 3.0;
        let want = -h + (1.0 + h + h * h / 2.0).ln();
        assert!((chi2_log_survival(2.0 * h, 6).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn chi2_large_statistic_stays_finite() {
        let lp = chi2_log_survival(1e6, 4).unwrap();
        assert!((lp - (-5e5 + 500_001f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn chi2_rejects_bad_input() {
        assert!(chi2_log_survival(-1.0, 4).is_err());
        assert!(chi2_log_survival(1.0, 3).is_err());
        assert!(chi2_log_survival(1.0, 0).is_err());
    }

    #[test]
    fn ln_erfc_is_continuous_across_branches() {
        for x in [0.5, 5.0] {
            let below = ln_erfc(x - 1e-12);
            let above = ln_erfc(x + 1e-12);
            assert!((below - above).abs() < 1e-10 * below.abs().max(1.0));
        }
    }

    #[test]
    fn normal_tail_reference_values() {
        // extended-precision erfc
        let p1 = two_sided_log_p(1.0).exp();
        assert!((p1 - 0.317_310_507_862_914_1).abs() < 1e-14, "{p1:e}");
        assert!((two_sided_log_p(5.0).exp() / 5.733_031_437_583_878e-7 - 1.0).abs() < 1e-13);
        assert!((two_sided_log_p(40.0) - (-803.915_294_833_193_8)).abs() < 1e-10);
        assert!((two_sided_log_p(100.0) - (-5004.831_061_513_645)).abs() < 1e-9);
    }

    #[test]
    fn sigma_reference_values() {
        assert_eq!(sigma_from_log_p(0.0).unwrap(), 0.0);
        let s = sigma_from_log_p(0.31731f64.ln()).unwrap();
        assert!((s - 1.000_001_049_431_045).abs() < 1e-9);
        let s = sigma_from_log_p(-803.915_294_833_193_8).unwrap();
        assert!((s - 40.0).abs() < 1e-9);
        assert!(sigma_from_log_p(0.1).is_err());
    }

    #[test]
    fn sigma_from_tiny_signals() {
        // p = 1 − ε: s ≈ ε·√(π/2)
        let eps = 1e-12;
        let s = sigma_from_log_p((-eps as f64).ln_1p()).unwrap();
        assert!((s / (eps * (PI / 2.0).sqrt()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sigma_down_to_extreme_log_p() {
        for log_p in [-1e3, -1e4, -1e5, -1e6] {
            let s = sigma_from_log_p(log_p).unwrap();
            let back = two_sided_log_p(s);
            assert!(((back - log_p) / log_p).abs() < 1e-12, "{log_p}: {back}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip(s in 0.0..100.0f64) {
                let back = sigma_from_log_p(two_sided_log_p(s)).unwrap();
                prop_assert!((back - s).abs() <= 1e-9 * s.max(1e-3));
            }

            #[test]
            fn survival_decreasing(a in 0.0..2000.0f64, d in 1e-6..50.0f64) {
                prop_assert!(chi2_log_survival(a + d, 4).unwrap() < chi2_log_survival(a, 4).unwrap());
            }

            #[test]
            fn sigma_increasing(a in -1e5..-1e-8f64, f in 1.0001..10.0f64) {
                prop_assert!(sigma_from_log_p(a * f).unwrap() > sigma_from_log_p(a).unwrap());
            }
        }
    }
}
