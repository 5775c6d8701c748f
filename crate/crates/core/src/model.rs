//! Closed-form optical model of a two-photon polarization Bell experiment.
//!
//! The source emits the state `(|HH> + e^{iφ}|VV>)/√2` mixed with white noise
//! so that the interference contrast equals the visibility `V`. Each station
//! rotates a half-wave plate by `θ`, which turns the analyzer by `2θ`, and
//! splits the photon on a polarizing beam splitter into outcome `+1`
//! (transmitted) or `-1` (reflected).
//!
//! Outcome tables are indexed `[a][b]` with index `0` for `+1` and `1` for
//! `-1`, see [`outcome_index`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of each correlator in the CHSH sum, indexed by `2 * x + y`.
pub const CHSH_SIGNS: [f64; 4] = [1.0, -1.0, 1.0, 1.0];

/// Table of joint outcome probabilities, `table[a][b]`.
pub type OutcomeTable = [[f64; 2]; 2];

/// Index of outcome `±1` in an [`OutcomeTable`].
pub const fn outcome_index(outcome: i8) -> usize {
    if outcome > 0 {
        0
    } else {
        1
    }
}

/// Value `±1` of the outcome stored at `index`.
pub const fn outcome_value(index: usize) -> f64 {
    if index == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceState {
    /// Two-photon interference visibility in `[0, 1]`.
    pub visibility: f64,
    /// Relative phase between `|HH>` and `|VV>` in radians.
    pub phase: f64,
    /// Detected pair rate in Hz.
    pub pair_rate: f64,
}

impl Default for SourceState {
    fn default() -> Self {
        Self {
            visibility: 0.994,
            phase: 0.0,
            pair_rate: 200.0,
        }
    }
}

impl SourceState {
    pub fn new(visibility: f64, phase: f64, pair_rate: f64) -> Result<Self> {
        let state = Self {
            visibility,
            phase,
            pair_rate,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::validation(
                "source.visibility",
                format!("{} is outside [0, 1]", self.visibility),
            ));
        }
        if !self.phase.is_finite() {
            return Err(Error::validation("source.phase_deg", "must be finite"));
        }
        if !(self.pair_rate > 0.0 && self.pair_rate.is_finite()) {
            return Err(Error::validation(
                "source.pair_rate_hz",
                format!("{} must be positive", self.pair_rate),
            ));
        }
        Ok(())
    }
}

/// Half-wave-plate angles for both settings of both stations, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerAngles {
    pub alice_hwp: [f64; 2],
    pub bob_hwp: [f64; 2],
}

impl Default for AnalyzerAngles {
    /// Plate angles that maximize `S` for `|Φ+>`: Alice (0°, 22.5°), Bob
    /// (11.25°, 33.75°).
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            alice_hwp: [0.0, PI / 8.0],
            bob_hwp: [PI / 16.0, 3.0 * PI / 16.0],
        }
    }
}

impl AnalyzerAngles {
    pub fn alice_analyzer(&self, x: usize) -> f64 {
        2.0 * self.alice_hwp[x]
    }

    pub fn bob_analyzer(&self, y: usize) -> f64 {
        2.0 * self.bob_hwp[y]
    }

    fn validate(&self) -> Result<()> {
        if self.alice_hwp.iter().chain(self.bob_hwp.iter()).all(|a| a.is_finite()) {
            Ok(())
        } else {
            Err(Error::input("wave-plate angles must be finite"))
        }
    }
}

/// Interference term `cos2α·cos2β + cos φ·sin2α·sin2β` of the ideal state.
fn interference(phase: f64, alpha: f64, beta: f64) -> f64 {
    let (sa, ca) = (2.0 * alpha).sin_cos();
    let (sb, cb) = (2.0 * beta).sin_cos();
    ca * cb + phase.cos() * sa * sb
}

/// Joint outcome probabilities for analyzer angles `alpha` (Alice) and
/// `beta` (Bob).
pub fn outcome_probabilities(state: &SourceState, alpha: f64, beta: f64) -> Result<OutcomeTable> {
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::input("analyzer angle must be finite"));
    }
    state.validate()?;
    let e = state.visibility * interference(state.phase, alpha, beta);
    let same = 0.25 * (1.0 + e);
    let diff = 0.25 * (1.0 - e);
    Ok([[same, diff], [diff, same]])
}

/// Correlator `E = Σ ab·P(a,b)` at analyzer angles `alpha`, `beta`.
pub fn correlator(state: &SourceState, alpha: f64, beta: f64) -> Result<f64> {
    let p = outcome_probabilities(state, alpha, beta)?;
    Ok(p[0][0] - p[0][1] - p[1][0] + p[1][1])
}

/// The four correlators `E(x, y)`, indexed by `2 * x + y`.
pub fn correlators(state: &SourceState, angles: &AnalyzerAngles) -> Result<[f64; 4]> {
    angles.validate()?;
    let mut out = [0.0; 4];
    for x in 0..2 {
        for y in 0..2 {
            out[2 * x + y] = correlator(state, angles.alice_analyzer(x), angles.bob_analyzer(y))?;
        }
    }
    Ok(out)
}

/// CHSH value `E(0,0) − E(0,1) + E(1,0) + E(1,1)`.
pub fn chsh_value(state: &SourceState, angles: &AnalyzerAngles) -> Result<f64> {
    let e = correlators(state, angles)?;
    Ok(e.iter().zip(CHSH_SIGNS).map(|(e, s)| s * e).sum())
}

/// Derivatives of each correlator with respect to the wave plates positioned
/// for its setting block.
///
/// Entry `[2 * x + y][0]` is `∂E(x,y)/∂θ_A` and `[2 * x + y][1]` is
/// `∂E(x,y)/∂θ_B`, where `θ` is a half-wave-plate angle. Each setting block
/// positions one plate per station, so these are eight independent error
/// instances.
pub fn chsh_hwp_gradient(state: &SourceState, angles: &AnalyzerAngles) -> Result<[[f64; 2]; 4]> {
    angles.validate()?;
    state.validate()?;
    let v = state.visibility;
    let cphi = state.phase.cos();
    let mut out = [[0.0; 2]; 4];
    for x in 0..2 {
        for y in 0..2 {
            let (sa, ca) = (2.0 * angles.alice_analyzer(x)).sin_cos();
            let (sb, cb) = (2.0 * angles.bob_analyzer(y)).sin_cos();
            // d(analyzer)/d(plate) = 2 and d(2·analyzer)/d(analyzer) = 2
            out[2 * x + y] = [
                4.0 * v * (-sa * cb + cphi * ca * sb),
                4.0 * v * (-ca * sb + cphi * sa * cb),
            ];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI, SQRT_2};

    fn state(v: f64) -> SourceState {
        SourceState::new(v, 0.0, 200.0).unwrap()
    }

    #[test]
    fn perfect_correlation_at_equal_angles() {
        let p = outcome_probabilities(&state(1.0), 0.0, 0.0).unwrap();
        assert_eq!(p, [[0.5, 0.0], [0.0, 0.5]]);
    }

    #[test]
    fn fully_mixed_is_uniform() {
        let p = outcome_probabilities(&state(0.0), 0.3, -1.1).unwrap();
        for row in p {
            for v in row {
                assert_eq!(v, 0.25);
            }
        }
    }

    /// Independent route: build the 4×4 density matrix of the noisy Bell
    /// state and project onto rotated linear polarizations.
    fn density_matrix_correlator(v: f64, phi: f64, alpha: f64, beta: f64) -> f64 {
        use nalgebra::{Complex, Matrix4, Vector2, Vector4};
        let s = 1.0 / SQRT_2;
        let psi = Vector4::new(
            Complex::new(s, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(0.0, 0.0),
            Complex::new(s * phi.cos(), s * phi.sin()),
        );
        let pure = psi * psi.adjoint();
        let rho = pure * Complex::new(v, 0.0) + Matrix4::identity() * Complex::new((1.0 - v) / 4.0, 0.0);
        let pol = |t: f64, sign: f64| -> Vector2<Complex<f64>> {
            if sign > 0.0 {
                Vector2::new(Complex::new(t.cos(), 0.0), Complex::new(t.sin(), 0.0))
            } else {
                Vector2::new(Complex::new(-t.sin(), 0.0), Complex::new(t.cos(), 0.0))
            }
        };
        let mut e = 0.0;
        for a in [1.0, -1.0] {
            for b in [1.0, -1.0] {
                let u = pol(alpha, a).kronecker(&pol(beta, b));
                let p = (u.adjoint() * rho * u)[(0, 0)].re;
                e += a * b * p;
            }
        }
        e
    }

    #[test]
    fn correlator_matches_density_matrix() {
        let e = correlator(&state(0.994), 0.0, FRAC_PI_8).unwrap();
        assert!((e - 0.702_864_140_499_428).abs() < 1e-12);
        assert!((density_matrix_correlator(0.994, 0.0, 0.0, FRAC_PI_8) - 0.702_864_140_499_428).abs() < 1e-12);
        for &(v, phi, a, b) in &[(0.9, 0.0, 0.2, 1.3), (0.7, 0.4, -0.5, 2.0), (1.0, 1.2, 0.9, 0.1)] {
            let s = SourceState::new(v, phi, 1.0).unwrap();
            let lhs = correlator(&s, a, b).unwrap();
            let rhs = density_matrix_correlator(v, phi, a, b);
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn correlator_edge_values() {
        assert!((correlator(&state(1.0), 0.4, 0.4).unwrap() - 1.0).abs() < 1e-15);
        assert!(correlator(&state(1.0), 0.0, FRAC_PI_4).unwrap().abs() < 1e-15);
    }

    #[test]
    fn chsh_at_optimal_angles() {
        let angles = AnalyzerAngles::default();
        let s = chsh_value(&state(1.0), &angles).unwrap();
        assert!((s - 2.0 * SQRT_2).abs() < 1e-12);
        let s = chsh_value(&state(0.994), &angles).unwrap();
        assert!((s - 2.811_456_561_997_713).abs() < 1e-12);
    }

    #[test]
    fn chsh_with_all_plates_at_zero() {
        let angles = AnalyzerAngles {
            alice_hwp: [0.0; 2],
            bob_hwp: [0.0; 2],
        };
        for v in [0.0, 0.5, 0.994] {
            assert!((chsh_value(&state(v), &angles).unwrap() - 2.0 * v).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_angles() {
        assert!(matches!(
            outcome_probabilities(&state(1.0), f64::NAN, 0.0),
            Err(Error::Input(_))
        ));
        let angles = AnalyzerAngles {
            alice_hwp: [0.0, f64::INFINITY],
            bob_hwp: [0.0; 2],
        };
        assert!(chsh_value(&state(1.0), &angles).is_err());
    }

    #[test]
    fn rejects_invalid_state() {
        assert!(SourceState::new(1.2, 0.0, 1.0).is_err());
        assert!(SourceState::new(0.5, 0.0, 0.0).is_err());
    }

    fn finite_difference(state: &SourceState, angles: &AnalyzerAngles) -> [[f64; 2]; 4] {
        let h = 1e-6;
        let mut out = [[0.0; 2]; 4];
        for x in 0..2 {
            for y in 0..2 {
                let ea = |t: f64| correlator(state, 2.0 * t, angles.bob_analyzer(y)).unwrap();
                let eb = |t: f64| correlator(state, angles.alice_analyzer(x), 2.0 * t).unwrap();
                let ta = angles.alice_hwp[x];
                let tb = angles.bob_hwp[y];
                out[2 * x + y] = [
                    (ea(ta + h) - ea(ta - h)) / (2.0 * h),
                    (eb(tb + h) - eb(tb - h)) / (2.0 * h),
                ];
            }
        }
        out
    }

    #[test]
    fn gradient_at_optimum_has_uniform_magnitude() {
        let g = chsh_hwp_gradient(&state(1.0), &AnalyzerAngles::default()).unwrap();
        let fd = finite_difference(&state(1.0), &AnalyzerAngles::default());
        for k in 0..4 {
            for s in 0..2 {
                assert!((g[k][s].abs() - 2.0 * SQRT_2).abs() < 1e-12);
                assert!((g[k][s] - fd[k][s]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gradient_zero_cases() {
        let equal = AnalyzerAngles {
            alice_hwp: [0.3, 0.3],
            bob_hwp: [0.3, 0.3],
        };
        let g = chsh_hwp_gradient(&state(1.0), &equal).unwrap();
        assert!(g.iter().flatten().all(|d| d.abs() < 1e-15));
        let g = chsh_hwp_gradient(&state(0.0), &AnalyzerAngles::default()).unwrap();
        assert!(g.iter().flatten().all(|d| *d == 0.0));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]

            #[test]
            fn probabilities_normalized(v in 0.0..=1.0f64, phi in -PI..PI, a in -PI..PI, b in -PI..PI) {
                let s = SourceState::new(v, phi, 1.0).unwrap();
                let p = outcome_probabilities(&s, a, b).unwrap();
                let total: f64 = p.iter().flatten().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(p.iter().flatten().all(|&q| q >= 0.0));
            }

            #[test]
            fn marginals_ignore_partner_angle(v in 0.0..=1.0f64, phi in -PI..PI, a in -PI..PI, b1 in -PI..PI, b2 in -PI..PI) {
                let s = SourceState::new(v, phi, 1.0).unwrap();
                let p = outcome_probabilities(&s, a, b1).unwrap();
                let q = outcome_probabilities(&s, a, b2).unwrap();
                prop_assert!(((p[0][0] + p[0][1]) - (q[0][0] + q[0][1])).abs() < 1e-12);
                let p = outcome_probabilities(&s, b1, a).unwrap();
                let q = outcome_probabilities(&s, b2, a).unwrap();
                prop_assert!(((p[0][0] + p[1][0]) - (q[0][0] + q[1][0])).abs() < 1e-12);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100_000))]

            #[test]
            fn tsirelson_bound(v in 0.0..=1.0f64, phi in -PI..PI, t in prop::array::uniform4(-PI..PI)) {
                let s = SourceState::new(v, phi, 1.0).unwrap();
                let angles = AnalyzerAngles { alice_hwp: [t[0], t[1]], bob_hwp: [t[2], t[3]] };
                let chsh = chsh_value(&s, &angles).unwrap();
                prop_assert!(chsh.abs() <= 2.0 * SQRT_2 * v + 1e-12);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(2_000))]

            #[test]
            fn gradient_matches_finite_differences(v in 0.0..=1.0f64, phi in -PI..PI, t in prop::array::uniform4(-PI..PI)) {
                let s = SourceState::new(v, phi, 1.0).unwrap();
                let angles = AnalyzerAngles { alice_hwp: [t[0], t[1]], bob_hwp: [t[2], t[3]] };
                let g = chsh_hwp_gradient(&s, &angles).unwrap();
                let fd = finite_difference(&s, &angles);
                for k in 0..4 {
                    for st in 0..2 {
                        prop_assert!((g[k][st] - fd[k][st]).abs() < 1e-6);
                    }
                }
            }
        }
    }
}
