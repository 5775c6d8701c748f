//! Balancing the two detector arms of each station with variable
//! attenuators.
//!
//! For Alice the plate is set to 0° and 45° (analyzer 0° and 90°) while Bob
//! sits at 0°. The rates `γ = C13(0°) + C23(0°)` and `γ' = C13(45°) +
//! C23(45°)` then weigh D1 against D2 through the same Bob detector. Bob is
//! balanced the same way with Alice's D1 as reference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::motor::{apply_motor_error, MotorState};
use super::rates::rates_at;
use super::run::{poisson, rng_for, STREAM_CALIBRATION};
use super::{CalibrationSettings, ExperimentConfig, StationModel};
use crate::error::Result;

/// Measured rates (Hz) of one calibration round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub alice_gamma: f64,
    pub alice_gamma_prime: f64,
    pub bob_gamma: f64,
    pub bob_gamma_prime: f64,
}

impl CalibrationStep {
    pub fn alice_asymmetry(&self) -> f64 {
        relative_asymmetry(self.alice_gamma, self.alice_gamma_prime)
    }

    pub fn bob_asymmetry(&self) -> f64 {
        relative_asymmetry(self.bob_gamma, self.bob_gamma_prime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// One entry per measurement round, the last one being the accepted
    /// state.
    pub steps: Vec<CalibrationStep>,
    /// Number of attenuator adjustments made.
    pub iterations: u32,
    pub converged: bool,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub alice_attenuator: [f64; 2],
    pub bob_attenuator: [f64; 2],
    pub report: CalibrationReport,
}

/// `|γ − γ'| / mean(γ, γ')`.
pub fn relative_asymmetry(gamma: f64, gamma_prime: f64) -> f64 {
    let mean = 0.5 * (gamma + gamma_prime);
    if mean == 0.0 {
        0.0
    } else {
        (gamma - gamma_prime).abs() / mean
    }
}

/// Iteratively attenuates the arm with the higher rate until both stations
/// are balanced within `settings.tolerance`.
pub fn calibrate_attenuators(config: &ExperimentConfig, settings: &CalibrationSettings) -> Result<CalibrationOutcome> {
    config.validate()?;
    settings.validate()?;
    let mut rng = rng_for(config.rng_seed, STREAM_CALIBRATION);
    let mut work = config.clone();
    let mut motors = [MotorState::at(0.0), MotorState::at(0.0)];
    let mut steps = Vec::new();
    let mut iterations = 0;

    let converged = loop {
        let step = measure(&work, settings.step_duration, &mut motors, &mut rng);
        steps.push(step);
        let alice_ok = step.alice_asymmetry() <= settings.tolerance;
        let bob_ok = step.bob_asymmetry() <= settings.tolerance;
        if alice_ok && bob_ok {
            break true;
        }
        if iterations >= settings.max_iterations {
            break false;
        }
        if !alice_ok {
            rebalance(&mut work.alice, step.alice_gamma, step.alice_gamma_prime);
        }
        if !bob_ok {
            rebalance(&mut work.bob, step.bob_gamma, step.bob_gamma_prime);
        }
        iterations += 1;
    };

    let warning = (!converged).then(|| {
        format!(
            "attenuator calibration did not reach tolerance {} within {} iterations",
            settings.tolerance, settings.max_iterations
        )
    });
    Ok(CalibrationOutcome {
        alice_attenuator: work.alice.attenuator,
        bob_attenuator: work.bob.attenuator,
        report: CalibrationReport {
            steps,
            iterations,
            converged,
            warning,
        },
    })
}

fn measure<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    duration: f64,
    motors: &mut [MotorState; 2],
    rng: &mut R,
) -> CalibrationStep {
    let half_turn = std::f64::consts::FRAC_PI_4;
    let [alice_motor, bob_motor] = motors;
    let mut rate = |alice_target: f64, bob_target: f64, rng: &mut R| {
        let a = apply_motor_error(alice_target, &config.alice, alice_motor, rng);
        let b = apply_motor_error(bob_target, &config.bob, bob_motor, rng);
        rates_at(config, [a, b], [alice_target, bob_target], 1.0).coincidences
    };
    let counts = |lambda: f64, rng: &mut R| poisson(lambda * duration, rng) as f64 / duration;

    // D1·D3 + D2·D3 with Alice at 0° and at 45°
    let r = rate(0.0, 0.0, rng);
    let alice_gamma = counts(r[0], rng) + counts(r[2], rng);
    let r = rate(half_turn, 0.0, rng);
    let alice_gamma_prime = counts(r[0], rng) + counts(r[2], rng);
    // D1·D3 + D1·D4 with Bob at 0° and at 45°
    let r = rate(0.0, 0.0, rng);
    let bob_gamma = counts(r[0], rng) + counts(r[1], rng);
    let r = rate(0.0, half_turn, rng);
    let bob_gamma_prime = counts(r[0], rng) + counts(r[1], rng);

    CalibrationStep {
        alice_gamma,
        alice_gamma_prime,
        bob_gamma,
        bob_gamma_prime,
    }
}

/// Lowers the relative transmission of the brighter arm by `min/max`.
/// Attenuation left on the dimmer arm from earlier rounds is released first,
/// so no transmittance ever exceeds one.
fn rebalance(station: &mut StationModel, gamma: f64, gamma_prime: f64) {
    if gamma <= 0.0 || gamma_prime <= 0.0 {
        return;
    }
    let (high, low) = if gamma > gamma_prime { (0, 1) } else { (1, 0) };
    let ratio = gamma.min(gamma_prime) / gamma.max(gamma_prime);
    let release = (1.0 / ratio).min(1.0 / station.attenuator[low]);
    station.attenuator[low] = (station.attenuator[low] * release).min(1.0);
    station.attenuator[high] *= ratio * release;
}
