use crate::error::{Error, Result};
use crate::model::{chsh_hwp_gradient, AnalyzerAngles, SourceState};
use crate::simulator::ExperimentConfig;

/// Systematic uncertainty of `S` from wave-plate positioning errors.
///
/// Every setting block repositions one plate per station, giving eight
/// independent angle errors of standard deviation `motor_sigma`. Averaging
/// over `repetitions` sweeps suppresses the propagated error by
/// `√repetitions`.
pub fn motor_budget(motor_sigma: f64, repetitions: u32, state: &SourceState, angles: &AnalyzerAngles) -> Result<f64> {
    if !(motor_sigma >= 0.0 && motor_sigma.is_finite()) {
        return Err(Error::input(format!(
            "motor sigma must be finite and >= 0, got {motor_sigma}"
        )));
    }
    if repetitions == 0 {
        return Err(Error::input("repetitions must be >= 1"));
    }
    let gradient = chsh_hwp_gradient(state, angles)?;
    let sum_sq: f64 = gradient.iter().flatten().map(|d| d * d).sum();
    Ok(sum_sq.sqrt() * motor_sigma / f64::from(repetitions).sqrt())
}

/// [`motor_budget`] for the stations of `config`, each with its own motor
/// precision.
pub fn config_motor_budget(config: &ExperimentConfig) -> Result<f64> {
    config.validate()?;
    let gradient = chsh_hwp_gradient(&config.source, &config.angles())?;
    let sigma = [config.alice.motor_sigma, config.bob.motor_sigma];
    let sum_sq: f64 = gradient
        .iter()
        .flat_map(|g| [(g[0] * sigma[0]).powi(2), (g[1] * sigma[1]).powi(2)])
        .sum();
    Ok(sum_sq.sqrt() / f64::from(config.schedule.repetitions).sqrt())
}
