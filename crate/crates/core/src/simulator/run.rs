use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::calibration::calibrate_attenuators;
use super::motor::{apply_motor_error, MotorState};
use super::rates::{expected_rates, rates_at, DriftPath, RateTable};
use super::{AcquisitionMode, ExperimentConfig, TrialRecord};
use crate::error::{Error, Result};

/// Records of one run plus anything worth flagging in its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<TrialRecord>,
    pub warnings: Vec<String>,
}

/// RNG streams derived from the configured seed.
pub(crate) const STREAM_RUN: u64 = 0;
pub(crate) const STREAM_CALIBRATION: u64 = 1;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // Poisson::new only fails for non-finite or out-of-range means
    Poisson::new(mean).map_or(0, |d| d.sample(rng) as u64)
}

/// Runs the configured calibration (if any) and then the experiment.
pub fn simulate(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let Some(settings) = config.calibration else {
        return run_experiment(config);
    };
    let outcome = calibrate_attenuators(config, &settings)?;
    let mut calibrated = config.clone();
    calibrated.alice.attenuator = outcome.alice_attenuator;
    calibrated.bob.attenuator = outcome.bob_attenuator;
    let mut out = run_experiment(&calibrated)?;
    if let Some(w) = outcome.report.warning {
        out.warnings.insert(0, w);
    }
    Ok(out)
}

/// Generates the ordered trial records of one run.
///
/// Each repetition sweeps once through the setting order; every block
/// repositions both wave plates.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let schedule = &config.schedule;
    let mut rng = rng_for(config.rng_seed, STREAM_RUN);
    let mut drift = DriftPath::new(config.drift);
    let (first_x, first_y) = schedule.setting_order[0];
    let mut alice_motor = MotorState::at(config.alice.hwp_targets[usize::from(first_x)]);
    let mut bob_motor = MotorState::at(config.bob.hwp_targets[usize::from(first_y)]);

    let block = schedule.block_length();
    let mut records = Vec::with_capacity(4 * schedule.repetitions as usize);
    let mut clipped = 0usize;
    let mut t = 0.0;
    for _ in 0..schedule.repetitions {
        for &(x, y) in &schedule.setting_order {
            let (xi, yi) = (usize::from(x), usize::from(y));
            let mut record = TrialRecord {
                index: records.len() as u64,
                start_time: t,
                duration: block,
                x,
                y,
                counts: [0; 4],
                singles: [0; 4],
                same_station_coinc: [0; 2],
            };
            match schedule.acquisition_mode {
                AcquisitionMode::FourDetector => {
                    let theta_a =
                        apply_motor_error(config.alice.hwp_targets[xi], &config.alice, &mut alice_motor, &mut rng);
                    let theta_b = apply_motor_error(config.bob.hwp_targets[yi], &config.bob, &mut bob_motor, &mut rng);
                    let d = drift.mean_over(t, t + block, &mut rng);
                    let rates = expected_rates(config, xi, yi, [theta_a, theta_b], d);
                    clipped += usize::from(rates.clipped);
                    sample_block(&rates, block, &mut record, &mut rng);
                }
                AcquisitionMode::SingleDetectorSequential => {
                    clipped += sequential_block(
                        config,
                        xi,
                        yi,
                        t,
                        block,
                        &mut record,
                        &mut drift,
                        [&mut alice_motor, &mut bob_motor],
                        &mut rng,
                    );
                }
            }
            records.push(record);
            t += block;
        }
    }

    let mut warnings = Vec::new();
    if clipped > 0 {
        warnings.push(format!("coupling factor clipped at zero in {clipped} block(s)"));
    }
    Ok(RunOutput { records, warnings })
}

fn sample_block<R: Rng + ?Sized>(rates: &RateTable, duration: f64, record: &mut TrialRecord, rng: &mut R) {
    for (n, rate) in record.counts.iter_mut().zip(rates.coincidences) {
        *n = poisson(rate * duration, rng);
    }
    for (n, rate) in record.singles.iter_mut().zip(rates.singles) {
        *n = poisson(rate * duration, rng);
    }
    for (n, rate) in record.same_station_coinc.iter_mut().zip(rates.same_station) {
        *n = poisson(rate * duration, rng);
    }
}

/// One setting block measured with a single detector per station: the four
/// outcome pairs are taken one after another, the `-1` outcome by turning
/// the plate an extra 45°. Returns the number of clipped sub-blocks.
#[allow(clippy::too_many_arguments)]
fn sequential_block<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    x: usize,
    y: usize,
    start: f64,
    block: f64,
    record: &mut TrialRecord,
    drift: &mut DriftPath,
    motors: [&mut MotorState; 2],
    rng: &mut R,
) -> usize {
    let [alice_motor, bob_motor] = motors;
    // a single detector sees the same efficiency for both outcomes
    let mut single = config.clone();
    single.alice.detector_eff = [config.alice.detector_eff[0]; 2];
    single.alice.attenuator = [config.alice.attenuator[0]; 2];
    single.bob.detector_eff = [config.bob.detector_eff[0]; 2];
    single.bob.attenuator = [config.bob.attenuator[0]; 2];

    let sub = block / 4.0;
    let quarter_turn = std::f64::consts::FRAC_PI_4;
    let nominal = [config.alice.hwp_targets[x], config.bob.hwp_targets[y]];
    let mut clipped = 0;
    for (k, (a, b)) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        let t0 = start + k as f64 * sub;
        let target_a = nominal[0] + a as f64 * quarter_turn;
        let target_b = nominal[1] + b as f64 * quarter_turn;
        let theta_a = apply_motor_error(target_a, &config.alice, alice_motor, rng);
        let theta_b = apply_motor_error(target_b, &config.bob, bob_motor, rng);
        let d = drift.mean_over(t0, t0 + sub, rng);
        let rates = rates_at(&single, [theta_a, theta_b], [target_a, target_b], d);
        clipped += usize::from(rates.clipped);
        // the detector registers the (+,+) channel of the rotated analyzers
        record.counts[2 * a + b] = poisson(rates.coincidences[0] * sub, rng);
        record.singles[a] += poisson(rates.singles[0] * sub, rng);
        record.singles[2 + b] += poisson(rates.singles[2] * sub, rng);
    }
    clipped
}

/// Background coincidence rate (Hz) estimated from coincidences between the
/// two detectors of the same station, averaged over both stations.
///
/// The estimate is only reported; counts are never corrected with it.
pub fn accidental_estimate(records: &[TrialRecord]) -> Result<f64> {
    let duration: f64 = records.iter().map(|r| r.duration).sum();
    if duration <= 0.0 {
        return Err(Error::input("accidental estimate needs a positive total duration"));
    }
    let total: u64 = records
        .iter()
        .map(|r| r.same_station_coinc[0] + r.same_station_coinc[1])
        .sum();
    Ok(total as f64 / duration / 2.0)
}
