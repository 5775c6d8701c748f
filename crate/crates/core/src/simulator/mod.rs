//! Synthetic photon-coincidence experiments.
//!
//! A run is a sequence of setting blocks. For every block each station
//! repositions its wave plate (with the configured motor error), the
//! expected rates of all detection channels are composed from the optical
//! model and the station imperfections, and counts are drawn as independent
//! Poisson variables.

mod calibration;
mod motor;
mod rates;
mod run;

use serde::{Deserialize, Serialize};

pub use calibration::{calibrate_attenuators, CalibrationOutcome, CalibrationReport, CalibrationStep};
pub use motor::{apply_motor_error, MotorState};
pub use rates::{expected_rates, DriftPath, RateTable};
pub use run::{accidental_estimate, run_experiment, simulate, RunOutput};

use crate::error::{Error, Result};
use crate::model::{AnalyzerAngles, SourceState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotorModel {
    Gaussian,
    Uniform,
    /// Direction-dependent bias of `offset` radians along the approach
    /// direction, on top of Gaussian scatter.
    Backlash {
        offset: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationModel {
    /// Nominal half-wave-plate angles for settings 0 and 1 (radians).
    pub hwp_targets: [f64; 2],
    /// One-sigma plate positioning error (radians).
    pub motor_sigma: f64,
    pub motor_model: MotorModel,
    /// Relative coupling loss per radian of plate offset from the nominal
    /// setting.
    pub coupling_kappa: f64,
    /// Detection efficiency of the `+1` and `-1` detectors.
    pub detector_eff: [f64; 2],
    /// Variable attenuator transmittance in front of each detector.
    pub attenuator: [f64; 2],
    /// Dark count rate per detector (Hz).
    pub dark_rate: f64,
}

impl StationModel {
    fn with_targets(hwp_targets: [f64; 2]) -> Self {
        Self {
            hwp_targets,
            motor_sigma: 0.0,
            motor_model: MotorModel::Gaussian,
            coupling_kappa: 0.0,
            detector_eff: [1.0, 1.0],
            attenuator: [1.0, 1.0],
            dark_rate: 500.0,
        }
    }

    pub fn default_alice() -> Self {
        Self::with_targets(AnalyzerAngles::default().alice_hwp)
    }

    pub fn default_bob() -> Self {
        Self::with_targets(AnalyzerAngles::default().bob_hwp)
    }

    /// Effective efficiency `η·t` of the detector for outcome index `k`.
    pub fn channel_efficiency(&self, k: usize) -> f64 {
        self.detector_eff[k] * self.attenuator[k]
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let key = |k: &str| format!("{name}.{k}");
        if !self.hwp_targets.iter().all(|a| a.is_finite()) {
            return Err(Error::validation(key("hwp_deg"), "angles must be finite"));
        }
        if !(self.motor_sigma >= 0.0 && self.motor_sigma.is_finite()) {
            return Err(Error::validation(key("motor_sigma_deg"), "must be a finite value >= 0"));
        }
        if let MotorModel::Backlash { offset } = self.motor_model {
            if !offset.is_finite() {
                return Err(Error::validation(key("backlash_deg"), "must be finite"));
            }
        }
        if !(self.coupling_kappa >= 0.0 && self.coupling_kappa.is_finite()) {
            return Err(Error::validation(key("coupling_kappa"), "must be a finite value >= 0"));
        }
        for (field, values) in [("detector_eff", self.detector_eff), ("attenuator", self.attenuator)] {
            if !values.iter().all(|&v| v > 0.0 && v <= 1.0) {
                return Err(Error::validation(key(field), format!("{values:?} must lie in (0, 1]")));
            }
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(Error::validation(key("dark_rate_hz"), "must be a finite value >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    None,
    /// Relative pump power changes by `slope` per second.
    Linear {
        slope: f64,
    },
    /// Relative pump power performs a Gaussian random walk with
    /// `step_sigma` per √second.
    RandomWalk {
        step_sigma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub kind: DriftKind,
    /// Lower clip of the relative pump power.
    pub floor: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            kind: DriftKind::None,
            floor: 0.01,
        }
    }
}

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0 && self.floor <= 1.0) {
            return Err(Error::validation("drift.floor", "must lie in (0, 1]"));
        }
        match self.kind {
            DriftKind::None => Ok(()),
            DriftKind::Linear { slope } if slope.is_finite() => Ok(()),
            DriftKind::RandomWalk { step_sigma } if step_sigma >= 0.0 && step_sigma.is_finite() => Ok(()),
            DriftKind::Linear { .. } => Err(Error::validation("drift.slope_per_s", "must be finite")),
            DriftKind::RandomWalk { .. } => Err(Error::validation(
                "drift.step_sigma_per_sqrt_s",
                "must be a finite value >= 0",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionMode {
    /// Two detectors per station behind a polarizing beam splitter.
    FourDetector,
    /// One detector per station; each outcome pair is measured in its own
    /// sub-block by turning the analyzer to the orthogonal orientation.
    SingleDetectorSequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Order in which the setting pairs `(x, y)` are visited within a sweep.
    pub setting_order: [(u8, u8); 4],
    /// Measurement time per setting (seconds). When `split_budget` is set
    /// this is the total over all repetitions, otherwise the length of
    /// every block.
    pub block_duration: f64,
    pub repetitions: u32,
    pub split_budget: bool,
    pub acquisition_mode: AcquisitionMode,
}

/// Setting order of the first experiment: (0,0), (0,1), (1,1), (1,0).
pub const DEFAULT_SETTING_ORDER: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 1), (1, 0)];

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            setting_order: DEFAULT_SETTING_ORDER,
            block_duration: 1000.0,
            repetitions: 1,
            split_budget: true,
            acquisition_mode: AcquisitionMode::FourDetector,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::validation("schedule.repetitions", "must be at least 1"));
        }
        if !(self.block_duration > 0.0 && self.block_duration.is_finite()) {
            return Err(Error::validation("schedule.block_duration_s", "must be positive"));
        }
        let mut seen = [false; 4];
        for &(x, y) in &self.setting_order {
            if x > 1 || y > 1 {
                return Err(Error::validation(
                    "schedule.order",
                    format!("setting ({x},{y}) is not in {{0,1}}^2"),
                ));
            }
            seen[usize::from(2 * x + y)] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::validation(
                "schedule.order",
                "must contain each of the four setting pairs exactly once",
            ));
        }
        Ok(())
    }

    /// Duration of a single setting block.
    pub fn block_length(&self) -> f64 {
        if self.split_budget {
            self.block_duration / f64::from(self.repetitions)
        } else {
            self.block_duration
        }
    }
}

/// Parameters of the attenuator-balancing procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Accepted relative asymmetry `|γ − γ'| / mean(γ, γ')`.
    pub tolerance: f64,
    /// Measurement time of each rate comparison (seconds).
    pub step_duration: f64,
    pub max_iterations: u32,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            tolerance: 0.01,
            step_duration: 10_000.0,
            max_iterations: 10,
        }
    }
}

impl CalibrationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::validation("calibration.tolerance", "must be positive"));
        }
        if !(self.step_duration > 0.0 && self.step_duration.is_finite()) {
            return Err(Error::validation("calibration.step_duration_s", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: SourceState,
    pub drift: DriftModel,
    pub alice: StationModel,
    pub bob: StationModel,
    pub schedule: ScheduleConfig,
    /// Background coincidence rate from multi-pair emission (Hz), spread
    /// evenly over the four outcome channels.
    pub accidental_rate: f64,
    /// Coincidence window (seconds).
    pub coincidence_window: f64,
    pub rng_seed: u64,
    /// Balance the detector arms with [`calibrate_attenuators`] before the
    /// run.
    pub calibration: Option<CalibrationSettings>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: SourceState::default(),
            drift: DriftModel::default(),
            alice: StationModel::default_alice(),
            bob: StationModel::default_bob(),
            schedule: ScheduleConfig::default(),
            accidental_rate: 0.1,
            coincidence_window: 3e-9,
            rng_seed: 0,
            calibration: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.drift.validate()?;
        self.alice.validate("alice")?;
        self.bob.validate("bob")?;
        self.schedule.validate()?;
        if !(self.accidental_rate >= 0.0 && self.accidental_rate.is_finite()) {
            return Err(Error::validation("accidental_rate_hz", "must be a finite value >= 0"));
        }
        if !(self.coincidence_window > 0.0 && self.coincidence_window.is_finite()) {
            return Err(Error::validation("coincidence_window_s", "must be positive"));
        }
        if let Some(c) = &self.calibration {
            c.validate()?;
        }
        Ok(())
    }

    /// Nominal analyzer settings of the two stations.
    pub fn angles(&self) -> AnalyzerAngles {
        AnalyzerAngles {
            alice_hwp: self.alice.hwp_targets,
            bob_hwp: self.bob.hwp_targets,
        }
    }
}

/// One contiguous acquisition block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    /// Seconds from the start of the run.
    pub start_time: f64,
    pub duration: f64,
    pub x: u8,
    pub y: u8,
    /// Coincidences `(n_{++}, n_{+-}, n_{-+}, n_{--})`.
    pub counts: [u64; 4],
    /// Singles of detectors D1..D4 (Alice `+`, Alice `-`, Bob `+`, Bob `-`).
    pub singles: [u64; 4],
    /// Coincidences between the two detectors of Alice and of Bob.
    pub same_station_coinc: [u64; 2],
}

impl TrialRecord {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if self.x > 1 || self.y > 1 {
            return Err(Error::input(format!(
                "record {}: setting ({}, {}) outside {{0,1}}",
                self.index, self.x, self.y
            )));
        }
        let d = self.duration;
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::input(format!(
                "record {}: duration must be positive",
                self.index
            )));
        }
        if !self.start_time.is_finite() {
            return Err(Error::input(format!(
                "record {}: start time must be finite",
                self.index
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn schedule_rejects_bad_order_and_reps() {
        let mut s = ScheduleConfig::default();
        s.setting_order = [(0, 0), (0, 0), (1, 1), (1, 0)];
        assert!(s.validate().is_err());
        let mut s = ScheduleConfig::default();
        s.repetitions = 0;
        assert!(matches!(s.validate(), Err(Error::Validation { key, .. }) if key == "schedule.repetitions"));
    }

    #[test]
    fn block_length_splits_budget() {
        let s = ScheduleConfig {
            repetitions: 200,
            ..ScheduleConfig::default()
        };
        assert_eq!(s.block_length(), 5.0);
        let s = ScheduleConfig {
            split_budget: false,
            ..s
        };
        assert_eq!(s.block_length(), 1000.0);
    }

    #[test]
    fn station_rejects_zero_efficiency() {
        let mut a = StationModel::default_alice();
        a.detector_eff = [1.0, 0.0];
        assert!(a.validate("alice").is_err());
        a.detector_eff = [1.0, 0.8];
        a.attenuator = [1.1, 1.0];
        assert!(a.validate("alice").is_err());
    }
}
