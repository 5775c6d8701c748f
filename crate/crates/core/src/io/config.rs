//! Experiment configuration as TOML.
//!
//! Keys are dotted paths such as `source.visibility` or
//! `alice.detector_eff`; they may equally be written as TOML tables. Angles
//! are given in degrees and stored in radians. Omitted keys keep the values
//! of [`ExperimentConfig::default`], unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SourceState;
use crate::simulator::{
    AcquisitionMode, CalibrationSettings, DriftKind, DriftModel, ExperimentConfig, MotorModel, ScheduleConfig,
    StationModel,
};

/// Version written to and accepted from configuration files.
pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    format_version: Option<u32>,
    seed: Option<u64>,
    accidental_rate_hz: Option<f64>,
    coincidence_window_s: Option<f64>,
    #[serde(default)]
    source: SourceFile,
    #[serde(default)]
    drift: DriftFile,
    #[serde(default)]
    alice: StationFile,
    #[serde(default)]
    bob: StationFile,
    #[serde(default)]
    schedule: ScheduleFile,
    #[serde(default)]
    calibration: CalibrationFile,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceFile {
    visibility: Option<f64>,
    phase_deg: Option<f64>,
    pair_rate_hz: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftFile {
    kind: Option<String>,
    slope_per_s: Option<f64>,
    step_sigma_per_sqrt_s: Option<f64>,
    floor: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StationFile {
    hwp_deg: Option<[f64; 2]>,
    motor_sigma_deg: Option<f64>,
    motor_model: Option<String>,
    backlash_deg: Option<f64>,
    coupling_kappa: Option<f64>,
    detector_eff: Option<[f64; 2]>,
    attenuator: Option<[f64; 2]>,
    dark_rate_hz: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    order: Option<Vec<String>>,
    block_duration_s: Option<f64>,
    repetitions: Option<u32>,
    split_budget: Option<bool>,
    mode: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    enabled: Option<bool>,
    tolerance: Option<f64>,
    step_duration_s: Option<f64>,
    max_iterations: Option<u32>,
}

fn deg(v: Option<f64>, default: f64) -> f64 {
    v.map_or(default, f64::to_radians)
}

fn deg2(v: Option<[f64; 2]>, default: [f64; 2]) -> [f64; 2] {
    v.map_or(default, |a| a.map(f64::to_radians))
}

fn parse_setting(key: &str, s: &str) -> Result<(u8, u8)> {
    let digits: Vec<u8> = s
        .chars()
        .filter(|c| !matches!(c, ' ' | ',' | '(' | ')'))
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::validation(
                key,
                format!("`{s}` is not a setting pair like \"01\""),
            )),
        })
        .collect::<Result<_>>()?;
    match digits[..] {
        [x, y] => Ok((x, y)),
        _ => Err(Error::validation(
            key,
            format!("`{s}` is not a setting pair like \"01\""),
        )),
    }
}

impl StationFile {
    fn apply(self, name: &str, mut st: StationModel) -> Result<StationModel> {
        st.hwp_targets = deg2(self.hwp_deg, st.hwp_targets);
        st.motor_sigma = deg(self.motor_sigma_deg, st.motor_sigma);
        let offset = match st.motor_model {
            MotorModel::Backlash { offset } => offset,
            _ => 0.0,
        };
        let offset = deg(self.backlash_deg, offset);
        st.motor_model = match self.motor_model.as_deref() {
            None => match st.motor_model {
                MotorModel::Backlash { .. } => MotorModel::Backlash { offset },
                m => m,
            },
            Some("gaussian") => MotorModel::Gaussian,
            Some("uniform") => MotorModel::Uniform,
            Some("backlash") => MotorModel::Backlash { offset },
            Some(other) => {
                return Err(Error::validation(
                    format!("{name}.motor_model"),
                    format!("unknown model `{other}` (expected gaussian, uniform or backlash)"),
                ))
            }
        };
        if self.backlash_deg.is_some() && !matches!(st.motor_model, MotorModel::Backlash { .. }) {
            return Err(Error::validation(
                format!("{name}.backlash_deg"),
                "only meaningful with motor_model = \"backlash\"",
            ));
        }
        st.coupling_kappa = self.coupling_kappa.unwrap_or(st.coupling_kappa);
        st.detector_eff = self.detector_eff.unwrap_or(st.detector_eff);
        st.attenuator = self.attenuator.unwrap_or(st.attenuator);
        st.dark_rate = self.dark_rate_hz.unwrap_or(st.dark_rate);
        Ok(st)
    }

    fn from_model(st: &StationModel) -> Self {
        let (model, backlash) = match st.motor_model {
            MotorModel::Gaussian => ("gaussian", None),
            MotorModel::Uniform => ("uniform", None),
            MotorModel::Backlash { offset } => ("backlash", Some(offset.to_degrees())),
        };
        Self {
            hwp_deg: Some(st.hwp_targets.map(f64::to_degrees)),
            motor_sigma_deg: Some(st.motor_sigma.to_degrees()),
            motor_model: Some(model.to_owned()),
            backlash_deg: backlash,
            coupling_kappa: Some(st.coupling_kappa),
            detector_eff: Some(st.detector_eff),
            attenuator: Some(st.attenuator),
            dark_rate_hz: Some(st.dark_rate),
        }
    }
}

impl ConfigFile {
    fn into_config(self) -> Result<ExperimentConfig> {
        if let Some(v) = self.format_version {
            if v != CONFIG_FORMAT_VERSION {
                return Err(Error::validation(
                    "format_version",
                    format!("unsupported version {v} (expected {CONFIG_FORMAT_VERSION})"),
                ));
            }
        }
        let mut c = ExperimentConfig::default();
        c.rng_seed = self.seed.unwrap_or(c.rng_seed);
        c.accidental_rate = self.accidental_rate_hz.unwrap_or(c.accidental_rate);
        c.coincidence_window = self.coincidence_window_s.unwrap_or(c.coincidence_window);

        c.source = SourceState {
            visibility: self.source.visibility.unwrap_or(c.source.visibility),
            phase: deg(self.source.phase_deg, c.source.phase),
            pair_rate: self.source.pair_rate_hz.unwrap_or(c.source.pair_rate),
        };

        let d = self.drift;
        let kind = match d.kind.as_deref().unwrap_or("none") {
            "none" => DriftKind::None,
            "linear" => DriftKind::Linear {
                slope: d.slope_per_s.unwrap_or(0.0),
            },
            "random_walk" => DriftKind::RandomWalk {
                step_sigma: d.step_sigma_per_sqrt_s.unwrap_or(0.0),
            },
            other => {
                return Err(Error::validation(
                    "drift.kind",
                    format!("unknown kind `{other}` (expected none, linear or random_walk)"),
                ))
            }
        };
        if d.slope_per_s.is_some() && !matches!(kind, DriftKind::Linear { .. }) {
            return Err(Error::validation(
                "drift.slope_per_s",
                "requires drift.kind = \"linear\"",
            ));
        }
        if d.step_sigma_per_sqrt_s.is_some() && !matches!(kind, DriftKind::RandomWalk { .. }) {
            return Err(Error::validation(
                "drift.step_sigma_per_sqrt_s",
                "requires drift.kind = \"random_walk\"",
            ));
        }
        c.drift = DriftModel {
            kind,
            floor: d.floor.unwrap_or(c.drift.floor),
        };

        c.alice = self.alice.apply("alice", c.alice)?;
        c.bob = self.bob.apply("bob", c.bob)?;

        let s = self.schedule;
        let mut schedule = ScheduleConfig::default();
        if let Some(order) = s.order {
            if order.len() != 4 {
                return Err(Error::validation(
                    "schedule.order",
                    "must list exactly four setting pairs",
                ));
            }
            for (slot, entry) in schedule.setting_order.iter_mut().zip(&order) {
                *slot = parse_setting("schedule.order", entry)?;
            }
        }
        schedule.block_duration = s.block_duration_s.unwrap_or(schedule.block_duration);
        schedule.repetitions = s.repetitions.unwrap_or(schedule.repetitions);
        schedule.split_budget = s.split_budget.unwrap_or(schedule.split_budget);
        schedule.acquisition_mode = match s.mode.as_deref() {
            None | Some("four_detector") => AcquisitionMode::FourDetector,
            Some("single_detector_sequential") => AcquisitionMode::SingleDetectorSequential,
            Some(other) => {
                return Err(Error::validation(
                    "schedule.mode",
                    format!("unknown mode `{other}` (expected four_detector or single_detector_sequential)"),
                ))
            }
        };
        c.schedule = schedule;

        let cal = self.calibration;
        let defaults = CalibrationSettings::default();
        let settings = CalibrationSettings {
            tolerance: cal.tolerance.unwrap_or(defaults.tolerance),
            step_duration: cal.step_duration_s.unwrap_or(defaults.step_duration),
            max_iterations: cal.max_iterations.unwrap_or(defaults.max_iterations),
        };
        c.calibration = cal.enabled.unwrap_or(false).then_some(settings);

        c.validate()?;
        Ok(c)
    }

    fn from_config(c: &ExperimentConfig) -> Self {
        let (kind, slope, step) = match c.drift.kind {
            DriftKind::None => ("none", None, None),
            DriftKind::Linear { slope } => ("linear", Some(slope), None),
            DriftKind::RandomWalk { step_sigma } => ("random_walk", None, Some(step_sigma)),
        };
        let mode = match c.schedule.acquisition_mode {
            AcquisitionMode::FourDetector => "four_detector",
            AcquisitionMode::SingleDetectorSequential => "single_detector_sequential",
        };
        let cal = c.calibration.unwrap_or_default();
        Self {
            format_version: Some(CONFIG_FORMAT_VERSION),
            seed: Some(c.rng_seed),
            accidental_rate_hz: Some(c.accidental_rate),
            coincidence_window_s: Some(c.coincidence_window),
            source: SourceFile {
                visibility: Some(c.source.visibility),
                phase_deg: Some(c.source.phase.to_degrees()),
                pair_rate_hz: Some(c.source.pair_rate),
            },
            drift: DriftFile {
                kind: Some(kind.to_owned()),
                slope_per_s: slope,
                step_sigma_per_sqrt_s: step,
                floor: Some(c.drift.floor),
            },
            alice: StationFile::from_model(&c.alice),
            bob: StationFile::from_model(&c.bob),
            schedule: ScheduleFile {
                order: Some(
                    c.schedule
                        .setting_order
                        .iter()
                        .map(|(x, y)| format!("{x}{y}"))
                        .collect(),
                ),
                block_duration_s: Some(c.schedule.block_duration),
                repetitions: Some(c.schedule.repetitions),
                split_budget: Some(c.schedule.split_budget),
                mode: Some(mode.to_owned()),
            },
            calibration: CalibrationFile {
                enabled: Some(c.calibration.is_some()),
                tolerance: Some(cal.tolerance),
                step_duration_s: Some(cal.step_duration),
                max_iterations: Some(cal.max_iterations),
            },
        }
    }
}

fn config_error(e: toml::de::Error) -> Error {
    Error::Config(e.to_string())
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(config_error)?;
    file.into_config()
}

/// Parses an already loaded TOML table, as produced by [`config_table`].
pub fn config_from_table(table: toml::Table) -> Result<ExperimentConfig> {
    let file: ConfigFile = table.try_into().map_err(config_error)?;
    file.into_config()
}

/// Canonical TOML form listing every key.
pub fn serialize_config(config: &ExperimentConfig) -> Result<String> {
    toml::to_string(&ConfigFile::from_config(config)).map_err(|e| Error::Config(e.to_string()))
}

/// Raw TOML table of a configuration document, for key overrides.
pub fn config_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(config_error)
}

/// Parses a single TOML value such as `0.8`, `10`, `true` or `"linear"`.
pub fn parse_value(text: &str) -> Result<toml::Value> {
    let doc: toml::Table = format!("v = {text}").parse().map_err(config_error)?;
    doc.get("v")
        .cloned()
        .ok_or_else(|| Error::Config(format!("cannot parse value `{text}`")))
}

/// Sets a dotted key such as `schedule.repetitions` or
/// `alice.detector_eff[1]` in a raw configuration table. Intermediate tables
/// are created; a missing indexed array is filled from the default
/// configuration first. The key is checked when the table is parsed.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let bad = || Error::validation(key, "not a valid configuration key");
    let (path, index) = match key.strip_suffix(']').and_then(|k| k.split_once('[')) {
        Some((path, idx)) => (path, Some(idx.parse::<usize>().map_err(|_| bad())?)),
        None => (key, None),
    };
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    let (leaf, parents) = parts.split_last().ok_or_else(bad)?;
    let mut current = &mut *table;
    for part in parents {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(bad)?;
    }
    match index {
        None => {
            current.insert(leaf.to_string(), value);
        }
        Some(i) => {
            if !current.contains_key(*leaf) {
                let defaults = config_table(&serialize_config(&ExperimentConfig::default())?)?;
                let default = parents
                    .iter()
                    .try_fold(&defaults, |t, p| t.get(*p).and_then(toml::Value::as_table))
                    .and_then(|t| t.get(*leaf))
                    .cloned()
                    .ok_or_else(bad)?;
                current.insert(leaf.to_string(), default);
            }
            let array = current
                .get_mut(*leaf)
                .and_then(toml::Value::as_array_mut)
                .ok_or_else(bad)?;
            let slot = array.get_mut(i).ok_or_else(bad)?;
            *slot = value;
        }
    }
    Ok(())
}
