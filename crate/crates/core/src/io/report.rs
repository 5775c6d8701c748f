//! Analysis reports (JSON), time series (CSV) and run metadata.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{parse_config, serialize_config};
use crate::error::{Error, Result};
use crate::simulator::ExperimentConfig;
use crate::stats::{AnalysisReport, NaiveLabel, Series};

/// Version of the report, record and metadata formats.
pub const FORMAT_VERSION: u32 = 1;

/// Header of the time-series CSV.
pub const SERIES_HEADER: &str = "elapsed_s,S,sigma_stat,lr_sigma,z_A0,z_A1,z_B0,z_B1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveEntry {
    pub label: NaiveLabel,
    pub s_hat: f64,
    pub sigma_hat: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalingDocument {
    pub xi: f64,
    pub dof: u32,
    pub log_p: f64,
    pub log10_p: f64,
    pub sigma: f64,
    pub naive: Vec<NaiveEntry>,
}

/// The JSON layout of an [`AnalysisReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    #[serde(rename = "S")]
    pub s: f64,
    pub sigma_stat: f64,
    pub sigma_syst: Option<f64>,
    /// `E(0,0), E(0,1), E(1,0), E(1,1)`.
    pub correlators: [f64; 4],
    pub signaling: SignalingDocument,
    pub accidental_rate_hz: f64,
    pub format_version: u32,
}

impl From<&AnalysisReport> for ReportDocument {
    fn from(r: &AnalysisReport) -> Self {
        Self {
            s: r.chsh.s,
            sigma_stat: r.sigma_stat,
            sigma_syst: r.sigma_syst,
            correlators: r.chsh.correlators,
            signaling: SignalingDocument {
                xi: r.signaling.xi,
                dof: r.signaling.dof,
                log_p: r.signaling.log_p,
                log10_p: r.signaling.log10_p(),
                sigma: r.signaling.sigma,
                naive: r
                    .signaling
                    .naive
                    .iter()
                    .map(|n| NaiveEntry {
                        label: n.label,
                        s_hat: n.s_hat,
                        sigma_hat: n.sigma_hat,
                        z: n.z,
                    })
                    .collect(),
            },
            accidental_rate_hz: r.accidental_rate,
            format_version: FORMAT_VERSION,
        }
    }
}

/// Writes the report as pretty-printed JSON followed by a newline.
pub fn write_report<W: Write>(report: &AnalysisReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &ReportDocument::from(report))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Writes one CSV row per analyzed prefix; gaps produce no row.
pub fn write_series<W: Write>(series: &Series, mut out: W) -> Result<()> {
    writeln!(out, "{SERIES_HEADER}")?;
    for p in &series.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.elapsed, p.s, p.sigma_stat, p.lr_sigma, p.z[0], p.z[1], p.z[2], p.z[3]
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar describing how a record file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub created_unix_s: u64,
    pub warnings: Vec<String>,
    /// Canonical TOML of the configuration that produced the records.
    pub config: String,
}

/// A configuration together with the metadata of the run it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunBundle {
    pub config: ExperimentConfig,
    pub metadata: RunMetadata,
}

impl RunBundle {
    pub fn new(config: ExperimentConfig, warnings: Vec<String>) -> Result<Self> {
        let created_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let metadata = RunMetadata {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: config.rng_seed,
            created_unix_s,
            warnings,
            config: serialize_config(&config)?,
        };
        Ok(Self { config, metadata })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.metadata)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn read(text: &str) -> Result<Self> {
        let metadata: RunMetadata = serde_json::from_str(text)?;
        if metadata.format_version != FORMAT_VERSION {
            return Err(Error::validation(
                "format_version",
                format!("unsupported metadata version {}", metadata.format_version),
            ));
        }
        let config = parse_config(&metadata.config)?;
        if config.rng_seed != metadata.seed {
            return Err(Error::validation(
                "seed",
                format!(
                    "metadata seed {} differs from config seed {}",
                    metadata.seed, config.rng_seed
                ),
            ));
        }
        Ok(Self { config, metadata })
    }
}

/// Sidecar path `<records>.meta.json` of a record file.
pub fn metadata_path(records: &std::path::Path) -> std::path::PathBuf {
    let mut name = records.as_os_str().to_owned();
    name.push(".meta.json");
    name.into()
}
