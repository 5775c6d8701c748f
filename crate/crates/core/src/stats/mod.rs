//! Estimators, the nonsignaling likelihood-ratio test, significance
//! conversion, time series and the motor-precision budget.

mod budget;
mod counts;
mod estimate;
mod mle;
mod series;
mod significance;

pub use budget::{config_motor_budget, motor_budget};
pub use counts::{tabulate, CountsTable};
pub use estimate::{estimate_chsh, naive_signaling, sigma_stat, ChshEstimate, NaiveLabel, NaiveSignaling};
pub use mle::{
    likelihood_ratio_statistic, log_likelihood, lr_test, ns_mle, unconstrained_log_likelihood, NsFit, NsParams,
    SignalingReport, NS_TEST_DOF,
};
pub use series::{cumulative_series, Series, SeriesPoint};
pub use significance::{chi2_log_survival, ln_erfc, sigma_from_log_p, two_sided_log_p};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::simulator::{accidental_estimate, TrialRecord};

/// Full analysis of a record stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub chsh: ChshEstimate,
    pub sigma_stat: f64,
    /// Systematic uncertainty, when the acquisition parameters are known.
    pub sigma_syst: Option<f64>,
    pub signaling: SignalingReport,
    /// Background coincidence rate from same-station coincidences (Hz).
    pub accidental_rate: f64,
}

pub fn analyze(records: &[TrialRecord], sigma_syst: Option<f64>) -> Result<AnalysisReport> {
    let table = tabulate(records)?;
    Ok(AnalysisReport {
        chsh: estimate_chsh(&table)?,
        sigma_stat: sigma_stat(&table)?,
        sigma_syst,
        signaling: lr_test(&table)?,
        accidental_rate: accidental_estimate(records)?,
    })
}
