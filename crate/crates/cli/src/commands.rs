use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use bellcheck::io::{
    config_from_table, config_table, metadata_path, parse_config, parse_value, read_records, set_key, write_records,
    write_report, write_series, RunBundle, FORMAT_VERSION, SERIES_HEADER,
};
use bellcheck::simulator::{calibrate_attenuators, simulate as run_simulation, CalibrationOutcome, ExperimentConfig};
use bellcheck::stats::{analyze as analyze_records, config_motor_budget, cumulative_series};
use rayon::prelude::*;
use serde::Serialize;
use statrs::statistics::{Data, OrderStatistics};

use crate::output::{write_atomic, write_json, TableMetadata};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => parse_config(&read_text(p)?).with_context(|| format!("in {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        config.rng_seed = s;
    }
    Ok(config)
}

fn load_records(path: &Path) -> Result<Vec<bellcheck::simulator::TrialRecord>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_records(BufReader::new(file)).with_context(|| format!("in {}", path.display()))
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn simulate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let config = load_config(config, seed)?;
    let run = run_simulation(&config)?;
    warn_all(&run.warnings);
    write_atomic(out, |w| {
        write_records(&run.records, w)?;
        Ok(())
    })?;
    let bundle = RunBundle::new(config, run.warnings)?;
    write_atomic(&metadata_path(out), |w| Ok(bundle.write(w)?))?;
    eprintln!("wrote {} records to {}", run.records.len(), out.display());
    Ok(())
}

pub fn analyze(records: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let data = load_records(records)?;
    let meta = metadata_path(records);
    let source = if meta.exists() {
        let bundle = RunBundle::read(&read_text(&meta)?).with_context(|| format!("in {}", meta.display()))?;
        warn_all(&bundle.metadata.warnings);
        Some(bundle.config)
    } else {
        config.map(|p| load_config(Some(p), None)).transpose()?
    };
    let sigma_syst = source.as_ref().map(config_motor_budget).transpose()?;
    if sigma_syst.is_none() {
        eprintln!("warning: no run metadata or --config; sigma_syst is unknown");
    }
    let report = analyze_records(&data, sigma_syst)?;
    write_atomic(out, |w| Ok(write_report(&report, w)?))
}

pub fn series(records: &Path, step: f64, out: &Path) -> Result<()> {
    let data = load_records(records)?;
    let series = cumulative_series(&data, step)?;
    if !series.gaps.is_empty() {
        eprintln!(
            "warning: {} time points lack a setting pair and were skipped",
            series.gaps.len()
        );
    }
    write_atomic(out, |w| Ok(write_series(&series, w)?))?;
    TableMetadata::new("series", SERIES_HEADER).write_for(out)
}

#[derive(Debug, Serialize)]
struct BudgetDocument {
    motor_sigma_deg: [f64; 2],
    repetitions: u32,
    sigma_syst: f64,
    format_version: u32,
}

pub fn budget(
    config: Option<&Path>,
    motor_sigma_deg: Option<f64>,
    reps: Option<u32>,
    out: Option<&Path>,
) -> Result<()> {
    let mut config = load_config(config, None)?;
    if let Some(deg) = motor_sigma_deg {
        config.alice.motor_sigma = deg.to_radians();
        config.bob.motor_sigma = deg.to_radians();
    }
    if let Some(r) = reps {
        config.schedule.repetitions = r;
    }
    let doc = BudgetDocument {
        motor_sigma_deg: [
            config.alice.motor_sigma.to_degrees(),
            config.bob.motor_sigma.to_degrees(),
        ],
        repetitions: config.schedule.repetitions,
        sigma_syst: config_motor_budget(&config)?,
        format_version: FORMAT_VERSION,
    };
    match out {
        Some(path) => write_json(path, &doc),
        None => {
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct CalibrationDocument {
    seed: u64,
    #[serde(flatten)]
    outcome: CalibrationOutcome,
    format_version: u32,
}

pub fn calibrate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let config = load_config(config, seed)?;
    let settings = config.calibration.unwrap_or_default();
    let outcome = calibrate_attenuators(&config, &settings)?;
    if let Some(w) = &outcome.report.warning {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "calibration {} after {} adjustments",
        if outcome.report.converged {
            "converged"
        } else {
            "stopped"
        },
        outcome.report.iterations
    );
    write_json(
        out,
        &CalibrationDocument {
            seed: config.rng_seed,
            outcome,
            format_version: FORMAT_VERSION,
        },
    )
}

/// Header of the sweep CSV.
pub const SWEEP_HEADER: &str =
    "param,value,runs,failed,S_median,S_q05,S_q95,lr_sigma_median,lr_sigma_q05,lr_sigma_q95,sigma_syst";

/// Median, 5% and 95% quantiles.
fn summary(values: Vec<f64>) -> [f64; 3] {
    if values.is_empty() {
        return [f64::NAN; 3];
    }
    let mut data = Data::new(values);
    [data.median(), data.quantile(0.05), data.quantile(0.95)]
}

struct SweepRow {
    value: String,
    failed: u64,
    s: [f64; 3],
    lr_sigma: [f64; 3],
    sigma_syst: f64,
}

pub fn sweep(
    config: Option<&Path>,
    seed: Option<u64>,
    param: &str,
    values: &[String],
    runs: u64,
    out: &Path,
) -> Result<()> {
    if runs == 0 {
        bail!(bellcheck::Error::Input("--runs must be at least 1".into()));
    }
    let base_text = match config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let base = load_config(config, seed)?;
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let mut table = config_table(&base_text)?;
        set_key(&mut table, param, parse_value(v.trim())?)?;
        let mut c = config_from_table(table).with_context(|| format!("{param} = {v}"))?;
        c.rng_seed = base.rng_seed;
        configs.push(c);
    }

    let mut rows = Vec::with_capacity(configs.len());
    let mut last_failure = None;
    for (value, config) in values.iter().zip(&configs) {
        let outcomes: Vec<_> = (0..runs)
            .into_par_iter()
            .map(|i| {
                let mut c = config.clone();
                c.rng_seed = config.rng_seed.wrapping_add(i);
                let run = run_simulation(&c)?;
                analyze_records(&run.records, None)
            })
            .collect();
        let mut s = Vec::new();
        let mut lr = Vec::new();
        let mut failed = 0;
        for o in outcomes {
            match o {
                Ok(r) => {
                    s.push(r.chsh.s);
                    lr.push(r.signaling.sigma);
                }
                Err(e) => {
                    failed += 1;
                    last_failure = Some(e);
                }
            }
        }
        if failed > 0 {
            eprintln!("warning: {failed} of {runs} runs failed for {param} = {value}");
        }
        rows.push(SweepRow {
            value: value.trim().to_owned(),
            failed,
            s: summary(s),
            lr_sigma: summary(lr),
            sigma_syst: config_motor_budget(config)?,
        });
    }
    if rows.iter().all(|r| r.failed == runs) {
        if let Some(e) = last_failure {
            return Err(anyhow::Error::new(e).context("every run failed"));
        }
    }

    write_atomic(out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(SWEEP_HEADER.split(','))?;
        for r in &rows {
            let mut record = vec![
                param.to_owned(),
                r.value.clone(),
                runs.to_string(),
                r.failed.to_string(),
            ];
            record.extend(r.s.iter().chain(&r.lr_sigma).map(f64::to_string));
            record.push(r.sigma_syst.to_string());
            csv.write_record(&record)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    TableMetadata::new("sweep", SWEEP_HEADER).write_for(out)
}
