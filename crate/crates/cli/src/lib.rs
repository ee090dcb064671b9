//! Config-driven experiment runner and report aggregator.
//!
//! Every run is a pure function of (config, seed): trials derive their
//! RNG streams from the seed and the (experiment, instance, trial)
//! coordinate, results are buffered and emitted in deterministic order,
//! and output bytes are identical across thread counts. The only
//! environment influence is `RAYON_NUM_THREADS`.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::experiments::{RunOutput, Summary};
use puzzlelab::error::Error as LabError;

/// Schema version stamped into every row and summary.
pub const SCHEMA_VERSION: u32 = 1;

/// Process exit codes, one per contract violation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Other = 1,
    SchemaViolation = 2,
    InfeasibleNoise = 3,
    QubitCap = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn schema(msg: impl Into<String>) -> Self {
        CliError { code: ExitCode::SchemaViolation, message: msg.into() }
    }

    pub fn other(msg: impl Into<String>) -> Self {
        CliError { code: ExitCode::Other, message: msg.into() }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        let code = match &e {
            LabError::InfeasibleNoise { .. } => ExitCode::InfeasibleNoise,
            LabError::QubitCapExceeded { .. } => ExitCode::QubitCap,
            _ => ExitCode::Other,
        };
        CliError { code, message: e.to_string() }
    }
}

/// One result row; serialized as a fixed-column CSV line.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub experiment: String,
    pub instance: u64,
    pub metric: String,
    pub value: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Diagnostic value with no embedded threshold.
    Info,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
        }
    }
}

pub const CSV_HEADER: &str = "schema_version,experiment,instance,metric,value,verdict,config_hash";

/// Renders rows to CSV bytes (UTF-8, LF line endings, header row).
pub fn rows_to_csv(rows: &[ResultRow], config_hash: &str) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            SCHEMA_VERSION,
            r.experiment,
            r.instance,
            r.metric,
            r.value,
            r.verdict.as_str(),
            config_hash
        ));
    }
    out
}

/// Runs one experiment config and writes `rows.csv` and `summary.json`
/// into the output directory.
pub fn run_to_dir(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Summary, CliError> {
    cfg.validate()?;
    let RunOutput { rows, summary, artifacts } = experiments::run_experiment(cfg)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::other(format!("creating {}: {e}", out_dir.display())))?;
    let csv = rows_to_csv(&rows, &summary.config_hash);
    std::fs::write(out_dir.join("rows.csv"), csv)
        .map_err(|e| CliError::other(format!("writing rows.csv: {e}")))?;
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::other(format!("serializing summary: {e}")))?;
    std::fs::write(out_dir.join("summary.json"), json + "\n")
        .map_err(|e| CliError::other(format!("writing summary.json: {e}")))?;
    for (name, contents) in artifacts {
        std::fs::write(out_dir.join(&name), contents)
            .map_err(|e| CliError::other(format!("writing {name}: {e}")))?;
    }
    Ok(summary)
}
