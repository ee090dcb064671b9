//! Aggregates result-row CSV files into per-(experiment, metric)
//! statistics: a fixed-column CSV plus a human-readable table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::{CliError, CSV_HEADER};

#[derive(Debug, Clone)]
struct ParsedRow {
    experiment: String,
    metric: String,
    value: f64,
    verdict: String,
}

#[derive(Debug, Clone)]
pub struct Aggregate {
    pub experiment: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub p50: f64,
    pub max: f64,
    /// Pass fraction among rows carrying a pass/fail verdict; 1 when
    /// the metric is informational only.
    pub pass_rate: f64,
}

pub const AGGREGATE_HEADER: &str = "experiment,metric,count,mean,min,p50,max,pass_rate";

/// Collects `*.csv` result files under `dir` (sorted by path).
pub fn find_row_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::other(format!("reading {}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::other(e.to_string()))?.path();
        if path.extension().is_some_and(|ext| ext == "csv")
            && path.file_name().is_some_and(|f| f != "aggregate.csv")
        {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn parse_file(path: &Path, expected_version: Option<&mut String>) -> Result<Vec<ParsedRow>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::other(format!("reading {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut version_seen: Option<String> = None;
    for (lineno, line) in text.lines().enumerate() {
        let human = lineno + 1;
        if lineno == 0 {
            if line != CSV_HEADER {
                return Err(CliError::schema(format!(
                    "{}:{human}: unexpected header {line:?}",
                    path.display()
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::schema(format!(
                "{}:{human}: expected 7 fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        let value: f64 = fields[4].parse().map_err(|_| {
            CliError::schema(format!("{}:{human}: value {:?} is not a number", path.display(), fields[4]))
        })?;
        if !matches!(fields[5], "pass" | "fail" | "info") {
            return Err(CliError::schema(format!(
                "{}:{human}: verdict {:?} unknown",
                path.display(),
                fields[5]
            )));
        }
        match &version_seen {
            None => version_seen = Some(fields[0].to_string()),
            Some(v) if v != fields[0] => {
                return Err(CliError::schema(format!(
                    "{}:{human}: schema version changed mid-file",
                    path.display()
                )));
            }
            _ => {}
        }
        rows.push(ParsedRow {
            experiment: fields[1].to_string(),
            metric: fields[3].to_string(),
            value,
            verdict: fields[5].to_string(),
        });
    }
    if let (Some(expected), Some(seen)) = (expected_version, version_seen) {
        if expected.is_empty() {
            *expected = seen;
        } else if *expected != seen {
            return Err(CliError::schema(format!(
                "{}: schema version {seen} conflicts with {expected}",
                path.display()
            )));
        }
    }
    Ok(rows)
}

pub fn aggregate_files(files: &[PathBuf]) -> Result<Vec<Aggregate>, CliError> {
    let mut version = String::new();
    let mut grouped: BTreeMap<(String, String), Vec<ParsedRow>> = BTreeMap::new();
    for file in files {
        for row in parse_file(file, Some(&mut version))? {
            grouped
                .entry((row.experiment.clone(), row.metric.clone()))
                .or_default()
                .push(row);
        }
    }
    let mut out = Vec::new();
    for ((experiment, metric), rows) in grouped {
        let mut values: Vec<f64> = rows.iter().map(|r| r.value).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let gated = rows.iter().filter(|r| r.verdict != "info").count();
        let passed = rows.iter().filter(|r| r.verdict == "pass").count();
        out.push(Aggregate {
            experiment,
            metric,
            count,
            mean,
            min: values[0],
            p50: values[count / 2],
            max: values[count - 1],
            pass_rate: if gated == 0 { 1.0 } else { passed as f64 / gated as f64 },
        });
    }
    Ok(out)
}

pub fn aggregates_to_csv(aggs: &[Aggregate]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for a in aggs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            a.experiment, a.metric, a.count, a.mean, a.min, a.p50, a.max, a.pass_rate
        ));
    }
    out
}

pub fn render_table(aggs: &[Aggregate]) -> String {
    if aggs.is_empty() {
        return "no result rows found\n".to_string();
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:<22} {:>7} {:>12} {:>12} {:>12} {:>12} {:>9}\n",
        "experiment", "metric", "count", "mean", "min", "p50", "max", "pass"
    ));
    for a in aggs {
        out.push_str(&format!(
            "{:<14} {:<22} {:>7} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>8.1}%\n",
            a.experiment,
            a.metric,
            a.count,
            a.mean,
            a.min,
            a.p50,
            a.max,
            a.pass_rate * 100.0
        ));
    }
    out
}
