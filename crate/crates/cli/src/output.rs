//! Report files. Every file carries the resolved config: JSON outputs
//! embed it under `config`, CSV outputs start with a `# {...}` line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use stratwelfare::welfare::{Evaluation, METRIC_COLUMNS};

use crate::config::ExperimentConfig;
use crate::CliError;

/// The output directory is left out so that a re-run elsewhere from an
/// embedded config writes identical files.
pub fn provenance(command: &str, cfg: &ExperimentConfig) -> Value {
    let mut config = serde_json::to_value(cfg).expect("config is plain data");
    if let Value::Object(map) = &mut config {
        map.remove("output_dir");
    }
    json!({
        "command": command,
        "seeds": cfg.seeds,
        "config": config,
    })
}

/// Single-line provenance for CSV headers.
pub fn provenance_comment(command: &str, cfg: &ExperimentConfig) -> String {
    format!("# {}", provenance(command, cfg))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(
    path: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    key: &str,
    body: &T,
) -> Result<(), CliError> {
    let mut doc = provenance(command, cfg);
    doc[key] = serde_json::to_value(body)?;
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Inserts `comment` as the first line of a file written by another
/// writer.
pub fn prepend_comment(path: &Path, comment: &str) -> Result<(), CliError> {
    let body = fs::read_to_string(path)?;
    let mut f = fs::File::create(path)?;
    writeln!(f, "{comment}")?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// One line of a results or sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: String,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Seed number, or `mean` for aggregate rows.
    pub seed: String,
    pub metrics: [Option<f64>; 10],
    /// Sample standard deviations; aggregate rows only.
    pub stds: [Option<f64>; 10],
    pub error: String,
}

impl ResultRow {
    pub fn detail(algorithm: &str, lambda1: f64, lambda2: f64, seed: u64, outcome: Result<&Evaluation, String>) -> Self {
        let (metrics, error) = match outcome {
            Ok(ev) => (ev.metric_values(), String::new()),
            Err(e) => ([None; 10], e),
        };
        Self {
            algorithm: algorithm.into(),
            lambda1,
            lambda2,
            seed: seed.to_string(),
            metrics,
            stds: [None; 10],
            error,
        }
    }

    /// Mean and sample standard deviation of each metric over the rows
    /// where it is defined.
    pub fn aggregate(rows: &[ResultRow]) -> Option<Self> {
        let first = rows.first()?;
        let mut metrics = [None; 10];
        let mut stds = [None; 10];
        for k in 0..10 {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.metrics[k]).collect();
            if let Some((m, s)) = mean_std(&vals) {
                metrics[k] = Some(m);
                stds[k] = s;
            }
        }
        let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
        Some(Self {
            algorithm: first.algorithm.clone(),
            lambda1: first.lambda1,
            lambda2: first.lambda2,
            seed: "mean".into(),
            metrics,
            stds,
            error: if failed > 0 {
                format!("{failed} of {} runs failed", rows.len())
            } else {
                String::new()
            },
        })
    }

    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = ["algorithm", "lambda1", "lambda2", "seed"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(METRIC_COLUMNS.iter().map(|c| c.to_string()));
        h.extend(METRIC_COLUMNS.iter().map(|c| format!("{c}_std")));
        h.push("error".into());
        h
    }

    fn record(&self) -> Vec<String> {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut r = vec![
            self.algorithm.clone(),
            num(self.lambda1),
            num(self.lambda2),
            self.seed.clone(),
        ];
        r.extend(self.metrics.iter().map(|v| cell(*v)));
        r.extend(self.stds.iter().map(|v| cell(*v)));
        r.push(self.error.clone());
        r
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        METRIC_COLUMNS
            .iter()
            .position(|c| *c == name)
            .and_then(|k| self.metrics[k])
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Mean and sample standard deviation (`None` for a single value).
pub fn mean_std(vals: &[f64]) -> Option<(f64, Option<f64>)> {
    if vals.is_empty() {
        return None;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = (vals.len() > 1)
        .then(|| (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Some((mean, std))
}

pub fn write_rows(path: &Path, comment: &str, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(ResultRow::header())?;
        for r in rows {
            w.write_record(r.record())?;
        }
        w.flush()?;
    }
    let mut f = fs::File::create(path)?;
    writeln!(f, "{comment}")?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads a table written by [`write_rows`].
pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let parse = |s: &str| -> Option<f64> { s.parse().ok() };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut metrics = [None; 10];
        let mut stds = [None; 10];
        for k in 0..10 {
            metrics[k] = parse(&rec[4 + k]);
            stds[k] = parse(&rec[14 + k]);
        }
        out.push(ResultRow {
            algorithm: rec[0].to_string(),
            lambda1: parse(&rec[1]).unwrap_or(f64::NAN),
            lambda2: parse(&rec[2]).unwrap_or(f64::NAN),
            seed: rec[3].to_string(),
            metrics,
            stds,
            error: rec[24].to_string(),
        });
    }
    Ok(out)
}

/// Output root: flag, then environment, then config.
pub fn resolve_output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(crate::config::OUTPUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output_dir.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, dw: f64) -> ResultRow {
        let mut r = ResultRow::detail("erm", 0.0, 0.0, seed, Err(String::new()));
        r.metrics[0] = Some(dw);
        r
    }

    #[test]
    fn aggregate_is_mean_and_sample_std() {
        let rows = vec![row(0, 0.5), row(1, 0.7), row(2, 0.9)];
        let agg = ResultRow::aggregate(&rows).unwrap();
        assert!((agg.metrics[0].unwrap() - 0.7).abs() < 1e-12);
        assert!((agg.stds[0].unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(agg.metrics[1], None);
        assert_eq!(agg.seed, "mean");
    }

    #[test]
    fn single_row_has_no_std() {
        let agg = ResultRow::aggregate(&[row(0, 0.5)]).unwrap();
        assert_eq!(agg.stds[0], None);
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut rows = vec![row(0, 0.123456789012345), row(1, 1.0 / 3.0)];
        rows[1].error = "boom, with comma".into();
        rows.push(ResultRow::aggregate(&rows).unwrap());
        write_rows(&p, "# {}", &rows).unwrap();
        let back = read_rows(&p).unwrap();
        assert_eq!(back, rows);
    }
}
