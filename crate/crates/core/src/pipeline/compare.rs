use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use super::run::{RunReport, REPORT_JSON};
use super::{PipelineError, Stage};
use crate::eval::METRIC_NAMES;

/// Published full-scale results per mode, rows in [`METRIC_NAMES`] order.
pub const REPORTED_BASELINES: [(Mode, [f64; 7]); 4] = [
    (Mode::Hybrid, [0.89, 0.85, 0.79, 0.82, 0.79, 0.79, 0.58]),
    (Mode::Tfidf, [0.87, 0.81, 0.78, 0.80, 0.78, 0.78, 0.53]),
    (Mode::Word2vecOnly, [0.88, 0.84, 0.79, 0.82, 0.79, 0.79, 0.57]),
    (Mode::PretrainedOnly, [0.88, 0.82, 0.79, 0.80, 0.78, 0.79, 0.56]),
];

/// Published structured-data benchmark; only AUROC and AUPRC were reported.
pub const REPORTED_STRUCTURED: [Option<f64>; 7] = [Some(0.77), Some(0.60), None, None, None, None, None];

pub fn reference_column(mode: Mode) -> [f64; 7] {
    REPORTED_BASELINES
        .iter()
        .find(|(m, _)| *m == mode)
        .map(|(_, v)| *v)
        .expect("every mode has a reference column")
}

pub fn load_report(run_dir: &Path) -> Result<RunReport, PipelineError> {
    let path = run_dir.join(REPORT_JSON);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| PipelineError::data(Stage::Compare, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::data(Stage::Compare, format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub cohort_fingerprint: String,
    pub split_seed: u64,
    /// One column per mode, in display order.
    pub columns: Vec<(Mode, [Option<f64>; 7])>,
}

/// Lines up runs that share a cohort and split, one column per mode.
pub fn compare_reports(reports: &[RunReport]) -> Result<Comparison, PipelineError> {
    let refuse = |m: String| Err(PipelineError::usage(Stage::Compare, m));
    if reports.len() < 2 {
        return refuse(format!("need at least two runs, got {}", reports.len()));
    }
    let first = &reports[0];
    for r in &reports[1..] {
        if r.cohort_fingerprint != first.cohort_fingerprint {
            return refuse(format!("{} and {} runs used different cohorts", first.mode, r.mode));
        }
        if r.split_seed != first.split_seed || r.validation_fraction != first.validation_fraction {
            return refuse(format!("{} and {} runs used different splits", first.mode, r.mode));
        }
    }
    let mut columns = Vec::new();
    for mode in Mode::ALL {
        let mut of_mode = reports.iter().filter(|r| r.mode == mode);
        if let Some(r) = of_mode.next() {
            if of_mode.next().is_some() {
                return refuse(format!("more than one {mode} run"));
            }
            columns.push((mode, r.metrics.headline()));
        }
    }
    Ok(Comparison {
        cohort_fingerprint: first.cohort_fingerprint.clone(),
        split_seed: first.split_seed,
        columns,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "*".to_string(), |v| format!("{v:.4}"))
}

impl Comparison {
    /// Fixed-width table, metrics as rows. With `reference`, each run column
    /// is followed by the published value for that mode.
    pub fn to_table(&self, reference: bool) -> String {
        let mut out = String::new();
        write!(out, "{:<12}", "Metric").unwrap();
        for (mode, _) in &self.columns {
            write!(out, "{:>14}", mode.column_title()).unwrap();
            if reference {
                write!(out, "{:>14}", "(reported)").unwrap();
            }
        }
        out.push('\n');
        for (row, name) in METRIC_NAMES.iter().enumerate() {
            write!(out, "{name:<12}").unwrap();
            for (mode, values) in &self.columns {
                write!(out, "{:>14}", cell(values[row])).unwrap();
                if reference {
                    write!(out, "{:>14.2}", reference_column(*mode)[row]).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}

/// The run next to the published notes-based and structured-data results.
pub fn benchmark_table(report: &RunReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<12}{:>14}{:>14}{:>14}",
        "Metric", "This run", "Notes (rep.)", "Structured"
    )
    .unwrap();
    writeln!(out, "{:<12}{:>14}{:>14}{:>14}", "Data", "notes", "notes", "structured").unwrap();
    let reported = reference_column(Mode::Hybrid);
    for (row, name) in METRIC_NAMES.iter().enumerate() {
        writeln!(
            out,
            "{name:<12}{:>14}{:>14.2}{:>14}",
            cell(report.metrics.headline()[row]),
            reported[row],
            REPORTED_STRUCTURED[row].map_or_else(|| "*".to_string(), |v| format!("{v:.2}"))
        )
        .unwrap();
    }
    out.push_str("* not reported\n");
    out
}
