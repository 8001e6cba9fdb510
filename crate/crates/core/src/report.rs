//! Renders evaluation reports and training summaries as text, JSON, or
//! CSV.
//!
//! The text form is for terminals: fixed-width columns, two decimals,
//! overlap ratios as percentages. JSON and CSV are for downstream tooling
//! and carry identical full-precision numbers; every CSV cell is written
//! with the same shortest-round-trip float formatting serde_json uses, so
//! the two forms agree byte for byte on each value.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::eval::EvalReport;
use crate::grpo::{LevelSummary, TrainingLog};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report format {0:?} (expected text, json, or csv)")]
    UnknownFormat(String),
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(ReportError::UnknownFormat(other.into())),
        }
    }
}

/// Full-precision cell: the same shortest representation serde_json emits,
/// so CSV and JSON numbers compare equal byte for byte.
fn cell(value: f64) -> String {
    serde_json::to_string(&value).expect("finite float serializes")
}

/// Renders an evaluation report in the requested format.
pub fn render_eval(report: &EvalReport, format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_string_pretty(report)?;
            out.push('\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut out = String::from("stratum,n,token_mean,rscore,rst,giou,ciou,sat,urss\n");
            for row in &report.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    row.stratum,
                    row.n,
                    cell(row.token_mean),
                    cell(row.rscore),
                    cell(row.rst),
                    cell(row.giou),
                    cell(row.ciou),
                    cell(row.sat),
                    cell(row.urss)
                )
                .expect("write to string");
            }
            Ok(out)
        }
        ReportFormat::Text => {
            let mut out = String::new();
            writeln!(
                out,
                "{:<8} {:>5} {:>9} {:>7} {:>6} {:>7} {:>7} {:>6} {:>6}",
                "stratum", "n", "tokens", "rscore", "rst", "gIoU%", "cIoU%", "sat", "urss"
            )
            .expect("write to string");
            for row in &report.rows {
                writeln!(
                    out,
                    "{:<8} {:>5} {:>9.2} {:>7.2} {:>6.2} {:>7.2} {:>7.2} {:>6.2} {:>6.2}",
                    row.stratum.to_string(),
                    row.n,
                    row.token_mean,
                    row.rscore,
                    row.rst,
                    100.0 * row.giou,
                    100.0 * row.ciou,
                    row.sat,
                    row.urss
                )
                .expect("write to string");
            }
            if report.token_fallbacks > 0 {
                writeln!(
                    out,
                    "\ntoken counts estimated from text for {} sample(s)",
                    report.token_fallbacks
                )
                .expect("write to string");
            }
            if !report.skipped.is_empty() {
                writeln!(out, "\nskipped {} sample(s):", report.skipped.len())
                    .expect("write to string");
                for skip in &report.skipped {
                    writeln!(out, "  {}: {}", skip.sample_id, skip.reason)
                        .expect("write to string");
                }
            }
            Ok(out)
        }
    }
}

fn training_rows(log: &TrainingLog) -> Vec<(String, &LevelSummary)> {
    let mut rows: Vec<(String, &LevelSummary)> = log
        .summary
        .levels
        .iter()
        .map(|(level, summary)| (level.name().to_string(), summary))
        .collect();
    rows.push(("overall".into(), &log.summary.overall));
    rows
}

/// Renders a training run's summary in the requested format.
pub fn render_training(log: &TrainingLog, format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_string_pretty(&log.summary)?;
            out.push('\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut out =
                String::from("level,tasks,expected_length,expected_accuracy,expected_reward\n");
            for (name, summary) in training_rows(log) {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    name,
                    summary.tasks,
                    cell(summary.expected_length),
                    cell(summary.expected_accuracy),
                    cell(summary.expected_reward)
                )
                .expect("write to string");
            }
            Ok(out)
        }
        ReportFormat::Text => {
            let mut out = String::new();
            writeln!(out, "training steps: {}", log.summary.steps).expect("write to string");
            writeln!(
                out,
                "{:<8} {:>6} {:>11} {:>10} {:>9}",
                "level", "tasks", "exp.length", "exp.acc", "exp.rwd"
            )
            .expect("write to string");
            for (name, summary) in training_rows(log) {
                writeln!(
                    out,
                    "{:<8} {:>6} {:>11.2} {:>10.4} {:>9.4}",
                    name,
                    summary.tasks,
                    summary.expected_length,
                    summary.expected_accuracy,
                    summary.expected_reward
                )
                .expect("write to string");
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{SkippedSample, Stratum, StratumRow};
    use crate::grpo::{simulate_training, generate_tasks, ToyConfig, ToyPolicy};
    use crate::reward::BudgetPolicy;

    fn tiny_report() -> EvalReport {
        EvalReport {
            rows: vec![
                StratumRow {
                    stratum: Stratum::Easy,
                    n: 2,
                    token_mean: 20.0,
                    rscore: 6.5,
                    rst: 10.0 * 6.5 / (7.0 * 21.0f64.sqrt()),
                    giou: 0.75,
                    ciou: 12.0 / 16.0,
                    sat: 100.0 * 0.75 / (7.0 * 21.0f64.sqrt()),
                    urss: 1.2345,
                },
                StratumRow {
                    stratum: Stratum::All,
                    n: 2,
                    token_mean: 20.0,
                    rscore: 6.5,
                    rst: 2.0259,
                    giou: 0.75,
                    ciou: 0.75,
                    sat: 2.3374,
                    urss: 2.244,
                },
            ],
            token_fallbacks: 1,
            skipped: vec![SkippedSample {
                sample_id: "s9".into(),
                reason: "bad predicted mask: truncated".into(),
            }],
        }
    }

    #[test]
    fn formats_parse_case_insensitively() {
        assert_eq!("TEXT".parse::<ReportFormat>().unwrap(), ReportFormat::Text);
        assert_eq!("Json".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!("yaml".parse::<ReportFormat>().is_err());
    }

    #[test]
    fn text_report_shows_percentages_and_diagnostics() {
        let text = render_eval(&tiny_report(), ReportFormat::Text).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("stratum"));
        assert!(lines[1].starts_with("easy"));
        assert!(lines[1].contains("75.00"), "{text}");
        assert!(lines[2].starts_with("all"));
        assert!(text.contains("token counts estimated from text for 1 sample(s)"));
        assert!(text.contains("s9: bad predicted mask: truncated"));
    }

    #[test]
    fn json_report_round_trips() {
        let report = tiny_report();
        let json = render_eval(&report, ReportFormat::Json).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn csv_cells_match_json_numbers_exactly() {
        let report = tiny_report();
        let csv = render_eval(&report, ReportFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + report.rows.len());
        assert_eq!(lines[0], "stratum,n,token_mean,rscore,rst,giou,ciou,sat,urss");
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[0], "easy");
        assert_eq!(first[1], "2");
        assert_eq!(first[3], serde_json::to_string(&6.5).unwrap());
        assert_eq!(first[4], serde_json::to_string(&report.rows[0].rst).unwrap());
        // Full precision survives the CSV round trip.
        assert_eq!(first[4].parse::<f64>().unwrap(), report.rows[0].rst);
    }

    #[test]
    fn training_summary_renders_in_all_formats() {
        let config = ToyConfig::default();
        let policy = BudgetPolicy::default();
        let tasks = generate_tasks(6, &config, &policy, 7).unwrap();
        let start = ToyPolicy::uniform(config.length_bins.len(), config.answer_quality);
        let (_, log) = simulate_training(&tasks, &start, &policy, &config, 3, 7).unwrap();

        let text = render_training(&log, ReportFormat::Text).unwrap();
        assert!(text.starts_with("training steps: 3"));
        assert!(text.contains("overall"));

        let json = render_training(&log, ReportFormat::Json).unwrap();
        assert!(json.contains("\"overall\""));

        let csv = render_training(&log, ReportFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "level,tasks,expected_length,expected_accuracy,expected_reward"
        );
        // easy, medium, hard, overall.
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("overall,"));
    }
}
