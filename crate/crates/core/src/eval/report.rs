use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AblationReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    /// Aligned markdown tables, one per suite.
    Text,
    /// Machine-readable records.
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidParameter(format!("unknown report format {other:?}"))),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn text(reports: &[AblationReport]) -> String {
    let mut out = String::from("# latent safety filter evaluation\n");
    for r in reports {
        let _ = writeln!(out, "\n## {}", r.suite.title());
        if !r.rows.is_empty() {
            let _ = writeln!(
                out,
                "{:<24} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9}",
                "Method", "FPR", "Rec", "Pre", "F1", "B.Acc", "SafeRate", "MinDist"
            );
            for row in &r.rows {
                let m = row.classification.as_ref();
                let _ = writeln!(
                    out,
                    "{:<24} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9}",
                    row.method,
                    cell(m.map(|m| m.fpr)),
                    cell(m.map(|m| m.recall)),
                    cell(m.map(|m| m.precision)),
                    cell(m.map(|m| m.f1)),
                    cell(m.map(|m| m.balanced_accuracy)),
                    cell(row.safe_rate),
                    cell(row.mean_min_distance),
                );
            }
            if r.rows.iter().any(|row| row.safe_positive.is_some()) {
                let _ = writeln!(out, "\nsame counts with the safe class as positive:");
                for row in &r.rows {
                    if let Some(m) = &row.safe_positive {
                        let _ = writeln!(
                            out,
                            "{:<24} {:>7} {:>7} {:>7} {:>7} {:>7}",
                            row.method,
                            cell(Some(m.fpr)),
                            cell(Some(m.recall)),
                            cell(Some(m.precision)),
                            cell(Some(m.f1)),
                            cell(Some(m.balanced_accuracy)),
                        );
                    }
                }
            }
        }
        if !r.calibration.is_empty() {
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>8} {:>7} {:>9} {:>9} {:>10}",
                "Threshold", "alpha", "delta", "N+", "SafeRate", "MinDist", "Respecting"
            );
            for c in &r.calibration {
                let _ = writeln!(
                    out,
                    "{:<10} {:>7} {:>8} {:>7} {:>9} {:>9} {:>10}",
                    format!("eps={:.1}", c.epsilon),
                    format!("{:.3}", c.alpha),
                    format!("{:.4}", c.delta),
                    c.n_positive,
                    cell(c.safe_rate),
                    cell(c.mean_min_distance),
                    cell(c.fraction_respecting),
                );
            }
        }
    }
    out
}

/// Deterministic serialization of `reports`.
pub fn emit_report(reports: &[AblationReport], format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Text => text(reports),
        ReportFormat::Json => serde_json::to_string_pretty(reports)? + "\n",
    })
}

pub fn parse_records(json: &str) -> Result<Vec<AblationReport>> {
    Ok(serde_json::from_str(json)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{CalibrationRow, Counts, Metrics, MethodRow, Suite};

    fn sample() -> AblationReport {
        let c = Counts { tp: 40, fp: 7, tn: 300, fn_: 3 };
        AblationReport {
            suite: Suite::Table1,
            rows: vec![MethodRow {
                method: "ZZ".into(),
                classification: Some(Metrics::from_counts(&c)),
                safe_positive: Some(Metrics::from_counts(&c.swapped())),
                counts: Some(c),
                safe_rate: Some(0.924),
                mean_min_distance: None,
                eval_seconds: None,
            }],
            calibration: vec![CalibrationRow {
                epsilon: 0.3,
                alpha: 0.005,
                delta: -0.9312345678901234,
                n_positive: 1234,
                safe_rate: Some(1.0),
                mean_min_distance: Some(0.41),
                fraction_respecting: Some(0.96),
            }],
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(emit_report(&[], ReportFormat::Text).unwrap().lines().count(), 1);
        assert!(parse_records(&emit_report(&[], ReportFormat::Json).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn emission_is_deterministic_and_parses_back() {
        let reports = vec![sample()];
        for f in [ReportFormat::Text, ReportFormat::Json] {
            assert_eq!(emit_report(&reports, f).unwrap(), emit_report(&reports, f).unwrap());
        }
        let back = parse_records(&emit_report(&reports, ReportFormat::Json).unwrap()).unwrap();
        assert_eq!(back, reports);
    }
}
