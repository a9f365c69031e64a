//! Report emission: a human table, CSV and a JSON report.
//!
//! Table and CSV cells are rounded half-to-even to four decimals. The JSON
//! report keeps full precision.

use std::fmt::Write as _;

use serde::Serialize;

use crate::iteration::{largest_certified_delta, LambdaDiagnostic, SafetyReport};
use crate::mdp::StateId;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rounds to `decimals` places, ties to even.
pub fn round_half_even(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round_ties_even() / scale
}

/// Four-decimal cell text.
pub fn format_cell(x: f64) -> String {
    format!("{:.4}", round_half_even(x, 4))
}

fn verdict_word(safe: bool) -> &'static str {
    if safe {
        "safe"
    } else {
        "unsafe"
    }
}

/// CSV with one row per taboo state and one column per radius, followed by
/// a `verdict` row.
pub fn csv_report(reports: &[SafetyReport]) -> String {
    let mut out = String::from("state");
    for r in reports {
        write!(out, ",{}", r.delta).unwrap();
    }
    out.push('\n');
    if let Some(first) = reports.first() {
        for (i, state) in first.j.states().iter().enumerate() {
            write!(out, "{state}").unwrap();
            for r in reports {
                write!(out, ",{}", format_cell(r.j.values()[i])).unwrap();
            }
            out.push('\n');
        }
    }
    out.push_str("verdict");
    for r in reports {
        write!(out, ",{}", verdict_word(r.mdp_safe)).unwrap();
    }
    out.push('\n');
    out
}

/// One row per radius with `J(x)` per taboo state, like a printed table.
pub fn table_report(reports: &[SafetyReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let mut header = vec!["delta".to_string()];
    header.extend(first.j.states().iter().map(|s| format!("J({s})")));
    header.push("verdict".into());
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.delta.to_string()];
        row.extend(r.j.values().iter().map(|&v| format_cell(v)));
        row.push(verdict_word(r.mdp_safe).into());
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}"))
            .collect();
        writeln!(out, "{}", cells.join("  ")).unwrap();
        if i == 0 {
            writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)))
                .unwrap();
        }
    }
    writeln!(out, "p = {}", first.p).unwrap();
    match largest_certified_delta(reports) {
        Some(d) => writeln!(out, "largest certified delta: {d}").unwrap(),
        None => writeln!(out, "largest certified delta: none").unwrap(),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateResult {
    pub state: StateId,
    pub j: f64,
    pub safe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaResult {
    pub delta: f64,
    pub mdp_safe: bool,
    pub max_j: f64,
    pub states: Vec<StateResult>,
    pub sweeps: usize,
    pub final_delta: f64,
    pub lambdas: Vec<LambdaDiagnostic>,
}

/// Machine-readable run report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    pub input_digest: String,
    pub p: f64,
    pub deltas: Vec<f64>,
    pub largest_certified_delta: Option<f64>,
    pub results: Vec<DeltaResult>,
}

impl ReportDocument {
    pub fn new(input_digest: &str, p: f64, reports: &[SafetyReport]) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            input_digest: input_digest.into(),
            p,
            deltas: reports.iter().map(|r| r.delta).collect(),
            largest_certified_delta: largest_certified_delta(reports),
            results: reports
                .iter()
                .map(|r| DeltaResult {
                    delta: r.delta,
                    mdp_safe: r.mdp_safe,
                    max_j: r.j.max(),
                    states: r
                        .j
                        .iter()
                        .zip(&r.state_safe)
                        .map(|((state, j), &safe)| StateResult { state, j, safe })
                        .collect(),
                    sweeps: r.sweeps,
                    final_delta: r.final_delta,
                    lambdas: r.lambdas.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_even() {
        assert_eq!(format_cell(0.28125), "0.2812");
        assert_eq!(format_cell(0.330625), "0.3306");
        assert_eq!(format_cell(0.38125), "0.3812");
        assert_eq!(format_cell(0.2625), "0.2625");
        assert_eq!(format_cell(0.5), "0.5000");
    }
}
