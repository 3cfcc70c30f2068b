//! Cross-mode comparison of reports from one scenario.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::report::BenchReport;
use crate::runtime::Mode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompareError {
    #[error("need at least 2 reports, got {0}")]
    TooFewReports(usize),
    #[error("reports mix scenarios {0} and {1}")]
    ScenarioMismatch(String, String),
    #[error("more than one report for mode {0}")]
    DuplicateMode(Mode),
}

/// Relative change of `value` against `base`.
pub fn relative_change(value: f64, base: f64) -> f64 {
    (value - base) / base
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: Mode,
    pub median_ns: i64,
    pub iqr_ns: i64,
    /// `(median - median_standalone) / median_standalone`.
    pub change_vs_standalone: Option<f64>,
    /// The same difference divided by this mode's own median.
    pub change_own_base: Option<f64>,
    /// `iqr / iqr_standalone`.
    pub iqr_ratio_vs_standalone: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub rows: Vec<ModeRow>,
    pub ipc_le_noipc: Option<bool>,
    pub ipc_le_standalone: Option<bool>,
    /// The ipc median is no larger than every other mode's median present.
    pub ordering_holds: bool,
}

impl Comparison {
    pub fn row(&self, mode: Mode) -> Option<&ModeRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

pub fn compare(reports: &[BenchReport]) -> Result<Comparison, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFewReports(reports.len()));
    }
    let scenario = reports[0].scenario.clone();
    if let Some(other) = reports.iter().find(|r| r.scenario != scenario) {
        return Err(CompareError::ScenarioMismatch(scenario, other.scenario.clone()));
    }
    let mut by_mode: Vec<&BenchReport> = Vec::new();
    for m in Mode::ALL {
        let mut it = reports.iter().filter(|r| r.mode == m);
        if let Some(r) = it.next() {
            if it.next().is_some() {
                return Err(CompareError::DuplicateMode(m));
            }
            by_mode.push(r);
        }
    }
    let get = |m: Mode| by_mode.iter().find(|r| r.mode == m).copied();
    let standalone = get(Mode::Standalone);
    let rows = by_mode
        .iter()
        .map(|r| {
            let med = r.stats.median as f64;
            let base = standalone.map(|s| s.stats.median as f64);
            ModeRow {
                mode: r.mode,
                median_ns: r.stats.median,
                iqr_ns: r.iqr,
                change_vs_standalone: base.map(|b| relative_change(med, b)),
                change_own_base: base.map(|b| (med - b) / med),
                iqr_ratio_vs_standalone: standalone.map(|s| r.iqr as f64 / s.iqr as f64),
            }
        })
        .collect();
    let ipc = get(Mode::ComposedIpc).map(|r| r.stats.median);
    let le = |other: Option<&BenchReport>| match (ipc, other) {
        (Some(i), Some(o)) => Some(i <= o.stats.median),
        _ => None,
    };
    let ipc_le_noipc = le(get(Mode::ComposedNoipc));
    let ipc_le_standalone = le(standalone);
    let checks: Vec<bool> = [ipc_le_noipc, ipc_le_standalone].into_iter().flatten().collect();
    Ok(Comparison {
        scenario,
        rows,
        ipc_le_noipc,
        ipc_le_standalone,
        ordering_holds: !checks.is_empty() && checks.iter().all(|&c| c),
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:+.1}%", v * 100.0))
}

fn ms(ns: i64) -> String {
    format!("{:.3} ms", ns as f64 / 1e6)
}

pub fn render_table(c: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {}", c.scenario);
    let _ = writeln!(
        out,
        "{:<16} {:>12} {:>12} {:>14} {:>14} {:>10}",
        "mode", "median", "iqr", "vs standalone", "own base", "iqr ratio"
    );
    for r in &c.rows {
        let _ = writeln!(
            out,
            "{:<16} {:>12} {:>12} {:>14} {:>14} {:>10}",
            r.mode.as_str(),
            ms(r.median_ns),
            ms(r.iqr_ns),
            pct(r.change_vs_standalone),
            pct(r.change_own_base),
            r.iqr_ratio_vs_standalone.map_or_else(|| "-".into(), |v| format!("{v:.3}")),
        );
    }
    let flag = |v: Option<bool>| v.map_or("n/a", |b| if b { "yes" } else { "no" });
    let _ = writeln!(out, "median(ipc) <= median(noipc):      {}", flag(c.ipc_le_noipc));
    let _ = writeln!(out, "median(ipc) <= median(standalone): {}", flag(c.ipc_le_standalone));
    let _ = writeln!(out, "ordering holds: {}", if c.ordering_holds { "yes" } else { "no" });
    out
}
