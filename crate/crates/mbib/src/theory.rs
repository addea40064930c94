//! The `theory-check` report: the core verification suite plus a plain-text
//! summary table.

use std::fmt::Write;

use mbib_core::theorycheck::{suite, Bound, SuiteConfig, TheoryReport};
use serde::{Deserialize, Serialize};

use crate::config::{SCHEMA_VERSION, TOOLKIT_VERSION};
use crate::error::{Context, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySuiteReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub config: SuiteConfig,
    pub passed: bool,
    pub reports: Vec<TheoryReport>,
}

pub fn run_suite(config: &SuiteConfig) -> Result<TheorySuiteReport> {
    let reports = suite(config).context(|| "running the verification suite".into())?;
    Ok(TheorySuiteReport {
        schema_version: SCHEMA_VERSION,
        toolkit_version: TOOLKIT_VERSION.into(),
        config: config.clone(),
        passed: reports.iter().all(|r| r.passed),
        reports,
    })
}

/// One line per check, plus one line per measurement of the checks that
/// failed. Instance-level checks that repeat over many instances are folded
/// into a single line with their worst measurement.
pub fn summary_table(report: &TheorySuiteReport) -> String {
    let mut out = String::new();
    let mut order: Vec<&str> = Vec::new();
    for r in &report.reports {
        if !order.contains(&r.check.as_str()) {
            order.push(&r.check);
        }
    }
    let _ = writeln!(out, "{:<28} {:>9} {:>6}  detail", "check", "instances", "result");
    for check in order {
        let group: Vec<&TheoryReport> = report.reports.iter().filter(|r| r.check == check).collect();
        let failed = group.iter().filter(|r| !r.passed).count();
        let verdict = if failed == 0 { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{:<28} {:>9} {:>6}  {}", check, group.len(), verdict, worst_measurements(&group));
        for r in group.iter().filter(|r| !r.passed) {
            let label: Vec<String> = r.instance.iter().map(|(k, v)| format!("{k}={v}")).collect();
            for m in r.measurements.iter().filter(|m| !m.passed) {
                let _ = writeln!(out, "    {} {} = {:.6e} ({})", label.join(" "), m.name, m.value, bound_text(&m.bound));
            }
        }
    }
    let _ = writeln!(out, "overall: {}", if report.passed { "PASS" } else { "FAIL" });
    out
}

fn worst_measurements(group: &[&TheoryReport]) -> String {
    let Some(first) = group.first() else { return String::new() };
    let mut parts = Vec::new();
    for m in first.measurements.iter().filter(|m| !matches!(m.bound, Bound::Info)) {
        let values = group.iter().filter_map(|r| r.measurement(&m.name)).map(|x| x.value);
        let worst = match m.bound {
            Bound::AtLeast { .. } => values.fold(f64::INFINITY, f64::min),
            Bound::Within { .. } if group.len() == 1 => m.value,
            _ => values.fold(f64::NEG_INFINITY, f64::max),
        };
        parts.push(format!("{}={:.3e} ({})", m.name, worst, bound_text(&m.bound)));
    }
    parts.join(", ")
}

fn bound_text(b: &Bound) -> String {
    match *b {
        Bound::AtMost { value } => format!("<= {value:e}"),
        Bound::AtLeast { value } => format!(">= {value:e}"),
        Bound::Within { low, high } => format!("in [{low}, {high}]"),
        Bound::Info => "info".into(),
    }
}
