//! Report schema and emission (JSON, human-readable text, CSV).
//!
//! The JSON layout is versioned and stable:
//! `{schema_version, config_echo, components: [{name, tau, se, h}],
//!   procedures: {<name>: {statistic, critical_value, p_value?, reject,
//!   notes}}, warnings: []}`.
//! A requested procedure that could not run appears with null fields and
//! an explanatory note rather than disappearing.

use crate::error::RdError;
use crate::joint::{Procedure, TestResult};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;

/// Echo of the effective settings a report was produced under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub n: usize,
    pub cutoff: f64,
    pub kernel: String,
    pub l: usize,
    pub p: usize,
    /// Resolved per-covariate bandwidths.
    pub bandwidths: Vec<f64>,
    /// Resolved density bandwidth.
    pub h_f: f64,
    pub alpha: f64,
    pub neighbors_m: usize,
    pub mc_draws: usize,
    pub seed: u64,
    pub procedures: Vec<String>,
    /// Components dropped for degenerate variance.
    pub dropped_components: Vec<String>,
}

/// One estimated jump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub name: String,
    /// Estimated jump at the cutoff.
    pub tau: f64,
    /// Standard error `sqrt(V_kk / (n h_k))`; zero when degenerate.
    pub se: f64,
    /// Bandwidth used.
    pub h: f64,
}

/// One procedure's outcome. All fields are null when the procedure was
/// requested but could not run (the note says why).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcedureReport {
    pub statistic: Option<f64>,
    pub critical_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_value: Option<f64>,
    pub reject: Option<bool>,
    pub notes: String,
}

impl ProcedureReport {
    pub fn from_result(result: &TestResult) -> Self {
        ProcedureReport {
            statistic: Some(result.statistic),
            critical_value: Some(result.critical_value),
            p_value: result.p_value,
            reject: Some(result.reject),
            notes: result.notes.join("; "),
        }
    }

    pub fn unavailable(cause: &str) -> Self {
        ProcedureReport {
            statistic: None,
            critical_value: None,
            p_value: None,
            reject: None,
            notes: format!("unavailable: {cause}"),
        }
    }

    pub fn is_available(&self) -> bool {
        self.reject.is_some()
    }
}

/// Procedure outcomes keyed by name, in a fixed field order. Procedures
/// that were not requested are absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcedureMap {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub naive: Option<ProcedureReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bonferroni: Option<ProcedureReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wald: Option<ProcedureReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max: Option<ProcedureReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_studentized: Option<ProcedureReport>,
}

impl ProcedureMap {
    pub fn set(&mut self, procedure: Procedure, report: ProcedureReport) {
        *self.slot(procedure) = Some(report);
    }

    pub fn get(&self, procedure: Procedure) -> Option<&ProcedureReport> {
        match procedure {
            Procedure::Naive => self.naive.as_ref(),
            Procedure::Bonferroni => self.bonferroni.as_ref(),
            Procedure::Wald => self.wald.as_ref(),
            Procedure::Max => self.max.as_ref(),
            Procedure::MaxStudentized => self.max_studentized.as_ref(),
        }
    }

    fn slot(&mut self, procedure: Procedure) -> &mut Option<ProcedureReport> {
        match procedure {
            Procedure::Naive => &mut self.naive,
            Procedure::Bonferroni => &mut self.bonferroni,
            Procedure::Wald => &mut self.wald,
            Procedure::Max => &mut self.max,
            Procedure::MaxStudentized => &mut self.max_studentized,
        }
    }

    /// Present procedures in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (Procedure, &ProcedureReport)> {
        Procedure::ALL
            .into_iter()
            .filter_map(|p| self.get(p).map(|r| (p, r)))
    }
}

/// Full output of one diagnostic run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config_echo: ConfigEcho,
    pub components: Vec<ComponentReport>,
    pub procedures: ProcedureMap,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Human,
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self, RdError> {
        match s.to_ascii_lowercase().as_str() {
            "human" => Ok(OutputFormat::Human),
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(RdError::InvalidConfig(format!(
                "format: expected human, json, or csv, got {other:?}"
            ))),
        }
    }
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Serialize a report in the requested format.
pub fn emit_report(report: &Report, format: OutputFormat) -> Result<Vec<u8>, RdError> {
    match format {
        OutputFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        OutputFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record([
                "procedure",
                "statistic",
                "critical_value",
                "p_value",
                "reject",
                "notes",
            ])?;
            for (procedure, entry) in report.procedures.iter() {
                writer.write_record([
                    procedure.name().to_string(),
                    opt(entry.statistic),
                    opt(entry.critical_value),
                    opt(entry.p_value),
                    entry.reject.map(|r| r.to_string()).unwrap_or_default(),
                    entry.notes.clone(),
                ])?;
            }
            writer
                .into_inner()
                .map_err(|e| RdError::InvalidConfig(format!("CSV buffer error: {e}")))
        }
        OutputFormat::Human => {
            let echo = &report.config_echo;
            let mut out = String::new();
            writeln!(
                out,
                "joint manipulation/balance diagnostic (n = {}, kernel = {}, l = {}, p = {}, seed = {})",
                echo.n, echo.kernel, echo.l, echo.p, echo.seed
            )
            .unwrap();
            writeln!(out, "components (jump estimate, SE, bandwidth):").unwrap();
            for c in &report.components {
                writeln!(
                    out,
                    "  {:<16} tau = {:>12.6}   se = {:>12.6}   h = {:.6}",
                    c.name, c.tau, c.se, c.h
                )
                .unwrap();
            }
            writeln!(out, "procedures (alpha = {}):", echo.alpha).unwrap();
            for (procedure, entry) in report.procedures.iter() {
                if !entry.is_available() {
                    writeln!(out, "  {:<16} {}", procedure.name(), entry.notes).unwrap();
                    continue;
                }
                let mut line = format!(
                    "  {:<16} stat = {:>12.6}   crit = {:>12.6}",
                    procedure.name(),
                    entry.statistic.unwrap(),
                    entry.critical_value.unwrap()
                );
                if let Some(p) = entry.p_value {
                    let label = match procedure {
                        Procedure::Max | Procedure::MaxStudentized => "MC p",
                        _ => "p",
                    };
                    write!(line, "   {label} = {p:.6}").unwrap();
                }
                write!(
                    line,
                    "   reject = {}",
                    if entry.reject.unwrap() { "yes" } else { "no" }
                )
                .unwrap();
                writeln!(out, "{line}").unwrap();
            }
            if !report.warnings.is_empty() {
                writeln!(out, "warnings:").unwrap();
                for w in &report.warnings {
                    writeln!(out, "  - {w}").unwrap();
                }
            }
            Ok(out.into_bytes())
        }
    }
}
