//! Human-readable and machine-readable campaign reports, plus the versioned
//! catalog file format.
//!
//! The text report prints one block per record, ordered by record id: where
//! the server failed, the error label, and — for high-priority records — the
//! user events that trigger it. The JSON report is a stable, compact
//! document (schema `stackful-mini/1`) that round-trips through
//! [`parse_report`] and carries enough to replay every high-priority record
//! without a solver.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{
    CampaignConfig, CampaignResult, Classification, ReproductionTrace, ServerErrorCatalog,
    ServerErrorRecord, TriggerStep,
};
use crate::machine::RuntimeError;
use crate::selector::StrategyKind;
use crate::solver::SolverConfig;
use crate::symbolic::{HandlerRef, ScalarValue};

pub const REPORT_SCHEMA: &str = "stackful-mini/1";
pub const CATALOG_SCHEMA: &str = "stackful-mini-catalog/1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportParseError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("unsupported schema {found:?} (expected {expected:?})")]
    Schema { expected: &'static str, found: String },
}

/// Which files the campaign ran on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramInfo {
    pub client: String,
    pub server: String,
}

/// The campaign knobs, persisted so a report is replayable on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub seed: u64,
    pub intra_budget: u32,
    pub inter_budget: u32,
    pub max_events: u32,
    pub step_limit: u64,
    pub input_bound: i64,
    pub solver_bound: i64,
    pub solver_max_assignments: u64,
    pub strategy: StrategyKind,
    pub jobs: u32,
    pub prefixes: Vec<Vec<String>>,
}

impl ReportConfig {
    pub fn from_campaign(config: &CampaignConfig) -> ReportConfig {
        ReportConfig {
            seed: config.seed,
            intra_budget: config.intra_budget,
            inter_budget: config.inter_budget,
            max_events: config.max_events,
            step_limit: config.step_limit,
            input_bound: config.input_bound,
            solver_bound: config.solver.bound,
            solver_max_assignments: config.solver.max_assignments,
            strategy: config.strategy,
            jobs: config.jobs,
            prefixes: config
                .prefixes
                .iter()
                .map(|p| p.iter().map(|n| n.to_string()).collect())
                .collect(),
        }
    }

    pub fn to_campaign(&self) -> CampaignConfig {
        CampaignConfig {
            seed: self.seed,
            intra_budget: self.intra_budget,
            inter_budget: self.inter_budget,
            max_events: self.max_events,
            step_limit: self.step_limit,
            input_bound: self.input_bound,
            solver: SolverConfig {
                bound: self.solver_bound,
                max_assignments: self.solver_max_assignments,
            },
            strategy: self.strategy,
            prefixes: self.prefixes.iter().map(|p| p.iter().map(|n| n.as_str().into()).collect()).collect(),
            jobs: self.jobs,
        }
    }
}

/// Error identity as persisted: enough to compare against a fresh failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportError {
    pub kind: String,
    pub label: String,
    pub file: String,
    pub line: u32,
    pub col: u32,
}

impl ReportError {
    pub fn of(error: &RuntimeError) -> ReportError {
        ReportError {
            kind: error.kind.code().to_string(),
            label: error.kind.label(),
            file: error.span.file.to_string(),
            line: error.span.line,
            col: error.span.col,
        }
    }

    /// Does a fresh runtime error have this identity?
    pub fn matches(&self, error: &RuntimeError) -> bool {
        self.kind == error.kind.code()
            && self.label == error.kind.label()
            && self.file == *error.span.file
            && self.line == error.span.line
            && self.col == error.span.col
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTrace {
    pub inputs: Vec<ScalarValue>,
    pub handlers: Vec<HandlerRef>,
    pub send_occurrence: u32,
    pub payload: Vec<ScalarValue>,
}

impl ReportTrace {
    /// Rebuild the driver-side trace for a given record id.
    pub fn to_reproduction(&self, record_id: u32) -> ReproductionTrace {
        ReproductionTrace {
            client_inputs: self.inputs.clone(),
            handler_sequence: self.handlers.clone(),
            send_occurrence: self.send_occurrence,
            concrete_payload: self.payload.clone(),
            server_record_id: record_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: u32,
    pub handler_type: String,
    pub error: ReportError,
    pub classification: String,
    pub runs_to_reproduce: Option<u32>,
    pub trace: Option<ReportTrace>,
    pub server_pc: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub program: Option<ProgramInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ReportConfig>,
    pub records: Vec<ReportRecord>,
}

/// Assemble the machine-readable report.
pub fn build_report(
    result: &CampaignResult,
    program: Option<ProgramInfo>,
    config: Option<&CampaignConfig>,
) -> Report {
    let records = result
        .records
        .iter()
        .map(|classified| {
            let record = &classified.record;
            let trace = match &classified.classification {
                Classification::High { trace: Some(t) } => Some(ReportTrace {
                    inputs: t.client_inputs.clone(),
                    handlers: t.handler_sequence.clone(),
                    send_occurrence: t.send_occurrence,
                    payload: t.concrete_payload.clone(),
                }),
                _ => None,
            };
            ReportRecord {
                id: record.record_id,
                handler_type: record.handler.to_string(),
                error: ReportError::of(&record.error),
                classification: if classified.classification.is_high() {
                    "high".to_string()
                } else {
                    "low".to_string()
                },
                runs_to_reproduce: classified.runs_to_reproduce,
                trace,
                server_pc: record.pc.iter().map(|c| c.render()).collect(),
            }
        })
        .collect();
    Report {
        schema: REPORT_SCHEMA.to_string(),
        program,
        config: config.map(ReportConfig::from_campaign),
        records,
    }
}

/// Canonical compact JSON for a report.
pub fn render_report(report: &Report) -> String {
    serde_json::to_string(report).expect("report serialization is infallible")
}

/// Campaign result straight to canonical JSON.
pub fn render_json(
    result: &CampaignResult,
    program: Option<ProgramInfo>,
    config: Option<&CampaignConfig>,
) -> String {
    render_report(&build_report(result, program, config))
}

pub fn parse_report(text: &str) -> Result<Report, ReportParseError> {
    let report: Report =
        serde_json::from_str(text).map_err(|e| ReportParseError::Malformed(e.to_string()))?;
    if report.schema != REPORT_SCHEMA {
        return Err(ReportParseError::Schema { expected: REPORT_SCHEMA, found: report.schema });
    }
    Ok(report)
}

fn error_line(out: &mut String, label: &str) {
    // Explicit error labels may already carry the prefix; don't double it.
    if label.starts_with("ERROR:") {
        let _ = writeln!(out, "{label}");
    } else {
        let _ = writeln!(out, "ERROR: {label}");
    }
}

fn render_values(values: &[ScalarValue]) -> String {
    if values.is_empty() {
        return "none".to_string();
    }
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn render_steps(out: &mut String, steps: &[TriggerStep]) {
    for step in steps {
        let _ = writeln!(
            out,
            "  Triggered handler {} with input(s) {}",
            step.handler.handler_type,
            render_values(&step.inputs)
        );
    }
}

/// The human-readable report: one block per record, ordered by record id;
/// empty campaigns render to empty text.
pub fn render_text(result: &CampaignResult) -> String {
    let mut out = String::new();
    for (index, classified) in result.records.iter().enumerate() {
        if index > 0 {
            out.push('\n');
        }
        let record = &classified.record;
        let span = &record.error.span;
        let _ = writeln!(
            out,
            "(Server): Tester detected error in file \"{}\", at position ({}:{})",
            span.file, span.line, span.col
        );
        error_line(&mut out, &record.error.kind.label());
        if classified.classification.is_high() {
            match &classified.steps {
                Some(steps) if !steps.is_empty() => {
                    let _ = writeln!(out, "Error encountered by triggering the following user events:");
                    render_steps(&mut out, steps);
                }
                _ => {
                    if let Classification::High { trace: Some(t) } = &classified.classification {
                        let _ = writeln!(out, "Error encountered by triggering the following user events:");
                        for handler in &t.handler_sequence {
                            let _ = writeln!(
                                out,
                                "  Triggered handler {} with input(s) none",
                                handler.handler_type
                            );
                        }
                    } else {
                        let _ = writeln!(
                            out,
                            "Error encountered during server startup, before any user events."
                        );
                    }
                }
            }
        } else {
            let _ = writeln!(out, "classification: low-priority");
            let _ = writeln!(out, "server path constraint:");
            for conjunct in &record.pc {
                let _ = writeln!(out, "  {}", conjunct.render());
            }
        }
    }
    out
}

/// Versioned on-disk form of an intra-phase catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogFile {
    pub schema: String,
    pub records: Vec<ServerErrorRecord>,
}

pub fn render_catalog(catalog: &ServerErrorCatalog) -> String {
    let file =
        CatalogFile { schema: CATALOG_SCHEMA.to_string(), records: catalog.records.clone() };
    serde_json::to_string(&file).expect("catalog serialization is infallible")
}

pub fn parse_catalog(text: &str) -> Result<ServerErrorCatalog, ReportParseError> {
    let file: CatalogFile =
        serde_json::from_str(text).map_err(|e| ReportParseError::Malformed(e.to_string()))?;
    if file.schema != CATALOG_SCHEMA {
        return Err(ReportParseError::Schema { expected: CATALOG_SCHEMA, found: file.schema });
    }
    Ok(ServerErrorCatalog { records: file.records })
}
