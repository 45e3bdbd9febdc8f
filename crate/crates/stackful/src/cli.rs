//! Command-line interface and the benchmark corpus.
//!
//! Subcommands: `run` executes one machine run and prints its trace,
//! `test-server` runs the server-only phase and writes the error catalog,
//! `test-full` runs both phases and prints the classified report, `inject`
//! plants seeded faults in branch arms, and `export-smt` prints a recorded
//! error's branch constraints as an SMT-LIB script. Settings resolve with
//! the precedence CLI flag > configuration file > built-in default.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::driver::{intra_phase, run_campaign, CampaignConfig};
use crate::lang::{
    inject_faults, parse_program, render_program, validate, FaultDescriptor, Name, Program, Role,
};
use crate::machine::{run, RecordOnly, RunConfig, Termination, TraceStep};
use crate::report::{
    build_report, parse_catalog, render_catalog, render_report, render_text, ProgramInfo,
};
use crate::selector::StrategyKind;
use crate::solver::to_smtlib;
use crate::symbolic::{branch_formula, ConcreteValue, HandlerRef};

/// Schema tag for fault-injection manifests.
pub const MANIFEST_SCHEMA: &str = "stackful-mini-manifest/1";

#[derive(Debug, Parser)]
#[command(
    name = "stackful",
    version,
    about = "Concolic tester for a miniature client/server language"
)]
pub struct Cli {
    /// Configuration file with `key = value` lines (defaults to
    /// ./stackful.conf when present).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one run of a program and print its trace.
    Run {
        /// Program file (`.sfl`).
        file: PathBuf,
        /// Pending inputs consumed before any random draw (comma-separated
        /// integers).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        inputs: Vec<i64>,
        /// Handler schedule: comma-separated `type` or `type#ordinal`.
        #[arg(long, value_delimiter = ',')]
        handlers: Vec<String>,
        /// Seed for unpinned input draws.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Explore a server in isolation and write its error catalog.
    TestServer {
        /// Server program file.
        server: PathBuf,
        /// Run budget for the exploration.
        #[arg(long)]
        budget: Option<u32>,
        /// Campaign seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Catalog output path.
        #[arg(long, default_value = "catalog.json")]
        out: PathBuf,
    },
    /// Run the two-phase campaign on a client/server pair and print the
    /// classified report.
    TestFull {
        /// Client program file.
        client: PathBuf,
        /// Server program file.
        server: PathBuf,
        /// Run budget for the server-only phase.
        #[arg(long)]
        intra_budget: Option<u32>,
        /// Run budget for the client-driven phase.
        #[arg(long)]
        inter_budget: Option<u32>,
        /// Exploration strategy: `brute-force` or `rw-conflict`.
        #[arg(long, value_parser = StrategyKind::from_str)]
        strategy: Option<StrategyKind>,
        /// Campaign seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Cap on scheduled events per suggestion.
        #[arg(long)]
        max_events: Option<u32>,
        /// Only explore schedules extending this comma-separated
        /// handler-type prefix (repeatable).
        #[arg(long = "prefix", value_name = "TYPES")]
        prefixes: Vec<String>,
        /// Concurrent runs per exploration batch.
        #[arg(long)]
        jobs: Option<u32>,
        /// Write the JSON report to this path.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Inject seeded faults into a server's branch arms.
    Inject {
        /// Server program file.
        server: PathBuf,
        /// Seed for the per-arm draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-arm injection probability in [0, 1].
        #[arg(long, default_value_t = 0.5)]
        prob: f64,
        /// Mutated program path; the descriptor manifest lands next to it
        /// as `<stem>.manifest.json`.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Print one catalog record's branch constraints as SMT-LIB.
    ExportSmt {
        /// Catalog file written by `test-server`.
        catalog: PathBuf,
        /// Record to export.
        record_id: u32,
    },
}

/// How a command failed, deciding the process exit code.
#[derive(Debug)]
enum CliFailure {
    /// Bad input: unreadable file, malformed program, bad flag value.
    Usage(String),
    /// Internal invariant violation (execution-tree conflicts and the like).
    Internal(String),
}

impl CliFailure {
    fn report(self) -> ExitCode {
        match self {
            CliFailure::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            CliFailure::Internal(msg) => {
                eprintln!("internal error: {msg}");
                ExitCode::from(1)
            }
        }
    }
}

/// Entry point for the `stackful` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(failure) => failure.report(),
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliFailure> {
    let file_config = load_config(cli.config.as_deref()).map_err(CliFailure::Usage)?;
    match cli.command {
        Command::Run { file, inputs, handlers, seed } => {
            cmd_run(&file_config, &file, &inputs, &handlers, seed)
        }
        Command::TestServer { server, budget, seed, out } => {
            cmd_test_server(&file_config, &server, budget, seed, &out)
        }
        Command::TestFull {
            client,
            server,
            intra_budget,
            inter_budget,
            strategy,
            seed,
            max_events,
            prefixes,
            jobs,
            report,
        } => {
            let flags = FullFlags {
                intra_budget,
                inter_budget,
                strategy,
                seed,
                max_events,
                prefixes,
                jobs,
                report,
            };
            cmd_test_full(&file_config, &client, &server, flags)
        }
        Command::Inject { server, seed, prob, out } => cmd_inject(&server, seed, prob, &out),
        Command::ExportSmt { catalog, record_id } => cmd_export_smt(&catalog, record_id),
    }
}

/// Settings read from a `key = value` configuration file. Every field is
/// optional; unset fields fall through to the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub budget: Option<u32>,
    pub intra_budget: Option<u32>,
    pub inter_budget: Option<u32>,
    pub bound: Option<i64>,
    pub max_events: Option<u32>,
    pub strategy: Option<StrategyKind>,
    pub step_limit: Option<u64>,
    pub jobs: Option<u32>,
}

/// Parse configuration text. Blank lines and `#` comments are ignored;
/// unknown keys are errors so typos fail loudly.
pub fn parse_config_text(text: &str) -> Result<FileConfig, String> {
    fn field<T: FromStr>(line_no: usize, key: &str, value: &str) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        value.parse().map_err(|e| format!("line {line_no}: invalid {key}: {e}"))
    }

    let mut out = FileConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {line_no}: expected `key = value`"));
        };
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "seed" => out.seed = Some(field(line_no, "seed", value)?),
            "budget" => out.budget = Some(field(line_no, "budget", value)?),
            "intra_budget" => out.intra_budget = Some(field(line_no, "intra_budget", value)?),
            "inter_budget" => out.inter_budget = Some(field(line_no, "inter_budget", value)?),
            "bound" => out.bound = Some(field(line_no, "bound", value)?),
            "max_events" => out.max_events = Some(field(line_no, "max_events", value)?),
            "strategy" => out.strategy = Some(field(line_no, "strategy", value)?),
            "step_limit" => out.step_limit = Some(field(line_no, "step_limit", value)?),
            "jobs" => out.jobs = Some(field(line_no, "jobs", value)?),
            other => return Err(format!("line {line_no}: unknown key `{other}`")),
        }
    }
    Ok(out)
}

fn load_config(explicit: Option<&Path>) -> Result<FileConfig, String> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let default = PathBuf::from("stackful.conf");
            if !default.exists() {
                return Ok(FileConfig::default());
            }
            default
        }
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config_text(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Overlay file-config values onto the campaign defaults. The plain
/// `budget` key is shorthand for the server-only phase's budget.
fn apply_file_config(config: &mut CampaignConfig, fc: &FileConfig) {
    if let Some(v) = fc.seed {
        config.seed = v;
    }
    if let Some(v) = fc.budget {
        config.intra_budget = v;
    }
    if let Some(v) = fc.intra_budget {
        config.intra_budget = v;
    }
    if let Some(v) = fc.inter_budget {
        config.inter_budget = v;
    }
    if let Some(v) = fc.bound {
        config.input_bound = v;
        config.solver.bound = v;
    }
    if let Some(v) = fc.max_events {
        config.max_events = v;
    }
    if let Some(v) = fc.strategy {
        config.strategy = v;
    }
    if let Some(v) = fc.step_limit {
        config.step_limit = v;
    }
    if let Some(v) = fc.jobs {
        config.jobs = v;
    }
}

/// Read, parse, and validate a program file. Any violation is fatal here;
/// callers that tolerate specific violations should parse directly.
pub fn load_program(path: &Path, role: Role) -> Result<Program, String> {
    let src = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("program");
    let program =
        parse_program(&src, role, name).map_err(|e| format!("{}: {e}", path.display()))?;
    let violations = validate(&program);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(format!("{}: invalid program\n{}", path.display(), lines.join("\n")));
    }
    Ok(program)
}

/// Turn `type` / `type#ordinal` schedule entries into handler references.
/// Bare type names resolve against the registrations observed on an
/// empty-schedule discovery run.
fn resolve_schedule(
    program: &Program,
    names: &[String],
    config: &RunConfig,
) -> Result<Vec<HandlerRef>, String> {
    let mut registered: Option<Vec<HandlerRef>> = None;
    let mut schedule = Vec::with_capacity(names.len());
    for name in names {
        if name.contains('#') {
            schedule.push(name.parse::<HandlerRef>()?);
            continue;
        }
        let regs = registered.get_or_insert_with(|| {
            let outcome = run(program, Vec::new(), Vec::new(), config, &mut RecordOnly);
            outcome
                .steps
                .iter()
                .filter_map(|s| match s {
                    TraceStep::Register { handler, .. } => Some(handler.clone()),
                    _ => None,
                })
                .collect()
        });
        let found = regs
            .iter()
            .find(|h| h.handler_type.as_ref() == name.as_str())
            .ok_or_else(|| format!("no handler of type `{name}` is registered"))?;
        schedule.push(found.clone());
    }
    Ok(schedule)
}

fn cmd_run(
    fc: &FileConfig,
    file: &Path,
    inputs: &[i64],
    handlers: &[String],
    seed: Option<u64>,
) -> Result<ExitCode, CliFailure> {
    let program = load_program(file, Role::Client).map_err(CliFailure::Usage)?;
    let config = RunConfig {
        seed: seed.or(fc.seed).unwrap_or(0),
        step_limit: fc.step_limit.unwrap_or(100_000),
        input_bound: fc.bound.unwrap_or(64),
    };
    let schedule = resolve_schedule(&program, handlers, &config).map_err(CliFailure::Usage)?;
    let pending: Vec<ConcreteValue> = inputs.iter().map(|v| ConcreteValue::Int(*v)).collect();
    let outcome = run(&program, pending, schedule, &config, &mut RecordOnly);

    let lines = outcome.trace_lines();
    let (summary, rest) = lines.split_last().expect("trace has a summary line");
    let (inputs_line, steps) = rest.split_last().expect("trace has an inputs line");
    for line in steps {
        println!("{line}");
    }
    for constraint in &outcome.pc {
        println!("pc: {}", constraint.render());
    }
    println!("{inputs_line}");
    if let Termination::Failed { error, .. } = &outcome.termination {
        println!("ERROR: {}", error.kind.label());
    }
    println!("{summary}");

    Ok(match outcome.termination {
        Termination::Completed | Termination::StoppedAtSend { .. } => ExitCode::SUCCESS,
        _ => ExitCode::from(1),
    })
}

fn cmd_test_server(
    fc: &FileConfig,
    server: &Path,
    budget: Option<u32>,
    seed: Option<u64>,
    out: &Path,
) -> Result<ExitCode, CliFailure> {
    let program = load_program(server, Role::Server).map_err(CliFailure::Usage)?;
    let mut config = CampaignConfig::default();
    apply_file_config(&mut config, fc);
    if let Some(b) = budget {
        config.intra_budget = b;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let outcome =
        intra_phase(&program, &config).map_err(|e| CliFailure::Internal(e.to_string()))?;
    fs::write(out, render_catalog(&outcome.catalog))
        .map_err(|e| CliFailure::Usage(format!("{}: {e}", out.display())))?;
    let n = outcome.catalog.len();
    println!("{n} error{} recorded", if n == 1 { "" } else { "s" });
    Ok(ExitCode::SUCCESS)
}

struct FullFlags {
    intra_budget: Option<u32>,
    inter_budget: Option<u32>,
    strategy: Option<StrategyKind>,
    seed: Option<u64>,
    max_events: Option<u32>,
    prefixes: Vec<String>,
    jobs: Option<u32>,
    report: Option<PathBuf>,
}

fn cmd_test_full(
    fc: &FileConfig,
    client: &Path,
    server: &Path,
    flags: FullFlags,
) -> Result<ExitCode, CliFailure> {
    let client_program = load_program(client, Role::Client).map_err(CliFailure::Usage)?;
    let server_program = load_program(server, Role::Server).map_err(CliFailure::Usage)?;

    let mut config = CampaignConfig::default();
    apply_file_config(&mut config, fc);
    if let Some(v) = flags.seed {
        config.seed = v;
    }
    if let Some(v) = flags.intra_budget {
        config.intra_budget = v;
    }
    if let Some(v) = flags.inter_budget {
        config.inter_budget = v;
    }
    if let Some(v) = flags.strategy {
        config.strategy = v;
    }
    if let Some(v) = flags.max_events {
        config.max_events = v;
    }
    if let Some(v) = flags.jobs {
        config.jobs = v;
    }
    if !flags.prefixes.is_empty() {
        config.prefixes = flags
            .prefixes
            .iter()
            .map(|p| p.split(',').map(|n| Name::from(n.trim())).collect())
            .collect();
    }
    if config.jobs > 1 {
        eprintln!(
            "warning: running with {} jobs; exploration order may differ from \
             a single-threaded campaign (classifications are unaffected)",
            config.jobs
        );
    }

    let result = run_campaign(&client_program, &server_program, &config)
        .map_err(|e| CliFailure::Internal(e.to_string()))?;

    let info = ProgramInfo {
        client: client.display().to_string(),
        server: server.display().to_string(),
    };
    let report = build_report(&result, Some(info), Some(&config));
    if let Some(path) = &flags.report {
        fs::write(path, render_report(&report))
            .map_err(|e| CliFailure::Usage(format!("{}: {e}", path.display())))?;
    }
    let text = render_text(&result);
    if !text.is_empty() {
        println!("{text}");
    }
    Ok(ExitCode::SUCCESS)
}

/// On-disk companion document for an injected program.
#[derive(Debug, Serialize, Deserialize)]
pub struct InjectionManifest {
    pub schema: String,
    pub seed: u64,
    pub probability: f64,
    pub descriptors: Vec<FaultDescriptor>,
}

/// Where the manifest for an injected program lands: `<stem>.manifest.json`
/// next to the program file.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn cmd_inject(server: &Path, seed: u64, prob: f64, out: &Path) -> Result<ExitCode, CliFailure> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(CliFailure::Usage(format!("--prob must lie in [0, 1], got {prob}")));
    }
    let program = load_program(server, Role::Server).map_err(CliFailure::Usage)?;
    let (injected, descriptors) = inject_faults(&program, seed, prob);
    fs::write(out, render_program(&injected))
        .map_err(|e| CliFailure::Usage(format!("{}: {e}", out.display())))?;
    let manifest = InjectionManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        seed,
        probability: prob,
        descriptors,
    };
    let manifest_out = manifest_path(out);
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliFailure::Internal(e.to_string()))?;
    fs::write(&manifest_out, body)
        .map_err(|e| CliFailure::Usage(format!("{}: {e}", manifest_out.display())))?;
    let n = manifest.descriptors.len();
    println!("{n} fault{} injected", if n == 1 { "" } else { "s" });
    Ok(ExitCode::SUCCESS)
}

fn cmd_export_smt(catalog_path: &Path, record_id: u32) -> Result<ExitCode, CliFailure> {
    let text = fs::read_to_string(catalog_path)
        .map_err(|e| CliFailure::Usage(format!("{}: {e}", catalog_path.display())))?;
    let catalog = parse_catalog(&text)
        .map_err(|e| CliFailure::Usage(format!("{}: {e}", catalog_path.display())))?;
    let record = catalog
        .records
        .iter()
        .find(|r| r.record_id == record_id)
        .ok_or_else(|| {
            CliFailure::Usage(format!("no record {record_id} in {}", catalog_path.display()))
        })?;
    print!("{}", to_smtlib(&branch_formula(&record.pc)));
    Ok(ExitCode::SUCCESS)
}

/// Expected classification for one error label of a corpus entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedPriority {
    High,
    Low,
}

/// One benchmark program pair with its pinned seed and expected outcome.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub client: PathBuf,
    pub server: PathBuf,
    pub seed: u64,
    /// Error label (as written in the server source) to expected priority.
    pub expected: BTreeMap<&'static str, ExpectedPriority>,
    pub notes: &'static str,
}

/// Directory holding the shipped `.sfl` benchmark programs.
pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// The benchmark corpus: program pairs, pinned seeds, and the
/// classification each reachable error is expected to receive.
pub fn corpus_entries() -> Vec<CorpusEntry> {
    use ExpectedPriority::{High, Low};
    let dir = corpus_dir();
    let entry = |name: &'static str,
                 client: &str,
                 server: &str,
                 seed: u64,
                 expected: &[(&'static str, ExpectedPriority)],
                 notes: &'static str| CorpusEntry {
        name,
        client: dir.join(client),
        server: dir.join(server),
        seed,
        expected: expected.iter().copied().collect(),
        notes,
    };
    vec![
        entry(
            "fig1",
            "null.sfl",
            "fig1.sfl",
            0,
            &[("Reached error state", High)],
            "two nested guards in front of one startup error",
        ),
        entry(
            "listing1",
            "null.sfl",
            "listing1.sfl",
            0,
            &[],
            "two handlers sharing a counter; no reachable error",
        ),
        entry(
            "listing6",
            "listing6-client.sfl",
            "listing6-server.sfl",
            0,
            &[("Reached an error state", High)],
            "client forwards (x+1, y); server faults when y = 1 and x+1 > 15",
        ),
        entry(
            "calculator",
            "calculator-client.sfl",
            "calculator-server.sfl",
            0,
            &[("Dividing by zero", High), ("Unknown operator", Low)],
            "client only emits operator codes 1-4, so the unknown-operator arm \
             is unreachable through the client",
        ),
        entry(
            "subsumed-check-a",
            "subsumed-check-a-client.sfl",
            "subsumed-check-a-server.sfl",
            0,
            &[("Negative update", Low), ("Oversized update", High)],
            "client validates v > 0, so the server's negative-update arm is dead",
        ),
        entry(
            "subsumed-check-b",
            "subsumed-check-b-client.sfl",
            "subsumed-check-b-server.sfl",
            0,
            &[("Sum too large", Low), ("Equal operands rejected", High)],
            "client caps both operands below 10, so their sum never exceeds 18",
        ),
        entry(
            "gameoflife",
            "null.sfl",
            "gameoflife-server.sfl",
            0,
            &[],
            "branchy stateful rules used by the injection tests; no intrinsic error",
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_parses_every_key() {
        let text = "\
            # campaign knobs\n\
            seed = 7\n\
            intra-budget = 40   # dashes normalize to underscores\n\
            inter_budget = 80\n\
            bound = 16\n\
            max_events = 3\n\
            strategy = rw-conflict\n\
            step_limit = 5000\n\
            jobs = 2\n";
        let fc = parse_config_text(text).unwrap();
        assert_eq!(fc.seed, Some(7));
        assert_eq!(fc.intra_budget, Some(40));
        assert_eq!(fc.inter_budget, Some(80));
        assert_eq!(fc.bound, Some(16));
        assert_eq!(fc.max_events, Some(3));
        assert_eq!(fc.strategy, Some(StrategyKind::ReadWriteConflict));
        assert_eq!(fc.step_limit, Some(5000));
        assert_eq!(fc.jobs, Some(2));
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_lines() {
        assert!(parse_config_text("budgetz = 3").is_err());
        assert!(parse_config_text("seed").is_err());
        assert!(parse_config_text("seed = notanumber").is_err());
        assert_eq!(parse_config_text("  \n# only comments\n").unwrap(), FileConfig::default());
    }

    #[test]
    fn file_config_overlays_defaults_but_not_flags() {
        let fc = parse_config_text("seed = 9\nbudget = 33\n").unwrap();
        let mut config = CampaignConfig::default();
        apply_file_config(&mut config, &fc);
        assert_eq!(config.seed, 9);
        assert_eq!(config.intra_budget, 33);
        // A CLI flag wins by being applied after the file config.
        config.intra_budget = 44;
        assert_eq!(config.intra_budget, 44);
    }

    #[test]
    fn manifest_lands_next_to_program() {
        assert_eq!(manifest_path(Path::new("/tmp/mut.sfl")), Path::new("/tmp/mut.manifest.json"));
    }

    #[test]
    fn corpus_files_parse_validate_and_contain_their_labels() {
        for entry in corpus_entries() {
            let client = load_program(&entry.client, Role::Client)
                .unwrap_or_else(|e| panic!("{}: {e}", entry.name));
            let server = load_program(&entry.server, Role::Server)
                .unwrap_or_else(|e| panic!("{}: {e}", entry.name));
            assert_eq!(client.role, Role::Client);
            assert_eq!(server.role, Role::Server);
            let source = fs::read_to_string(&entry.server).unwrap();
            for label in entry.expected.keys() {
                assert!(
                    source.contains(label),
                    "{}: expected label {label:?} not present in server source",
                    entry.name
                );
            }
        }
    }

    #[test]
    fn bare_handler_names_resolve_against_registrations() {
        let entry = &corpus_entries()[1];
        let program = load_program(&entry.server, Role::Server).unwrap();
        let config = RunConfig { seed: 0, step_limit: 10_000, input_bound: 8 };
        let schedule = resolve_schedule(
            &program,
            &["button2".to_string(), "button1#0".to_string()],
            &config,
        )
        .unwrap();
        assert_eq!(schedule[0].to_string(), "button2#1");
        assert_eq!(schedule[1].to_string(), "button1#0");
        assert!(resolve_schedule(&program, &["missing".to_string()], &config).is_err());
    }
}
