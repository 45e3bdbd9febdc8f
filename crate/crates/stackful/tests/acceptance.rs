//! End-to-end acceptance checks for the whole toolkit.
//!
//! Each criterion runs sequentially and prints exactly one `pass`/`fail`
//! line; the binary exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::catch_unwind;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use stackful::cli::{corpus_dir, corpus_entries, ExpectedPriority};
use stackful::driver::{intra_phase, replay_trace, run_campaign, CampaignConfig};
use stackful::lang::{enumerate_branch_arms, inject_faults, parse_program, BinOp, Program, Role};
use stackful::machine::{self, HandlerSite, RecordOnly, RunConfig, TraceStep};
use stackful::report::{parse_report, render_json, ProgramInfo};
use stackful::solver::{check_sat, evaluate, Model, SatResult, SolverConfig};
use stackful::symbolic::{Formula, HandlerRef, InputId, ScalarValue, SymbolicValue};

fn main() {
    let criteria: [(u32, fn() -> String); 9] = [
        (1, startup_errors_catalogued_from_three_paths),
        (2, forwarding_pair_confirms_the_known_witness),
        (3, calculator_errors_split_by_client_reachability),
        (4, injected_faults_never_classify_false_high),
        (5, solver_agrees_with_exhaustive_enumeration),
        (6, branch_conditions_replay_under_realized_inputs),
        (7, runs_are_deterministic_and_input_driven),
        (8, high_priority_traces_replay_from_the_report_alone),
        (9, corpus_campaigns_match_expected_classifications),
    ];
    let mut failures = 0;
    for (number, criterion) in criteria {
        match catch_unwind(criterion) {
            Ok(detail) => println!("criterion {number}: pass — {detail}"),
            Err(payload) => {
                failures += 1;
                let message = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".to_string());
                println!("criterion {number}: fail — {message}");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criterion(s) failed");
        std::process::exit(1);
    }
}

fn load_path(path: &Path, role: Role) -> Program {
    let source = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    let name = path.file_name().and_then(|n| n.to_str()).expect("program file name");
    parse_program(&source, role, name)
        .unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
}

fn load(file: &str, role: Role) -> Program {
    load_path(&corpus_dir().join(file), role)
}

/// Every distinct corpus program under its natural role.
fn corpus_programs() -> Vec<(String, Program)> {
    let mut seen = BTreeSet::new();
    let mut programs = Vec::new();
    for entry in corpus_entries() {
        for (path, role) in [(&entry.client, Role::Client), (&entry.server, Role::Server)] {
            let name = path.file_name().and_then(|n| n.to_str()).expect("file name").to_string();
            if seen.insert(name.clone()) {
                programs.push((name, load_path(path, role)));
            }
        }
    }
    programs
}

/// Exploring a server whose only error sits behind two nested guards must
/// produce exactly the three feasible paths, catalog the one error, and leave
/// the canonical constraint sets at the tree's leaves.
fn startup_errors_catalogued_from_three_paths() -> String {
    let started = Instant::now();
    let server = load("fig1.sfl", Role::Server);
    let config = CampaignConfig { max_events: 0, ..CampaignConfig::default() };
    let intra = intra_phase(&server, &config).expect("server exploration");

    assert_eq!(intra.runs, 3, "exactly three distinct paths");
    assert_eq!(intra.catalog.len(), 1, "exactly one catalogued error");
    let record = &intra.catalog.records[0];
    assert!(record.handler.is_top_level(), "the error fires during startup");
    assert_eq!(record.error.kind.label(), "Reached error state");

    let mut leaves = intra.tree.leaf_paths();
    leaves.sort();
    let expected = vec![
        (
            vec!["(= (* in1 2) in0)".to_string(), "(< (+ in1 10) in0)".to_string()],
            "error fig1.sfl:5:13: Reached error state".to_string(),
        ),
        (
            vec!["(= (* in1 2) in0)".to_string(), "(not (< (+ in1 10) in0))".to_string()],
            "completed".to_string(),
        ),
        (vec!["(not (= (* in1 2) in0))".to_string()], "completed".to_string()),
    ];
    assert_eq!(leaves, expected, "leaf path constraints render canonically");

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    format!("3 paths, 1 error, canonical leaf constraints ({elapsed:.2?})")
}

/// The forwarding client/server pair end to end: one two-conjunct record,
/// confirmed high within 50 runs, with a stored model and the independently
/// known witness (18, 1, 19, 1) both satisfying the joined formula.
fn forwarding_pair_confirms_the_known_witness() -> String {
    let started = Instant::now();
    let client = load("listing6-client.sfl", Role::Client);
    let server = load("listing6-server.sfl", Role::Server);
    let config = CampaignConfig::default();
    let result = run_campaign(&client, &server, &config).expect("campaign");

    assert_eq!(result.records.len(), 1, "exactly one catalogued error");
    let classified = &result.records[0];
    let rendered: Vec<String> = classified.record.pc.iter().map(|c| c.render()).collect();
    assert_eq!(rendered, vec!["(= in1 1)", "(< 15 in0)"], "two-conjunct branch formula");

    assert!(classified.classification.is_high(), "classified high priority");
    let runs = classified.runs_to_reproduce.expect("confirmation run count recorded");
    assert!(runs <= 50, "confirmed within 50 client runs, took {runs}");

    let joined = classified.joined_formula.as_ref().expect("joined formula stored");
    let model = classified.model.as_ref().expect("model stored");
    let witness: Model = [(0, 18), (1, 1), (2, 19), (3, 1)]
        .into_iter()
        .map(|(id, v)| (InputId(id), ScalarValue::Int(v)))
        .collect();
    for conjunct in joined.iter() {
        assert_eq!(
            evaluate(conjunct, model),
            Ok(ScalarValue::Bool(true)),
            "stored model satisfies {conjunct}"
        );
        assert_eq!(
            evaluate(conjunct, &witness),
            Ok(ScalarValue::Bool(true)),
            "known witness satisfies {conjunct}"
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    format!("high in {runs} runs; model and witness satisfy the {}-conjunct join ({elapsed:.2?})", joined.len())
}

/// The calculator's division error is client-reachable, its unknown-operator
/// error is not; both must classify accordingly within a 200-run budget.
fn calculator_errors_split_by_client_reachability() -> String {
    let client = load("calculator-client.sfl", Role::Client);
    let server = load("calculator-server.sfl", Role::Server);
    let config = CampaignConfig { inter_budget: 200, ..CampaignConfig::default() };
    let result = run_campaign(&client, &server, &config).expect("campaign");

    let mut by_label: BTreeMap<String, &stackful::driver::ClassifiedRecord> = BTreeMap::new();
    for classified in &result.records {
        by_label.insert(classified.record.error.kind.label(), classified);
    }
    assert_eq!(
        by_label.keys().collect::<Vec<_>>(),
        ["Dividing by zero", "Unknown operator"],
        "both catalogued errors present"
    );

    let division = by_label["Dividing by zero"];
    assert!(division.classification.is_high(), "division by zero is client-reachable");
    let runs = division.runs_to_reproduce.expect("reproduction run count recorded");

    let unknown = by_label["Unknown operator"];
    assert!(!unknown.classification.is_high(), "unknown operator stays low priority");
    assert_eq!(unknown.runs_to_reproduce, None);

    format!("division-by-zero high (reproduced after {runs} runs), unknown-operator low")
}

/// Twenty seeded fault injections into the two validating servers: faults in
/// the client-unreachable arm must never classify high, faults in reachable
/// arms must confirm (allowing at most two budget misses, each of which must
/// confirm once the client budget is doubled).
fn injected_faults_never_classify_false_high() -> String {
    let pairs = [
        ("subsumed-check-a-client.sfl", "subsumed-check-a-server.sfl"),
        ("subsumed-check-b-client.sfl", "subsumed-check-b-server.sfl"),
    ];
    let mut discovered = 0usize;
    let mut dead_lows = 0usize;
    let mut highs = 0usize;
    let mut misses: Vec<(usize, u64, String)> = Vec::new();

    for (pair_index, (client_file, server_file)) in pairs.iter().enumerate() {
        let client = load(client_file, Role::Client);
        let original = load(server_file, Role::Server);
        // Both servers guard their handler with an outer `if` whose then-arm
        // the client's own validation makes unreachable; in pre-order that
        // dead region is arm 0.
        let arms = enumerate_branch_arms(&original);
        for seed in 0..10u64 {
            let (injected, faults) = inject_faults(&original, seed, 0.5);
            let result =
                run_campaign(&client, &injected, &CampaignConfig::default()).expect("campaign");
            for classified in &result.records {
                let label = classified.record.error.kind.label();
                let Some(fault) = faults.iter().find(|f| f.label == label) else { continue };
                discovered += 1;
                let arm = arms
                    .iter()
                    .position(|(site, arm)| *site == fault.site && *arm == fault.branch_arm)
                    .expect("fault descriptor maps to an enumerated arm");
                if arm == 0 {
                    assert!(
                        !classified.classification.is_high(),
                        "dead-region fault {label} (server {server_file}, seed {seed}) must stay low"
                    );
                    dead_lows += 1;
                } else if classified.classification.is_high() {
                    highs += 1;
                } else {
                    misses.push((pair_index, seed, label));
                }
            }
        }
    }

    assert!(
        misses.len() <= 2,
        "at most two reachable faults may go unconfirmed at the default budget: {misses:?}"
    );
    for (pair_index, seed, label) in &misses {
        let (client_file, server_file) = pairs[*pair_index];
        let client = load(client_file, Role::Client);
        let original = load(server_file, Role::Server);
        let (injected, _) = inject_faults(&original, *seed, 0.5);
        let config = CampaignConfig {
            inter_budget: CampaignConfig::default().inter_budget * 2,
            ..CampaignConfig::default()
        };
        let result = run_campaign(&client, &injected, &config).expect("campaign");
        let classified = result
            .records
            .iter()
            .find(|c| c.record.error.kind.label() == *label)
            .expect("missed fault rediscovered");
        assert!(
            classified.classification.is_high(),
            "fault {label} (seed {seed}) must confirm at the doubled budget"
        );
    }
    assert!(
        dead_lows > 0 && highs > 0,
        "injection exercised both dead and reachable arms ({discovered} discovered)"
    );
    format!(
        "{discovered} injected faults discovered over 20 campaigns: {dead_lows} dead-region low, \
         {highs} high, {} confirmed only at doubled budget; zero false highs",
        misses.len()
    )
}

fn random_arith(rng: &mut ChaCha8Rng, inputs: u32, depth: u32) -> SymbolicValue {
    if depth == 0 || rng.next_u64() % 2 == 0 {
        if rng.next_u64() % 2 == 0 {
            SymbolicValue::int((rng.next_u64() % 17) as i64 - 8)
        } else {
            SymbolicValue::input(InputId((rng.next_u64() % inputs as u64) as u32))
        }
    } else {
        let op = [BinOp::Add, BinOp::Sub, BinOp::Mul][(rng.next_u64() % 3) as usize];
        let left = random_arith(rng, inputs, depth - 1);
        let right = random_arith(rng, inputs, depth - 1);
        SymbolicValue::binary(op, left, right).expect("integer operands")
    }
}

fn random_conjunct(rng: &mut ChaCha8Rng, inputs: u32) -> SymbolicValue {
    let op = [BinOp::Eq, BinOp::Lt, BinOp::Le][(rng.next_u64() % 3) as usize];
    let left = random_arith(rng, inputs, 2);
    let right = random_arith(rng, inputs, 2);
    let comparison = SymbolicValue::binary(op, left, right).expect("integer comparison");
    if rng.next_u64() % 2 == 0 {
        comparison.negate().expect("boolean negation")
    } else {
        comparison
    }
}

/// Does any assignment within the bound satisfy every conjunct?
fn exhaustive_sat(formula: &Formula, bound: i64) -> bool {
    fn search(inputs: &[InputId], next: usize, bound: i64, formula: &Formula, model: &mut Model) -> bool {
        if next == inputs.len() {
            return formula
                .iter()
                .all(|conjunct| evaluate(conjunct, model) == Ok(ScalarValue::Bool(true)));
        }
        for value in -bound..=bound {
            model.insert(inputs[next], ScalarValue::Int(value));
            if search(inputs, next + 1, bound, formula, model) {
                return true;
            }
        }
        model.remove(&inputs[next]);
        false
    }
    let inputs = formula.free_inputs();
    search(&inputs, 0, bound, formula, &mut Model::new())
}

/// 500 random conjunctions over up to three integer inputs: the solver's
/// verdict must agree with exhaustive enumeration, and every model it returns
/// must actually satisfy the formula.
fn solver_agrees_with_exhaustive_enumeration() -> String {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_50_1E);
    let bound = 8;
    let config = SolverConfig { bound, ..SolverConfig::default() };
    let mut sat_count = 0u32;
    for case in 0..500 {
        let inputs = 1 + (rng.next_u64() % 3) as u32;
        let conjuncts = 1 + (rng.next_u64() % 3) as usize;
        let formula =
            Formula::new((0..conjuncts).map(|_| random_conjunct(&mut rng, inputs)).collect());
        let oracle = exhaustive_sat(&formula, bound);
        match check_sat(&formula, &config) {
            SatResult::Sat(model) => {
                assert!(oracle, "case {case}: solver found a model for {formula}, oracle did not");
                for conjunct in formula.iter() {
                    assert_eq!(
                        evaluate(conjunct, &model),
                        Ok(ScalarValue::Bool(true)),
                        "case {case}: returned model must satisfy {conjunct}"
                    );
                }
                sat_count += 1;
            }
            SatResult::Unsat => {
                assert!(!oracle, "case {case}: solver reported unsat for satisfiable {formula}");
            }
            SatResult::Unknown(reason) => {
                panic!("case {case}: unexpected unknown ({reason:?}) for {formula}");
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    format!("500/500 verdicts agree ({sat_count} sat, all models check out, {elapsed:.2?})")
}

/// Across 200 randomized corpus runs, every recorded branch condition must
/// evaluate, under the run's realized inputs, to exactly the direction the
/// concrete execution took.
fn branch_conditions_replay_under_realized_inputs() -> String {
    let programs = corpus_programs();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0_11_51_57);
    let mut branches = 0u64;
    for case in 0..200usize {
        let (name, program) = &programs[case % programs.len()];
        let discovery =
            machine::run(program, Vec::new(), Vec::new(), &RunConfig::with_seed(rng.next_u64()), &mut RecordOnly);
        let registered: Vec<HandlerRef> = discovery
            .steps
            .iter()
            .filter_map(|step| match step {
                TraceStep::Register { handler, .. } => Some(handler.clone()),
                _ => None,
            })
            .collect();
        let schedule: Vec<HandlerRef> = if registered.is_empty() {
            Vec::new()
        } else {
            (0..rng.next_u64() % 4)
                .map(|_| registered[(rng.next_u64() % registered.len() as u64) as usize].clone())
                .collect()
        };
        let outcome = machine::run(
            program,
            Vec::new(),
            schedule,
            &RunConfig::with_seed(rng.next_u64()),
            &mut RecordOnly,
        );
        let model: Model = outcome
            .realized_inputs
            .iter()
            .enumerate()
            .map(|(k, v)| (InputId(k as u32), v.scalar().expect("inputs are scalar")))
            .collect();
        for step in &outcome.steps {
            if let TraceStep::Branch { cond, taken, .. } = step {
                assert_eq!(
                    evaluate(cond, &model),
                    Ok(ScalarValue::Bool(*taken)),
                    "run {case} ({name}): {cond} must evaluate to the taken direction"
                );
                branches += 1;
            }
        }
    }
    assert!(branches > 0, "the corpus runs exercised branches");
    format!("200 runs, {branches} branch steps consistent with their conditions")
}

/// Same program, same seed, same schedule: byte-identical traces. Feeding the
/// realized inputs back in reproduces the path constraint exactly, whatever
/// the seed.
fn runs_are_deterministic_and_input_driven() -> String {
    let programs = corpus_programs();
    let mut replays = 0u32;
    for (name, program) in &programs {
        for seed in 0..10u64 {
            let discovery = machine::run(
                program,
                Vec::new(),
                Vec::new(),
                &RunConfig::with_seed(seed),
                &mut RecordOnly,
            );
            let schedule: Vec<HandlerRef> = discovery
                .steps
                .iter()
                .filter_map(|step| match step {
                    TraceStep::Register { handler, .. } => Some(handler.clone()),
                    _ => None,
                })
                .collect();
            let first = machine::run(
                program,
                Vec::new(),
                schedule.clone(),
                &RunConfig::with_seed(seed),
                &mut RecordOnly,
            );
            let second = machine::run(
                program,
                Vec::new(),
                schedule.clone(),
                &RunConfig::with_seed(seed),
                &mut RecordOnly,
            );
            assert_eq!(
                first.trace_lines(),
                second.trace_lines(),
                "{name} seed {seed}: repeated runs serialize identically"
            );
            let replay = machine::run(
                program,
                first.realized_inputs.clone(),
                schedule,
                &RunConfig::with_seed(seed.wrapping_add(0x5EED)),
                &mut RecordOnly,
            );
            let render = |pc: &[stackful::symbolic::Constraint]| -> Vec<String> {
                pc.iter().map(|c| c.render()).collect()
            };
            assert_eq!(
                render(&replay.pc),
                render(&first.pc),
                "{name} seed {seed}: realized inputs reproduce the path constraint"
            );
            replays += 1;
        }
    }
    format!("{} programs x 10 seeds: identical traces, {replays} input-driven replays", programs.len())
}

/// Round-trip every campaign through its JSON report: each high-priority
/// record with a trace must re-trigger the same error identity when replayed
/// from nothing but the parsed report.
fn high_priority_traces_replay_from_the_report_alone() -> String {
    let mut replayed = 0u32;
    for entry in corpus_entries() {
        let client = load_path(&entry.client, Role::Client);
        let server = load_path(&entry.server, Role::Server);
        let config = CampaignConfig {
            seed: entry.seed,
            intra_budget: 50,
            inter_budget: 200,
            ..CampaignConfig::default()
        };
        let result = run_campaign(&client, &server, &config).expect("campaign");
        let info = ProgramInfo {
            client: entry.client.file_name().unwrap().to_string_lossy().into_owned(),
            server: entry.server.file_name().unwrap().to_string_lossy().into_owned(),
        };
        let json = render_json(&result, Some(info), Some(&config));
        let report = parse_report(&json).expect("report parses back");
        let stored = report.config.as_ref().expect("config embedded").to_campaign();
        for record in &report.records {
            if record.classification != "high" {
                continue;
            }
            // Startup errors carry no trace; there is nothing to replay.
            let Some(trace) = &record.trace else { continue };
            let handler = HandlerSite::from_str(&record.handler_type).expect("handler site");
            let reproduction = trace.to_reproduction(record.id);
            let error = replay_trace(&client, &server, &handler, &reproduction, stored.seed, &stored)
                .unwrap_or_else(|| {
                    panic!("{}: record {} trace must re-trigger an error", entry.name, record.id)
                });
            assert!(
                record.error.matches(&error),
                "{}: record {} replay must match the reported identity",
                entry.name,
                record.id
            );
            replayed += 1;
        }
    }
    assert!(replayed > 0, "the corpus produced replayable high-priority records");
    format!("{replayed} high-priority traces re-triggered their exact errors from the report")
}

/// Every corpus entry, pinned seed, 50 server runs / 200 client runs: the
/// final classification of every catalogued error matches the table shipped
/// with the corpus, in under a minute total.
fn corpus_campaigns_match_expected_classifications() -> String {
    let started = Instant::now();
    let entries = corpus_entries();
    assert_eq!(entries.len(), 7, "the corpus ships seven program pairs");
    let mut total_records = 0usize;
    for entry in &entries {
        let client = load_path(&entry.client, Role::Client);
        let server = load_path(&entry.server, Role::Server);
        let config = CampaignConfig {
            seed: entry.seed,
            intra_budget: 50,
            inter_budget: 200,
            ..CampaignConfig::default()
        };
        let result = run_campaign(&client, &server, &config).expect("campaign");
        let found: BTreeMap<String, bool> = result
            .records
            .iter()
            .map(|c| (c.record.error.kind.label(), c.classification.is_high()))
            .collect();
        let expected: BTreeMap<String, bool> = entry
            .expected
            .iter()
            .map(|(label, priority)| (label.to_string(), *priority == ExpectedPriority::High))
            .collect();
        assert_eq!(found, expected, "{}: classifications match the corpus table", entry.name);
        total_records += result.records.len();
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    format!("7 campaigns, {total_records} records all classified as expected ({elapsed:.2?})")
}
