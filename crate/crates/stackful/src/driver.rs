//! Two-phase test campaign over a client/server program pair.
//!
//! The intra phase explores the server alone, firing handlers on mock
//! inputs, and catalogs every distinct runtime error it can provoke. The
//! inter phase explores the real client; at each `send` whose type and arity
//! match a still-unclassified record, it conjoins the client's
//! path constraint with the record's and asks the solver whether a real
//! client input can push the server into that error. A satisfiable join is
//! then confirmed end-to-end by replaying the client on the model and
//! invoking the server handler on the concrete payload; only confirmed
//! errors classify as high priority, everything else stays low.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::ast::{Name, Program};
use crate::machine::{
    self, HandlerSite, RecordOnly, RunConfig, RunOutcome, RuntimeError, SendDecision,
    SendObservation, SendPolicy, Termination, TraceStep,
};
use crate::selector::{
    ExecutionTree, PathSuggestion, SelectionLimits, StrategyKind, TreeConflict,
};
use crate::solver::{check_sat, Model, SatResult, SolverConfig};
use crate::symbolic::{
    branch_formula, join_for_send, lift, ConcreteValue, Constraint, Formula, HandlerRef, InputId,
    PathConstraint, ScalarValue,
};

const PHASE_INTRA: u64 = 1;
const PHASE_INTER: u64 = 2;
const PHASE_REPLAY: u64 = 3;
const PHASE_CONFIRM: u64 = 4;
const PHASE_DISCOVERY: u64 = 5;

/// Mix a campaign seed with a phase tag and a per-phase counter into an
/// independent machine seed (splitmix64 finalizer).
pub fn derive_seed(campaign_seed: u64, phase: u64, index: u64) -> u64 {
    let mut z = campaign_seed
        ^ phase.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Knobs for a whole campaign.
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub seed: u64,
    /// Maximum machine runs in the server-only phase.
    pub intra_budget: u32,
    /// Maximum machine runs in the client phase (exploration, replays, and
    /// confirmations all count).
    pub inter_budget: u32,
    /// Maximum scheduled handler invocations per run.
    pub max_events: u32,
    pub step_limit: u64,
    /// Random fallback inputs are drawn from [-input_bound, input_bound].
    pub input_bound: i64,
    pub solver: SolverConfig,
    pub strategy: StrategyKind,
    /// If non-empty, only handler-type sequences extending one of these are
    /// explored.
    pub prefixes: Vec<Vec<Name>>,
    /// Runs launched concurrently per suggestion batch. Results are merged
    /// in batch order, so output is deterministic for a fixed value.
    pub jobs: u32,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 0,
            intra_budget: 250,
            inter_budget: 500,
            max_events: 6,
            step_limit: 100_000,
            input_bound: 64,
            solver: SolverConfig::default(),
            strategy: StrategyKind::BruteForce,
            prefixes: Vec::new(),
            jobs: 1,
        }
    }
}

impl CampaignConfig {
    fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig { seed, step_limit: self.step_limit, input_bound: self.input_bound }
    }

    fn limits(&self) -> SelectionLimits {
        SelectionLimits { max_events: self.max_events, prefixes: self.prefixes.clone() }
    }
}

/// One distinct server error discovered in the intra phase.
///
/// The path constraint is the suffix recorded from the failing handler
/// invocation onward, with inputs renumbered canonically: the handler's own
/// mock parameters first (0..arity), every other input by first occurrence.
/// Two failures with the same error identity and the same canonical branch
/// formula are the same record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerErrorRecord {
    pub record_id: u32,
    pub handler: HandlerSite,
    pub arity: u32,
    pub mock_input_ids: Vec<InputId>,
    pub pc: PathConstraint,
    pub error: RuntimeError,
}

/// Every distinct server error found so far, densely numbered.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ServerErrorCatalog {
    pub records: Vec<ServerErrorRecord>,
}

impl ServerErrorCatalog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records whose handler has the given type, id-ascending.
    pub fn matching<'a>(
        &'a self,
        handler_type: &'a Name,
    ) -> impl Iterator<Item = &'a ServerErrorRecord> {
        self.records.iter().filter(move |r| match &r.handler {
            HandlerSite::Handler(h) => &h.handler_type == handler_type,
            HandlerSite::TopLevel => false,
        })
    }
}

/// Everything needed to re-trigger a confirmed error without a solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionTrace {
    /// Concrete values for every client input draw, in order.
    pub client_inputs: Vec<ScalarValue>,
    /// The client-side handler schedule.
    pub handler_sequence: Vec<HandlerRef>,
    /// Which send occurrence carries the triggering payload.
    pub send_occurrence: u32,
    /// The payload observed at that send.
    pub concrete_payload: Vec<ScalarValue>,
    pub server_record_id: u32,
}

/// One user-visible event of a confirmed reproduction: the handler fired and
/// the concrete inputs it consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerStep {
    pub handler: HandlerRef,
    pub inputs: Vec<ScalarValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Classification {
    /// A real client run drives the server into this error. Top-level server
    /// errors are high priority by definition and carry no trace.
    High { trace: Option<ReproductionTrace> },
    /// No client-triggerable path was found within budget.
    Low,
}

impl Classification {
    pub fn is_high(&self) -> bool {
        matches!(self, Classification::High { .. })
    }
}

/// A catalog record together with its final classification.
#[derive(Debug, Clone)]
pub struct ClassifiedRecord {
    pub record: ServerErrorRecord,
    pub classification: Classification,
    /// Inter-phase machine runs consumed when this record confirmed.
    pub runs_to_reproduce: Option<u32>,
    /// The satisfying assignment of the joined formula, if one was found.
    pub model: Option<Model>,
    pub joined_formula: Option<Formula>,
    /// The confirmed replay as user-event steps, for report rendering.
    pub steps: Option<Vec<TriggerStep>>,
}

#[derive(Debug)]
pub struct CampaignResult {
    pub records: Vec<ClassifiedRecord>,
    pub intra_runs: u32,
    pub inter_runs: u32,
    /// Records left unconfirmed when the budget ran out or exploration was
    /// exhausted; they are the `Low` entries of `records`.
    pub unclassified: Vec<u32>,
    pub server_tree: ExecutionTree,
    pub client_tree: ExecutionTree,
}

impl CampaignResult {
    pub fn high_count(&self) -> usize {
        self.records.iter().filter(|r| r.classification.is_high()).count()
    }

    pub fn low_count(&self) -> usize {
        self.records.len() - self.high_count()
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Tree(#[from] TreeConflict),
}

/// Result of the server-only phase.
#[derive(Debug)]
pub struct IntraOutcome {
    pub catalog: ServerErrorCatalog,
    pub tree: ExecutionTree,
    pub runs: u32,
}

/// Explore the server alone and catalog every distinct error.
pub fn intra_phase(server: &Program, config: &CampaignConfig) -> Result<IntraOutcome, DriverError> {
    let mut tree = ExecutionTree::new();
    let mut catalog = ServerErrorCatalog::default();
    let mut seen: BTreeSet<(RuntimeError, Vec<String>)> = BTreeSet::new();
    let limits = config.limits();
    let mut runs: u32 = 0;
    let mut explore_counter: u64 = 0;

    while runs < config.intra_budget {
        let batch = collect_suggestions(
            &mut tree,
            config,
            &limits,
            (config.intra_budget - runs) as usize,
        );
        if batch.is_empty() {
            break;
        }
        let outcomes = run_batch_recording(server, &batch, config, PHASE_INTRA, &mut explore_counter);
        for outcome in outcomes {
            runs += 1;
            tree.record_run(&outcome)?;
            if let Termination::Failed { error, pc, handler } = &outcome.termination {
                record_failure(&mut catalog, &mut seen, &outcome, error, pc, handler);
            }
        }
    }

    Ok(IntraOutcome { catalog, tree, runs })
}

fn collect_suggestions(
    tree: &mut ExecutionTree,
    config: &CampaignConfig,
    limits: &SelectionLimits,
    remaining: usize,
) -> Vec<PathSuggestion> {
    let want = (config.jobs.max(1) as usize).min(remaining);
    let mut batch = Vec::new();
    while batch.len() < want {
        match tree.next_suggestion(config.strategy, &config.solver, limits) {
            Some(s) => batch.push(s),
            None => break,
        }
    }
    batch
}

/// Run a batch of suggestions under the record-only policy, in parallel when
/// the batch has more than one entry. Outcomes come back in batch order.
fn run_batch_recording(
    program: &Program,
    batch: &[PathSuggestion],
    config: &CampaignConfig,
    phase: u64,
    explore_counter: &mut u64,
) -> Vec<RunOutcome> {
    let seeds: Vec<u64> = batch
        .iter()
        .map(|_| {
            let seed = derive_seed(config.seed, phase, *explore_counter);
            *explore_counter += 1;
            seed
        })
        .collect();
    if batch.len() == 1 {
        let run_config = config.run_config(seeds[0]);
        return vec![machine::run(
            program,
            batch[0].pending_inputs.clone(),
            batch[0].handlers.clone(),
            &run_config,
            &mut RecordOnly,
        )];
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .iter()
            .zip(&seeds)
            .map(|(suggestion, &seed)| {
                let run_config = config.run_config(seed);
                scope.spawn(move || {
                    machine::run(
                        program,
                        suggestion.pending_inputs.clone(),
                        suggestion.handlers.clone(),
                        &run_config,
                        &mut RecordOnly,
                    )
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("machine run panicked")).collect()
    })
}

/// Renumber inputs of `term` through `map`, assigning fresh canonical ids in
/// first-occurrence order.
fn renumber(
    term: &crate::symbolic::SymbolicValue,
    map: &mut BTreeMap<InputId, InputId>,
    next: &mut u32,
) -> crate::symbolic::SymbolicValue {
    term.map_inputs(&mut |id| {
        *map.entry(id).or_insert_with(|| {
            let fresh = InputId(*next);
            *next += 1;
            fresh
        })
    })
}

/// Canonicalize a pc suffix: mock parameter ids become 0..arity, every other
/// input is numbered by first occurrence.
fn canonicalize_pc(suffix: &[Constraint], mock_ids: &[InputId]) -> (PathConstraint, Vec<InputId>) {
    let mut map: BTreeMap<InputId, InputId> = mock_ids
        .iter()
        .enumerate()
        .map(|(k, id)| (*id, InputId(k as u32)))
        .collect();
    let mut next = mock_ids.len() as u32;
    let canonical = suffix
        .iter()
        .map(|constraint| match constraint {
            Constraint::Branch { cond, span } => Constraint::Branch {
                cond: renumber(cond, &mut map, &mut next),
                span: span.clone(),
            },
            Constraint::Registered { .. } => constraint.clone(),
        })
        .collect();
    let canonical_mocks = (0..mock_ids.len() as u32).map(InputId).collect();
    (canonical, canonical_mocks)
}

/// The index into the run's pc at which the last handler invocation started;
/// 0 when the failure was at top level.
fn pc_suffix_start(outcome: &RunOutcome) -> usize {
    let mut pc_index = 0;
    let mut last_event = 0;
    for step in &outcome.steps {
        match step {
            TraceStep::Branch { .. } | TraceStep::Register { .. } => pc_index += 1,
            TraceStep::Event { .. } => last_event = pc_index,
            TraceStep::Send { .. } => {}
        }
    }
    last_event
}

fn record_failure(
    catalog: &mut ServerErrorCatalog,
    seen: &mut BTreeSet<(RuntimeError, Vec<String>)>,
    outcome: &RunOutcome,
    error: &RuntimeError,
    pc: &[Constraint],
    handler: &HandlerSite,
) {
    let mock_ids: Vec<InputId> = match handler {
        HandlerSite::TopLevel => Vec::new(),
        HandlerSite::Handler(_) => {
            let position = outcome.fired_events.saturating_sub(1);
            outcome.handler_input_ids.get(&position).cloned().unwrap_or_default()
        }
    };
    let suffix = &pc[pc_suffix_start(outcome).min(pc.len())..];
    let (canonical_pc, canonical_mocks) = canonicalize_pc(suffix, &mock_ids);
    let key = (error.clone(), branch_formula(&canonical_pc).render_conjuncts());
    if !seen.insert(key) {
        return;
    }
    catalog.records.push(ServerErrorRecord {
        record_id: catalog.records.len() as u32,
        handler: handler.clone(),
        arity: mock_ids.len() as u32,
        mock_input_ids: canonical_mocks,
        pc: canonical_pc,
        error: error.clone(),
    });
}

/// A satisfiable send-time join, remembered by the policy for the driver.
#[derive(Debug, Clone)]
pub struct SendMatch {
    pub record_id: u32,
    pub model: Model,
    pub joined: Formula,
}

/// Conjoin the client path constraint at a send with a server record's,
/// equating payload symbols with the server's mock parameters. Record-side
/// input ids are shifted past every client id created so far; payload slots
/// holding closures contribute no binding.
pub fn build_join(observation: &SendObservation, record: &ServerErrorRecord) -> Formula {
    let offset = observation.inputs_at_send;
    let client_f = branch_formula(&observation.pc_at_send);
    let server_f = branch_formula(&record.pc).map_inputs(&mut |id| InputId(id.0 + offset));
    let mut bindings = Vec::new();
    for (slot, value) in observation.payload.iter().enumerate() {
        let Some(mock) = record.mock_input_ids.get(slot) else { break };
        let mock = InputId(mock.0 + offset);
        let symbol = if value.symbolic.is_empty() {
            if value.concrete.scalar().is_some() {
                lift(&value.concrete)
            } else {
                continue;
            }
        } else {
            value.symbolic.clone()
        };
        bindings.push((mock, symbol));
    }
    join_for_send(&client_f, &bindings, &server_f)
}

/// Memo of `check_sat` results for joined formulas, keyed by record id and
/// the rendered conjuncts, shared across the runs of one inter phase.
/// Exploration keeps crossing the same send prefixes, and re-proving an
/// unsatisfiable join at every visit dominates the phase when a record is
/// never client-reachable. `check_sat` is deterministic, so reuse changes
/// nothing observable.
pub type JoinCache = Mutex<BTreeMap<(u32, Vec<String>), SatResult>>;

/// Send policy that checks each send against the unclassified catalog
/// records of the same handler type and arity, stopping the run at the first
/// satisfiable join.
pub struct CatalogPolicy<'a> {
    records: &'a [ServerErrorRecord],
    unclassified: &'a BTreeSet<u32>,
    solver: &'a SolverConfig,
    cache: &'a JoinCache,
    pub matched: Option<SendMatch>,
}

impl<'a> CatalogPolicy<'a> {
    pub fn new(
        records: &'a [ServerErrorRecord],
        unclassified: &'a BTreeSet<u32>,
        solver: &'a SolverConfig,
        cache: &'a JoinCache,
    ) -> Self {
        CatalogPolicy { records, unclassified, solver, cache, matched: None }
    }

    fn solve_join(&self, record_id: u32, joined: &Formula) -> SatResult {
        let key = (record_id, joined.render_conjuncts());
        if let Some(result) = self.cache.lock().expect("join cache poisoned").get(&key) {
            return result.clone();
        }
        let result = check_sat(joined, self.solver);
        self.cache.lock().expect("join cache poisoned").insert(key, result.clone());
        result
    }
}

impl SendPolicy for CatalogPolicy<'_> {
    fn on_send(&mut self, observation: &SendObservation) -> SendDecision {
        for record in self.records {
            if !self.unclassified.contains(&record.record_id) {
                continue;
            }
            let HandlerSite::Handler(h) = &record.handler else { continue };
            if h.handler_type != observation.handler_type
                || record.arity as usize != observation.payload.len()
            {
                continue;
            }
            let joined = build_join(observation, record);
            if let SatResult::Sat(model) = self.solve_join(record.record_id, &joined) {
                self.matched = Some(SendMatch { record_id: record.record_id, model, joined });
                return SendDecision::Stop { matched: vec![record.record_id] };
            }
        }
        SendDecision::Continue
    }
}

/// Result of the client phase.
#[derive(Debug)]
pub struct InterOutcome {
    pub records: Vec<ClassifiedRecord>,
    pub tree: ExecutionTree,
    pub runs: u32,
    pub unclassified: Vec<u32>,
}

struct Confirmed {
    trace: ReproductionTrace,
    steps: Vec<TriggerStep>,
}

#[derive(Default)]
struct ClassifiedParts {
    classification: Option<Classification>,
    runs_to_reproduce: Option<u32>,
    model: Option<Model>,
    joined_formula: Option<Formula>,
    steps: Option<Vec<TriggerStep>>,
}

/// Explore the client against the catalog and classify every record.
pub fn inter_phase(
    client: &Program,
    server: &Program,
    catalog: &ServerErrorCatalog,
    config: &CampaignConfig,
) -> Result<InterOutcome, DriverError> {
    let mut tree = ExecutionTree::new();
    let limits = config.limits();
    let mut runs: u32 = 0;
    let mut explore_counter: u64 = 0;
    let mut replay_counter: u64 = 0;
    let mut discovery: Option<Vec<HandlerRef>> = None;
    let join_cache: JoinCache = Mutex::new(BTreeMap::new());

    let mut outcomes: BTreeMap<u32, ClassifiedParts> = BTreeMap::new();
    let mut unclassified: BTreeSet<u32> = BTreeSet::new();
    for record in &catalog.records {
        if record.handler.is_top_level() {
            // No message sequence is needed (or possible): the server fails
            // on its own before handling anything.
            outcomes.insert(
                record.record_id,
                ClassifiedParts {
                    classification: Some(Classification::High { trace: None }),
                    ..ClassifiedParts::default()
                },
            );
        } else {
            unclassified.insert(record.record_id);
        }
    }

    while runs < config.inter_budget && !unclassified.is_empty() {
        let batch = collect_suggestions(
            &mut tree,
            config,
            &limits,
            (config.inter_budget - runs) as usize,
        );
        if batch.is_empty() {
            break;
        }
        let results = run_batch_catalog(
            client,
            &batch,
            config,
            &catalog.records,
            &unclassified,
            &join_cache,
            &mut explore_counter,
        );
        for (outcome, matched) in results {
            runs += 1;
            tree.record_run(&outcome)?;
            let Some(send_match) = matched else { continue };
            if !unclassified.contains(&send_match.record_id) {
                continue;
            }
            let record = &catalog.records[send_match.record_id as usize];
            let confirmed = confirm_match(
                client,
                server,
                record,
                &outcome,
                &send_match,
                config,
                &mut tree,
                &mut runs,
                &mut replay_counter,
                &mut discovery,
            )?;
            if let Some(Confirmed { trace, steps }) = confirmed {
                unclassified.remove(&send_match.record_id);
                outcomes.insert(
                    send_match.record_id,
                    ClassifiedParts {
                        classification: Some(Classification::High { trace: Some(trace) }),
                        runs_to_reproduce: Some(runs),
                        model: Some(send_match.model),
                        joined_formula: Some(send_match.joined),
                        steps: Some(steps),
                    },
                );
            }
        }
    }

    let leftover: Vec<u32> = unclassified.iter().copied().collect();
    let records = catalog
        .records
        .iter()
        .map(|record| {
            let parts = outcomes.remove(&record.record_id).unwrap_or_default();
            ClassifiedRecord {
                record: record.clone(),
                classification: parts.classification.unwrap_or(Classification::Low),
                runs_to_reproduce: parts.runs_to_reproduce,
                model: parts.model,
                joined_formula: parts.joined_formula,
                steps: parts.steps,
            }
        })
        .collect();

    Ok(InterOutcome { records, tree, runs, unclassified: leftover })
}

/// Run a batch of suggestions under the catalog policy. Outcomes and their
/// matches come back in batch order.
fn run_batch_catalog(
    client: &Program,
    batch: &[PathSuggestion],
    config: &CampaignConfig,
    records: &[ServerErrorRecord],
    unclassified: &BTreeSet<u32>,
    join_cache: &JoinCache,
    explore_counter: &mut u64,
) -> Vec<(RunOutcome, Option<SendMatch>)> {
    let seeds: Vec<u64> = batch
        .iter()
        .map(|_| {
            let seed = derive_seed(config.seed, PHASE_INTER, *explore_counter);
            *explore_counter += 1;
            seed
        })
        .collect();
    let run_one = |suggestion: &PathSuggestion, seed: u64| {
        let run_config = config.run_config(seed);
        let mut policy = CatalogPolicy::new(records, unclassified, &config.solver, join_cache);
        let outcome = machine::run(
            client,
            suggestion.pending_inputs.clone(),
            suggestion.handlers.clone(),
            &run_config,
            &mut policy,
        );
        (outcome, policy.matched)
    };
    if batch.len() == 1 {
        return vec![run_one(&batch[0], seeds[0])];
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .iter()
            .zip(&seeds)
            .map(|(suggestion, &seed)| scope.spawn(move || run_one(suggestion, seed)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("machine run panicked")).collect()
    })
}

/// Pending inputs for a client replay: model values where the join pinned
/// them, the stopped run's realized draws everywhere else.
fn project_pending(
    model: &Model,
    observation: &SendObservation,
    stopped: &RunOutcome,
) -> Vec<ConcreteValue> {
    (0..observation.inputs_at_send)
        .map(|k| match model.get(&InputId(k)) {
            Some(scalar) => ConcreteValue::from(*scalar),
            None => stopped
                .realized_inputs
                .get(k as usize)
                .cloned()
                .unwrap_or(ConcreteValue::Int(0)),
        })
        .collect()
}

fn scalars_of(values: &[ConcreteValue]) -> Option<Vec<ScalarValue>> {
    values.iter().map(|v| v.scalar()).collect()
}

/// Resolve which registration the server should fire to reproduce a record:
/// the exact (type, ordinal) if this discovery run registered it, otherwise
/// the first registration of the same type.
fn resolve_handler(registrations: &[HandlerRef], target: &HandlerSite) -> Option<HandlerRef> {
    let HandlerSite::Handler(wanted) = target else { return None };
    if registrations.contains(wanted) {
        return Some(wanted.clone());
    }
    registrations.iter().find(|r| r.handler_type == wanted.handler_type).cloned()
}

fn server_registrations(outcome: &RunOutcome) -> Vec<HandlerRef> {
    outcome
        .steps
        .iter()
        .filter_map(|s| match s {
            TraceStep::Register { handler, .. } => Some(handler.clone()),
            _ => None,
        })
        .collect()
}

/// Re-run the client on the join model, harvest the payload at the matched
/// send, and fire the server handler on it. Confirms only when the server
/// fails with exactly the record's error identity.
#[allow(clippy::too_many_arguments)]
fn confirm_match(
    client: &Program,
    server: &Program,
    record: &ServerErrorRecord,
    stopped: &RunOutcome,
    send_match: &SendMatch,
    config: &CampaignConfig,
    tree: &mut ExecutionTree,
    runs: &mut u32,
    replay_counter: &mut u64,
    discovery: &mut Option<Vec<HandlerRef>>,
) -> Result<Option<Confirmed>, DriverError> {
    let Termination::StoppedAtSend { observation, .. } = &stopped.termination else {
        return Ok(None);
    };

    // Client replay on the model.
    if *runs >= config.inter_budget {
        return Ok(None);
    }
    let pending = project_pending(&send_match.model, observation, stopped);
    let schedule = stopped.fired_schedule();
    let replay_seed = derive_seed(config.seed, PHASE_REPLAY, *replay_counter);
    *replay_counter += 1;
    let replay = machine::run(
        client,
        pending,
        schedule,
        &config.run_config(replay_seed),
        &mut RecordOnly,
    );
    *runs += 1;
    tree.record_run(&replay)?;

    let Some(send) = replay.sends.get(observation.occurrence_index as usize) else {
        return Ok(None);
    };
    if send.handler_type != observation.handler_type
        || send.payload.len() != record.arity as usize
    {
        return Ok(None);
    }
    let payload: Vec<ConcreteValue> = send.payload.iter().map(|p| p.concrete.clone()).collect();
    let Some(payload_scalars) = scalars_of(&payload) else {
        // A closure crossed the wire; there is no serializable reproduction.
        return Ok(None);
    };
    let Some(client_inputs) = scalars_of(&replay.realized_inputs) else {
        return Ok(None);
    };

    // Server discovery (cached): which handlers does a fresh server register?
    if discovery.is_none() {
        if *runs >= config.inter_budget {
            return Ok(None);
        }
        let discovery_seed = derive_seed(config.seed, PHASE_DISCOVERY, 0);
        let outcome = machine::run(
            server,
            Vec::new(),
            Vec::new(),
            &config.run_config(discovery_seed),
            &mut RecordOnly,
        );
        *runs += 1;
        *discovery = Some(server_registrations(&outcome));
    }
    let registrations = discovery.as_ref().expect("discovery just populated");
    let Some(target) = resolve_handler(registrations, &record.handler) else {
        return Ok(None);
    };

    // Fire the handler on the harvested payload.
    if *runs >= config.inter_budget {
        return Ok(None);
    }
    let confirm_seed = derive_seed(config.seed, PHASE_CONFIRM, record.record_id as u64);
    let confirmation = machine::run(
        server,
        payload,
        vec![target],
        &config.run_config(confirm_seed),
        &mut RecordOnly,
    );
    *runs += 1;

    match &confirmation.termination {
        Termination::Failed { error, .. } if *error == record.error => {
            let fired = replay.fired_schedule();
            let steps = fired
                .iter()
                .enumerate()
                .map(|(position, handler)| TriggerStep {
                    handler: handler.clone(),
                    inputs: replay
                        .handler_input_ids
                        .get(&(position as u32))
                        .map(|ids| {
                            ids.iter()
                                .map(|id| client_inputs[id.0 as usize])
                                .collect()
                        })
                        .unwrap_or_default(),
                })
                .collect();
            Ok(Some(Confirmed {
                trace: ReproductionTrace {
                    client_inputs,
                    handler_sequence: fired,
                    send_occurrence: observation.occurrence_index,
                    concrete_payload: payload_scalars,
                    server_record_id: record.record_id,
                },
                steps,
            }))
        }
        _ => Ok(None),
    }
}

/// Run both phases and assemble the final classification.
pub fn run_campaign(
    client: &Program,
    server: &Program,
    config: &CampaignConfig,
) -> Result<CampaignResult, DriverError> {
    let intra = intra_phase(server, config)?;
    let inter = inter_phase(client, server, &intra.catalog, config)?;
    Ok(CampaignResult {
        records: inter.records,
        intra_runs: intra.runs,
        inter_runs: inter.runs,
        unclassified: inter.unclassified,
        server_tree: intra.tree,
        client_tree: inter.tree,
    })
}

/// Replay a persisted reproduction trace with no solver involved: run the
/// client on the stored inputs, harvest the payload at the stored send
/// occurrence, and fire the server handler on it. Returns the server error
/// that resulted, if any.
pub fn replay_trace(
    client: &Program,
    server: &Program,
    handler: &HandlerSite,
    trace: &ReproductionTrace,
    campaign_seed: u64,
    config: &CampaignConfig,
) -> Option<RuntimeError> {
    let pending: Vec<ConcreteValue> =
        trace.client_inputs.iter().map(|s| ConcreteValue::from(*s)).collect();
    let client_run = machine::run(
        client,
        pending,
        trace.handler_sequence.clone(),
        &config.run_config(derive_seed(campaign_seed, PHASE_REPLAY, u64::MAX)),
        &mut RecordOnly,
    );
    let send = client_run.sends.get(trace.send_occurrence as usize)?;
    let payload: Vec<ConcreteValue> = send.payload.iter().map(|p| p.concrete.clone()).collect();

    let discovery = machine::run(
        server,
        Vec::new(),
        Vec::new(),
        &config.run_config(derive_seed(campaign_seed, PHASE_DISCOVERY, 0)),
        &mut RecordOnly,
    );
    let target = resolve_handler(&server_registrations(&discovery), handler)?;

    let confirm_seed = derive_seed(campaign_seed, PHASE_CONFIRM, trace.server_record_id as u64);
    let confirmation = machine::run(
        server,
        payload,
        vec![target],
        &config.run_config(confirm_seed),
        &mut RecordOnly,
    );
    match confirmation.termination {
        Termination::Failed { error, .. } => Some(error),
        _ => None,
    }
}
