//! Execution-tree bookkeeping and next-path selection.
//!
//! Every finished run is merged into an [`ExecutionTree`], one node per
//! observed choice point: a symbolic branch, a handler boundary (which
//! handler fires next, or none), or a send. Unexplored edges become
//! suggestion targets; [`ExecutionTree::next_suggestion`] picks one
//! according to the configured strategy, solves for inputs that steer
//! execution toward it, and hands back a runnable schedule-plus-inputs
//! recipe. Targets are consumed when suggested, so a replay that diverges
//! (for instance when a random draw was not pinned by the model) still makes
//! progress: its actual path is merged like any other run.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::ast::{Name, SourceSpan};
use crate::machine::{RunOutcome, RwSets, Termination, TraceStep};
use crate::solver::{check_sat, Model, SatResult, SolverConfig};
use crate::symbolic::{ConcreteValue, Formula, HandlerRef, SymbolicValue};

/// How the next unexplored target is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Shallowest-first over the whole tree: branch flips before event
    /// extensions at the same depth, first-discovered first.
    BruteForce,
    /// Prefer event extensions whose handler sequences have many read/write
    /// conflicts on shared state; branch flips within a sequence are still
    /// taken shallowest-first.
    ReadWriteConflict,
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brute-force" => Ok(StrategyKind::BruteForce),
            "rw-conflict" | "read-write-conflict" => Ok(StrategyKind::ReadWriteConflict),
            other => Err(format!(
                "unknown strategy {other:?} (expected brute-force or rw-conflict)"
            )),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StrategyKind::BruteForce => write!(f, "brute-force"),
            StrategyKind::ReadWriteConflict => write!(f, "rw-conflict"),
        }
    }
}

/// Limits a suggestion must respect.
#[derive(Debug, Clone, Default)]
pub struct SelectionLimits {
    /// Maximum number of scheduled handler invocations per run.
    pub max_events: u32,
    /// If non-empty, only handler-type sequences that extend one of these
    /// prefixes (or are on the way to doing so) are eligible.
    pub prefixes: Vec<Vec<Name>>,
}

/// Two runs disagreed about the shape of the program at the same path
/// position; execution is deterministic per path, so this is an internal
/// invariant violation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("execution tree conflict at depth {depth}: expected {expected}, found {found}")]
pub struct TreeConflict {
    pub depth: u32,
    pub expected: String,
    pub found: String,
}

/// A runnable recipe produced by the selector.
#[derive(Debug, Clone)]
pub struct PathSuggestion {
    /// Handler schedule for the run.
    pub handlers: Vec<HandlerRef>,
    /// Concrete values pre-queued for the run's first input draws.
    pub pending_inputs: Vec<ConcreteValue>,
    /// The solver model behind the inputs (empty for event extensions).
    pub model: Model,
    /// Human-readable target description for logs.
    pub description: String,
}

type NodeId = usize;

/// One choice at a handler boundary: fire a registered handler, or stop.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventOption {
    Handler(HandlerRef),
    Stop,
}

impl std::fmt::Display for EventOption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EventOption::Handler(h) => write!(f, "{h}"),
            EventOption::Stop => write!(f, "stop"),
        }
    }
}

/// Suggestion bookkeeping for an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetStatus {
    /// Never suggested; a candidate while untraversed.
    Open,
    /// Handed out as a suggestion; never suggested again.
    Consumed,
    /// The solver proved no inputs reach this edge.
    Infeasible,
    /// The solver gave up twice; no longer a candidate.
    Abandoned,
}

#[derive(Debug, Clone)]
struct Edge {
    child: Option<NodeId>,
    /// Distinct terminal outcomes observed exactly here. An edge can carry
    /// terminals and a child at once: runs agreeing on every branch can
    /// still diverge on unguarded failures such as division by zero.
    terminals: BTreeSet<String>,
    /// Some run actually went down this edge.
    traversed: bool,
    status: TargetStatus,
}

impl Edge {
    fn new() -> Edge {
        Edge { child: None, terminals: BTreeSet::new(), traversed: false, status: TargetStatus::Open }
    }
}

/// Which edge of which node; `Root` is the tree's entry edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeId {
    Root,
    Branch(NodeId, bool),
    Option(NodeId, usize),
    SendNext(NodeId),
}

#[derive(Debug, Clone)]
enum NodeKind {
    Branch {
        cond: SymbolicValue,
        span: SourceSpan,
        true_edge: Edge,
        false_edge: Edge,
    },
    Event {
        /// Fixed at creation: handlers registered on this path, in
        /// registration order, then `Stop`.
        options: Vec<(EventOption, Edge)>,
    },
    Send {
        handler_type: Name,
        occurrence: u32,
        /// Some run was stopped here by its send policy.
        stopped: bool,
        next: Edge,
    },
}

#[derive(Debug, Clone)]
struct Node {
    kind: NodeKind,
    parent: EdgeId,
    /// Trace steps from the root.
    depth: u32,
    /// Input ids drawn before this choice point.
    inputs_before: u32,
    /// Realized inputs of the first run that discovered this node; never
    /// updated, and truncated to `inputs_before` when replayed.
    witness: Vec<ConcreteValue>,
    /// Handler invocations fired before this node.
    prefix_events: Vec<HandlerRef>,
}

/// What a new node looks like, before it is allocated.
enum NodeSpec {
    Branch { cond: SymbolicValue, span: SourceSpan },
    Event { options: Vec<HandlerRef> },
    Send { handler_type: Name, occurrence: u32 },
}

#[derive(Debug, Clone)]
struct Target {
    edge: EdgeId,
    node: NodeId,
    /// 0 for branch flips, 1 for event options.
    kind_rank: u8,
    /// Discovery order; re-assigned to the back on a solver give-up.
    seq: u64,
    /// Already deferred once after an Unknown.
    deferred: bool,
    /// For event options: the option to append (None for branch targets).
    option: Option<EventOption>,
    /// Registration ordinal for conflict-strategy tie-breaks; `Stop` sorts
    /// after every real handler.
    event_ordinal: u32,
}

/// Accumulated read/write behavior per handler, merged over all runs.
pub type RwProfile = BTreeMap<HandlerRef, RwSets>;

/// The merged view of every run recorded so far.
#[derive(Debug, Clone)]
pub struct ExecutionTree {
    nodes: Vec<Node>,
    root: Edge,
    targets: Vec<Target>,
    next_seq: u64,
    /// The primordial empty-schedule suggestion has been handed out.
    initial_issued: bool,
    runs_recorded: u64,
    profile: RwProfile,
}

impl Default for ExecutionTree {
    fn default() -> Self {
        Self::new()
    }
}

impl ExecutionTree {
    pub fn new() -> ExecutionTree {
        ExecutionTree {
            nodes: Vec::new(),
            root: Edge::new(),
            targets: Vec::new(),
            next_seq: 0,
            initial_issued: false,
            runs_recorded: 0,
            profile: RwProfile::new(),
        }
    }

    pub fn runs_recorded(&self) -> u64 {
        self.runs_recorded
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn profile(&self) -> &RwProfile {
        &self.profile
    }

    fn edge(&self, id: EdgeId) -> &Edge {
        match id {
            EdgeId::Root => &self.root,
            EdgeId::Branch(n, side) => match &self.nodes[n].kind {
                NodeKind::Branch { true_edge, false_edge, .. } => {
                    if side {
                        true_edge
                    } else {
                        false_edge
                    }
                }
                _ => unreachable!("edge id points at a branch node"),
            },
            EdgeId::Option(n, idx) => match &self.nodes[n].kind {
                NodeKind::Event { options } => &options[idx].1,
                _ => unreachable!("edge id points at an event node"),
            },
            EdgeId::SendNext(n) => match &self.nodes[n].kind {
                NodeKind::Send { next, .. } => next,
                _ => unreachable!("edge id points at a send node"),
            },
        }
    }

    fn edge_mut(&mut self, id: EdgeId) -> &mut Edge {
        match id {
            EdgeId::Root => &mut self.root,
            EdgeId::Branch(n, side) => match &mut self.nodes[n].kind {
                NodeKind::Branch { true_edge, false_edge, .. } => {
                    if side {
                        true_edge
                    } else {
                        false_edge
                    }
                }
                _ => unreachable!("edge id points at a branch node"),
            },
            EdgeId::Option(n, idx) => match &mut self.nodes[n].kind {
                NodeKind::Event { options } => &mut options[idx].1,
                _ => unreachable!("edge id points at an event node"),
            },
            EdgeId::SendNext(n) => match &mut self.nodes[n].kind {
                NodeKind::Send { next, .. } => next,
                _ => unreachable!("edge id points at a send node"),
            },
        }
    }

    fn describe_node(&self, id: NodeId) -> String {
        match &self.nodes[id].kind {
            NodeKind::Branch { cond, .. } => format!("branch {cond}"),
            NodeKind::Event { .. } => "event choice".to_string(),
            NodeKind::Send { handler_type, occurrence, .. } => {
                format!("send {handler_type} #{occurrence}")
            }
        }
    }

    fn describe_spec(spec: &NodeSpec) -> String {
        match spec {
            NodeSpec::Branch { cond, .. } => format!("branch {cond}"),
            NodeSpec::Event { .. } => "event choice".to_string(),
            NodeSpec::Send { handler_type, occurrence } => {
                format!("send {handler_type} #{occurrence}")
            }
        }
    }

    /// Fetch or create the node behind `at`, verifying that what this run
    /// observed matches what earlier runs observed.
    fn ensure_child(
        &mut self,
        at: EdgeId,
        spec: NodeSpec,
        depth: u32,
        inputs_before: u32,
        witness: &[ConcreteValue],
        prefix_events: &[HandlerRef],
    ) -> Result<NodeId, TreeConflict> {
        if let Some(existing) = self.edge(at).child {
            let matches = match (&self.nodes[existing].kind, &spec) {
                (NodeKind::Branch { cond: a, .. }, NodeSpec::Branch { cond: b, .. }) => a == b,
                (NodeKind::Event { options }, NodeSpec::Event { options: regs }) => {
                    let expected: Vec<EventOption> = Self::event_options(regs);
                    options.len() == expected.len()
                        && options.iter().map(|(o, _)| o).eq(expected.iter())
                }
                (
                    NodeKind::Send { handler_type: a, occurrence: oa, .. },
                    NodeSpec::Send { handler_type: b, occurrence: ob },
                ) => a == b && oa == ob,
                _ => false,
            };
            if !matches {
                return Err(TreeConflict {
                    depth,
                    expected: self.describe_node(existing),
                    found: Self::describe_spec(&spec),
                });
            }
            return Ok(existing);
        }

        let id = self.nodes.len();
        let kind = match spec {
            NodeSpec::Branch { cond, span } => {
                NodeKind::Branch { cond, span, true_edge: Edge::new(), false_edge: Edge::new() }
            }
            NodeSpec::Event { options } => NodeKind::Event {
                options: Self::event_options(&options)
                    .into_iter()
                    .map(|o| (o, Edge::new()))
                    .collect(),
            },
            NodeSpec::Send { handler_type, occurrence } => {
                NodeKind::Send { handler_type, occurrence, stopped: false, next: Edge::new() }
            }
        };
        self.nodes.push(Node {
            kind,
            parent: at,
            depth,
            inputs_before,
            witness: witness.to_vec(),
            prefix_events: prefix_events.to_vec(),
        });
        self.edge_mut(at).child = Some(id);
        self.register_targets(id);
        Ok(id)
    }

    fn event_options(registrations: &[HandlerRef]) -> Vec<EventOption> {
        let mut options: Vec<EventOption> =
            registrations.iter().cloned().map(EventOption::Handler).collect();
        options.push(EventOption::Stop);
        options
    }

    fn register_targets(&mut self, node: NodeId) {
        let mut fresh = Vec::new();
        match &self.nodes[node].kind {
            NodeKind::Branch { .. } => {
                for side in [true, false] {
                    fresh.push(Target {
                        edge: EdgeId::Branch(node, side),
                        node,
                        kind_rank: 0,
                        seq: 0,
                        deferred: false,
                        option: None,
                        event_ordinal: 0,
                    });
                }
            }
            NodeKind::Event { options } => {
                for (idx, (option, _)) in options.iter().enumerate() {
                    let event_ordinal = match option {
                        EventOption::Handler(h) => h.ordinal,
                        EventOption::Stop => u32::MAX,
                    };
                    fresh.push(Target {
                        edge: EdgeId::Option(node, idx),
                        node,
                        kind_rank: 1,
                        seq: 0,
                        deferred: false,
                        option: Some(option.clone()),
                        event_ordinal,
                    });
                }
            }
            NodeKind::Send { .. } => {}
        }
        for mut target in fresh {
            target.seq = self.next_seq;
            self.next_seq += 1;
            self.targets.push(target);
        }
    }

    /// Merge one finished run. Idempotent: recording the same run twice
    /// changes nothing the second time.
    pub fn record_run(&mut self, outcome: &RunOutcome) -> Result<(), TreeConflict> {
        let mut cursor = EdgeId::Root;
        let mut regs_seen: Vec<HandlerRef> = Vec::new();
        let mut events_taken: Vec<HandlerRef> = Vec::new();
        let mut depth: u32 = 0;

        for step in &outcome.steps {
            match step {
                TraceStep::Register { handler, .. } => {
                    regs_seen.push(handler.clone());
                }
                TraceStep::Branch { cond, taken, span, inputs_before } => {
                    self.edge_mut(cursor).traversed = true;
                    let node = self.ensure_child(
                        cursor,
                        NodeSpec::Branch { cond: cond.clone(), span: span.clone() },
                        depth,
                        *inputs_before,
                        &outcome.realized_inputs,
                        &events_taken,
                    )?;
                    cursor = EdgeId::Branch(node, *taken);
                    depth += 1;
                }
                TraceStep::Event { handler, inputs_before, .. } => {
                    self.edge_mut(cursor).traversed = true;
                    let node = self.ensure_child(
                        cursor,
                        NodeSpec::Event { options: regs_seen.clone() },
                        depth,
                        *inputs_before,
                        &outcome.realized_inputs,
                        &events_taken,
                    )?;
                    let idx = self.option_index(node, handler).ok_or_else(|| TreeConflict {
                        depth,
                        expected: self.describe_node(node),
                        found: format!("event option {handler}"),
                    })?;
                    cursor = EdgeId::Option(node, idx);
                    events_taken.push(handler.clone());
                    depth += 1;
                }
                TraceStep::Send { handler_type, occurrence, inputs_before } => {
                    self.edge_mut(cursor).traversed = true;
                    let node = self.ensure_child(
                        cursor,
                        NodeSpec::Send {
                            handler_type: handler_type.clone(),
                            occurrence: *occurrence,
                        },
                        depth,
                        *inputs_before,
                        &outcome.realized_inputs,
                        &events_taken,
                    )?;
                    cursor = EdgeId::SendNext(node);
                    depth += 1;
                }
            }
        }

        match &outcome.termination {
            Termination::Completed => {
                self.edge_mut(cursor).traversed = true;
                let (boundary_regs, boundary_inputs) = match &outcome.exit_boundary {
                    Some(b) => (b.registrations.clone(), b.inputs_before),
                    None => (regs_seen.clone(), outcome.realized_inputs.len() as u32),
                };
                let node = self.ensure_child(
                    cursor,
                    NodeSpec::Event { options: boundary_regs },
                    depth,
                    boundary_inputs,
                    &outcome.realized_inputs,
                    &events_taken,
                )?;
                let idx = self
                    .option_index_of(node, &EventOption::Stop)
                    .expect("every event node has a stop option");
                let stop = self.edge_mut(EdgeId::Option(node, idx));
                stop.traversed = true;
                stop.terminals.insert("completed".to_string());
            }
            Termination::Failed { error, .. } => {
                let edge = self.edge_mut(cursor);
                edge.traversed = true;
                edge.terminals.insert(format!("error {error}"));
            }
            Termination::StepBudgetExceeded => {
                let edge = self.edge_mut(cursor);
                edge.traversed = true;
                edge.terminals.insert("step budget exceeded".to_string());
            }
            Termination::StoppedAtSend { .. } => {
                // The run was cut short by its policy at the send just
                // recorded; the continuation stays unexplored.
                if let EdgeId::SendNext(node) = cursor {
                    if let NodeKind::Send { stopped, .. } = &mut self.nodes[node].kind {
                        *stopped = true;
                    }
                }
            }
            Termination::ScheduleMismatch { .. } => {
                // The schedule asked for a handler this path never
                // registered. The prefix is still real: record the boundary
                // node, but nothing at it was chosen.
                self.edge_mut(cursor).traversed = true;
                self.ensure_child(
                    cursor,
                    NodeSpec::Event { options: regs_seen.clone() },
                    depth,
                    outcome.realized_inputs.len() as u32,
                    &outcome.realized_inputs,
                    &events_taken,
                )?;
            }
        }

        let fired = outcome.fired_schedule();
        for (position, sets) in &outcome.rw_profile {
            if let Some(handler) = fired.get(*position as usize) {
                let entry = self.profile.entry(handler.clone()).or_default();
                entry.reads.extend(sets.reads.iter().cloned());
                entry.writes.extend(sets.writes.iter().cloned());
            }
        }

        self.runs_recorded += 1;
        Ok(())
    }

    fn option_index(&self, node: NodeId, handler: &HandlerRef) -> Option<usize> {
        self.option_index_of(node, &EventOption::Handler(handler.clone()))
    }

    fn option_index_of(&self, node: NodeId, option: &EventOption) -> Option<usize> {
        match &self.nodes[node].kind {
            NodeKind::Event { options } => options.iter().position(|(o, _)| o == option),
            _ => None,
        }
    }

    /// The branch conditions, suitably negated, along the path from the root
    /// to `node` (exclusive).
    fn path_condition(&self, node: NodeId) -> Vec<SymbolicValue> {
        let mut conds = Vec::new();
        let mut cursor = self.nodes[node].parent;
        loop {
            match cursor {
                EdgeId::Root => break,
                EdgeId::Branch(parent, side) => {
                    let cond = match &self.nodes[parent].kind {
                        NodeKind::Branch { cond, .. } => cond.clone(),
                        _ => unreachable!("branch edge on a branch node"),
                    };
                    let conjunct = if side {
                        cond
                    } else {
                        cond.negate().expect("recorded branch conditions are boolean")
                    };
                    conds.push(conjunct);
                    cursor = self.nodes[parent].parent;
                }
                EdgeId::Option(parent, _) | EdgeId::SendNext(parent) => {
                    cursor = self.nodes[parent].parent;
                }
            }
        }
        conds.reverse();
        conds
    }

    /// The handler-type sequence a suggestion would schedule.
    fn target_schedule(&self, target: &Target) -> Vec<HandlerRef> {
        let mut schedule = self.nodes[target.node].prefix_events.clone();
        if let Some(EventOption::Handler(h)) = &target.option {
            schedule.push(h.clone());
        }
        schedule
    }

    fn eligible(&self, target: &Target, limits: &SelectionLimits) -> bool {
        let edge = self.edge(target.edge);
        if edge.status != TargetStatus::Open || edge.traversed {
            return false;
        }
        let schedule = self.target_schedule(target);
        if schedule.len() as u32 > limits.max_events {
            return false;
        }
        if !limits.prefixes.is_empty() {
            let types: Vec<&Name> = schedule.iter().map(|h| &h.handler_type).collect();
            let compatible = limits.prefixes.iter().any(|prefix| {
                let shared = types.len().min(prefix.len());
                types[..shared].iter().zip(&prefix[..shared]).all(|(a, b)| *a == b)
            });
            if !compatible {
                return false;
            }
        }
        true
    }

    /// Pairs of positions in `schedule` whose accumulated read/write sets
    /// collide: a write on one side meeting a read or write of the same name
    /// on the other.
    pub fn conflict_score(&self, schedule: &[HandlerRef]) -> u32 {
        let empty = RwSets::default();
        let sets: Vec<&RwSets> =
            schedule.iter().map(|h| self.profile.get(h).unwrap_or(&empty)).collect();
        let mut score = 0;
        for i in 0..sets.len() {
            for j in (i + 1)..sets.len() {
                let collide = |a: &BTreeSet<Name>, b: &BTreeSet<Name>| {
                    a.intersection(b).next().is_some()
                };
                if collide(&sets[i].writes, &sets[j].reads)
                    || collide(&sets[i].writes, &sets[j].writes)
                    || collide(&sets[i].reads, &sets[j].writes)
                {
                    score += 1;
                }
            }
        }
        score
    }

    fn pick(&self, strategy: StrategyKind, limits: &SelectionLimits) -> Option<usize> {
        let candidates: Vec<usize> = (0..self.targets.len())
            .filter(|&i| self.eligible(&self.targets[i], limits))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        match strategy {
            StrategyKind::BruteForce => candidates.into_iter().min_by_key(|&i| {
                let t = &self.targets[i];
                (self.nodes[t.node].depth, t.kind_rank, t.seq)
            }),
            StrategyKind::ReadWriteConflict => {
                let branches: Vec<usize> = candidates
                    .iter()
                    .copied()
                    .filter(|&i| self.targets[i].kind_rank == 0)
                    .collect();
                if !branches.is_empty() {
                    return branches.into_iter().min_by_key(|&i| {
                        let t = &self.targets[i];
                        (self.nodes[t.node].depth, t.seq)
                    });
                }
                candidates.into_iter().min_by_key(|&i| {
                    let t = &self.targets[i];
                    let score = self.conflict_score(&self.target_schedule(t));
                    (std::cmp::Reverse(score), t.event_ordinal, t.seq)
                })
            }
        }
    }

    fn pending_from(witness: &[ConcreteValue], inputs_before: u32, model: &Model) -> Vec<ConcreteValue> {
        (0..inputs_before)
            .map(|k| match model.get(&crate::symbolic::InputId(k)) {
                Some(scalar) => ConcreteValue::from(*scalar),
                None => witness.get(k as usize).cloned().unwrap_or(ConcreteValue::Int(0)),
            })
            .collect()
    }

    /// Choose the next path to attempt, or `None` when every reachable
    /// target within the limits has been suggested, proven infeasible, or
    /// abandoned.
    pub fn next_suggestion(
        &mut self,
        strategy: StrategyKind,
        solver: &SolverConfig,
        limits: &SelectionLimits,
    ) -> Option<PathSuggestion> {
        if self.nodes.is_empty() {
            if self.initial_issued {
                return None;
            }
            self.initial_issued = true;
            return Some(PathSuggestion {
                handlers: Vec::new(),
                pending_inputs: Vec::new(),
                model: Model::new(),
                description: "initial run (no events, random inputs)".to_string(),
            });
        }

        loop {
            let index = self.pick(strategy, limits)?;
            let target = self.targets[index].clone();
            let node = &self.nodes[target.node];

            match &target.option {
                None => {
                    // Branch flip: solve for inputs that hold the path
                    // prefix and push the condition the other way.
                    let (cond, side) = match (&node.kind, target.edge) {
                        (NodeKind::Branch { cond, .. }, EdgeId::Branch(_, side)) => {
                            (cond.clone(), side)
                        }
                        _ => unreachable!("branch target on a branch edge"),
                    };
                    let mut conds = self.path_condition(target.node);
                    conds.push(if side {
                        cond.clone()
                    } else {
                        cond.negate().expect("recorded branch conditions are boolean")
                    });
                    let formula = Formula::new(conds);
                    match check_sat(&formula, solver) {
                        SatResult::Sat(model) => {
                            self.edge_mut(target.edge).status = TargetStatus::Consumed;
                            let node = &self.nodes[target.node];
                            let pending =
                                Self::pending_from(&node.witness, node.inputs_before, &model);
                            let description = format!(
                                "flip branch {} to {} at depth {}",
                                cond, side, node.depth
                            );
                            return Some(PathSuggestion {
                                handlers: node.prefix_events.clone(),
                                pending_inputs: pending,
                                model,
                                description,
                            });
                        }
                        SatResult::Unsat => {
                            self.edge_mut(target.edge).status = TargetStatus::Infeasible;
                        }
                        SatResult::Unknown(_) => {
                            if target.deferred {
                                self.edge_mut(target.edge).status = TargetStatus::Abandoned;
                            } else {
                                let seq = self.next_seq;
                                self.next_seq += 1;
                                let t = &mut self.targets[index];
                                t.deferred = true;
                                t.seq = seq;
                            }
                        }
                    }
                }
                Some(option) => {
                    // Event extension: replay the witness inputs and extend
                    // (or cut) the schedule; no solving required.
                    self.edge_mut(target.edge).status = TargetStatus::Consumed;
                    let handlers = self.target_schedule(&target);
                    let node = &self.nodes[target.node];
                    let pending =
                        Self::pending_from(&node.witness, node.inputs_before, &Model::new());
                    let description = match option {
                        EventOption::Handler(h) => {
                            format!("extend schedule with {h} at depth {}", node.depth)
                        }
                        EventOption::Stop => {
                            format!("stop after {} events at depth {}", handlers.len(), node.depth)
                        }
                    };
                    return Some(PathSuggestion {
                        handlers,
                        pending_inputs: pending,
                        model: Model::new(),
                        description,
                    });
                }
            }
        }
    }

    /// Every terminal observed in the tree, as (branch conditions along the
    /// path, terminal description) pairs in depth-first order.
    pub fn leaf_paths(&self) -> Vec<(Vec<String>, String)> {
        let mut out = Vec::new();
        let mut conds: Vec<String> = Vec::new();
        self.collect_leaves(&self.root, &mut conds, &mut out);
        out
    }

    fn collect_leaves(
        &self,
        edge: &Edge,
        conds: &mut Vec<String>,
        out: &mut Vec<(Vec<String>, String)>,
    ) {
        for terminal in &edge.terminals {
            out.push((conds.clone(), terminal.clone()));
        }
        let Some(node) = edge.child else { return };
        match &self.nodes[node].kind {
            NodeKind::Branch { cond, true_edge, false_edge, .. } => {
                conds.push(cond.to_string());
                self.collect_leaves(true_edge, conds, out);
                conds.pop();
                let negated = cond
                    .negate()
                    .map(|n| n.to_string())
                    .unwrap_or_else(|_| format!("(not {cond})"));
                conds.push(negated);
                self.collect_leaves(false_edge, conds, out);
                conds.pop();
            }
            NodeKind::Event { options } => {
                for (_, option_edge) in options {
                    self.collect_leaves(option_edge, conds, out);
                }
            }
            NodeKind::Send { next, .. } => {
                self.collect_leaves(next, conds, out);
            }
        }
    }

    /// Indented text rendering of the whole tree.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.dump_edge(&self.root, "root", 0, &mut out);
        out
    }

    fn dump_edge(&self, edge: &Edge, label: &str, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        let mut annotations = Vec::new();
        for terminal in &edge.terminals {
            annotations.push(terminal.clone());
        }
        if !edge.traversed {
            let status = match edge.status {
                TargetStatus::Open => "unexplored",
                TargetStatus::Consumed => "suggested",
                TargetStatus::Infeasible => "infeasible",
                TargetStatus::Abandoned => "abandoned",
            };
            annotations.push(status.to_string());
        }
        let suffix = if annotations.is_empty() {
            String::new()
        } else {
            format!(" [{}]", annotations.join("; "))
        };
        match edge.child {
            Some(node) => {
                let header = match &self.nodes[node].kind {
                    NodeKind::Branch { cond, span, .. } => format!("branch {cond} at {span}"),
                    NodeKind::Event { .. } => "event choice".to_string(),
                    NodeKind::Send { handler_type, occurrence, stopped, .. } => {
                        let mark = if *stopped { " (stopped here)" } else { "" };
                        format!("send {handler_type} #{occurrence}{mark}")
                    }
                };
                let _ = writeln!(out, "{pad}{label}: {header}{suffix}");
                match &self.nodes[node].kind {
                    NodeKind::Branch { true_edge, false_edge, .. } => {
                        self.dump_edge(true_edge, "true", indent + 1, out);
                        self.dump_edge(false_edge, "false", indent + 1, out);
                    }
                    NodeKind::Event { options } => {
                        for (option, option_edge) in options {
                            self.dump_edge(option_edge, &option.to_string(), indent + 1, out);
                        }
                    }
                    NodeKind::Send { next, .. } => {
                        self.dump_edge(next, "next", indent + 1, out);
                    }
                }
            }
            None => {
                let _ = writeln!(out, "{pad}{label}:{suffix}");
            }
        }
    }
}
