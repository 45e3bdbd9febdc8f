//! The concolic interpreter.
//!
//! A run evaluates one program under a fixed schedule of handler invocations
//! and a queue of pre-chosen concrete inputs. Values are concrete/symbolic
//! pairs; branch decisions and handler registrations accumulate into the
//! run's path constraint. Everything is deterministic in the arguments,
//! including the seeded fallback randomness for unconstrained inputs.

pub mod env;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::lang::ast::{AtomicExpr, BinOp, Expr, Lambda, Name, Program, SourceSpan};
use crate::symbolic::{
    lift, ConcreteValue, Constraint, HandlerRef, InputId, PathConstraint, SymbolicValue, ValuePair,
};

pub use env::{Addr, Env, Store};

/// What went wrong during evaluation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ErrorKind {
    UnboundVariable { name: Name },
    TypeMismatch { detail: String },
    ArityMismatch { expected: u32, found: u32 },
    DivisionByZero,
    Overflow,
    Explicit { label: String },
}

impl ErrorKind {
    /// Stable machine-readable tag, matching the serialized form.
    pub fn code(&self) -> &'static str {
        match self {
            ErrorKind::UnboundVariable { .. } => "unbound-variable",
            ErrorKind::TypeMismatch { .. } => "type-mismatch",
            ErrorKind::ArityMismatch { .. } => "arity-mismatch",
            ErrorKind::DivisionByZero => "division-by-zero",
            ErrorKind::Overflow => "overflow",
            ErrorKind::Explicit { .. } => "explicit",
        }
    }

    /// The user-facing label: for explicit errors the programmer's own text,
    /// otherwise the error description.
    pub fn label(&self) -> String {
        match self {
            ErrorKind::Explicit { label } => label.clone(),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::UnboundVariable { name } => write!(f, "unbound variable `{name}`"),
            ErrorKind::TypeMismatch { detail } => write!(f, "type mismatch: {detail}"),
            ErrorKind::ArityMismatch { expected, found } => {
                write!(f, "arity mismatch: expected {expected} argument(s), found {found}")
            }
            ErrorKind::DivisionByZero => write!(f, "division by zero"),
            ErrorKind::Overflow => write!(f, "integer overflow"),
            ErrorKind::Explicit { label } => write!(f, "{label}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuntimeError {
    pub kind: ErrorKind,
    pub span: SourceSpan,
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.kind)
    }
}

/// Where execution currently is: top-level program text or inside a handler
/// invocation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HandlerSite {
    TopLevel,
    Handler(HandlerRef),
}

impl HandlerSite {
    pub fn is_top_level(&self) -> bool {
        matches!(self, HandlerSite::TopLevel)
    }
}

impl fmt::Display for HandlerSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HandlerSite::TopLevel => write!(f, "top-level"),
            HandlerSite::Handler(h) => write!(f, "{h}"),
        }
    }
}

impl FromStr for HandlerSite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "top-level" {
            Ok(HandlerSite::TopLevel)
        } else {
            HandlerRef::from_str(s).map(HandlerSite::Handler)
        }
    }
}

impl Serialize for HandlerSite {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HandlerSite {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One observed `send`: the payload values and the path constraint in force
/// at the moment of sending.
#[derive(Debug, Clone, PartialEq)]
pub struct SendObservation {
    pub handler_type: Name,
    pub payload: Vec<ValuePair>,
    pub pc_at_send: PathConstraint,
    /// 0-based count of sends in this run before this one.
    pub occurrence_index: u32,
    /// Number of input ids this run had created when the send happened
    /// (payload evaluation included).
    pub inputs_at_send: u32,
}

/// One observable event in a run, in execution order. `inputs_before` counts
/// the input ids in existence at the step's decision point: after condition
/// evaluation for branches, before parameter draws for events, after payload
/// evaluation for sends.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceStep {
    Register { handler: HandlerRef, arity: u32, inputs_before: u32 },
    Branch { cond: SymbolicValue, taken: bool, span: SourceSpan, inputs_before: u32 },
    Event { handler: HandlerRef, arity: u32, param_ids: Vec<InputId>, inputs_before: u32 },
    Send { handler_type: Name, occurrence: u32, inputs_before: u32 },
}

/// Names a handler invocation read from / wrote to, restricted to bindings
/// created outside the handler's own execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RwSets {
    pub reads: BTreeSet<Name>,
    pub writes: BTreeSet<Name>,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// Final atomic evaluated with no handlers left to fire.
    Completed,
    /// A runtime error surfaced; carries the path constraint at failure and
    /// the handler (or top level) that was executing.
    Failed { error: RuntimeError, pc: PathConstraint, handler: HandlerSite },
    /// The send policy matched a catalog record and stopped the run.
    StoppedAtSend { observation: SendObservation, matched: Vec<u32> },
    /// A scheduled handler was never registered on this path.
    ScheduleMismatch { expected: HandlerRef },
    /// The per-run step budget ran out.
    StepBudgetExceeded,
}

impl Termination {
    pub fn summary(&self) -> String {
        match self {
            Termination::Completed => "completed".to_string(),
            Termination::Failed { error, .. } => format!("failed: {error}"),
            Termination::StoppedAtSend { observation, matched } => format!(
                "stopped-at-send {} #{} matched={matched:?}",
                observation.handler_type, observation.occurrence_index
            ),
            Termination::ScheduleMismatch { expected } => {
                format!("schedule-mismatch: {expected}")
            }
            Termination::StepBudgetExceeded => "step-budget-exceeded".to_string(),
        }
    }
}

/// State visible at the final handler boundary of a completed run: what a
/// one-event-longer schedule would have found when it fired instead of
/// letting the program finish.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitBoundary {
    /// Handlers registered when the boundary was crossed (the tail atomic, if
    /// any, is discarded by a firing handler, so its registrations do not
    /// count).
    pub registrations: Vec<HandlerRef>,
    /// Input ids drawn before the boundary.
    pub inputs_before: u32,
}

/// Everything a finished run exposes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub termination: Termination,
    pub pc: PathConstraint,
    pub realized_inputs: Vec<ConcreteValue>,
    pub sends: Vec<SendObservation>,
    /// Per fired-handler position: shared names read and written.
    pub rw_profile: BTreeMap<u32, RwSets>,
    /// Per fired-handler position: the input ids drawn for its parameters.
    pub handler_input_ids: BTreeMap<u32, Vec<InputId>>,
    pub steps: Vec<TraceStep>,
    /// The schedule the run was asked to follow.
    pub schedule: Vec<HandlerRef>,
    /// How many scheduled handlers actually fired.
    pub fired_events: u32,
    pub seed: u64,
    /// Present iff the run completed normally.
    pub exit_boundary: Option<ExitBoundary>,
}

impl RunOutcome {
    /// Canonical line-oriented rendering, the unit of replay comparison.
    pub fn trace_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        for step in &self.steps {
            match step {
                TraceStep::Register { handler, arity, .. } => {
                    lines.push(format!("register {handler} arity={arity}"));
                }
                TraceStep::Branch { cond, taken, .. } => {
                    lines.push(format!("branch {cond} taken={taken}"));
                }
                TraceStep::Event { handler, param_ids, .. } => {
                    let ids: Vec<String> = param_ids.iter().map(|i| i.to_string()).collect();
                    lines.push(format!("event {handler} params=[{}]", ids.join(", ")));
                }
                TraceStep::Send { handler_type, occurrence, .. } => {
                    lines.push(format!("send {handler_type} #{occurrence}"));
                }
            }
        }
        let inputs: Vec<String> = self.realized_inputs.iter().map(|v| v.to_string()).collect();
        lines.push(format!("inputs = [{}]", inputs.join(", ")));
        lines.push(self.termination.summary());
        lines
    }

    /// The handler invocations that fired, in order.
    pub fn fired_schedule(&self) -> Vec<HandlerRef> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                TraceStep::Event { handler, .. } => Some(handler.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Decision returned by a send policy.
#[derive(Debug, Clone, PartialEq)]
pub enum SendDecision {
    Continue,
    Stop { matched: Vec<u32> },
}

/// Hook consulted at every `send`.
pub trait SendPolicy {
    fn on_send(&mut self, observation: &SendObservation) -> SendDecision;
}

/// Record sends and keep running.
pub struct RecordOnly;

impl SendPolicy for RecordOnly {
    fn on_send(&mut self, _observation: &SendObservation) -> SendDecision {
        SendDecision::Continue
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub step_limit: u64,
    /// Random fallback inputs are drawn uniformly from [-input_bound, input_bound].
    pub input_bound: i64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0, step_limit: 100_000, input_bound: 64 }
    }
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig { seed, ..RunConfig::default() }
    }
}

#[derive(Clone)]
struct Registration {
    handler: HandlerRef,
    lambda: Arc<Lambda>,
    env: Env,
    arity: u32,
}

enum Kont {
    LetK { addr: Addr, body: Arc<Expr>, env: Env },
}

enum Flow {
    Continue,
    Done(Termination),
}

/// A single in-progress run.
pub struct Machine {
    control: Arc<Expr>,
    env: Env,
    store: Store,
    kstack: Vec<Kont>,
    pc: PathConstraint,
    pending_inputs: VecDeque<ConcreteValue>,
    pending_handlers: VecDeque<HandlerRef>,
    current_handler: HandlerSite,
    next_input_ordinal: u32,
    realized_inputs: Vec<ConcreteValue>,
    rng: ChaCha8Rng,
    input_bound: i64,
    closure_counter: u64,
    registrations: Vec<Registration>,
    sends: Vec<SendObservation>,
    steps: Vec<TraceStep>,
    rw_profile: BTreeMap<u32, RwSets>,
    handler_input_ids: BTreeMap<u32, Vec<InputId>>,
    fired_events: u32,
    handler_start_addr: usize,
    exit_boundary: Option<ExitBoundary>,
}

impl Machine {
    /// Fresh machine state: empty environment, store, continuation stack, and
    /// path constraint; the given inputs and handler schedule pending.
    pub fn inject(
        body: Arc<Expr>,
        inputs: Vec<ConcreteValue>,
        handlers: Vec<HandlerRef>,
        config: &RunConfig,
    ) -> Machine {
        Machine {
            control: body,
            env: Env::empty(),
            store: Store::new(),
            kstack: Vec::new(),
            pc: Vec::new(),
            pending_inputs: inputs.into(),
            pending_handlers: handlers.into(),
            current_handler: HandlerSite::TopLevel,
            next_input_ordinal: 0,
            realized_inputs: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            input_bound: config.input_bound,
            closure_counter: 0,
            registrations: Vec::new(),
            sends: Vec::new(),
            steps: Vec::new(),
            rw_profile: BTreeMap::new(),
            handler_input_ids: BTreeMap::new(),
            fired_events: 0,
            handler_start_addr: 0,
            exit_boundary: None,
        }
    }

    fn boundary_snapshot(&self) -> ExitBoundary {
        ExitBoundary {
            registrations: self.registrations.iter().map(|r| r.handler.clone()).collect(),
            inputs_before: self.next_input_ordinal,
        }
    }

    fn draw_random(&mut self) -> i64 {
        let size = (2 * self.input_bound + 1) as u64;
        (self.rng.next_u64() % size) as i64 - self.input_bound
    }

    fn next_concrete_input(&mut self) -> ConcreteValue {
        match self.pending_inputs.pop_front() {
            Some(v) => v,
            None => ConcreteValue::Int(self.draw_random()),
        }
    }

    fn note_read(&mut self, addr: Addr, name: &Name) {
        if !self.current_handler.is_top_level() && addr < self.handler_start_addr {
            let position = self.fired_events - 1;
            self.rw_profile.entry(position).or_default().reads.insert(name.clone());
        }
    }

    fn note_write(&mut self, addr: Addr, name: &Name) {
        if !self.current_handler.is_top_level() && addr < self.handler_start_addr {
            let position = self.fired_events - 1;
            self.rw_profile.entry(position).or_default().writes.insert(name.clone());
        }
    }

    fn eval_atomic(&mut self, ae: &AtomicExpr, env: &Env) -> Result<ValuePair, RuntimeError> {
        match ae {
            AtomicExpr::IntLit { value, .. } => {
                Ok(ValuePair::lifted(ConcreteValue::Int(*value)))
            }
            AtomicExpr::BoolLit { value, .. } => {
                Ok(ValuePair::lifted(ConcreteValue::Bool(*value)))
            }
            AtomicExpr::Lambda(lambda) => {
                let closure_id = self.closure_counter;
                self.closure_counter += 1;
                Ok(ValuePair::new(
                    ConcreteValue::Closure { lambda: Arc::clone(lambda), env: env.clone(), closure_id },
                    SymbolicValue::Empty,
                ))
            }
            AtomicExpr::Var { name, span } => {
                let addr = env.lookup(name).ok_or_else(|| RuntimeError {
                    kind: ErrorKind::UnboundVariable { name: name.clone() },
                    span: span.clone(),
                })?;
                let value = self.store.read(addr).cloned().ok_or_else(|| RuntimeError {
                    kind: ErrorKind::UnboundVariable { name: name.clone() },
                    span: span.clone(),
                })?;
                self.note_read(addr, name);
                Ok(value)
            }
            AtomicExpr::Input { .. } => {
                let id = InputId(self.next_input_ordinal);
                self.next_input_ordinal += 1;
                let concrete = self.next_concrete_input();
                self.realized_inputs.push(concrete.clone());
                Ok(ValuePair::new(concrete, SymbolicValue::input(id)))
            }
            AtomicExpr::Binary { op, left, right, span } => {
                let l = self.eval_atomic(left, env)?;
                let r = self.eval_atomic(right, env)?;
                self.apply_binary(*op, l, r, span)
            }
            AtomicExpr::Register { handler_type, lambda, .. } => {
                let ordinal = self.registrations.len() as u32;
                let handler = HandlerRef { handler_type: handler_type.clone(), ordinal };
                let arity = lambda.params.len() as u32;
                self.registrations.push(Registration {
                    handler: handler.clone(),
                    lambda: Arc::clone(lambda),
                    env: env.clone(),
                    arity,
                });
                self.pc.push(Constraint::Registered { handler: handler.clone(), arity });
                self.steps.push(TraceStep::Register {
                    handler,
                    arity,
                    inputs_before: self.next_input_ordinal,
                });
                Ok(ValuePair::new(ConcreteValue::Bool(true), SymbolicValue::truth(true)))
            }
            AtomicExpr::Assign { name, value, span } => {
                let addr = env.lookup(name).ok_or_else(|| RuntimeError {
                    kind: ErrorKind::UnboundVariable { name: name.clone() },
                    span: span.clone(),
                })?;
                let v = self.eval_atomic(value, env)?;
                self.store.write(addr, v.clone());
                self.note_write(addr, name);
                Ok(v)
            }
            AtomicExpr::ErrorExpr { label, span } => Err(RuntimeError {
                kind: ErrorKind::Explicit { label: label.clone() },
                span: span.clone(),
            }),
        }
    }

    fn apply_binary(
        &mut self,
        op: BinOp,
        l: ValuePair,
        r: ValuePair,
        span: &SourceSpan,
    ) -> Result<ValuePair, RuntimeError> {
        let type_err = |detail: String| RuntimeError {
            kind: ErrorKind::TypeMismatch { detail },
            span: span.clone(),
        };
        let operand_err = || {
            type_err(format!(
                "operator `{}` applied to {} and {}",
                op.token(),
                l.concrete.type_name(),
                r.concrete.type_name()
            ))
        };
        match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                let (a, b) = match (&l.concrete, &r.concrete) {
                    (ConcreteValue::Int(a), ConcreteValue::Int(b)) => (*a, *b),
                    _ => return Err(operand_err()),
                };
                if matches!(op, BinOp::Div | BinOp::Mod) && b == 0 {
                    return Err(RuntimeError {
                        kind: ErrorKind::DivisionByZero,
                        span: span.clone(),
                    });
                }
                let result = match op {
                    BinOp::Add => a.checked_add(b),
                    BinOp::Sub => a.checked_sub(b),
                    BinOp::Mul => a.checked_mul(b),
                    BinOp::Div => a.checked_div_euclid(b),
                    BinOp::Mod => a.checked_rem_euclid(b),
                    _ => unreachable!(),
                }
                .ok_or_else(|| RuntimeError { kind: ErrorKind::Overflow, span: span.clone() })?;
                let concrete = ConcreteValue::Int(result);
                let symbolic = if matches!(op, BinOp::Div | BinOp::Mod) {
                    // No symbolic form; fall back to the concrete result.
                    lift(&concrete)
                } else {
                    SymbolicValue::binary(op, l.symbolic, r.symbolic)
                        .map_err(|e| type_err(e.to_string()))?
                };
                Ok(ValuePair::new(concrete, symbolic))
            }
            BinOp::Eq => {
                let result = match (&l.concrete, &r.concrete) {
                    (ConcreteValue::Int(a), ConcreteValue::Int(b)) => a == b,
                    (ConcreteValue::Bool(a), ConcreteValue::Bool(b)) => a == b,
                    _ => return Err(operand_err()),
                };
                let symbolic = SymbolicValue::binary(op, l.symbolic, r.symbolic)
                    .map_err(|e| type_err(e.to_string()))?;
                Ok(ValuePair::new(ConcreteValue::Bool(result), symbolic))
            }
            BinOp::Lt | BinOp::Le => {
                let (a, b) = match (&l.concrete, &r.concrete) {
                    (ConcreteValue::Int(a), ConcreteValue::Int(b)) => (*a, *b),
                    _ => return Err(operand_err()),
                };
                let result = if op == BinOp::Lt { a < b } else { a <= b };
                let symbolic = SymbolicValue::binary(op, l.symbolic, r.symbolic)
                    .map_err(|e| type_err(e.to_string()))?;
                Ok(ValuePair::new(ConcreteValue::Bool(result), symbolic))
            }
        }
    }

    fn fail(&self, error: RuntimeError) -> Flow {
        Flow::Done(Termination::Failed {
            error,
            pc: self.pc.clone(),
            handler: self.current_handler.clone(),
        })
    }

    /// Hand a produced value to the continuation; at the top of the stack,
    /// fall through to the handler boundary.
    fn continue_with_value(&mut self, value: ValuePair) -> Flow {
        match self.kstack.pop() {
            Some(Kont::LetK { addr, body, env }) => {
                self.store.write(addr, value);
                self.control = body;
                self.env = env;
                Flow::Continue
            }
            None => {
                if self.pending_handlers.is_empty() {
                    self.exit_boundary = Some(self.boundary_snapshot());
                    Flow::Done(Termination::Completed)
                } else {
                    self.fire_handler()
                }
            }
        }
    }

    /// Pop the next scheduled handler and enter its body. The parameters are
    /// bound to fresh symbolic inputs whose concrete halves come from the
    /// pending input queue, falling back to seeded randomness.
    fn fire_handler(&mut self) -> Flow {
        let scheduled = self.pending_handlers.pop_front().expect("caller checked non-empty");
        let registration = self.registrations.iter().find(|r| r.handler == scheduled).cloned();
        let Some(registration) = registration else {
            return Flow::Done(Termination::ScheduleMismatch { expected: scheduled });
        };
        let position = self.fired_events;
        self.fired_events += 1;
        self.current_handler = HandlerSite::Handler(scheduled.clone());
        self.handler_start_addr = self.store.len();
        let inputs_before = self.next_input_ordinal;
        let mut env = registration.env.clone();
        let mut param_ids = Vec::with_capacity(registration.lambda.params.len());
        for param in &registration.lambda.params {
            let id = InputId(self.next_input_ordinal);
            self.next_input_ordinal += 1;
            let concrete = self.next_concrete_input();
            self.realized_inputs.push(concrete.clone());
            let addr = self.store.alloc_init(ValuePair::new(concrete, SymbolicValue::input(id)));
            env = env.bind(param.clone(), addr);
            param_ids.push(id);
        }
        self.handler_input_ids.insert(position, param_ids.clone());
        self.rw_profile.entry(position).or_default();
        self.steps.push(TraceStep::Event {
            handler: scheduled,
            arity: registration.arity,
            param_ids,
            inputs_before,
        });
        self.control = Arc::clone(&registration.lambda.body);
        self.env = env;
        Flow::Continue
    }

    /// Apply exactly one evaluation rule.
    fn step(&mut self, policy: &mut dyn SendPolicy) -> Flow {
        let control = Arc::clone(&self.control);
        let env = self.env.clone();
        match control.as_ref() {
            Expr::Atomic(ae) => {
                if !self.kstack.is_empty() {
                    let value = match self.eval_atomic(ae, &env) {
                        Ok(v) => v,
                        Err(e) => return self.fail(e),
                    };
                    self.continue_with_value(value)
                } else if !self.pending_handlers.is_empty() {
                    // A handler boundary supersedes the tail atomic, which is
                    // discarded without evaluation.
                    self.fire_handler()
                } else {
                    // A longer schedule would fire here and discard the tail
                    // atomic, so snapshot the boundary before evaluating it.
                    let boundary = self.boundary_snapshot();
                    match self.eval_atomic(ae, &env) {
                        Ok(_) => {
                            self.exit_boundary = Some(boundary);
                            Flow::Done(Termination::Completed)
                        }
                        Err(e) => self.fail(e),
                    }
                }
            }
            Expr::Let { name, bound, body, .. } => {
                let addr = self.store.alloc();
                self.kstack.push(Kont::LetK {
                    addr,
                    body: Arc::clone(body),
                    env: env.bind(name.clone(), addr),
                });
                self.control = Arc::clone(bound);
                Flow::Continue
            }
            Expr::Apply { func, args, span } => {
                let fv = match self.eval_atomic(func, &env) {
                    Ok(v) => v,
                    Err(e) => return self.fail(e),
                };
                let mut arg_values = Vec::with_capacity(args.len());
                for arg in args {
                    match self.eval_atomic(arg, &env) {
                        Ok(v) => arg_values.push(v),
                        Err(e) => return self.fail(e),
                    }
                }
                match fv.concrete {
                    ConcreteValue::Closure { lambda, env: closure_env, .. } => {
                        if lambda.params.len() != arg_values.len() {
                            return self.fail(RuntimeError {
                                kind: ErrorKind::ArityMismatch {
                                    expected: lambda.params.len() as u32,
                                    found: arg_values.len() as u32,
                                },
                                span: span.clone(),
                            });
                        }
                        let mut call_env = closure_env;
                        for (param, value) in lambda.params.iter().zip(arg_values) {
                            let addr = self.store.alloc_init(value);
                            call_env = call_env.bind(param.clone(), addr);
                        }
                        // Tail call: the continuation stack is untouched.
                        self.control = Arc::clone(&lambda.body);
                        self.env = call_env;
                        Flow::Continue
                    }
                    other => self.fail(RuntimeError {
                        kind: ErrorKind::TypeMismatch {
                            detail: format!("application of a non-closure ({})", other.type_name()),
                        },
                        span: span.clone(),
                    }),
                }
            }
            Expr::If { cond, then_branch, else_branch, span } => {
                let c = match self.eval_atomic(cond, &env) {
                    Ok(v) => v,
                    Err(e) => return self.fail(e),
                };
                let taken = match c.concrete {
                    ConcreteValue::Bool(b) => b,
                    other => {
                        return self.fail(RuntimeError {
                            kind: ErrorKind::TypeMismatch {
                                detail: format!("branch condition is {} (boolean required)", other.type_name()),
                            },
                            span: span.clone(),
                        })
                    }
                };
                let appended = if taken {
                    c.symbolic.clone()
                } else {
                    match c.symbolic.negate() {
                        Ok(s) => s,
                        Err(e) => {
                            return self.fail(RuntimeError {
                                kind: ErrorKind::TypeMismatch { detail: e.to_string() },
                                span: span.clone(),
                            })
                        }
                    }
                };
                self.pc.push(Constraint::Branch { cond: appended, span: span.clone() });
                self.steps.push(TraceStep::Branch {
                    cond: c.symbolic,
                    taken,
                    span: span.clone(),
                    inputs_before: self.next_input_ordinal,
                });
                self.control =
                    if taken { Arc::clone(then_branch) } else { Arc::clone(else_branch) };
                Flow::Continue
            }
            Expr::Send { handler_type, payload, .. } => {
                let mut values = Vec::with_capacity(payload.len());
                for slot in payload {
                    match self.eval_atomic(slot, &env) {
                        Ok(v) => values.push(v),
                        Err(e) => return self.fail(e),
                    }
                }
                let observation = SendObservation {
                    handler_type: handler_type.clone(),
                    payload: values,
                    pc_at_send: self.pc.clone(),
                    occurrence_index: self.sends.len() as u32,
                    inputs_at_send: self.next_input_ordinal,
                };
                self.steps.push(TraceStep::Send {
                    handler_type: handler_type.clone(),
                    occurrence: observation.occurrence_index,
                    inputs_before: observation.inputs_at_send,
                });
                let decision = policy.on_send(&observation);
                self.sends.push(observation.clone());
                match decision {
                    SendDecision::Continue => self.continue_with_value(ValuePair::new(
                        ConcreteValue::Bool(true),
                        SymbolicValue::truth(true),
                    )),
                    SendDecision::Stop { matched } => {
                        Flow::Done(Termination::StoppedAtSend { observation, matched })
                    }
                }
            }
        }
    }

    fn into_outcome(self, termination: Termination, schedule: Vec<HandlerRef>, seed: u64) -> RunOutcome {
        RunOutcome {
            termination,
            pc: self.pc,
            realized_inputs: self.realized_inputs,
            sends: self.sends,
            rw_profile: self.rw_profile,
            handler_input_ids: self.handler_input_ids,
            steps: self.steps,
            schedule,
            fired_events: self.fired_events,
            seed,
            exit_boundary: self.exit_boundary,
        }
    }
}

/// Execute one complete run.
pub fn run(
    program: &Program,
    pending_inputs: Vec<ConcreteValue>,
    schedule: Vec<HandlerRef>,
    config: &RunConfig,
    policy: &mut dyn SendPolicy,
) -> RunOutcome {
    let mut machine =
        Machine::inject(Arc::clone(&program.body), pending_inputs, schedule.clone(), config);
    let mut steps_taken: u64 = 0;
    let termination = loop {
        if steps_taken >= config.step_limit {
            break Termination::StepBudgetExceeded;
        }
        steps_taken += 1;
        match machine.step(policy) {
            Flow::Continue => {}
            Flow::Done(t) => break t,
        }
    };
    machine.into_outcome(termination, schedule, config.seed)
}

fn pc_key(pc: &PathConstraint) -> Vec<String> {
    pc.iter()
        .map(|c| match c {
            Constraint::Branch { cond, .. } => cond.to_string(),
            Constraint::Registered { handler, .. } => format!("reg {handler}"),
        })
        .collect()
}

/// Brute-force path count: enumerate every handler schedule up to
/// `max_events` and every input vector within `input_bound`, and count the
/// distinct (fired schedule, path constraint) pairs realized. Two runs that
/// fire different handler sequences are different paths even when their
/// constraints coincide. Exponential; for small test programs only.
pub fn count_feasible_paths(program: &Program, max_events: usize, input_bound: i64) -> usize {
    let config = RunConfig { seed: 0, step_limit: 100_000, input_bound };
    let mut discovered: BTreeSet<HandlerRef> = BTreeSet::new();
    let mut distinct: BTreeSet<(Vec<String>, Vec<String>)> = BTreeSet::new();
    let mut frontier: Vec<Vec<HandlerRef>> = vec![Vec::new()];
    for depth in 0..=max_events {
        for schedule in &frontier {
            explore_inputs(program, schedule, &config, &mut distinct, &mut discovered);
        }
        if depth == max_events {
            break;
        }
        let mut next = Vec::new();
        for schedule in &frontier {
            for handler in &discovered {
                let mut extended = schedule.clone();
                extended.push(handler.clone());
                next.push(extended);
            }
        }
        frontier = next;
    }
    distinct.len()
}

fn explore_inputs(
    program: &Program,
    schedule: &[HandlerRef],
    config: &RunConfig,
    distinct: &mut BTreeSet<(Vec<String>, Vec<String>)>,
    discovered: &mut BTreeSet<HandlerRef>,
) {
    const MAX_PREFIX: usize = 64;
    let mut stack: Vec<Vec<ConcreteValue>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let outcome =
            run(program, prefix.clone(), schedule.to_vec(), config, &mut RecordOnly);
        for step in &outcome.steps {
            if let TraceStep::Register { handler, .. } = step {
                discovered.insert(handler.clone());
            }
        }
        if outcome.realized_inputs.len() > prefix.len() && prefix.len() < MAX_PREFIX {
            // The run consumed the whole prefix and then drew randomly;
            // enumerate that draw.
            for v in -config.input_bound..=config.input_bound {
                let mut extended = prefix.clone();
                extended.push(ConcreteValue::Int(v));
                stack.push(extended);
            }
        } else {
            let fired: Vec<String> =
                outcome.fired_schedule().iter().map(|h| h.to_string()).collect();
            distinct.insert((fired, pc_key(&outcome.pc)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, Role};

    fn client(src: &str) -> Program {
        parse_program(src, Role::Client, "test").expect("test program parses")
    }

    fn corpus(file: &str, role: Role) -> Program {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/");
        let src = std::fs::read_to_string(format!("{path}{file}")).expect("corpus file");
        parse_program(&src, role, file).expect("corpus program parses")
    }

    fn ints(values: &[i64]) -> Vec<ConcreteValue> {
        values.iter().map(|v| ConcreteValue::Int(*v)).collect()
    }

    fn handler(name: &str, ordinal: u32) -> HandlerRef {
        HandlerRef::new(name, ordinal)
    }

    fn run_with(
        program: &Program,
        inputs: Vec<ConcreteValue>,
        schedule: Vec<HandlerRef>,
    ) -> RunOutcome {
        run(program, inputs, schedule, &RunConfig::default(), &mut RecordOnly)
    }

    fn rendered_pc(outcome: &RunOutcome) -> Vec<String> {
        outcome.pc.iter().map(|c| c.render()).collect()
    }

    #[test]
    fn atomic_program_completes_with_empty_path() {
        let outcome = run_with(&client("0"), Vec::new(), Vec::new());
        assert_eq!(outcome.termination, Termination::Completed);
        assert!(outcome.pc.is_empty());
        assert_eq!(outcome.trace_lines(), vec!["inputs = []", "completed"]);
        let boundary = outcome.exit_boundary.expect("completed runs expose the boundary");
        assert!(boundary.registrations.is_empty());
        assert_eq!(boundary.inputs_before, 0);
    }

    #[test]
    fn false_branch_negates_the_recorded_condition() {
        let program = corpus("fig1.sfl", Role::Client);
        let outcome = run_with(&program, ints(&[3, 5]), Vec::new());
        assert_eq!(outcome.termination, Termination::Completed);
        assert_eq!(rendered_pc(&outcome), vec!["(not (= (* in1 2) in0))"]);
        assert_eq!(outcome.realized_inputs, ints(&[3, 5]));
    }

    #[test]
    fn deeper_path_stacks_constraints_in_branch_order() {
        let program = corpus("fig1.sfl", Role::Client);
        let outcome = run_with(&program, ints(&[2, 1]), Vec::new());
        assert_eq!(outcome.termination, Termination::Completed);
        assert_eq!(
            rendered_pc(&outcome),
            vec!["(= (* in1 2) in0)", "(not (< (+ in1 10) in0))"],
        );
    }

    #[test]
    fn explicit_error_surfaces_with_position_and_path() {
        let program = corpus("fig1.sfl", Role::Client);
        let outcome = run_with(&program, ints(&[30, 15]), Vec::new());
        let Termination::Failed { error, pc, handler } = &outcome.termination else {
            panic!("expected failure, got {:?}", outcome.termination);
        };
        assert_eq!(error.kind, ErrorKind::Explicit { label: "Reached error state".into() });
        assert_eq!(error.kind.label(), "Reached error state");
        assert_eq!((error.span.line, error.span.col), (5, 13));
        assert_eq!(*handler, HandlerSite::TopLevel);
        assert_eq!(
            pc.iter().map(|c| c.render()).collect::<Vec<_>>(),
            vec!["(= (* in1 2) in0)", "(< (+ in1 10) in0)"],
        );
        assert!(outcome.exit_boundary.is_none());
    }

    #[test]
    fn scheduling_an_unregistered_handler_mismatches() {
        let outcome = run_with(&client("0"), Vec::new(), vec![handler("ghost", 0)]);
        assert_eq!(
            outcome.termination,
            Termination::ScheduleMismatch { expected: handler("ghost", 0) },
        );
        assert_eq!(outcome.termination.summary(), "schedule-mismatch: ghost#0");
    }

    #[test]
    fn handler_params_bind_fresh_inputs() {
        let program = corpus("listing6-server.sfl", Role::Server);
        let outcome = run_with(&program, ints(&[20, 1]), vec![handler("msg", 0)]);
        let Termination::Failed { error, handler: site, .. } = &outcome.termination else {
            panic!("expected failure, got {:?}", outcome.termination);
        };
        assert_eq!(error.kind.label(), "Reached an error state");
        assert_eq!(*site, HandlerSite::Handler(handler("msg", 0)));
        assert_eq!(
            rendered_pc(&outcome),
            vec!["(registered msg#0 arity 2)", "(= in1 1)", "(< 15 in0)"],
        );
        assert_eq!(outcome.handler_input_ids[&0], vec![InputId(0), InputId(1)]);
        assert_eq!(outcome.fired_events, 1);
        assert_eq!(
            outcome.trace_lines(),
            vec![
                "register msg#0 arity=2",
                "event msg#0 params=[in0, in1]",
                "branch (= in1 1) taken=true",
                "branch (< 15 in0) taken=true",
                "inputs = [20, 1]",
                "failed: listing6-server.sfl:6:15: Reached an error state",
            ],
        );
    }

    #[test]
    fn rw_profile_attributes_outer_bindings_only() {
        let program = corpus("listing1.sfl", Role::Client);

        // Even input: button1 reads `counter` without writing it.
        let outcome = run_with(&program, ints(&[4]), vec![handler("button1", 0)]);
        assert_eq!(outcome.termination, Termination::Completed);
        let sets = &outcome.rw_profile[&0];
        assert!(sets.reads.contains("counter"));
        assert!(sets.writes.is_empty());

        // Odd input: button1 resets `counter`.
        let outcome = run_with(&program, ints(&[3]), vec![handler("button1", 0)]);
        let sets = &outcome.rw_profile[&0];
        assert!(sets.writes.contains("counter"));

        // button2 increments: reads and writes.
        let outcome = run_with(&program, ints(&[0]), vec![handler("button2", 1)]);
        assert_eq!(outcome.termination, Termination::Completed);
        let sets = &outcome.rw_profile[&0];
        assert!(sets.reads.contains("counter"));
        assert!(sets.writes.contains("counter"));
    }

    #[test]
    fn handler_local_bindings_stay_out_of_the_profile() {
        let program = client(
            "(let shared 0\n\
             \x20 (begin\n\
             \x20   (register h\n\
             \x20     (lambda (e)\n\
             \x20       (let local e (+ local 1))))\n\
             \x20   0))",
        );
        let outcome = run_with(&program, ints(&[5]), vec![handler("h", 0)]);
        assert_eq!(outcome.termination, Termination::Completed);
        let sets = &outcome.rw_profile[&0];
        assert!(sets.reads.is_empty(), "local reads attributed: {:?}", sets.reads);
        assert!(sets.writes.is_empty());
    }

    #[test]
    fn sends_record_payload_and_path_at_send() {
        let program = corpus("listing6-client.sfl", Role::Client);
        let outcome = run_with(&program, ints(&[15, 2]), vec![handler("click", 0)]);
        assert_eq!(outcome.termination, Termination::Completed);
        assert_eq!(outcome.sends.len(), 1);
        let send = &outcome.sends[0];
        assert_eq!(send.handler_type.as_ref(), "msg");
        assert_eq!(send.occurrence_index, 0);
        assert_eq!(send.inputs_at_send, 2);
        assert_eq!(send.payload.len(), 2);
        assert_eq!(send.payload[0].concrete, ConcreteValue::Int(16));
        assert_eq!(send.payload[0].symbolic.to_string(), "(+ in0 1)");
        assert_eq!(send.payload[1].concrete, ConcreteValue::Int(2));
        assert_eq!(send.payload[1].symbolic.to_string(), "in1");
        assert_eq!(
            send.pc_at_send.iter().map(|c| c.render()).collect::<Vec<_>>(),
            vec!["(registered click#0 arity 2)", "(< 10 in0)"],
        );
    }

    #[test]
    fn send_policy_can_stop_the_run() {
        struct StopFirst;
        impl SendPolicy for StopFirst {
            fn on_send(&mut self, _: &SendObservation) -> SendDecision {
                SendDecision::Stop { matched: vec![7] }
            }
        }
        let program = corpus("listing6-client.sfl", Role::Client);
        let outcome = run(
            &program,
            ints(&[15, 2]),
            vec![handler("click", 0)],
            &RunConfig::default(),
            &mut StopFirst,
        );
        let Termination::StoppedAtSend { observation, matched } = &outcome.termination else {
            panic!("expected stop, got {:?}", outcome.termination);
        };
        assert_eq!(observation.handler_type.as_ref(), "msg");
        assert_eq!(*matched, vec![7]);
        assert_eq!(outcome.termination.summary(), "stopped-at-send msg #0 matched=[7]");
    }

    #[test]
    fn firing_handler_discards_unevaluated_tail_atomic() {
        // `poke` leaves its write in tail position, so a following scheduled
        // handler supersedes it and the write never lands.
        let bare = client(
            "(let flag 0\n\
             \x20 (begin\n\
             \x20   (register poke (lambda (e) (set! flag 1)))\n\
             \x20   (register check (lambda (e) (if (= flag 1) (error \"saw write\") 0)))\n\
             \x20   0))",
        );
        let schedule = vec![handler("poke", 0), handler("check", 1)];
        let outcome = run_with(&bare, ints(&[0, 0]), schedule.clone());
        assert_eq!(outcome.termination, Termination::Completed);

        // Wrapping the write in `begin` moves it off the tail, so it lands
        // before the next handler fires.
        let wrapped = client(
            "(let flag 0\n\
             \x20 (begin\n\
             \x20   (register poke (lambda (e) (begin (set! flag 1) 0)))\n\
             \x20   (register check (lambda (e) (if (= flag 1) (error \"saw write\") 0)))\n\
             \x20   0))",
        );
        let outcome = run_with(&wrapped, ints(&[0, 0]), schedule);
        let Termination::Failed { error, .. } = &outcome.termination else {
            panic!("expected the probe to fire, got {:?}", outcome.termination);
        };
        assert_eq!(error.kind.label(), "saw write");
    }

    #[test]
    fn final_tail_atomic_evaluates_when_no_handlers_remain() {
        let outcome = run_with(&client("(error \"tail\")"), Vec::new(), Vec::new());
        let Termination::Failed { error, .. } = &outcome.termination else {
            panic!("expected failure, got {:?}", outcome.termination);
        };
        assert_eq!(error.kind.label(), "tail");
    }

    #[test]
    fn exit_boundary_excludes_tail_atomic_registrations() {
        let program = client(
            "(begin (register a (lambda (x) 0)) (register b (lambda (x) 0)))",
        );
        let outcome = run_with(&program, Vec::new(), Vec::new());
        assert_eq!(outcome.termination, Termination::Completed);
        let boundary = outcome.exit_boundary.expect("completed run");
        assert_eq!(boundary.registrations, vec![handler("a", 0)]);

        // Scheduling any handler at the boundary discards the tail `register b`.
        let outcome = run_with(&program, ints(&[0]), vec![handler("a", 0)]);
        assert_eq!(outcome.termination, Termination::Completed);
        let steps: Vec<_> = outcome
            .steps
            .iter()
            .filter(|s| matches!(s, TraceStep::Register { .. }))
            .collect();
        assert_eq!(steps.len(), 1, "register b must not run: {steps:?}");
    }

    #[test]
    fn step_budget_stops_divergent_programs() {
        let omega = client("(let f (lambda (x) (x x)) (f f))");
        let config = RunConfig { step_limit: 100, ..RunConfig::default() };
        let outcome = run(&omega, Vec::new(), Vec::new(), &config, &mut RecordOnly);
        assert_eq!(outcome.termination, Termination::StepBudgetExceeded);
        assert_eq!(outcome.termination.summary(), "step-budget-exceeded");
    }

    #[test]
    fn division_and_modulo_are_euclidean_and_concretised() {
        let program = client(
            "(if (= (/ -7 2) -4)\n\
             \x20   (if (= (mod -7 2) 1)\n\
             \x20       (if (= (mod 7 -2) 1) 0 (error \"mod sign\"))\n\
             \x20       (error \"mod\"))\n\
             \x20   (error \"div\"))",
        );
        let outcome = run_with(&program, Vec::new(), Vec::new());
        assert_eq!(outcome.termination, Termination::Completed);
        // The quotient has no symbolic form: the condition lifts the concrete
        // result instead of building a `/` term.
        let Constraint::Branch { cond, .. } = &outcome.pc[0] else { panic!() };
        assert_eq!(cond.to_string(), "(= -4 -4)");
    }

    #[test]
    fn division_by_zero_fails() {
        for src in ["(/ 1 0)", "(mod 1 0)"] {
            let outcome = run_with(&client(src), Vec::new(), Vec::new());
            let Termination::Failed { error, .. } = &outcome.termination else {
                panic!("expected failure for {src}");
            };
            assert_eq!(error.kind, ErrorKind::DivisionByZero);
        }
    }

    #[test]
    fn overflow_is_detected() {
        let program = client("(+ 9223372036854775807 1)");
        let outcome = run_with(&program, Vec::new(), Vec::new());
        let Termination::Failed { error, .. } = &outcome.termination else {
            panic!("expected overflow");
        };
        assert_eq!(error.kind, ErrorKind::Overflow);
    }

    #[test]
    fn arity_mismatch_on_application() {
        let program = client("(let f (lambda (x y) x) (f 1))");
        let outcome = run_with(&program, Vec::new(), Vec::new());
        let Termination::Failed { error, .. } = &outcome.termination else {
            panic!("expected failure");
        };
        assert_eq!(error.kind, ErrorKind::ArityMismatch { expected: 2, found: 1 });
    }

    #[test]
    fn type_errors_fail_the_run() {
        let cases = [
            "(let f 3 (f 1))",   // application of a non-closure
            "(if 3 1 2)",        // integer branch condition
            "(+ true 1)",        // boolean arithmetic operand
            "(= 1 true)",        // mixed-sort equality
        ];
        for src in cases {
            let outcome = run_with(&client(src), Vec::new(), Vec::new());
            let Termination::Failed { error, .. } = &outcome.termination else {
                panic!("expected type failure for {src}");
            };
            assert_eq!(error.kind.code(), "type-mismatch", "{src}: {error}");
        }
    }

    #[test]
    fn runs_are_deterministic_in_seed() {
        let program = corpus("fig1.sfl", Role::Client);
        let config = RunConfig::with_seed(42);
        let first = run(&program, Vec::new(), Vec::new(), &config, &mut RecordOnly);
        let second = run(&program, Vec::new(), Vec::new(), &config, &mut RecordOnly);
        assert_eq!(first.trace_lines(), second.trace_lines());
        assert_eq!(first.pc, second.pc);
    }

    #[test]
    fn realized_inputs_replay_the_same_path() {
        let program = corpus("fig1.sfl", Role::Client);
        let config = RunConfig::with_seed(7);
        let original = run(&program, Vec::new(), Vec::new(), &config, &mut RecordOnly);
        let replayed = run(
            &program,
            original.realized_inputs.clone(),
            Vec::new(),
            &RunConfig::with_seed(999),
            &mut RecordOnly,
        );
        assert_eq!(replayed.pc, original.pc);
        assert_eq!(replayed.termination, original.termination);
        assert_eq!(replayed.realized_inputs, original.realized_inputs);
    }

    #[test]
    fn random_fallback_respects_the_input_bound() {
        let program = client("(input)");
        for seed in 0..32 {
            let config = RunConfig { seed, input_bound: 5, ..RunConfig::default() };
            let outcome = run(&program, Vec::new(), Vec::new(), &config, &mut RecordOnly);
            let ConcreteValue::Int(v) = outcome.realized_inputs[0] else {
                panic!("fallback inputs are integers");
            };
            assert!((-5..=5).contains(&v), "seed {seed} drew {v}");
        }
    }

    #[test]
    fn feasible_path_counts() {
        // The error path needs x = 2y with y > 10, so the smallest witness is
        // (22, 11); a bound of 32 keeps it reachable.
        let fig1 = corpus("fig1.sfl", Role::Client);
        assert_eq!(count_feasible_paths(&fig1, 0, 32), 3);

        let single = client("(if (= (input) 0) 1 2)");
        assert_eq!(count_feasible_paths(&single, 0, 4), 2);

        // One event: no-op schedule, button1-even, button1-odd, button2.
        let listing1 = corpus("listing1.sfl", Role::Client);
        assert_eq!(count_feasible_paths(&listing1, 1, 4), 4);
    }

    #[test]
    fn error_kinds_serialize_with_stable_codes() {
        let kind = ErrorKind::Explicit { label: "boom".into() };
        let json = serde_json::to_string(&kind).unwrap();
        assert_eq!(json, r#"{"kind":"explicit","label":"boom"}"#);
        assert_eq!(serde_json::from_str::<ErrorKind>(&json).unwrap(), kind);
        assert_eq!(ErrorKind::DivisionByZero.code(), "division-by-zero");
        assert_eq!(
            serde_json::to_string(&ErrorKind::DivisionByZero).unwrap(),
            r#"{"kind":"division-by-zero"}"#,
        );
    }
}
