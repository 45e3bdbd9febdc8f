//! Value domains and constraint algebra.
//!
//! Every runtime value is a pair of a concrete value and a symbolic value.
//! Branch decisions accumulate into path constraints; the solver consumes
//! formulas extracted from those constraints.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::lang::ast::{BinOp, Lambda, Name, SourceSpan};
use crate::machine::Env;

/// Identifier of a symbolic input, ordered by creation within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputId(pub u32);

impl fmt::Display for InputId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "in{}", self.0)
    }
}

impl FromStr for InputId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix("in").ok_or_else(|| format!("invalid input id: {s}"))?;
        digits.parse::<u32>().map(InputId).map_err(|_| format!("invalid input id: {s}"))
    }
}

/// A first-order runtime value: what inputs, models, and traces range over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarValue {
    Int(i64),
    Bool(bool),
}

impl ScalarValue {
    pub fn sort(self) -> Sort {
        match self {
            ScalarValue::Int(_) => Sort::Int,
            ScalarValue::Bool(_) => Sort::Bool,
        }
    }
}

impl fmt::Display for ScalarValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarValue::Int(v) => write!(f, "{v}"),
            ScalarValue::Bool(v) => write!(f, "{v}"),
        }
    }
}

/// Concrete half of a value pair.
#[derive(Debug, Clone)]
pub enum ConcreteValue {
    Int(i64),
    Bool(bool),
    Closure { lambda: Arc<Lambda>, env: Env, closure_id: u64 },
}

impl ConcreteValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ConcreteValue::Int(_) => "integer",
            ConcreteValue::Bool(_) => "boolean",
            ConcreteValue::Closure { .. } => "closure",
        }
    }

    pub fn scalar(&self) -> Option<ScalarValue> {
        match self {
            ConcreteValue::Int(v) => Some(ScalarValue::Int(*v)),
            ConcreteValue::Bool(v) => Some(ScalarValue::Bool(*v)),
            ConcreteValue::Closure { .. } => None,
        }
    }
}

impl From<ScalarValue> for ConcreteValue {
    fn from(v: ScalarValue) -> Self {
        match v {
            ScalarValue::Int(i) => ConcreteValue::Int(i),
            ScalarValue::Bool(b) => ConcreteValue::Bool(b),
        }
    }
}

impl PartialEq for ConcreteValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ConcreteValue::Int(a), ConcreteValue::Int(b)) => a == b,
            (ConcreteValue::Bool(a), ConcreteValue::Bool(b)) => a == b,
            (ConcreteValue::Closure { closure_id: a, .. }, ConcreteValue::Closure { closure_id: b, .. }) => {
                a == b
            }
            _ => false,
        }
    }
}

impl fmt::Display for ConcreteValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcreteValue::Int(v) => write!(f, "{v}"),
            ConcreteValue::Bool(v) => write!(f, "{v}"),
            ConcreteValue::Closure { closure_id, .. } => write!(f, "<closure#{closure_id}>"),
        }
    }
}

/// Sort of a symbolic term. Inputs are unsorted until context fixes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sort {
    Int,
    Bool,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Int => write!(f, "int"),
            Sort::Bool => write!(f, "bool"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SortError {
    #[error("operator `{op}` applied to {sort}-sorted operand", op = op.token())]
    OperandSort { op: BinOp, sort: Sort },
    #[error("operator `{op}` has no symbolic form", op = op.token())]
    ConcretisedOperator { op: BinOp },
    #[error("empty symbolic value used as an operand")]
    EmptyOperand,
    #[error("negation of a non-boolean term")]
    NegateNonBool,
}

/// Symbolic half of a value pair. Children are shared so path constraints
/// clone cheaply.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum SymbolicValue {
    Int { value: i64 },
    Bool { value: bool },
    Input { id: InputId },
    /// No symbolic representation (closures and anything derived from them).
    Empty,
    Binary { op: BinOp, left: Arc<SymbolicValue>, right: Arc<SymbolicValue> },
    Not { inner: Arc<SymbolicValue> },
}

impl SymbolicValue {
    pub fn int(value: i64) -> Self {
        SymbolicValue::Int { value }
    }

    pub fn truth(value: bool) -> Self {
        SymbolicValue::Bool { value }
    }

    pub fn input(id: InputId) -> Self {
        SymbolicValue::Input { id }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, SymbolicValue::Empty)
    }

    /// Sort of the term, when locally determined. Inputs and `Empty` have no
    /// intrinsic sort.
    pub fn sort(&self) -> Option<Sort> {
        match self {
            SymbolicValue::Int { .. } => Some(Sort::Int),
            SymbolicValue::Bool { .. } => Some(Sort::Bool),
            SymbolicValue::Input { .. } | SymbolicValue::Empty => None,
            SymbolicValue::Binary { op, .. } => {
                Some(if op.is_comparison() { Sort::Bool } else { Sort::Int })
            }
            SymbolicValue::Not { .. } => Some(Sort::Bool),
        }
    }

    /// Build a binary term, rejecting operands whose sorts cannot fit the
    /// operator. Division and modulo are concretised by the machine and never
    /// form symbolic terms.
    pub fn binary(op: BinOp, left: SymbolicValue, right: SymbolicValue) -> Result<Self, SortError> {
        if matches!(op, BinOp::Div | BinOp::Mod) {
            return Err(SortError::ConcretisedOperator { op });
        }
        if left.is_empty() || right.is_empty() {
            return Err(SortError::EmptyOperand);
        }
        let check = |side: &SymbolicValue| -> Result<(), SortError> {
            match (op, side.sort()) {
                (BinOp::Eq, _) => Ok(()),
                (_, Some(Sort::Bool)) => Err(SortError::OperandSort { op, sort: Sort::Bool }),
                _ => Ok(()),
            }
        };
        check(&left)?;
        check(&right)?;
        if op == BinOp::Eq {
            if let (Some(ls), Some(rs)) = (left.sort(), right.sort()) {
                if ls != rs {
                    return Err(SortError::OperandSort { op, sort: rs });
                }
            }
        }
        Ok(SymbolicValue::Binary { op, left: Arc::new(left), right: Arc::new(right) })
    }

    /// Logical negation with literal and double-negation folding.
    pub fn negate(&self) -> Result<Self, SortError> {
        match self {
            SymbolicValue::Bool { value } => Ok(SymbolicValue::Bool { value: !value }),
            SymbolicValue::Not { inner } => Ok(inner.as_ref().clone()),
            other => match other.sort() {
                Some(Sort::Int) => Err(SortError::NegateNonBool),
                None if other.is_empty() => Err(SortError::NegateNonBool),
                _ => Ok(SymbolicValue::Not { inner: Arc::new(other.clone()) }),
            },
        }
    }

    /// All input ids in the term, ascending.
    pub fn free_inputs(&self) -> Vec<InputId> {
        let mut set = BTreeSet::new();
        self.collect_inputs(&mut set);
        set.into_iter().collect()
    }

    pub fn collect_inputs(&self, set: &mut BTreeSet<InputId>) {
        match self {
            SymbolicValue::Input { id } => {
                set.insert(*id);
            }
            SymbolicValue::Binary { left, right, .. } => {
                left.collect_inputs(set);
                right.collect_inputs(set);
            }
            SymbolicValue::Not { inner } => inner.collect_inputs(set),
            _ => {}
        }
    }

    /// Visit every input occurrence in left-to-right term order (with
    /// repetition), for first-occurrence numbering.
    pub fn for_each_input(&self, f: &mut impl FnMut(InputId)) {
        match self {
            SymbolicValue::Input { id } => f(*id),
            SymbolicValue::Binary { left, right, .. } => {
                left.for_each_input(f);
                right.for_each_input(f);
            }
            SymbolicValue::Not { inner } => inner.for_each_input(f),
            _ => {}
        }
    }

    /// Rewrite every input id through `f`.
    pub fn map_inputs(&self, f: &mut impl FnMut(InputId) -> InputId) -> SymbolicValue {
        match self {
            SymbolicValue::Input { id } => SymbolicValue::Input { id: f(*id) },
            SymbolicValue::Binary { op, left, right } => SymbolicValue::Binary {
                op: *op,
                left: Arc::new(left.map_inputs(f)),
                right: Arc::new(right.map_inputs(f)),
            },
            SymbolicValue::Not { inner } => {
                SymbolicValue::Not { inner: Arc::new(inner.map_inputs(f)) }
            }
            other => other.clone(),
        }
    }
}

impl fmt::Display for SymbolicValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolicValue::Int { value } => write!(f, "{value}"),
            SymbolicValue::Bool { value } => write!(f, "{value}"),
            SymbolicValue::Input { id } => write!(f, "{id}"),
            SymbolicValue::Empty => write!(f, "empty"),
            SymbolicValue::Binary { op, left, right } => {
                write!(f, "({} {left} {right})", op.token())
            }
            SymbolicValue::Not { inner } => write!(f, "(not {inner})"),
        }
    }
}

/// Lift a concrete value into the symbolic domain. Closures have no symbolic
/// representation.
pub fn lift(c: &ConcreteValue) -> SymbolicValue {
    match c {
        ConcreteValue::Int(v) => SymbolicValue::Int { value: *v },
        ConcreteValue::Bool(v) => SymbolicValue::Bool { value: *v },
        ConcreteValue::Closure { .. } => SymbolicValue::Empty,
    }
}

/// The unit of concolic execution: a concrete value paired with its symbolic
/// shadow.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuePair {
    pub concrete: ConcreteValue,
    pub symbolic: SymbolicValue,
}

impl ValuePair {
    pub fn new(concrete: ConcreteValue, symbolic: SymbolicValue) -> Self {
        ValuePair { concrete, symbolic }
    }

    /// A pair whose symbolic half is the lifted concrete half.
    pub fn lifted(concrete: ConcreteValue) -> Self {
        let symbolic = lift(&concrete);
        ValuePair { concrete, symbolic }
    }
}

/// Identity of a handler registration: its declared type plus the ordinal of
/// the registration within the run (0-based, in observation order).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HandlerRef {
    pub handler_type: Name,
    pub ordinal: u32,
}

impl HandlerRef {
    pub fn new(handler_type: impl Into<Name>, ordinal: u32) -> Self {
        HandlerRef { handler_type: handler_type.into(), ordinal }
    }
}

impl fmt::Display for HandlerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.handler_type, self.ordinal)
    }
}

impl FromStr for HandlerRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ty, ord) = s.rsplit_once('#').ok_or_else(|| format!("invalid handler ref: {s}"))?;
        if ty.is_empty() {
            return Err(format!("invalid handler ref: {s}"));
        }
        let ordinal = ord.parse::<u32>().map_err(|_| format!("invalid handler ref: {s}"))?;
        Ok(HandlerRef { handler_type: Arc::from(ty), ordinal })
    }
}

impl Serialize for HandlerRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HandlerRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One entry of a path constraint: either a branch decision or a handler
/// registration announcement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Constraint {
    Branch { cond: SymbolicValue, span: SourceSpan },
    Registered { handler: HandlerRef, arity: u32 },
}

impl Constraint {
    /// Canonical single-line rendering.
    pub fn render(&self) -> String {
        match self {
            Constraint::Branch { cond, .. } => cond.to_string(),
            Constraint::Registered { handler, arity } => {
                format!("(registered {handler} arity {arity})")
            }
        }
    }
}

pub type PathConstraint = Vec<Constraint>;

/// Conjunction of boolean-sorted symbolic terms, ready for the solver.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Formula(pub Vec<SymbolicValue>);

impl Formula {
    pub fn new(conjuncts: Vec<SymbolicValue>) -> Self {
        Formula(conjuncts)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SymbolicValue> {
        self.0.iter()
    }

    /// All input ids in the formula, ascending.
    pub fn free_inputs(&self) -> Vec<InputId> {
        let mut set = BTreeSet::new();
        for conjunct in &self.0 {
            conjunct.collect_inputs(&mut set);
        }
        set.into_iter().collect()
    }

    pub fn map_inputs(&self, f: &mut impl FnMut(InputId) -> InputId) -> Formula {
        Formula(self.0.iter().map(|c| c.map_inputs(f)).collect())
    }

    /// Conjunct renderings, in order.
    pub fn render_conjuncts(&self) -> Vec<String> {
        self.0.iter().map(|c| c.to_string()).collect()
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

/// The branch decisions of a path constraint, in order, with registration
/// entries dropped.
pub fn branch_formula(pc: &[Constraint]) -> Formula {
    Formula(
        pc.iter()
            .filter_map(|c| match c {
                Constraint::Branch { cond, .. } => Some(cond.clone()),
                Constraint::Registered { .. } => None,
            })
            .collect(),
    )
}

/// Join a client-side formula with a server-side formula at a send: the
/// payload symbols are equated with the mock inputs the server drew for the
/// handler parameters.
pub fn join_for_send(
    client_f: &Formula,
    bindings: &[(InputId, SymbolicValue)],
    server_f: &Formula,
) -> Formula {
    let mut conjuncts = client_f.0.clone();
    for (mock_id, payload_sym) in bindings {
        debug_assert!(!payload_sym.is_empty(), "empty payload symbols must be pre-lifted");
        conjuncts.push(SymbolicValue::Binary {
            op: BinOp::Eq,
            left: Arc::new(SymbolicValue::Input { id: *mock_id }),
            right: Arc::new(payload_sym.clone()),
        });
    }
    conjuncts.extend(server_f.0.iter().cloned());
    Formula(conjuncts)
}
