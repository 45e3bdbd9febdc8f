//! Bounded, deterministic satisfiability checking for input formulas.
//!
//! The search enumerates assignments in expanding L∞ shells (all-zero first,
//! then max-magnitude 1, 2, ...), so the first model found has minimal
//! maximum magnitude. Booleans range over {false, true} and do not count
//! toward the shell norm. Two refinements keep the search tractable without
//! changing which shell a model is found in:
//!
//! * independent connected components of the formula (inputs linked by
//!   shared conjuncts) are solved separately and their models unioned;
//! * each conjunct is checked as soon as all of its inputs are assigned,
//!   pruning failed prefixes early.
//!
//! The assignment budget counts every candidate value tried at any search
//! node; exceeding it yields `Unknown` rather than wrong answers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::lang::ast::BinOp;
use crate::symbolic::{Formula, InputId, ScalarValue, Sort, SymbolicValue};

/// A satisfying assignment, keyed by input id.
pub type Model = BTreeMap<InputId, ScalarValue>;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Integer inputs are searched in [-bound, bound].
    pub bound: i64,
    /// Maximum number of candidate values tried before giving up.
    pub max_assignments: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { bound: 64, max_assignments: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownReason {
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    Unknown(UnknownReason),
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn model(&self) -> Option<&Model> {
        match self {
            SatResult::Sat(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("input {0} is not covered by the model")]
    UncoveredInput(InputId),
    #[error("sort mismatch: {0}")]
    SortMismatch(String),
    #[error("empty symbolic value cannot be evaluated")]
    EmptyTerm,
    #[error("integer overflow")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
}

/// Ground-truth evaluation of a symbolic term under a model.
pub fn evaluate(term: &SymbolicValue, model: &Model) -> Result<ScalarValue, EvalError> {
    match term {
        SymbolicValue::Int { value } => Ok(ScalarValue::Int(*value)),
        SymbolicValue::Bool { value } => Ok(ScalarValue::Bool(*value)),
        SymbolicValue::Input { id } => {
            model.get(id).copied().ok_or(EvalError::UncoveredInput(*id))
        }
        SymbolicValue::Empty => Err(EvalError::EmptyTerm),
        SymbolicValue::Binary { op, left, right } => {
            let l = evaluate(left, model)?;
            let r = evaluate(right, model)?;
            apply_op(*op, l, r)
        }
        SymbolicValue::Not { inner } => match evaluate(inner, model)? {
            ScalarValue::Bool(b) => Ok(ScalarValue::Bool(!b)),
            ScalarValue::Int(_) => {
                Err(EvalError::SortMismatch("negation of an integer".to_string()))
            }
        },
    }
}

fn apply_op(op: BinOp, l: ScalarValue, r: ScalarValue) -> Result<ScalarValue, EvalError> {
    use ScalarValue::{Bool, Int};
    match op {
        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
            let (a, b) = match (l, r) {
                (Int(a), Int(b)) => (a, b),
                _ => {
                    return Err(EvalError::SortMismatch(format!(
                        "operator `{}` applied to a boolean",
                        op.token()
                    )))
                }
            };
            if matches!(op, BinOp::Div | BinOp::Mod) && b == 0 {
                return Err(EvalError::DivisionByZero);
            }
            let v = match op {
                BinOp::Add => a.checked_add(b),
                BinOp::Sub => a.checked_sub(b),
                BinOp::Mul => a.checked_mul(b),
                BinOp::Div => a.checked_div_euclid(b),
                BinOp::Mod => a.checked_rem_euclid(b),
                _ => unreachable!(),
            }
            .ok_or(EvalError::Overflow)?;
            Ok(Int(v))
        }
        BinOp::Eq => match (l, r) {
            (Int(a), Int(b)) => Ok(Bool(a == b)),
            (Bool(a), Bool(b)) => Ok(Bool(a == b)),
            _ => Err(EvalError::SortMismatch("`=` applied to mixed sorts".to_string())),
        },
        BinOp::Lt | BinOp::Le => match (l, r) {
            (Int(a), Int(b)) => Ok(Bool(if op == BinOp::Lt { a < b } else { a <= b })),
            _ => Err(EvalError::SortMismatch(format!(
                "operator `{}` applied to a boolean",
                op.token()
            ))),
        },
    }
}

/// Result of sort inference over a formula. When `conflict` is set the
/// formula demands two different sorts of the same input (or contains an
/// `Empty` term) and cannot be satisfied in a sorted universe.
#[derive(Debug, Clone)]
pub struct SortInference {
    pub sorts: BTreeMap<InputId, Sort>,
    pub conflict: bool,
}

impl SortInference {
    /// Sort of an input, defaulting to Int for unconstrained inputs.
    pub fn sort_of(&self, id: InputId) -> Sort {
        self.sorts.get(&id).copied().unwrap_or(Sort::Int)
    }
}

/// Infer the sort of every input by propagating operator requirements; runs
/// to a fixpoint so equalities chain (e.g. `in0 = in1 ∧ in1 < 5`).
pub fn infer_sorts(formula: &Formula) -> SortInference {
    let mut inference = SortInference { sorts: BTreeMap::new(), conflict: false };
    loop {
        let mut changed = false;
        for conjunct in formula.iter() {
            constrain(conjunct, Some(Sort::Bool), &mut inference, &mut changed);
        }
        if !changed {
            break;
        }
    }
    inference
}

fn known_sort(term: &SymbolicValue, inference: &SortInference) -> Option<Sort> {
    match term {
        SymbolicValue::Input { id } => inference.sorts.get(id).copied(),
        other => other.sort(),
    }
}

fn constrain(
    term: &SymbolicValue,
    expected: Option<Sort>,
    inference: &mut SortInference,
    changed: &mut bool,
) {
    match term {
        SymbolicValue::Int { .. } => {
            if expected == Some(Sort::Bool) {
                inference.conflict = true;
            }
        }
        SymbolicValue::Bool { .. } => {
            if expected == Some(Sort::Int) {
                inference.conflict = true;
            }
        }
        SymbolicValue::Empty => {
            inference.conflict = true;
        }
        SymbolicValue::Input { id } => {
            if let Some(sort) = expected {
                match inference.sorts.get(id) {
                    None => {
                        inference.sorts.insert(*id, sort);
                        *changed = true;
                    }
                    Some(existing) if *existing != sort => {
                        inference.conflict = true;
                    }
                    Some(_) => {}
                }
            }
        }
        SymbolicValue::Binary { op, left, right } => match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                if expected == Some(Sort::Bool) {
                    inference.conflict = true;
                }
                constrain(left, Some(Sort::Int), inference, changed);
                constrain(right, Some(Sort::Int), inference, changed);
            }
            BinOp::Lt | BinOp::Le => {
                if expected == Some(Sort::Int) {
                    inference.conflict = true;
                }
                constrain(left, Some(Sort::Int), inference, changed);
                constrain(right, Some(Sort::Int), inference, changed);
            }
            BinOp::Eq => {
                if expected == Some(Sort::Int) {
                    inference.conflict = true;
                }
                let hint = known_sort(left, inference).or_else(|| known_sort(right, inference));
                constrain(left, hint, inference, changed);
                constrain(right, hint, inference, changed);
            }
        },
        SymbolicValue::Not { inner } => {
            if expected == Some(Sort::Int) {
                inference.conflict = true;
            }
            constrain(inner, Some(Sort::Bool), inference, changed);
        }
    }
}

struct Budget {
    used: u64,
    max: u64,
}

impl Budget {
    fn spend(&mut self) -> bool {
        self.used += 1;
        self.used <= self.max
    }

    fn exhausted(&self) -> bool {
        self.used > self.max
    }
}

enum ComponentResult {
    Sat(Model),
    Unsat,
    Unknown,
}

enum SearchOutcome {
    Found,
    Exhausted,
    OutOfBudget,
}

struct Search<'a> {
    vars: &'a [InputId],
    sorts: &'a SortInference,
    /// conjuncts_by_depth[d] = conjuncts whose last input (in assignment
    /// order) is vars[d]; checkable once depth d is assigned.
    conjuncts_by_depth: Vec<Vec<&'a SymbolicValue>>,
    /// Index of the last integer-sorted variable, if any.
    last_int_pos: Option<usize>,
    assignment: Model,
    budget: &'a mut Budget,
    shell: i64,
}

impl<'a> Search<'a> {
    fn ready_conjuncts_hold(&self, depth: usize) -> bool {
        self.conjuncts_by_depth[depth].iter().all(|c| {
            matches!(evaluate(c, &self.assignment), Ok(ScalarValue::Bool(true)))
        })
    }

    fn dfs(&mut self, depth: usize, norm_met: bool) -> SearchOutcome {
        if depth == self.vars.len() {
            return SearchOutcome::Found;
        }
        let var = self.vars[depth];
        match self.sorts.sort_of(var) {
            Sort::Bool => {
                for value in [false, true] {
                    if !self.budget.spend() {
                        return SearchOutcome::OutOfBudget;
                    }
                    self.assignment.insert(var, ScalarValue::Bool(value));
                    if !self.ready_conjuncts_hold(depth) {
                        continue;
                    }
                    match self.dfs(depth + 1, norm_met) {
                        SearchOutcome::Exhausted => {}
                        other => return other,
                    }
                }
                self.assignment.remove(&var);
                SearchOutcome::Exhausted
            }
            Sort::Int => {
                // If this is the last integer variable and nothing has hit
                // the shell magnitude yet, it must do so itself; otherwise
                // the assignment belongs to an earlier (already searched)
                // shell.
                let must_meet_norm = Some(depth) == self.last_int_pos && !norm_met;
                let candidates = int_candidates(self.shell, must_meet_norm);
                for value in candidates {
                    if !self.budget.spend() {
                        return SearchOutcome::OutOfBudget;
                    }
                    self.assignment.insert(var, ScalarValue::Int(value));
                    if !self.ready_conjuncts_hold(depth) {
                        continue;
                    }
                    let met = norm_met || value.abs() == self.shell;
                    match self.dfs(depth + 1, met) {
                        SearchOutcome::Exhausted => {}
                        other => return other,
                    }
                }
                self.assignment.remove(&var);
                SearchOutcome::Exhausted
            }
        }
    }
}

/// Candidate values for one integer variable at the given shell, in the
/// canonical order 0, 1, -1, 2, -2, ...
fn int_candidates(shell: i64, must_meet_norm: bool) -> Vec<i64> {
    if must_meet_norm {
        if shell == 0 {
            return vec![0];
        }
        return vec![shell, -shell];
    }
    let mut out = Vec::with_capacity((2 * shell + 1) as usize);
    out.push(0);
    for k in 1..=shell {
        out.push(k);
        out.push(-k);
    }
    out
}

fn solve_component(
    conjuncts: &[&SymbolicValue],
    vars: &[InputId],
    sorts: &SortInference,
    bound: i64,
    budget: &mut Budget,
) -> ComponentResult {
    let index_of: BTreeMap<InputId, usize> =
        vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut conjuncts_by_depth: Vec<Vec<&SymbolicValue>> = vec![Vec::new(); vars.len()];
    for c in conjuncts {
        let ready = c
            .free_inputs()
            .iter()
            .map(|v| index_of[v])
            .max()
            .expect("component conjuncts reference at least one input");
        conjuncts_by_depth[ready].push(c);
    }
    let last_int_pos = vars
        .iter()
        .enumerate()
        .rev()
        .find(|(_, v)| sorts.sort_of(**v) == Sort::Int)
        .map(|(i, _)| i);
    let shells: Vec<i64> = if last_int_pos.is_some() { (0..=bound).collect() } else { vec![0] };
    for shell in shells {
        if budget.exhausted() {
            return ComponentResult::Unknown;
        }
        let mut search = Search {
            vars,
            sorts,
            conjuncts_by_depth: conjuncts_by_depth.clone(),
            last_int_pos,
            assignment: Model::new(),
            budget,
            shell,
        };
        // Shell 0 has no magnitude to meet: the all-zero assignment is norm 0.
        let norm_met = shell == 0;
        match search.dfs(0, norm_met) {
            SearchOutcome::Found => return ComponentResult::Sat(search.assignment),
            SearchOutcome::OutOfBudget => return ComponentResult::Unknown,
            SearchOutcome::Exhausted => {}
        }
    }
    ComponentResult::Unsat
}

/// Decide satisfiability of a conjunction within the configured bounds.
pub fn check_sat(formula: &Formula, config: &SolverConfig) -> SatResult {
    let inference = infer_sorts(formula);
    if inference.conflict {
        return SatResult::Unsat;
    }
    let empty = Model::new();
    let mut open_conjuncts: Vec<&SymbolicValue> = Vec::new();
    for conjunct in formula.iter() {
        if conjunct.free_inputs().is_empty() {
            match evaluate(conjunct, &empty) {
                Ok(ScalarValue::Bool(true)) => {}
                _ => return SatResult::Unsat,
            }
        } else {
            open_conjuncts.push(conjunct);
        }
    }
    let vars = formula.free_inputs();
    if vars.is_empty() {
        return SatResult::Sat(Model::new());
    }

    // Union inputs that share a conjunct; each component solves separately.
    let index_of: BTreeMap<InputId, usize> =
        vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut parent: Vec<usize> = (0..vars.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for conjunct in &open_conjuncts {
        let ids = conjunct.free_inputs();
        let first = index_of[&ids[0]];
        for id in &ids[1..] {
            let a = find(&mut parent, first);
            let b = find(&mut parent, index_of[id]);
            if a != b {
                parent[b] = a;
            }
        }
    }
    let mut comp_vars: BTreeMap<usize, Vec<InputId>> = BTreeMap::new();
    for (i, v) in vars.iter().enumerate() {
        let root = find(&mut parent, i);
        comp_vars.entry(root).or_default().push(*v);
    }
    let mut comp_conjuncts: BTreeMap<usize, Vec<&SymbolicValue>> = BTreeMap::new();
    for conjunct in &open_conjuncts {
        let root = find(&mut parent, index_of[&conjunct.free_inputs()[0]]);
        comp_conjuncts.entry(root).or_default().push(conjunct);
    }

    let mut budget = Budget { used: 0, max: config.max_assignments };
    let mut model = Model::new();
    let mut saw_unknown = false;
    for (root, vars_in_comp) in &comp_vars {
        let conjuncts = comp_conjuncts.get(root).map(Vec::as_slice).unwrap_or(&[]);
        match solve_component(conjuncts, vars_in_comp, &inference, config.bound, &mut budget) {
            ComponentResult::Sat(m) => model.extend(m),
            ComponentResult::Unsat => return SatResult::Unsat,
            ComponentResult::Unknown => saw_unknown = true,
        }
    }
    if saw_unknown {
        SatResult::Unknown(UnknownReason::BudgetExceeded)
    } else {
        SatResult::Sat(model)
    }
}

/// Render the formula as a standard SMT-LIB 2 script for out-of-band
/// checking with an external solver. Byte-stable for a given formula.
pub fn to_smtlib(formula: &Formula) -> String {
    let inference = infer_sorts(formula);
    let mut out = String::new();
    for id in formula.free_inputs() {
        let sort = match inference.sort_of(id) {
            Sort::Int => "Int",
            Sort::Bool => "Bool",
        };
        writeln!(out, "(declare-const {id} {sort})").unwrap();
    }
    for conjunct in formula.iter() {
        writeln!(out, "(assert {})", smt_term(conjunct)).unwrap();
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

fn smt_term(term: &SymbolicValue) -> String {
    match term {
        SymbolicValue::Int { value } => {
            if *value < 0 {
                format!("(- {})", value.unsigned_abs())
            } else {
                value.to_string()
            }
        }
        SymbolicValue::Bool { value } => value.to_string(),
        SymbolicValue::Input { id } => id.to_string(),
        SymbolicValue::Empty => "false".to_string(),
        SymbolicValue::Binary { op, left, right } => {
            let tok = match op {
                BinOp::Div => "div",
                BinOp::Mod => "mod",
                other => other.token(),
            };
            format!("({tok} {} {})", smt_term(left), smt_term(right))
        }
        SymbolicValue::Not { inner } => format!("(not {})", smt_term(inner)),
    }
}
