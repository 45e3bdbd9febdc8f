//! Syntax tree for the mini-language: ANF-style expressions split into
//! atomic and serious forms, with source spans on every node.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Interned-ish identifier. Cheap to clone, hashable, thread-safe.
pub type Name = Arc<str>;

/// Half-open source region, 1-based lines and columns.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: Arc<str>,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl SourceSpan {
    pub fn new(file: Arc<str>, line: u32, col: u32, end_line: u32, end_col: u32) -> Self {
        SourceSpan { file, line, col, end_line, end_col }
    }

    /// Span covering `self` through `other`.
    pub fn to(&self, other: &SourceSpan) -> SourceSpan {
        SourceSpan {
            file: self.file.clone(),
            line: self.line,
            col: self.col,
            end_line: other.end_line,
            end_col: other.end_col,
        }
    }

    /// A span for synthesized nodes that have no surface syntax.
    pub fn synthetic() -> SourceSpan {
        SourceSpan { file: Arc::from("<synthetic>"), line: 0, col: 0, end_line: 0, end_col: 0 }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

/// Binary operators. `Div` and `Mod` cannot be modelled symbolically and are
/// concretised during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
    #[serde(rename = "mod")]
    Mod,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl BinOp {
    pub fn token(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "mod",
            BinOp::Eq => "=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
        }
    }

    pub fn from_token(tok: &str) -> Option<BinOp> {
        Some(match tok {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "mod" => BinOp::Mod,
            "=" => BinOp::Eq,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            _ => return None,
        })
    }

    /// True for operators whose result is a boolean.
    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Lt | BinOp::Le)
    }
}

/// Function literal. Shared by reference so closures clone cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda {
    pub params: Vec<Name>,
    pub body: Arc<Expr>,
    pub span: SourceSpan,
}

/// Expressions that evaluate without touching the continuation stack.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomicExpr {
    IntLit { value: i64, span: SourceSpan },
    BoolLit { value: bool, span: SourceSpan },
    Lambda(Arc<Lambda>),
    Var { name: Name, span: SourceSpan },
    /// `(input)`: consumes a pending concrete input or draws a random one.
    Input { span: SourceSpan },
    Binary { op: BinOp, left: Box<AtomicExpr>, right: Box<AtomicExpr>, span: SourceSpan },
    /// `(register type lambda)`: announce an event handler.
    Register { handler_type: Name, lambda: Arc<Lambda>, span: SourceSpan },
    /// `(set! name ae)`: mutate an existing binding, evaluates to the value.
    Assign { name: Name, value: Box<AtomicExpr>, span: SourceSpan },
    /// `(error "label")`: abort the run with a labelled error.
    ErrorExpr { label: String, span: SourceSpan },
}

/// Serious expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Atomic(AtomicExpr),
    Let { name: Name, bound: Arc<Expr>, body: Arc<Expr>, span: SourceSpan },
    Apply { func: AtomicExpr, args: Vec<AtomicExpr>, span: SourceSpan },
    If { cond: AtomicExpr, then_branch: Arc<Expr>, else_branch: Arc<Expr>, span: SourceSpan },
    /// `(send type ae+)`: emit a message towards the server.
    Send { handler_type: Name, payload: Vec<AtomicExpr>, span: SourceSpan },
}

impl AtomicExpr {
    pub fn span(&self) -> &SourceSpan {
        match self {
            AtomicExpr::IntLit { span, .. }
            | AtomicExpr::BoolLit { span, .. }
            | AtomicExpr::Var { span, .. }
            | AtomicExpr::Input { span }
            | AtomicExpr::Binary { span, .. }
            | AtomicExpr::Register { span, .. }
            | AtomicExpr::Assign { span, .. }
            | AtomicExpr::ErrorExpr { span, .. } => span,
            AtomicExpr::Lambda(lam) => &lam.span,
        }
    }
}

impl Expr {
    pub fn span(&self) -> &SourceSpan {
        match self {
            Expr::Atomic(ae) => ae.span(),
            Expr::Let { span, .. }
            | Expr::Apply { span, .. }
            | Expr::If { span, .. }
            | Expr::Send { span, .. } => span,
        }
    }
}

/// Whether a program runs in the browser or behind the socket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Client,
    Server,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Client => write!(f, "client"),
            Role::Server => write!(f, "server"),
        }
    }
}

/// A parsed program: one top-level expression plus its role and origin name.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub role: Role,
    pub body: Arc<Expr>,
    pub name: Arc<str>,
}

// --- structural comparison and traversal -----------------------------------

/// Structural equality that ignores source spans (and nothing else).
pub fn structurally_equal(a: &Expr, b: &Expr) -> bool {
    match (a, b) {
        (Expr::Atomic(x), Expr::Atomic(y)) => atomic_structurally_equal(x, y),
        (
            Expr::Let { name: n1, bound: b1, body: e1, .. },
            Expr::Let { name: n2, bound: b2, body: e2, .. },
        ) => n1 == n2 && structurally_equal(b1, b2) && structurally_equal(e1, e2),
        (Expr::Apply { func: f1, args: a1, .. }, Expr::Apply { func: f2, args: a2, .. }) => {
            atomic_structurally_equal(f1, f2)
                && a1.len() == a2.len()
                && a1.iter().zip(a2).all(|(x, y)| atomic_structurally_equal(x, y))
        }
        (
            Expr::If { cond: c1, then_branch: t1, else_branch: e1, .. },
            Expr::If { cond: c2, then_branch: t2, else_branch: e2, .. },
        ) => {
            atomic_structurally_equal(c1, c2)
                && structurally_equal(t1, t2)
                && structurally_equal(e1, e2)
        }
        (
            Expr::Send { handler_type: m1, payload: p1, .. },
            Expr::Send { handler_type: m2, payload: p2, .. },
        ) => {
            m1 == m2
                && p1.len() == p2.len()
                && p1.iter().zip(p2).all(|(x, y)| atomic_structurally_equal(x, y))
        }
        _ => false,
    }
}

pub fn atomic_structurally_equal(a: &AtomicExpr, b: &AtomicExpr) -> bool {
    match (a, b) {
        (AtomicExpr::IntLit { value: v1, .. }, AtomicExpr::IntLit { value: v2, .. }) => v1 == v2,
        (AtomicExpr::BoolLit { value: v1, .. }, AtomicExpr::BoolLit { value: v2, .. }) => v1 == v2,
        (AtomicExpr::Lambda(l1), AtomicExpr::Lambda(l2)) => {
            l1.params == l2.params && structurally_equal(&l1.body, &l2.body)
        }
        (AtomicExpr::Var { name: n1, .. }, AtomicExpr::Var { name: n2, .. }) => n1 == n2,
        (AtomicExpr::Input { .. }, AtomicExpr::Input { .. }) => true,
        (
            AtomicExpr::Binary { op: o1, left: l1, right: r1, .. },
            AtomicExpr::Binary { op: o2, left: l2, right: r2, .. },
        ) => o1 == o2 && atomic_structurally_equal(l1, l2) && atomic_structurally_equal(r1, r2),
        (
            AtomicExpr::Register { handler_type: m1, lambda: l1, .. },
            AtomicExpr::Register { handler_type: m2, lambda: l2, .. },
        ) => m1 == m2 && l1.params == l2.params && structurally_equal(&l1.body, &l2.body),
        (
            AtomicExpr::Assign { name: n1, value: v1, .. },
            AtomicExpr::Assign { name: n2, value: v2, .. },
        ) => n1 == n2 && atomic_structurally_equal(v1, v2),
        (
            AtomicExpr::ErrorExpr { label: l1, .. },
            AtomicExpr::ErrorExpr { label: l2, .. },
        ) => l1 == l2,
        _ => false,
    }
}

/// Depth-first pre-order walk over every expression node, descending into
/// lambda bodies. `f` sees serious expressions, `g` sees atomic ones.
pub fn walk<'a>(expr: &'a Expr, f: &mut dyn FnMut(&'a Expr), g: &mut dyn FnMut(&'a AtomicExpr)) {
    f(expr);
    match expr {
        Expr::Atomic(ae) => walk_atomic(ae, f, g),
        Expr::Let { bound, body, .. } => {
            walk(bound, f, g);
            walk(body, f, g);
        }
        Expr::Apply { func, args, .. } => {
            walk_atomic(func, f, g);
            for a in args {
                walk_atomic(a, f, g);
            }
        }
        Expr::If { cond, then_branch, else_branch, .. } => {
            walk_atomic(cond, f, g);
            walk(then_branch, f, g);
            walk(else_branch, f, g);
        }
        Expr::Send { payload, .. } => {
            for a in payload {
                walk_atomic(a, f, g);
            }
        }
    }
}

fn walk_atomic<'a>(
    ae: &'a AtomicExpr,
    f: &mut dyn FnMut(&'a Expr),
    g: &mut dyn FnMut(&'a AtomicExpr),
) {
    g(ae);
    match ae {
        AtomicExpr::Lambda(lam) => walk(&lam.body, f, g),
        AtomicExpr::Register { lambda, .. } => walk(&lambda.body, f, g),
        AtomicExpr::Binary { left, right, .. } => {
            walk_atomic(left, f, g);
            walk_atomic(right, f, g);
        }
        AtomicExpr::Assign { value, .. } => walk_atomic(value, f, g),
        _ => {}
    }
}

/// Count `If` nodes in a program body (test helper, used by the CLI too).
pub fn count_ifs(expr: &Expr) -> usize {
    let mut n = 0;
    walk(expr, &mut |e| if matches!(e, Expr::If { .. }) { n += 1 }, &mut |_| {});
    n
}

/// Count `(input)` sites.
pub fn count_inputs(expr: &Expr) -> usize {
    let mut n = 0;
    walk(expr, &mut |_| {}, &mut |a| if matches!(a, AtomicExpr::Input { .. }) { n += 1 });
    n
}
