//! Static validation: role restrictions and variable scoping.

use std::collections::BTreeSet;
use std::fmt;

use super::ast::{AtomicExpr, Expr, Name, Program, Role, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    /// A server program contains a `send` expression.
    IllegalSend,
    /// A variable is used without an enclosing binder.
    UnboundVariable { name: Name },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub span: SourceSpan,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::IllegalSend => {
                write!(f, "{}: servers must not contain send expressions", self.span)
            }
            ViolationKind::UnboundVariable { name } => {
                write!(f, "{}: unbound variable `{}`", self.span, name)
            }
        }
    }
}

/// Check a parsed program. An empty result means the program is valid.
pub fn validate(program: &Program) -> Vec<Violation> {
    let mut violations = Vec::new();
    let scope: BTreeSet<Name> = BTreeSet::new();
    check_expr(&program.body, &scope, program.role, &mut violations);
    violations
}

fn check_expr(expr: &Expr, scope: &BTreeSet<Name>, role: Role, out: &mut Vec<Violation>) {
    match expr {
        Expr::Atomic(ae) => check_atomic(ae, scope, role, out),
        Expr::Let { name, bound, body, .. } => {
            check_expr(bound, scope, role, out);
            let mut inner = scope.clone();
            inner.insert(name.clone());
            check_expr(body, &inner, role, out);
        }
        Expr::Apply { func, args, .. } => {
            check_atomic(func, scope, role, out);
            for arg in args {
                check_atomic(arg, scope, role, out);
            }
        }
        Expr::If { cond, then_branch, else_branch, .. } => {
            check_atomic(cond, scope, role, out);
            check_expr(then_branch, scope, role, out);
            check_expr(else_branch, scope, role, out);
        }
        Expr::Send { payload, span, .. } => {
            if role == Role::Server {
                out.push(Violation { kind: ViolationKind::IllegalSend, span: span.clone() });
            }
            for slot in payload {
                check_atomic(slot, scope, role, out);
            }
        }
    }
}

fn check_atomic(expr: &AtomicExpr, scope: &BTreeSet<Name>, role: Role, out: &mut Vec<Violation>) {
    match expr {
        AtomicExpr::IntLit { .. }
        | AtomicExpr::BoolLit { .. }
        | AtomicExpr::Input { .. }
        | AtomicExpr::ErrorExpr { .. } => {}
        AtomicExpr::Var { name, span } => {
            if !scope.contains(name) {
                out.push(Violation {
                    kind: ViolationKind::UnboundVariable { name: name.clone() },
                    span: span.clone(),
                });
            }
        }
        AtomicExpr::Lambda(lambda) => {
            let mut inner = scope.clone();
            for p in &lambda.params {
                inner.insert(p.clone());
            }
            check_expr(&lambda.body, &inner, role, out);
        }
        AtomicExpr::Binary { left, right, .. } => {
            check_atomic(left, scope, role, out);
            check_atomic(right, scope, role, out);
        }
        AtomicExpr::Register { lambda, .. } => {
            let mut inner = scope.clone();
            for p in &lambda.params {
                inner.insert(p.clone());
            }
            check_expr(&lambda.body, &inner, role, out);
        }
        AtomicExpr::Assign { name, value, span } => {
            if !scope.contains(name) {
                out.push(Violation {
                    kind: ViolationKind::UnboundVariable { name: name.clone() },
                    span: span.clone(),
                });
            }
            check_atomic(value, scope, role, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    fn server(src: &str) -> Program {
        parse_program(src, Role::Server, "test.sfl").unwrap()
    }

    fn client(src: &str) -> Program {
        parse_program(src, Role::Client, "test.sfl").unwrap()
    }

    #[test]
    fn server_send_is_one_violation_with_span() {
        let violations = validate(&server("(let x 1 (send m 1))"));
        assert_eq!(violations.len(), 1);
        assert!(matches!(violations[0].kind, ViolationKind::IllegalSend));
        assert_eq!((violations[0].span.line, violations[0].span.col), (1, 10));
    }

    #[test]
    fn client_send_is_fine() {
        assert!(validate(&client("(send m 1)")).is_empty());
    }

    #[test]
    fn corpus_servers_are_valid() {
        for entry in crate::cli::corpus_entries() {
            let src = std::fs::read_to_string(&entry.server).unwrap();
            let program = parse_program(&src, Role::Server, entry.name).unwrap();
            assert!(validate(&program).is_empty(), "{} has violations", entry.name);
        }
    }

    #[test]
    fn unbound_variable_is_reported() {
        let violations = validate(&client("(let x 1 z)"));
        assert_eq!(violations.len(), 1);
        assert!(
            matches!(&violations[0].kind, ViolationKind::UnboundVariable { name } if name.as_ref() == "z")
        );
    }

    #[test]
    fn binders_cover_let_lambda_params_and_set() {
        // let-bound, lambda params, and set! targets resolving to a binder.
        assert!(validate(&client("(let x 1 ((lambda (y) (+ x y)) 2))")).is_empty());
        assert!(validate(&client("(let x 1 (set! x 2))")).is_empty());
        // set! of an unbound name is a violation.
        let violations = validate(&client("(set! q 1)"));
        assert_eq!(violations.len(), 1);
    }

    #[test]
    fn shadowing_respects_scope_boundaries() {
        // The lambda parameter shadows the outer binding inside its body
        // only; the body of the let still sees the original.
        assert!(validate(&client("(let x 1 (let f (lambda (x) x) (f x)))")).is_empty());
        // A binding introduced inside a lambda does not leak out.
        let violations = validate(&client("(let f (lambda (p) (let q 1 q)) q)"));
        assert_eq!(violations.len(), 1);
    }
}
