//! Source rendering for parsed programs.
//!
//! `render_expr` emits a single-line canonical form that re-parses to a
//! structurally equal tree. Sequencing introduced by `begin` desugaring is
//! rendered as the underlying `let` chain.

use std::fmt::Write;

use super::ast::{AtomicExpr, Expr, Lambda, Program};

/// Render a whole program as source text (single line plus trailing newline).
pub fn render_program(program: &Program) -> String {
    let mut out = render_expr(&program.body);
    out.push('\n');
    out
}

pub fn render_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr);
    out
}

pub fn render_atomic(expr: &AtomicExpr) -> String {
    let mut out = String::new();
    write_atomic(&mut out, expr);
    out
}

fn write_expr(out: &mut String, expr: &Expr) {
    match expr {
        Expr::Atomic(ae) => write_atomic(out, ae),
        Expr::Let { name, bound, body, .. } => {
            write!(out, "(let {name} ").unwrap();
            write_expr(out, bound);
            out.push(' ');
            write_expr(out, body);
            out.push(')');
        }
        Expr::Apply { func, args, .. } => {
            out.push('(');
            write_atomic(out, func);
            for arg in args {
                out.push(' ');
                write_atomic(out, arg);
            }
            out.push(')');
        }
        Expr::If { cond, then_branch, else_branch, .. } => {
            out.push_str("(if ");
            write_atomic(out, cond);
            out.push(' ');
            write_expr(out, then_branch);
            out.push(' ');
            write_expr(out, else_branch);
            out.push(')');
        }
        Expr::Send { handler_type, payload, .. } => {
            write!(out, "(send {handler_type}").unwrap();
            for slot in payload {
                out.push(' ');
                write_atomic(out, slot);
            }
            out.push(')');
        }
    }
}

fn write_atomic(out: &mut String, expr: &AtomicExpr) {
    match expr {
        AtomicExpr::IntLit { value, .. } => write!(out, "{value}").unwrap(),
        AtomicExpr::BoolLit { value, .. } => write!(out, "{value}").unwrap(),
        AtomicExpr::Lambda(lambda) => write_lambda(out, lambda),
        AtomicExpr::Var { name, .. } => out.push_str(name),
        AtomicExpr::Input { .. } => out.push_str("(input)"),
        AtomicExpr::Binary { op, left, right, .. } => {
            write!(out, "({} ", op.token()).unwrap();
            write_atomic(out, left);
            out.push(' ');
            write_atomic(out, right);
            out.push(')');
        }
        AtomicExpr::Register { handler_type, lambda, .. } => {
            write!(out, "(register {handler_type} ").unwrap();
            write_lambda(out, lambda);
            out.push(')');
        }
        AtomicExpr::Assign { name, value, .. } => {
            write!(out, "(set! {name} ").unwrap();
            write_atomic(out, value);
            out.push(')');
        }
        AtomicExpr::ErrorExpr { label, .. } => {
            write!(out, "(error {label:?})").unwrap();
        }
    }
}

fn write_lambda(out: &mut String, lambda: &Lambda) {
    out.push_str("(lambda (");
    for (i, p) in lambda.params.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(p);
    }
    out.push_str(") ");
    write_expr(out, &lambda.body);
    out.push(')');
}
