//! Branch-arm fault injection.
//!
//! Walks every `if` in depth-first pre-order and, per arm, draws an
//! independent seeded Bernoulli trial. A selected arm body `e` is rewritten to
//! `(let _fault<k> (error "ERROR: INJECTED SERVER ERROR #<k>") e)` so the
//! error fires exactly when execution reaches that arm.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::ast::{AtomicExpr, Expr, Lambda, Program, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchArm {
    Then,
    Else,
}

impl std::fmt::Display for BranchArm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BranchArm::Then => write!(f, "then"),
            BranchArm::Else => write!(f, "else"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultDescriptor {
    pub fault_id: u32,
    pub site: SourceSpan,
    pub branch_arm: BranchArm,
    pub label: String,
}

/// Every branch arm of the program, in depth-first pre-order. For each `if`,
/// the then-arm is listed before the else-arm, and arms of the node are
/// listed before arms nested inside its condition or sub-expressions.
pub fn enumerate_branch_arms(program: &Program) -> Vec<(SourceSpan, BranchArm)> {
    let mut arms = Vec::new();
    collect_expr(&program.body, &mut arms);
    arms
}

fn collect_expr(expr: &Expr, out: &mut Vec<(SourceSpan, BranchArm)>) {
    match expr {
        Expr::Atomic(ae) => collect_atomic(ae, out),
        Expr::Let { bound, body, .. } => {
            collect_expr(bound, out);
            collect_expr(body, out);
        }
        Expr::Apply { func, args, .. } => {
            collect_atomic(func, out);
            for arg in args {
                collect_atomic(arg, out);
            }
        }
        Expr::If { cond, then_branch, else_branch, span } => {
            out.push((span.clone(), BranchArm::Then));
            out.push((span.clone(), BranchArm::Else));
            collect_atomic(cond, out);
            collect_expr(then_branch, out);
            collect_expr(else_branch, out);
        }
        Expr::Send { payload, .. } => {
            for slot in payload {
                collect_atomic(slot, out);
            }
        }
    }
}

fn collect_atomic(expr: &AtomicExpr, out: &mut Vec<(SourceSpan, BranchArm)>) {
    match expr {
        AtomicExpr::Lambda(lambda) => collect_expr(&lambda.body, out),
        AtomicExpr::Register { lambda, .. } => collect_expr(&lambda.body, out),
        AtomicExpr::Binary { left, right, .. } => {
            collect_atomic(left, out);
            collect_atomic(right, out);
        }
        AtomicExpr::Assign { value, .. } => collect_atomic(value, out),
        _ => {}
    }
}

struct Injector {
    rng: ChaCha8Rng,
    probability: f64,
    next_fault_id: u32,
    descriptors: Vec<FaultDescriptor>,
}

impl Injector {
    fn draw(&mut self) -> bool {
        // 53-bit uniform draw in [0, 1).
        let unit = (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        unit < self.probability
    }

    fn wrap_arm(&mut self, arm: BranchArm, body: Arc<Expr>, site: &SourceSpan) -> Arc<Expr> {
        if !self.draw() {
            return body;
        }
        let fault_id = self.next_fault_id;
        self.next_fault_id += 1;
        let label = format!("ERROR: INJECTED SERVER ERROR #{fault_id}");
        self.descriptors.push(FaultDescriptor {
            fault_id,
            site: site.clone(),
            branch_arm: arm,
            label: label.clone(),
        });
        let span = body.span().clone();
        let binder: super::ast::Name = Arc::from(format!("_fault{fault_id}").as_str());
        Arc::new(Expr::Let {
            name: binder,
            bound: Arc::new(Expr::Atomic(AtomicExpr::ErrorExpr { label, span: span.clone() })),
            body,
            span,
        })
    }

    fn rewrite_expr(&mut self, expr: &Expr) -> Arc<Expr> {
        match expr {
            Expr::Atomic(ae) => Arc::new(Expr::Atomic(self.rewrite_atomic(ae))),
            Expr::Let { name, bound, body, span } => Arc::new(Expr::Let {
                name: name.clone(),
                bound: self.rewrite_expr(bound),
                body: self.rewrite_expr(body),
                span: span.clone(),
            }),
            Expr::Apply { func, args, span } => Arc::new(Expr::Apply {
                func: self.rewrite_atomic(func),
                args: args.iter().map(|a| self.rewrite_atomic(a)).collect(),
                span: span.clone(),
            }),
            Expr::If { cond, then_branch, else_branch, span } => {
                // Draw both arm trials before recursing, matching pre-order
                // enumeration so descriptors line up with enumerate_branch_arms.
                let then_wrapped = self.wrap_arm(BranchArm::Then, then_branch.clone(), span);
                let else_wrapped = self.wrap_arm(BranchArm::Else, else_branch.clone(), span);
                let cond = self.rewrite_atomic(cond);
                let then_branch = self.rewrite_wrapped(then_wrapped, then_branch);
                let else_branch = self.rewrite_wrapped(else_wrapped, else_branch);
                Arc::new(Expr::If { cond, then_branch, else_branch, span: span.clone() })
            }
            Expr::Send { handler_type, payload, span } => Arc::new(Expr::Send {
                handler_type: handler_type.clone(),
                payload: payload.iter().map(|a| self.rewrite_atomic(a)).collect(),
                span: span.clone(),
            }),
        }
    }

    /// Recurse into the original arm body and re-attach the fault wrapper if
    /// one was added.
    fn rewrite_wrapped(&mut self, wrapped: Arc<Expr>, original: &Arc<Expr>) -> Arc<Expr> {
        let rewritten_body = self.rewrite_expr(original);
        if Arc::ptr_eq(&wrapped, original) {
            rewritten_body
        } else {
            match wrapped.as_ref() {
                Expr::Let { name, bound, span, .. } => Arc::new(Expr::Let {
                    name: name.clone(),
                    bound: bound.clone(),
                    body: rewritten_body,
                    span: span.clone(),
                }),
                _ => unreachable!("fault wrapper is always a let"),
            }
        }
    }

    fn rewrite_atomic(&mut self, expr: &AtomicExpr) -> AtomicExpr {
        match expr {
            AtomicExpr::Lambda(lambda) => AtomicExpr::Lambda(self.rewrite_lambda(lambda)),
            AtomicExpr::Register { handler_type, lambda, span } => AtomicExpr::Register {
                handler_type: handler_type.clone(),
                lambda: self.rewrite_lambda(lambda),
                span: span.clone(),
            },
            AtomicExpr::Binary { op, left, right, span } => AtomicExpr::Binary {
                op: *op,
                left: Box::new(self.rewrite_atomic(left)),
                right: Box::new(self.rewrite_atomic(right)),
                span: span.clone(),
            },
            AtomicExpr::Assign { name, value, span } => AtomicExpr::Assign {
                name: name.clone(),
                value: Box::new(self.rewrite_atomic(value)),
                span: span.clone(),
            },
            other => other.clone(),
        }
    }

    fn rewrite_lambda(&mut self, lambda: &Lambda) -> Arc<Lambda> {
        Arc::new(Lambda {
            params: lambda.params.clone(),
            body: self.rewrite_expr(&lambda.body),
            span: lambda.span.clone(),
        })
    }
}

/// Rewrite the program so that each branch arm independently gains an
/// injected error with the given probability. Deterministic in
/// (program, seed, probability).
pub fn inject_faults(
    program: &Program,
    seed: u64,
    probability: f64,
) -> (Program, Vec<FaultDescriptor>) {
    let mut injector = Injector {
        rng: ChaCha8Rng::seed_from_u64(seed),
        probability,
        next_fault_id: 0,
        descriptors: Vec::new(),
    };
    let body = injector.rewrite_expr(&program.body);
    let injected = Program { role: program.role, body, name: program.name.clone() };
    (injected, injector.descriptors)
}
