//! Surface language: abstract syntax, parser, renderer, static validation,
//! and branch-arm fault injection.

pub mod ast;
pub mod inject;
pub mod parser;
pub mod render;
pub mod validate;

pub use ast::{AtomicExpr, BinOp, Expr, Lambda, Name, Program, Role, SourceSpan};
pub use inject::{enumerate_branch_arms, inject_faults, BranchArm, FaultDescriptor};
pub use parser::{parse_program, ParseError};
pub use render::{render_atomic, render_expr, render_program};
pub use validate::{validate, Violation, ViolationKind};
