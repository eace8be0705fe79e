// SPDX-License-Identifier: Apache-2.0

//! The flow query language: lexer, parser, printer, evaluator and builtins.
//!
//! A query is a pipeline `flow("dataset").op(p => body)...` whose stages take
//! lambdas. A lambda's body is an expression or a `{ ...; ... }` block whose
//! last statement is its value. Binary operators broadcast over vectors.

pub mod agg;
pub mod ast;
pub mod broadcast;
pub mod builtins;
pub mod eval;
pub mod extension;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod sketch;
pub mod time;
pub mod typeck;

pub use ast::{BinOp, Expr, Lambda, Pipeline, Source, Stage, Stmt, UnOp};
pub use eval::{apply_lambda, eval_expr, Env, EvalContext, NullMode};
pub use extension::{ExtFn, FunctionTable, Registry};
pub use lexer::tokenize;
pub use parser::{parse_expr, parse_program, Statement};
pub use printer::{print_expr, print_program, print_statement};

use thiserror::Error;

use crate::geo::GeoError;

/// Source position (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WflError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow in {0}")]
    Overflow(String),
    #[error("null access: {0}")]
    NullAccess(String),
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("cannot parse time: {0}")]
    Parse(String),
    #[error("not implemented: {0}")]
    NotImplemented(String),
    #[error("namespace '{0}' is already registered")]
    DuplicateNamespace(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, WflError>;
