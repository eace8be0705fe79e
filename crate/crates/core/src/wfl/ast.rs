// SPDX-License-Identifier: Apache-2.0

use super::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub fn is_comparison(&self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn is_arith(&self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String, Span),
    Field(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>, Span),
    Between(Box<Expr>, Box<Expr>, Box<Expr>),
    In(Box<Expr>, Box<Expr>),
    Call { ns: Option<String>, name: String, args: Vec<Expr>, span: Span },
    Record(Vec<(String, Expr)>),
    Array(Vec<Expr>),
    SetLit(Vec<Expr>),
    DictLit(Vec<(Expr, Expr)>),
    Block(Vec<Stmt>),
    Lambda(Box<Lambda>),
    Pipeline(Box<Pipeline>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Let(String, Expr),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lambda {
    pub param: String,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// `flow("name")`, or bare `flow` for the session's default dataset.
    Flow(Option<String>),
    /// A session variable holding collected records.
    Var(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub op: String,
    pub args: Vec<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub source: Source,
    pub stages: Vec<Stage>,
    pub span: Span,
}

pub const FLOW_OPERATORS: &[&str] = &[
    "find", "filter", "map", "flatten", "sort", "limit", "distinct", "aggregate", "join",
    "sub_flow", "sample", "collect", "save",
];

pub fn is_flow_operator(name: &str) -> bool {
    FLOW_OPERATORS.contains(&name)
}

impl Expr {
    /// Calls `f` on every direct child expression.
    pub fn for_each_child(&self, f: &mut dyn FnMut(&Expr)) {
        match self {
            Expr::Null | Expr::Bool(_) | Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Ident(..) => {}
            Expr::Field(e, _) | Expr::Unary(_, e) => f(e),
            Expr::Index(a, b) | Expr::Binary(_, a, b, _) | Expr::In(a, b) => {
                f(a);
                f(b);
            }
            Expr::Between(a, b, c) => {
                f(a);
                f(b);
                f(c);
            }
            Expr::Call { args, .. } | Expr::Array(args) | Expr::SetLit(args) => args.iter().for_each(f),
            Expr::Record(fs) => fs.iter().for_each(|(_, e)| f(e)),
            Expr::DictLit(kv) => kv.iter().for_each(|(k, v)| {
                f(k);
                f(v);
            }),
            Expr::Block(stmts) => stmts.iter().for_each(|s| match s {
                Stmt::Let(_, e) | Stmt::Expr(e) => f(e),
            }),
            Expr::Lambda(l) => f(&l.body),
            Expr::Pipeline(p) => p.stages.iter().for_each(|s| s.args.iter().for_each(&mut *f)),
        }
    }

    /// Free identifiers that are not bound by an enclosing lambda, block
    /// `let`, or in `bound`.
    pub fn free_idents(&self, bound: &mut Vec<String>, out: &mut Vec<String>) {
        match self {
            Expr::Ident(n, _) => {
                if !bound.contains(n) && !out.contains(n) {
                    out.push(n.clone());
                }
            }
            Expr::Lambda(l) => {
                bound.push(l.param.clone());
                l.body.free_idents(bound, out);
                bound.pop();
            }
            Expr::Block(stmts) => {
                let depth = bound.len();
                for s in stmts {
                    match s {
                        Stmt::Let(n, e) => {
                            e.free_idents(bound, out);
                            bound.push(n.clone());
                        }
                        Stmt::Expr(e) => e.free_idents(bound, out),
                    }
                }
                bound.truncate(depth);
            }
            Expr::Pipeline(p) => {
                if let Source::Var(v) = &p.source {
                    if !bound.contains(v) && !out.contains(v) {
                        out.push(v.clone());
                    }
                }
                self.for_each_child(&mut |c| c.free_idents(bound, out));
            }
            _ => self.for_each_child(&mut |c| c.free_idents(bound, out)),
        }
    }

    pub fn references(&self, name: &str) -> bool {
        let mut out = Vec::new();
        self.free_idents(&mut Vec::new(), &mut out);
        out.iter().any(|n| n == name)
    }

    /// Value of the last statement for blocks; the expression itself otherwise.
    pub fn tail(&self) -> &Expr {
        match self {
            Expr::Block(stmts) => match stmts.last() {
                Some(Stmt::Expr(e)) => e.tail(),
                _ => self,
            },
            e => e,
        }
    }
}
