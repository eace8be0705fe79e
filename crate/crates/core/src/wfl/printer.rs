// SPDX-License-Identifier: Apache-2.0

//! Canonical printing. Composite operators are fully parenthesized so the
//! output re-parses to the same tree.

use super::ast::{Expr, Pipeline, Source, Stmt, UnOp};
use super::parser::Statement;

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

pub fn print_statement(st: &Statement) -> String {
    match st {
        Statement::Let(n, e) => format!("let {n} = {}", print_expr(e)),
        Statement::Expr(e) => print_expr(e),
    }
}

pub fn print_program(prog: &[Statement]) -> String {
    prog.iter().map(print_statement).collect::<Vec<_>>().join(";\n")
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn is_plain_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_alphanumeric() || ch == '_')
}

fn write_list(out: &mut String, items: &[Expr]) {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, e);
    }
}

fn write_pipeline(out: &mut String, p: &Pipeline) {
    match &p.source {
        Source::Flow(None) => out.push_str("flow"),
        Source::Flow(Some(n)) => {
            out.push_str("flow(");
            out.push_str(&quote(n));
            out.push(')');
        }
        Source::Var(v) => out.push_str(v),
    }
    for st in &p.stages {
        out.push('.');
        out.push_str(&st.op);
        out.push('(');
        write_list(out, &st.args);
        out.push(')');
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Null => out.push_str("null"),
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Int(i) => {
            if *i < 0 {
                out.push_str(&format!("({i})"));
            } else {
                out.push_str(&i.to_string());
            }
        }
        Expr::Float(f) => {
            let s = if f.is_finite() { format!("{f:?}") } else { "(0.0 / 0.0)".to_string() };
            if *f < 0.0 {
                out.push_str(&format!("({s})"));
            } else {
                out.push_str(&s);
            }
        }
        Expr::Str(s) => out.push_str(&quote(s)),
        Expr::Ident(n, _) => out.push_str(n),
        Expr::Field(b, n) => {
            write_expr(out, b);
            out.push('.');
            out.push_str(n);
        }
        Expr::Index(b, i) => {
            write_expr(out, b);
            out.push('[');
            write_expr(out, i);
            out.push(']');
        }
        Expr::Unary(op, x) => {
            out.push_str(match op {
                UnOp::Neg => "(-",
                UnOp::Not => "(not ",
            });
            write_expr(out, x);
            out.push(')');
        }
        Expr::Binary(op, a, b, _) => {
            out.push('(');
            write_expr(out, a);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(out, b);
            out.push(')');
        }
        Expr::Between(x, lo, hi) => {
            out.push('(');
            write_expr(out, x);
            out.push_str(" between ");
            write_expr(out, lo);
            out.push_str(" and ");
            write_expr(out, hi);
            out.push(')');
        }
        Expr::In(x, set) => {
            out.push('(');
            write_expr(out, x);
            out.push_str(" in ");
            write_expr(out, set);
            out.push(')');
        }
        Expr::Call { ns, name, args, .. } => {
            if let Some(ns) = ns {
                out.push_str(ns);
                out.push('.');
            }
            out.push_str(name);
            out.push('(');
            write_list(out, args);
            out.push(')');
        }
        Expr::Record(fields) => {
            out.push('{');
            for (i, (k, v)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if is_plain_ident(k) {
                    out.push_str(k);
                } else {
                    out.push_str(&quote(k));
                }
                out.push_str(": ");
                write_expr(out, v);
            }
            out.push('}');
        }
        Expr::Array(xs) => {
            out.push('[');
            write_list(out, xs);
            out.push(']');
        }
        Expr::SetLit(xs) => {
            out.push_str("set[");
            write_list(out, xs);
            out.push(']');
        }
        Expr::DictLit(kv) => {
            out.push_str("dict{");
            for (i, (k, v)) in kv.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, k);
                out.push_str(": ");
                write_expr(out, v);
            }
            out.push('}');
        }
        Expr::Block(stmts) => {
            out.push_str("{ ");
            for (i, s) in stmts.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                match s {
                    Stmt::Let(n, e) => {
                        out.push_str("let ");
                        out.push_str(n);
                        out.push_str(" = ");
                        write_expr(out, e);
                    }
                    Stmt::Expr(e) => write_expr(out, e),
                }
            }
            out.push_str(" }");
        }
        Expr::Lambda(l) => {
            out.push_str(&l.param);
            out.push_str(" => ");
            write_expr(out, &l.body);
        }
        Expr::Pipeline(p) => write_pipeline(out, p),
    }
}
