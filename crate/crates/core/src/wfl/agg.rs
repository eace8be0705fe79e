// SPDX-License-Identifier: Apache-2.0

//! Extraction of aggregate calls from an `aggregate` stage lambda.
//!
//! `g => {n: count(), cv: stddev(g.speed) / avg(g.speed)}` becomes the
//! finalizer `{n: $agg0, cv: $agg1 / $agg2}` plus three aggregate calls whose
//! arguments are evaluated per input record.

use super::ast::{Expr, Lambda, Pipeline, Stage, Stmt};
use super::builtins::AGGREGATES;
use super::{Result, Span, WflError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
    Stddev,
    HllCount,
}

impl AggFunc {
    pub fn parse(name: &str) -> Option<AggFunc> {
        Some(match name {
            "count" => AggFunc::Count,
            "sum" => AggFunc::Sum,
            "avg" => AggFunc::Avg,
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            "stddev" => AggFunc::Stddev,
            "hll_count" => AggFunc::HllCount,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::Stddev => "stddev",
            AggFunc::HllCount => "hll_count",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggCall {
    pub func: AggFunc,
    /// Per-record argument; `None` only for `count()`.
    pub arg: Option<Expr>,
    pub span: Span,
}

pub fn agg_slot(i: usize) -> String {
    format!("$agg{i}")
}

/// Splits an aggregate lambda into its finalizer expression and the
/// aggregate calls it depends on. The finalizer may not refer to the lambda
/// parameter outside aggregate calls.
pub fn extract_aggregates(l: &Lambda) -> Result<(Expr, Vec<AggCall>)> {
    let mut calls = Vec::new();
    let body = rewrite(&l.body, &mut calls, false)?;
    if body.references(&l.param) {
        return Err(WflError::Type(format!(
            "'{}' may only be used inside aggregate functions in an aggregate stage",
            l.param
        )));
    }
    if calls.is_empty() {
        return Err(WflError::Type("aggregate stage has no aggregate function".into()));
    }
    Ok((body, calls))
}

fn rewrite(e: &Expr, calls: &mut Vec<AggCall>, inside: bool) -> Result<Expr> {
    let r = |x: &Expr, calls: &mut Vec<AggCall>| rewrite(x, calls, inside).map(Box::new);
    Ok(match e {
        Expr::Call { ns: None, name, args, span } if AGGREGATES.contains(&name.as_str()) => {
            if inside {
                return Err(WflError::Type(format!(
                    "{}:{}: nested aggregate function {name}()",
                    span.line, span.col
                )));
            }
            let func = AggFunc::parse(name).expect("listed aggregate");
            let arg = match (func, args.len()) {
                (AggFunc::Count, 0) => None,
                (_, 1) => Some(rewrite(&args[0], calls, true)?),
                _ => {
                    return Err(WflError::BadParam(format!(
                        "{}:{}: {name}() takes one argument",
                        span.line, span.col
                    )))
                }
            };
            calls.push(AggCall { func, arg, span: *span });
            Expr::Ident(agg_slot(calls.len() - 1), *span)
        }
        Expr::Null | Expr::Bool(_) | Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Ident(..) => e.clone(),
        Expr::Field(b, n) => Expr::Field(r(b, calls)?, n.clone()),
        Expr::Index(a, b) => Expr::Index(r(a, calls)?, r(b, calls)?),
        Expr::Unary(op, x) => Expr::Unary(*op, r(x, calls)?),
        Expr::Binary(op, a, b, s) => Expr::Binary(*op, r(a, calls)?, r(b, calls)?, *s),
        Expr::Between(a, b, c) => Expr::Between(r(a, calls)?, r(b, calls)?, r(c, calls)?),
        Expr::In(a, b) => Expr::In(r(a, calls)?, r(b, calls)?),
        Expr::Call { ns, name, args, span } => Expr::Call {
            ns: ns.clone(),
            name: name.clone(),
            args: args.iter().map(|a| rewrite(a, calls, inside)).collect::<Result<_>>()?,
            span: *span,
        },
        Expr::Record(fs) => Expr::Record(
            fs.iter()
                .map(|(k, v)| Ok((k.clone(), rewrite(v, calls, inside)?)))
                .collect::<Result<_>>()?,
        ),
        Expr::Array(xs) => Expr::Array(xs.iter().map(|x| rewrite(x, calls, inside)).collect::<Result<_>>()?),
        Expr::SetLit(xs) => Expr::SetLit(xs.iter().map(|x| rewrite(x, calls, inside)).collect::<Result<_>>()?),
        Expr::DictLit(kv) => Expr::DictLit(
            kv.iter()
                .map(|(k, v)| Ok((rewrite(k, calls, inside)?, rewrite(v, calls, inside)?)))
                .collect::<Result<_>>()?,
        ),
        Expr::Block(stmts) => Expr::Block(
            stmts
                .iter()
                .map(|s| {
                    Ok(match s {
                        Stmt::Let(n, x) => Stmt::Let(n.clone(), rewrite(x, calls, inside)?),
                        Stmt::Expr(x) => Stmt::Expr(rewrite(x, calls, inside)?),
                    })
                })
                .collect::<Result<_>>()?,
        ),
        Expr::Lambda(l) => Expr::Lambda(Box::new(Lambda { param: l.param.clone(), body: rewrite(&l.body, calls, inside)? })),
        Expr::Pipeline(p) => Expr::Pipeline(Box::new(Pipeline {
            source: p.source.clone(),
            stages: p
                .stages
                .iter()
                .map(|s| {
                    Ok(Stage {
                        op: s.op.clone(),
                        args: s.args.iter().map(|a| rewrite(a, calls, inside)).collect::<Result<_>>()?,
                        span: s.span,
                    })
                })
                .collect::<Result<_>>()?,
            span: p.span,
        })),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfl::{parse_expr, print_expr};

    fn lambda(src: &str) -> Lambda {
        match parse_expr(src).unwrap() {
            Expr::Lambda(l) => *l,
            _ => panic!("not a lambda"),
        }
    }

    #[test]
    fn splits_calls() {
        let (body, calls) = extract_aggregates(&lambda("g => {n: count(), cv: stddev(g.s) / avg(g.s)}")).unwrap();
        assert_eq!(calls.len(), 3);
        assert_eq!(calls[0].func, AggFunc::Count);
        assert!(calls[0].arg.is_none());
        assert_eq!(calls[2].func, AggFunc::Avg);
        assert_eq!(print_expr(&body), "{n: $agg0, cv: ($agg1 / $agg2)}");
    }

    #[test]
    fn rejects_bare_param_and_nesting() {
        assert!(extract_aggregates(&lambda("g => {x: g.s, n: count()}")).is_err());
        assert!(extract_aggregates(&lambda("g => {n: sum(count())}")).is_err());
        assert!(extract_aggregates(&lambda("g => {x: 1}")).is_err());
    }
}
