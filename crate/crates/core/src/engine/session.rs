// SPDX-License-Identifier: Apache-2.0

//! Interactive sessions: a catalog, global variables and execution defaults
//! shared by a sequence of statements.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use super::batch::{execute_batch, BatchOptions};
use super::catalog::Catalog;
use super::exec::{execute_adhoc, AdhocOptions, QueryResult};
use super::plan::{plan_pipeline, Op, PlanDag, PlanOptions, SaveFormat};
use super::{EngineError, Result, DEFAULT_BROADCAST_LIMIT};
use crate::schema::Schema;
use crate::value::{Record, Value};
use crate::wfl::ast::{Expr, Pipeline};
use crate::wfl::typeck::Ty;
use crate::wfl::{eval_expr, parse_program, Env, EvalContext, Registry, Statement};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Adhoc,
    /// Checkpointed execution under `SessionDefaults::checkpoint_dir`.
    Batch,
}

#[derive(Clone)]
pub struct SessionDefaults {
    pub default_dataset: Option<String>,
    pub mode: ExecMode,
    pub workers: usize,
    pub deadline: Option<Duration>,
    pub broadcast_limit: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for SessionDefaults {
    fn default() -> Self {
        SessionDefaults {
            default_dataset: None,
            mode: ExecMode::Adhoc,
            workers: 4,
            deadline: None,
            broadcast_limit: DEFAULT_BROADCAST_LIMIT,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum StatementResult {
    /// `let` binding; `rows` is set when a pipeline was collected.
    Bound { name: String, rows: Option<usize> },
    Rows(QueryResult),
    Value(Value),
    Saved { format: SaveFormat, path: PathBuf, rows: usize },
}

pub struct Session {
    pub catalog: Catalog,
    pub defaults: SessionDefaults,
    ctx: EvalContext,
    var_schemas: HashMap<String, Schema>,
}

impl Session {
    pub fn new(catalog: Catalog) -> Self {
        Session::with_registry(catalog, Arc::new(Registry::new()))
    }

    pub fn with_registry(catalog: Catalog, registry: Arc<Registry>) -> Self {
        Session { catalog, defaults: SessionDefaults::default(), ctx: EvalContext::new(registry), var_schemas: HashMap::new() }
    }

    pub fn context(&self) -> &EvalContext {
        &self.ctx
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.ctx.registry
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.ctx.globals.keys().map(|k| k.as_str())
    }

    /// Binds a global. A name keeps the type of its first binding.
    pub fn bind(&mut self, name: &str, v: Value) -> Result<()> {
        if let Some(old) = self.ctx.globals.get(name) {
            let (a, b) = (Ty::of_value(old), Ty::of_value(&v));
            if !old.is_null() && !v.is_null() && a.name() != b.name() {
                return Err(EngineError::Type(format!("'{name}' is {}, cannot rebind it to {}", a.name(), b.name())));
            }
        }
        self.ctx.globals.insert(name.to_string(), v);
        Ok(())
    }

    fn plan_options(&self) -> PlanOptions<'_> {
        PlanOptions {
            broadcast_limit: self.defaults.broadcast_limit,
            var_schemas: Some(&self.var_schemas),
            default_dataset: self.defaults.default_dataset.as_deref(),
        }
    }

    pub fn plan(&self, p: &Pipeline) -> Result<PlanDag> {
        plan_pipeline(p, &self.catalog, &self.ctx, &self.plan_options())
    }

    /// Plans the single pipeline in `text` and prints the plan.
    pub fn explain(&self, text: &str) -> Result<String> {
        match parse_program(text)?.as_slice() {
            [Statement::Expr(Expr::Pipeline(p))] | [Statement::Let(_, Expr::Pipeline(p))] => Ok(self.plan(p)?.describe()),
            _ => Err(EngineError::BadQuery("explain takes one pipeline".into())),
        }
    }

    pub fn run_plan(&self, plan: &PlanDag) -> Result<QueryResult> {
        match self.defaults.mode {
            ExecMode::Adhoc => execute_adhoc(
                plan,
                &self.ctx,
                &AdhocOptions {
                    workers: self.defaults.workers,
                    deadline: self.defaults.deadline,
                    broadcast_limit: self.defaults.broadcast_limit,
                    failures: None,
                },
            ),
            ExecMode::Batch => {
                let dir = self
                    .defaults
                    .checkpoint_dir
                    .clone()
                    .ok_or_else(|| EngineError::BadParam("batch mode needs a checkpoint directory".into()))?;
                let mut o = BatchOptions::new(dir);
                o.workers = self.defaults.workers;
                o.broadcast_limit = self.defaults.broadcast_limit;
                execute_batch(plan, &self.ctx, &o)
            }
        }
    }

    /// Runs every statement of `text` in order.
    pub fn execute(&mut self, text: &str) -> Result<Vec<StatementResult>> {
        let stmts = parse_program(text)?;
        let mut out = Vec::with_capacity(stmts.len());
        for s in stmts {
            out.push(self.statement(s)?);
        }
        Ok(out)
    }

    fn statement(&mut self, s: Statement) -> Result<StatementResult> {
        match s {
            Statement::Let(name, Expr::Pipeline(p)) => {
                let res = self.run_plan(&self.plan(&p)?)?;
                let rows = res.records.len();
                if let Some(old) = self.var_schemas.get(&name) {
                    if crate::schema::print_schema(old) != crate::schema::print_schema(&res.schema) && self.ctx.globals.contains_key(&name) {
                        return Err(EngineError::Type(format!("'{name}' already holds records of a different shape")));
                    }
                }
                let value = Value::vector(res.records.into_iter().map(Value::Record).collect());
                self.bind(&name, value)?;
                self.var_schemas.insert(name.clone(), res.schema);
                Ok(StatementResult::Bound { name, rows: Some(rows) })
            }
            Statement::Let(name, e) => {
                let v = eval_expr(&e, &mut Env::new(&self.ctx))?;
                self.bind(&name, v)?;
                self.var_schemas.remove(&name);
                Ok(StatementResult::Bound { name, rows: None })
            }
            Statement::Expr(Expr::Pipeline(p)) => {
                let plan = self.plan(&p)?;
                let res = self.run_plan(&plan)?;
                match plan.nodes.iter().find_map(|n| match &n.op {
                    Op::Save { format, path, .. } => Some((*format, path.clone())),
                    _ => None,
                }) {
                    Some((format, path)) => {
                        if format == SaveFormat::Fdb {
                            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("saved").to_string();
                            self.catalog.replace_path(&name, &path)?;
                        }
                        Ok(StatementResult::Saved { format, path, rows: res.records.len() })
                    }
                    None => Ok(StatementResult::Rows(res)),
                }
            }
            Statement::Expr(e) => Ok(StatementResult::Value(eval_expr(&e, &mut Env::new(&self.ctx))?)),
        }
    }

    /// Runs one pipeline and returns its records.
    pub fn query(&mut self, text: &str) -> Result<QueryResult> {
        match self.execute(text)?.pop() {
            Some(StatementResult::Rows(r)) => Ok(r),
            _ => Err(EngineError::BadQuery("expected a pipeline that returns rows".into())),
        }
    }

    /// Records bound to a variable by a collected pipeline.
    pub fn records(&self, name: &str) -> Option<Vec<Record>> {
        match self.ctx.globals.get(name)? {
            Value::Vector(xs) => xs.iter().map(|x| x.as_record().cloned()).collect(),
            _ => None,
        }
    }
}
