// SPDX-License-Identifier: Apache-2.0

//! Model evaluation over a flow.

use crate::engine::{EngineError, Session};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMetrics {
    /// NaN when no record had both a label and a prediction.
    pub mse: f64,
    pub mae: f64,
    pub count: u64,
}

/// Error metrics of `prediction` against `label`, both expressions over the
/// record name `param`, evaluated over `flow`. Records where either side is
/// null are skipped. Runs as an ordinary pipeline, so the sums are merged
/// through the two-phase aggregate.
pub fn evaluate_model(session: &mut Session, flow: &str, param: &str, label: &str, prediction: &str) -> Result<ModelMetrics, EngineError> {
    let q = format!(
        "{flow}.map({param} => {{e: double({prediction}) - double({label})}})\
         .aggregate(r => {{n: count(r.e), se: sum(r.e * r.e), ae: sum(abs(r.e))}})"
    );
    let res = session.query(&q)?;
    let Some(row) = res.records.first() else {
        return Ok(ModelMetrics { mse: f64::NAN, mae: f64::NAN, count: 0 });
    };
    let count = match row.get("n") {
        Some(Value::Uint(n)) => *n,
        _ => 0,
    };
    if count == 0 {
        return Ok(ModelMetrics { mse: f64::NAN, mae: f64::NAN, count });
    }
    let f = |k: &str| row.get(k).and_then(Value::as_f64).unwrap_or(0.0);
    Ok(ModelMetrics { mse: f("se") / count as f64, mae: f("ae") / count as f64, count })
}
