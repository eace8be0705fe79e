// SPDX-License-Identifier: Apache-2.0

//! Tensors and feed-forward model inference, exposed to queries under the
//! `model` namespace.
//!
//! Model files are plain text:
//!
//! ```text
//! # comment
//! model speed
//! input 3
//! layer 2 relu
//!   w 1 0 0
//!   w 0 1 0
//!   b 0.5 -1
//! layer 1 identity
//!   w 1 1
//!   b 0
//! ```
//!
//! Each `layer <out> <activation>` is followed by `out` weight rows, each as
//! long as the previous layer's width, and one bias row. A layer computes
//! `act(W x + b)`.

mod eval;
mod tensor;

pub use eval::{evaluate_model, ModelMetrics};
pub use tensor::Tensor;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::value::Value;
use crate::wfl::{FunctionTable, Registry, WflError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("model file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

impl From<ModelError> for WflError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ShapeMismatch(m) => WflError::Type(format!("shape mismatch: {m}")),
            other => WflError::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    fn parse(s: &str) -> Option<Activation> {
        Some(match s {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "tanh" => Activation::Tanh,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub input_dim: usize,
    pub layers: Vec<Layer>,
}

impl ModelSpec {
    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.bias.len()).unwrap_or(self.input_dim)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Tensor> {
        if input.len() != self.input_dim {
            return Err(ModelError::ShapeMismatch(format!(
                "model '{}' takes {} inputs, got {}",
                self.name,
                self.input_dim,
                input.len()
            )));
        }
        let mut x = Tensor::from_vector(input.to_vec());
        for l in &self.layers {
            let y = l.weights.matmul(&x)?;
            let data = y
                .data()
                .iter()
                .zip(&l.bias)
                .map(|(v, b)| l.activation.apply(v + b))
                .collect();
            x = Tensor::from_vector(data);
        }
        Ok(x)
    }
}

pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let perr = |line: usize, msg: &str| ModelError::Parse { line, msg: msg.to_string() };
    let mut name = None;
    let mut input_dim = None;
    let mut layers: Vec<Layer> = Vec::new();
    // (out dim, activation, rows, bias)
    let mut cur: Option<(usize, Activation, Vec<f64>, Option<Vec<f64>>, usize)> = None;
    let mut width = 0usize;

    let finish = |cur: Option<(usize, Activation, Vec<f64>, Option<Vec<f64>>, usize)>,
                  width: &mut usize,
                  layers: &mut Vec<Layer>,
                  line: usize|
     -> Result<()> {
        if let Some((out, act, rows, bias, decl)) = cur {
            let bias = bias.ok_or_else(|| perr(decl, "layer has no bias row"))?;
            if rows.len() != out * *width {
                return Err(perr(line, &format!("layer needs {out} weight rows")));
            }
            layers.push(Layer {
                weights: Tensor::new(vec![out, *width], rows)?,
                bias,
                activation: act,
            });
            *width = out;
        }
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let head = words.next().unwrap_or("");
        let nums = |words: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
            words
                .map(|w| {
                    w.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| perr(ln, &format!("'{w}' is not a finite number")))
                })
                .collect()
        };
        match head {
            "model" => name = Some(words.next().ok_or_else(|| perr(ln, "model needs a name"))?.to_string()),
            "input" => {
                let d: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .filter(|d| *d > 0)
                    .ok_or_else(|| perr(ln, "input needs a positive dimension"))?;
                input_dim = Some(d);
                width = d;
            }
            "layer" => {
                if input_dim.is_none() {
                    return Err(perr(ln, "layer before input"));
                }
                finish(cur.take(), &mut width, &mut layers, ln)?;
                let out: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .filter(|d| *d > 0)
                    .ok_or_else(|| perr(ln, "layer needs a positive output dimension"))?;
                let act = Activation::parse(words.next().unwrap_or("identity"))
                    .ok_or_else(|| perr(ln, "activation must be identity, relu, sigmoid or tanh"))?;
                cur = Some((out, act, Vec::new(), None, ln));
            }
            "w" => {
                let c = cur.as_mut().ok_or_else(|| perr(ln, "weight row outside a layer"))?;
                let row = nums(words)?;
                if row.len() != width {
                    return Err(perr(ln, &format!("weight row needs {width} values, got {}", row.len())));
                }
                if c.3.is_some() {
                    return Err(perr(ln, "weight row after bias"));
                }
                c.2.extend(row);
            }
            "b" => {
                let c = cur.as_mut().ok_or_else(|| perr(ln, "bias row outside a layer"))?;
                let row = nums(words)?;
                if row.len() != c.0 {
                    return Err(perr(ln, &format!("bias row needs {} values, got {}", c.0, row.len())));
                }
                c.3 = Some(row);
            }
            other => return Err(perr(ln, &format!("unknown directive '{other}'"))),
        }
    }
    let last = text.lines().count();
    finish(cur.take(), &mut width, &mut layers, last)?;
    Ok(ModelSpec {
        name: name.ok_or_else(|| perr(1, "missing 'model <name>'"))?,
        input_dim: input_dim.ok_or_else(|| perr(1, "missing 'input <dim>'"))?,
        layers,
    })
}

pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

/// Loaded models, shared by all workers.
#[derive(Default)]
pub struct ModelStore {
    models: RwLock<BTreeMap<String, Arc<ModelSpec>>>,
}

impl ModelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, m: ModelSpec) {
        self.models.write().expect("model lock").insert(m.name.clone(), Arc::new(m));
    }

    pub fn get(&self, name: &str) -> Result<Arc<ModelSpec>> {
        self.models
            .read()
            .expect("model lock")
            .get(name)
            .cloned()
            .ok_or_else(|| ModelError::UnknownModel(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.models.read().expect("model lock").keys().cloned().collect()
    }

    pub fn apply(&self, name: &str, input: &[f64]) -> Result<Tensor> {
        self.get(name)?.forward(input)
    }
}

fn tensor_arg(v: &Value) -> std::result::Result<Tensor, WflError> {
    match v {
        Value::Tensor(t) => Ok((**t).clone()),
        Value::Vector(xs) => Ok(Tensor::from_vector(
            xs.iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| WflError::Type(format!("tensor element must be numeric, found {}", x.type_name())))
                })
                .collect::<std::result::Result<_, _>>()?,
        )),
        other => Err(WflError::Type(format!("expected a tensor or numeric vector, found {}", other.type_name()))),
    }
}

fn tensor_value(t: Tensor) -> Value {
    Value::Tensor(Arc::new(t))
}

fn want(args: &[Value], n: usize, name: &str) -> std::result::Result<(), WflError> {
    if args.len() != n {
        return Err(WflError::BadParam(format!("model.{name}() takes {n} arguments, got {}", args.len())));
    }
    Ok(())
}

/// Function table for the `model` namespace over a store.
pub fn model_functions(store: Arc<ModelStore>) -> FunctionTable {
    let s1 = store.clone();
    FunctionTable::new()
        .with("apply", move |a: &[Value]| {
            want(a, 2, "apply")?;
            let name = a[0].as_str().ok_or_else(|| WflError::Type("model name must be a string".into()))?;
            if a[1].is_null() {
                return Ok(Value::Null);
            }
            let x = tensor_arg(&a[1])?;
            Ok(tensor_value(s1.apply(name, x.data())?))
        })
        .with("predict", move |a: &[Value]| {
            want(a, 2, "predict")?;
            let name = a[0].as_str().ok_or_else(|| WflError::Type("model name must be a string".into()))?;
            if a[1].is_null() {
                return Ok(Value::Null);
            }
            let out = store.apply(name, tensor_arg(&a[1])?.data())?;
            match out.data() {
                [y] => Ok(Value::Double(*y)),
                d => Err(WflError::Type(format!("model.predict() needs a 1-output model, '{name}' has {}", d.len()))),
            }
        })
        .with("tensor", |a: &[Value]| {
            if a.len() == 1 {
                return Ok(tensor_value(tensor_arg(&a[0])?));
            }
            want(a, 2, "tensor")?;
            let shape = a[1]
                .as_slice()
                .ok_or_else(|| WflError::Type("tensor shape must be a vector".into()))?
                .iter()
                .map(|d| {
                    d.as_i64()
                        .and_then(|d| usize::try_from(d).ok())
                        .ok_or_else(|| WflError::BadParam("tensor dims must be non-negative integers".into()))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(tensor_value(tensor_arg(&a[0])?.reshape(shape)?))
        })
        .with("dot", |a: &[Value]| {
            want(a, 2, "dot")?;
            Ok(Value::Double(tensor_arg(&a[0])?.dot(&tensor_arg(&a[1])?)?))
        })
        .with("matmul", |a: &[Value]| {
            want(a, 2, "matmul")?;
            Ok(tensor_value(tensor_arg(&a[0])?.matmul(&tensor_arg(&a[1])?)?))
        })
        .with("add", |a: &[Value]| {
            want(a, 2, "add")?;
            Ok(tensor_value(tensor_arg(&a[0])?.add(&tensor_arg(&a[1])?)?))
        })
        .with("mul", |a: &[Value]| {
            want(a, 2, "mul")?;
            Ok(tensor_value(tensor_arg(&a[0])?.mul(&tensor_arg(&a[1])?)?))
        })
        .with("reshape", |a: &[Value]| {
            want(a, 2, "reshape")?;
            let shape = a[1]
                .as_slice()
                .ok_or_else(|| WflError::Type("reshape shape must be a vector".into()))?
                .iter()
                .map(|d| {
                    d.as_i64()
                        .and_then(|d| usize::try_from(d).ok())
                        .ok_or_else(|| WflError::BadParam("reshape dims must be non-negative integers".into()))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(tensor_value(tensor_arg(&a[0])?.reshape(shape)?))
        })
        .with("to_vector", |a: &[Value]| {
            want(a, 1, "to_vector")?;
            Ok(Value::vector(tensor_arg(&a[0])?.data().iter().map(|x| Value::Double(*x)).collect()))
        })
}

/// Registers the `model` namespace.
pub fn register_model_extension(registry: &Registry, store: Arc<ModelStore>) -> crate::wfl::Result<()> {
    registry.register_extension("model", model_functions(store))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_LAYER: &str = "\
model toy
input 3
layer 2 relu
  w 1 -1 0
  w 0.5 0.5 0.5
  b 0 -1
layer 1 identity
  w 2 -3
  b 0.25
";

    #[test]
    fn identity_layer() {
        let m = parse_model("model id\ninput 2\nlayer 2 identity\nw 1 0\nw 0 1\nb 0 0\n").unwrap();
        assert_eq!(m.forward(&[3.5, -2.0]).unwrap().data(), &[3.5, -2.0]);
    }

    #[test]
    fn two_layer_hand_computed() {
        let m = parse_model(TWO_LAYER).unwrap();
        // x = (1, 2, 3): h1 = relu(1 - 2) = 0, h2 = relu(3 - 1) = 2, y = 0 - 6 + 0.25
        assert_eq!(m.forward(&[1.0, 2.0, 3.0]).unwrap().data(), &[-5.75]);
        // x = (4, 1, 1): h1 = 3, h2 = relu(3 - 1) = 2, y = 6 - 6 + 0.25
        assert_eq!(m.forward(&[4.0, 1.0, 1.0]).unwrap().data(), &[0.25]);
        // x = (0, 0, 0): h1 = 0, h2 = relu(-1) = 0, y = 0.25
        assert_eq!(m.forward(&[0.0, 0.0, 0.0]).unwrap().data(), &[0.25]);
        assert!(matches!(m.forward(&[1.0]), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn parse_errors_name_lines() {
        let e = parse_model("model bad\ninput 2\nlayer 1 relu\nw 1 2 3\nb 0\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 4, .. }), "{e:?}");
        let e = parse_model("model bad\ninput 2\nlayer 1 swish\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 3, .. }));
        assert!(parse_model("model bad\ninput 2\nlayer 1 relu\nw 1 nan\nb 0\n").is_err());
    }

    #[test]
    fn namespace_functions() {
        let store = Arc::new(ModelStore::new());
        store.insert(parse_model(TWO_LAYER).unwrap());
        let reg = Registry::new();
        register_model_extension(&reg, store).unwrap();
        let x = Value::vector(vec![Value::Int(1), Value::Int(2), Value::Int(3)]);
        let apply = reg.lookup("model", "apply").unwrap();
        let out = apply(&[Value::str("toy"), x.clone()]).unwrap();
        assert!(matches!(out, Value::Tensor(ref t) if t.data() == [-5.75]));
        let predict = reg.lookup("model", "predict").unwrap();
        assert_eq!(predict(&[Value::str("toy"), x]).unwrap(), Value::Double(-5.75));
        assert!(apply(&[Value::str("missing"), Value::vector(vec![])]).is_err());
        let dot = reg.lookup("model", "dot").unwrap();
        let v = |a: f64, b: f64| Value::vector(vec![Value::Double(a), Value::Double(b)]);
        assert_eq!(dot(&[v(1.0, 0.0), v(0.0, 1.0)]).unwrap(), Value::Double(0.0));
    }
}
