// SPDX-License-Identifier: Apache-2.0

//! Dynamic hierarchical record schemas.
//!
//! A schema is a tree of typed fields with index annotations and column-set
//! assignments. Top-level fields carry the column set; nested fields are
//! stored with their top-level ancestor.

mod encode;
mod infer;
mod parse;
mod prune;
mod validate;

pub use encode::{decode_any, decode_record, encode_any, encode_record, ENCODING_VERSION};
pub use infer::{flatten_path, infer_stage_schema, infer_stage_schema_typed, join_names, StageExprs};
pub use parse::parse_schema;
pub use prune::prune_schema;
pub use validate::{conform_value, json_to_value, validate_json, validate_record};

use std::fmt;

use thiserror::Error;

pub const DEFAULT_COLSET: &str = "default";

#[derive(Debug, Clone, PartialEq)]
pub enum FieldType {
    Bool,
    Int,
    Uint,
    Float,
    Double,
    String,
    /// Opaque bytes; used for serialized aggregate states.
    Bytes,
    /// Self-describing dynamic value; used for stage outputs whose type is
    /// only known at run time.
    Any,
    /// Only valid for virtual fields.
    Area,
    Message(Vec<SchemaNode>),
}

impl FieldType {
    pub fn name(&self) -> &'static str {
        match self {
            FieldType::Bool => "bool",
            FieldType::Int => "int",
            FieldType::Uint => "uint",
            FieldType::Float => "float",
            FieldType::Double => "double",
            FieldType::String => "string",
            FieldType::Bytes => "bytes",
            FieldType::Any => "any",
            FieldType::Area => "area",
            FieldType::Message(_) => "message",
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, FieldType::Int | FieldType::Uint | FieldType::Float | FieldType::Double)
    }

    pub fn children(&self) -> &[SchemaNode] {
        match self {
            FieldType::Message(c) => c,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    Singular,
    Repeated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndexKind {
    Text,
    Tag,
    Range,
    Location,
    Area,
}

impl IndexKind {
    pub fn name(&self) -> &'static str {
        match self {
            IndexKind::Text => "index_text",
            IndexKind::Tag => "index_tag",
            IndexKind::Range => "index_range",
            IndexKind::Location => "index_location",
            IndexKind::Area => "index_area",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexAnnotation {
    pub kind: IndexKind,
    /// Area tree max level for area indices.
    pub level: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaNode {
    pub name: String,
    /// Position among siblings in declaration order, starting at 1. Kept
    /// stable under pruning.
    pub id: u32,
    pub ty: FieldType,
    pub card: Cardinality,
    pub annotations: Vec<IndexAnnotation>,
    pub colset: String,
    pub virtual_expr: Option<String>,
}

impl SchemaNode {
    pub fn is_repeated(&self) -> bool {
        self.card == Cardinality::Repeated
    }

    pub fn is_virtual(&self) -> bool {
        self.virtual_expr.is_some()
    }

    pub fn children(&self) -> &[SchemaNode] {
        self.ty.children()
    }

    pub fn child(&self, name: &str) -> Option<&SchemaNode> {
        self.children().iter().find(|c| c.name == name)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(SchemaNode::node_count).sum::<usize>()
    }

    /// A `{lat, lng}` message with numeric children.
    pub fn is_point_message(&self) -> bool {
        let num = |n: &str| {
            self.child(n)
                .map(|c| matches!(c.ty, FieldType::Float | FieldType::Double) && !c.is_repeated())
                .unwrap_or(false)
        };
        matches!(self.ty, FieldType::Message(_)) && num("lat") && num("lng")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub name: String,
    pub fields: Vec<SchemaNode>,
}

impl Schema {
    pub fn new(name: impl Into<String>, fields: Vec<SchemaNode>) -> Self {
        Schema { name: name.into(), fields }
    }

    pub fn field(&self, name: &str) -> Option<&SchemaNode> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Resolves a dotted path.
    pub fn resolve(&self, path: &FieldPath) -> Option<&SchemaNode> {
        let mut parts = path.parts();
        let mut node = self.field(parts.next()?)?;
        for p in parts {
            node = node.child(p)?;
        }
        Some(node)
    }

    /// Root plus every field node.
    pub fn node_count(&self) -> usize {
        1 + self.fields.iter().map(SchemaNode::node_count).sum::<usize>()
    }

    /// Column sets in first-declaration order.
    pub fn colsets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.fields {
            if !f.is_virtual() && !out.contains(&f.colset) {
                out.push(f.colset.clone());
            }
        }
        out
    }

    /// All indexed paths with their annotations, in declaration order.
    pub fn indexed_paths(&self) -> Vec<(FieldPath, &SchemaNode, IndexAnnotation)> {
        fn walk<'a>(
            prefix: &str,
            nodes: &'a [SchemaNode],
            out: &mut Vec<(FieldPath, &'a SchemaNode, IndexAnnotation)>,
        ) {
            for n in nodes {
                let path = if prefix.is_empty() {
                    n.name.clone()
                } else {
                    format!("{prefix}.{}", n.name)
                };
                for a in &n.annotations {
                    out.push((FieldPath::new(&path), n, *a));
                }
                walk(&path, n.children(), out);
            }
        }
        let mut out = Vec::new();
        walk("", &self.fields, &mut out);
        out
    }

    /// Every leaf path (non-message nodes), in declaration order.
    pub fn leaf_paths(&self) -> Vec<FieldPath> {
        fn walk(prefix: &str, nodes: &[SchemaNode], out: &mut Vec<FieldPath>) {
            for n in nodes {
                let path = if prefix.is_empty() {
                    n.name.clone()
                } else {
                    format!("{prefix}.{}", n.name)
                };
                match &n.ty {
                    FieldType::Message(c) if !c.is_empty() => walk(&path, c, out),
                    _ => out.push(FieldPath::new(&path)),
                }
            }
        }
        let mut out = Vec::new();
        walk("", &self.fields, &mut out);
        out
    }

    pub fn virtual_fields(&self) -> impl Iterator<Item = &SchemaNode> {
        self.fields.iter().filter(|f| f.is_virtual())
    }
}

/// Dotted field path such as `loc.lat`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldPath(String);

impl FieldPath {
    pub fn new(s: &str) -> Self {
        FieldPath(s.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn parts(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    pub fn head(&self) -> &str {
        self.0.split('.').next().unwrap_or("")
    }

    /// This path and all its proper prefixes, shortest first.
    pub fn with_ancestors(&self) -> Vec<FieldPath> {
        let mut out = Vec::new();
        let mut acc = String::new();
        for p in self.parts() {
            if !acc.is_empty() {
                acc.push('.');
            }
            acc.push_str(p);
            out.push(FieldPath(acc.clone()));
        }
        out
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("annotation mismatch on '{path}': {msg}")]
    AnnotationMismatch { path: String, msg: String },
    #[error("type mismatch at '{path}': expected {expected}, found {found}")]
    TypeMismatch { path: String, expected: String, found: String },
    #[error("cardinality mismatch at '{path}': {msg}")]
    CardinalityMismatch { path: String, msg: String },
    #[error("unknown field '{0}'")]
    UnknownField(String),
    #[error("unknown path '{0}'")]
    UnknownPath(String),
    #[error("unknown column set '{0}'")]
    UnknownColset(String),
    #[error("corrupt record encoding: {0}")]
    Decode(String),
    #[error("type error: {0}")]
    Type(String),
}

pub type Result<T> = std::result::Result<T, SchemaError>;

/// Renders a schema back into the text format.
pub fn print_schema(s: &Schema) -> String {
    fn node(out: &mut String, n: &SchemaNode, depth: usize) {
        let pad = "  ".repeat(depth);
        out.push_str(&pad);
        if n.is_repeated() {
            out.push_str("repeated ");
        }
        if n.is_virtual() {
            out.push_str("virtual ");
        }
        out.push_str(&n.name);
        out.push_str(": ");
        match &n.ty {
            FieldType::Message(c) => {
                out.push_str("message {\n");
                for k in c {
                    node(out, k, depth + 1);
                }
                out.push_str(&pad);
                out.push('}');
            }
            t => out.push_str(t.name()),
        }
        if let Some(e) = &n.virtual_expr {
            out.push_str(" = ");
            out.push_str(e);
        }
        let mut anns: Vec<String> = n
            .annotations
            .iter()
            .map(|a| match a.level {
                Some(l) => format!("{}(level={l})", a.kind.name()),
                None => a.kind.name().to_string(),
            })
            .collect();
        if depth == 1 && !n.is_virtual() && n.colset != DEFAULT_COLSET {
            anns.push(format!("colset={}", n.colset));
        }
        if !anns.is_empty() {
            out.push_str(" [");
            out.push_str(&anns.join(", "));
            out.push(']');
        }
        out.push_str(";\n");
    }
    let mut out = format!("message {} {{\n", s.name);
    for f in &s.fields {
        node(&mut out, f, 1);
    }
    out.push_str("}\n");
    out
}
