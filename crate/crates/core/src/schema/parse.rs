// SPDX-License-Identifier: Apache-2.0

use super::{
    Cardinality, FieldType, IndexAnnotation, IndexKind, Result, Schema, SchemaError, SchemaNode,
    DEFAULT_COLSET,
};
use crate::geo::{DEFAULT_MAX_LEVEL, MAX_LEVEL};

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

pub fn parse_schema(text: &str) -> Result<Schema> {
    let mut p = Parser { src: text, pos: 0 };
    p.keyword("message")?;
    let name = p.ident()?;
    let fields = p.body(0, "")?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected text after schema"));
    }
    Ok(Schema { name, fields })
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> SchemaError {
        let before = &self.src[..self.pos.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        SchemaError::Syntax { line, col, msg: msg.into() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        loop {
            let rest = &self.src[self.pos..];
            if rest.starts_with("//") || rest.starts_with('#') {
                self.pos += rest.find('\n').unwrap_or(rest.len());
            } else if let Some(c) = rest.chars().next().filter(|c| c.is_whitespace()) {
                self.pos += c.len_utf8();
            } else {
                return;
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(i, c)| !(c.is_ascii_alphanumeric() || c == '_') || (i == 0 && c.is_ascii_digit()))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return Err(self.err("expected identifier"));
        }
        self.pos += len;
        Ok(rest[..len].to_string())
    }

    fn peek_ident(&mut self) -> Option<String> {
        let save = self.pos;
        let r = self.ident().ok();
        self.pos = save;
        r
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let at = self.pos;
        match self.ident() {
            Ok(s) if s == kw => Ok(()),
            _ => {
                self.pos = at;
                self.skip_ws();
                Err(self.err(format!("expected '{kw}'")))
            }
        }
    }

    fn body(&mut self, depth: usize, prefix: &str) -> Result<Vec<SchemaNode>> {
        self.expect('{')?;
        let mut fields: Vec<SchemaNode> = Vec::new();
        loop {
            if self.eat('}') {
                return Ok(fields);
            }
            self.skip_ws();
            if self.pos >= self.src.len() {
                return Err(self.err("unterminated message body"));
            }
            let start = self.pos;
            let id = fields.len() as u32 + 1;
            let f = self.field(depth, prefix, id)?;
            if fields.iter().any(|g| g.name == f.name) {
                self.pos = start;
                return Err(self.err(format!("duplicate field '{}'", f.name)));
            }
            fields.push(f);
        }
    }

    fn field(&mut self, depth: usize, prefix: &str, id: u32) -> Result<SchemaNode> {
        let mut card = Cardinality::Singular;
        let mut is_virtual = false;
        let mut name = self.ident()?;
        loop {
            match name.as_str() {
                "repeated" if self.peek_ident().is_some() => {
                    card = Cardinality::Repeated;
                    name = self.ident()?;
                }
                "virtual" if self.peek_ident().is_some() => {
                    is_virtual = true;
                    name = self.ident()?;
                }
                _ => break,
            }
        }
        let path = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
        self.expect(':')?;
        let ty_at = self.pos;
        let ty_name = self.ident()?;
        let ty = match ty_name.as_str() {
            "bool" => FieldType::Bool,
            "int" => FieldType::Int,
            "uint" => FieldType::Uint,
            "float" => FieldType::Float,
            "double" => FieldType::Double,
            "string" => FieldType::String,
            "bytes" => FieldType::Bytes,
            "any" => FieldType::Any,
            "area" => FieldType::Area,
            "message" => FieldType::Message(self.body(depth + 1, &path)?),
            other => {
                self.pos = ty_at;
                self.skip_ws();
                return Err(self.err(format!("unknown type '{other}'")));
            }
        };
        let mut virtual_expr = None;
        let mut ann_text = None;
        self.skip_ws();
        if self.eat('=') {
            if !is_virtual {
                return Err(self.err("only virtual fields take an expression"));
            }
            let (expr, anns) = self.virtual_tail()?;
            virtual_expr = Some(expr);
            ann_text = anns;
        } else if is_virtual {
            return Err(self.err("virtual field needs '= expression'"));
        }
        let mut annotations = Vec::new();
        let mut colset = None;
        let mut parse_anns = |p: &mut Parser<'_>| -> Result<()> {
            loop {
                let at = p.pos;
                let a = p.ident()?;
                match a.as_str() {
                    "colset" => {
                        p.expect('=')?;
                        colset = Some(p.ident()?);
                    }
                    "index_text" | "index_tag" | "index_range" | "index_location" | "index_area" => {
                        let kind = match a.as_str() {
                            "index_text" => IndexKind::Text,
                            "index_tag" => IndexKind::Tag,
                            "index_range" => IndexKind::Range,
                            "index_location" => IndexKind::Location,
                            _ => IndexKind::Area,
                        };
                        let mut level = None;
                        if p.eat('(') {
                            p.keyword("level")?;
                            p.expect('=')?;
                            p.skip_ws();
                            let n_at = p.pos;
                            let digits: String =
                                p.src[p.pos..].chars().take_while(|c| c.is_ascii_digit()).collect();
                            p.pos += digits.len();
                            let lv: u8 = digits.parse().map_err(|_| {
                                p.pos = n_at;
                                p.err("expected level number")
                            })?;
                            if lv > MAX_LEVEL {
                                p.pos = n_at;
                                return Err(p.err(format!("level must be at most {MAX_LEVEL}")));
                            }
                            level = Some(lv);
                            p.expect(')')?;
                        }
                        if kind == IndexKind::Area && level.is_none() {
                            level = Some(DEFAULT_MAX_LEVEL);
                        }
                        if kind != IndexKind::Area && level.is_some() {
                            p.pos = at;
                            return Err(p.err("only index_area takes a level"));
                        }
                        annotations.push(IndexAnnotation { kind, level });
                    }
                    other => {
                        p.pos = at;
                        p.skip_ws();
                        return Err(p.err(format!("unknown annotation '{other}'")));
                    }
                }
                if !p.eat(',') {
                    return Ok(());
                }
            }
        };
        match ann_text {
            Some((start, end)) => {
                let mut sub = Parser { src: &self.src[..end], pos: start };
                parse_anns(&mut sub)?;
                sub.skip_ws();
                if sub.pos != end {
                    return Err(sub.err("expected ']'"));
                }
            }
            None => {
                if self.eat('[') {
                    parse_anns(self)?;
                    self.expect(']')?;
                }
            }
        }
        self.expect(';')?;

        let node = SchemaNode {
            name,
            id,
            ty,
            card,
            annotations,
            colset: String::new(),
            virtual_expr,
        };
        check_node(&node, &path, depth)?;
        let colset = match colset {
            Some(c) if depth > 0 => {
                return Err(SchemaError::AnnotationMismatch {
                    path,
                    msg: format!("column set '{c}' may only be set on top-level fields"),
                })
            }
            Some(_) if node.is_virtual() => {
                return Err(SchemaError::AnnotationMismatch {
                    path,
                    msg: "virtual fields are not stored and take no column set".into(),
                })
            }
            Some(c) => c,
            None if depth == 0 && !node.is_virtual() => DEFAULT_COLSET.to_string(),
            None => String::new(),
        };
        Ok(SchemaNode { colset, ..node })
    }

    /// Reads a virtual expression up to `;`, splitting off a trailing
    /// annotation group. Returns the expression text and the byte span of the
    /// annotation list (without brackets).
    fn virtual_tail(&mut self) -> Result<(String, Option<(usize, usize)>)> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut depth = 0i32;
        let mut i = start;
        let mut last_group: Option<(usize, usize)> = None;
        let mut in_str: Option<u8> = None;
        while i < bytes.len() {
            let c = bytes[i];
            if let Some(q) = in_str {
                if c == b'\\' {
                    i += 1;
                } else if c == q {
                    in_str = None;
                }
                i += 1;
                continue;
            }
            match c {
                b'"' | b'\'' => in_str = Some(c),
                b'(' | b'{' => depth += 1,
                b')' | b'}' => depth -= 1,
                b'[' => {
                    if depth == 0 {
                        last_group = Some((i, usize::MAX));
                    }
                    depth += 1;
                }
                b']' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Some((s, _)) = last_group {
                            last_group = Some((s, i));
                        }
                    }
                }
                b';' if depth == 0 => break,
                _ => {}
            }
            i += 1;
        }
        if i >= bytes.len() {
            self.pos = start;
            return Err(self.err("unterminated virtual field expression"));
        }
        let mut expr_end = i;
        let mut anns = None;
        if let Some((s, e)) = last_group {
            let tail_is_group = e != usize::MAX && self.src[e + 1..i].trim().is_empty();
            let inner = self.src[s + 1..e.min(i)].trim_start();
            if tail_is_group && (inner.starts_with("index_") || inner.starts_with("colset")) {
                expr_end = s;
                anns = Some((s + 1, e));
            }
        }
        let expr = self.src[start..expr_end].trim().to_string();
        if expr.is_empty() {
            self.pos = start;
            return Err(self.err("empty virtual field expression"));
        }
        if let Err(e) = crate::wfl::parse_expr(&expr) {
            self.pos = start;
            return Err(self.err(format!("bad virtual field expression: {e}")));
        }
        self.pos = i;
        Ok((expr, anns))
    }
}

fn check_node(n: &SchemaNode, path: &str, depth: usize) -> Result<()> {
    let mismatch = |msg: String| SchemaError::AnnotationMismatch { path: path.to_string(), msg };
    if n.is_virtual() {
        if depth > 0 {
            return Err(mismatch("virtual fields must be top-level".into()));
        }
        if n.annotations.is_empty() {
            return Err(mismatch("a virtual field needs at least one index annotation".into()));
        }
    } else if n.ty == FieldType::Area {
        return Err(mismatch("'area' fields must be virtual".into()));
    }
    for a in &n.annotations {
        let ok = match a.kind {
            IndexKind::Text => n.ty == FieldType::String,
            IndexKind::Tag => matches!(
                n.ty,
                FieldType::String | FieldType::Int | FieldType::Uint | FieldType::Bool
            ),
            IndexKind::Range => n.ty.is_numeric(),
            IndexKind::Location => n.is_point_message() && !n.is_repeated(),
            IndexKind::Area => n.ty == FieldType::Area && !n.is_repeated(),
        };
        if !ok {
            let card = if n.is_repeated() { "repeated " } else { "" };
            return Err(mismatch(format!(
                "{} is not valid on a {card}{} field",
                a.kind.name(),
                n.ty.name()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{print_schema, FieldPath};

    const SHAPE: &str = "
        message Place {
          name: string [index_text];
          rank: int [index_range, colset=stats];
          loc: message {
            lat: double;
            lng: double;
          } [index_location];
        }";

    #[test]
    fn empty_message() {
        let s = parse_schema("message Empty {}").unwrap();
        assert_eq!(s.name, "Empty");
        assert!(s.fields.is_empty());
        assert_eq!(s.node_count(), 1);
    }

    #[test]
    fn name_rank_loc_shape() {
        let s = parse_schema(SHAPE).unwrap();
        assert_eq!(s.fields.len(), 3);
        let loc = s.resolve(&FieldPath::new("loc")).unwrap();
        assert_eq!(loc.annotations[0].kind, IndexKind::Location);
        assert_eq!(s.field("rank").unwrap().colset, "stats");
        assert_eq!(s.field("name").unwrap().colset, DEFAULT_COLSET);
        assert_eq!(s.colsets(), vec!["default", "stats"]);
        assert_eq!(loc.children()[1].id, 2);
        assert_eq!(s.node_count(), 6);
    }

    #[test]
    fn text_index_on_double_is_rejected() {
        let e = parse_schema("message M { x: double [index_text]; }").unwrap_err();
        assert!(matches!(e, SchemaError::AnnotationMismatch { ref path, .. } if path == "x"));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_schema("message M {\n  x: strin;\n}").unwrap_err();
        assert_eq!(
            e,
            SchemaError::Syntax { line: 2, col: 6, msg: "unknown type 'strin'".into() }
        );
        assert!(matches!(parse_schema("message M { x: int"), Err(SchemaError::Syntax { .. })));
    }

    #[test]
    fn virtual_fields() {
        let s = parse_schema(
            "message Obs {
               ts: int;
               path: repeated message { lat: double; lng: double; };
               virtual hour: int = hour_of_day(ts) [index_range];
               virtual strip: area = area_path(path, 20.0) [index_area(level=6)];
             }",
        );
        // `repeated` must precede the name, not the type.
        assert!(s.is_err());
        let s = parse_schema(
            "message Obs {
               ts: int;
               repeated path: message { lat: double; lng: double; };
               virtual hour: int = hour_of_day(ts) [index_range];
               virtual strip: area = area_path(path, [1.0, 2.0][0]) [index_area(level=6)];
             }",
        )
        .unwrap();
        let strip = s.field("strip").unwrap();
        assert_eq!(strip.virtual_expr.as_deref(), Some("area_path(path, [1.0, 2.0][0])"));
        assert_eq!(strip.annotations[0].level, Some(6));
        assert_eq!(s.colsets(), vec!["default"]);
        assert!(parse_schema("message M { virtual v: int = 1; }").is_err());
        assert!(parse_schema("message M { a: area; }").is_err());
    }

    #[test]
    fn print_round_trip() {
        let s = parse_schema(SHAPE).unwrap();
        let again = parse_schema(&print_schema(&s)).unwrap();
        assert_eq!(s, again);
    }
}
