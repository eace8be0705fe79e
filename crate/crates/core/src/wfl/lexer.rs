// SPDX-License-Identifier: Apache-2.0

use super::{Span, WflError};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Colon,
    Semi,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Assign,
    Bang,
    AndAnd,
    OrOr,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, WflError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let syntax = |line, col, msg: String| WflError::Syntax { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        let adv = |i: &mut usize, col: &mut u32, n: usize| {
            *i += n;
            *col += n as u32;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            adv(&mut i, &mut col, 1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += (i - start) as u32;
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), span });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let tok = if is_float {
                Tok::Float(text.parse().map_err(|_| syntax(span.line, span.col, format!("bad number '{text}'")))?)
            } else {
                Tok::Int(text.parse().map_err(|_| {
                    syntax(span.line, span.col, format!("integer literal '{text}' out of range"))
                })?)
            };
            out.push(Token { tok, span });
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            let mut s = String::new();
            adv(&mut i, &mut col, 1);
            loop {
                let Some(&d) = chars.get(i) else {
                    return Err(syntax(span.line, span.col, "unterminated string".into()));
                };
                if d == quote {
                    adv(&mut i, &mut col, 1);
                    break;
                }
                if d == '\\' {
                    let e = chars.get(i + 1).copied();
                    let ch = match e {
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        Some('0') => '\0',
                        Some('\\') => '\\',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        _ => return Err(syntax(line, col, "bad escape in string".into())),
                    };
                    s.push(ch);
                    adv(&mut i, &mut col, 2);
                    continue;
                }
                if d == '\n' {
                    line += 1;
                    col = 1;
                    i += 1;
                } else {
                    adv(&mut i, &mut col, 1);
                }
                s.push(d);
            }
            out.push(Token { tok: Tok::Str(s), span });
            continue;
        }
        let two: Option<Tok> = match (c, chars.get(i + 1).copied()) {
            ('=', Some('>')) => Some(Tok::Arrow),
            ('=', Some('=')) => Some(Tok::EqEq),
            ('!', Some('=')) => Some(Tok::NotEq),
            ('<', Some('=')) => Some(Tok::Le),
            ('>', Some('=')) => Some(Tok::Ge),
            ('&', Some('&')) => Some(Tok::AndAnd),
            ('|', Some('|')) => Some(Tok::OrOr),
            _ => None,
        };
        if let Some(tok) = two {
            out.push(Token { tok, span });
            adv(&mut i, &mut col, 2);
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            ':' => Tok::Colon,
            ';' => Tok::Semi,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '%' => Tok::Percent,
            '<' => Tok::Lt,
            '>' => Tok::Gt,
            '=' => Tok::Assign,
            '!' => Tok::Bang,
            other => return Err(syntax(line, col, format!("unexpected character '{other}'"))),
        };
        out.push(Token { tok, span });
        adv(&mut i, &mut col, 1);
    }
    out.push(Token { tok: Tok::Eof, span: Span { line, col } });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(
            toks("p => p.x >= 1.5e3 // hi\n&& 'a\\'b'"),
            vec![
                Tok::Ident("p".into()),
                Tok::Arrow,
                Tok::Ident("p".into()),
                Tok::Dot,
                Tok::Ident("x".into()),
                Tok::Ge,
                Tok::Float(1500.0),
                Tok::AndAnd,
                Tok::Str("a'b".into()),
                Tok::Eof
            ]
        );
        assert_eq!(toks("1.x"), vec![Tok::Int(1), Tok::Dot, Tok::Ident("x".into()), Tok::Eof]);
    }

    #[test]
    fn positions() {
        let t = tokenize("a\n  bc").unwrap();
        assert_eq!(t[1].span, Span { line: 2, col: 3 });
        let e = tokenize("x = \"abc").unwrap_err();
        assert_eq!(e, WflError::Syntax { line: 1, col: 5, msg: "unterminated string".into() });
        assert!(tokenize("99999999999999999999").is_err());
    }
}
