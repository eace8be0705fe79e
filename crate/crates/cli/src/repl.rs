// SPDX-License-Identifier: Apache-2.0

use std::io::{BufRead, IsTerminal};

use rustyline::completion::Completer;
use rustyline::error::ReadlineError;
use rustyline::highlight::Highlighter;
use rustyline::hint::Hinter;
use rustyline::validate::Validator;
use rustyline::{Context, Editor, Helper};
use tesserflow::engine::Session;

use crate::complete::CompletionIndex;
use crate::{report, CliConfig, CliResult, Format};

struct ReplHelper(CompletionIndex);

impl Completer for ReplHelper {
    type Candidate = String;
    fn complete(&self, line: &str, pos: usize, _: &Context<'_>) -> rustyline::Result<(usize, Vec<String>)> {
        Ok(self.0.complete(line, pos))
    }
}

impl Hinter for ReplHelper {
    type Hint = String;
}
impl Highlighter for ReplHelper {}
impl Validator for ReplHelper {}
impl Helper for ReplHelper {}

/// Accumulates input lines into `;;`-terminated statements.
#[derive(Default)]
pub struct StatementBuffer {
    text: String,
}

impl StatementBuffer {
    /// Adds a line; returns the complete statement text when the line ends
    /// with `;;`.
    pub fn push(&mut self, line: &str) -> Option<String> {
        self.text.push_str(line);
        self.text.push('\n');
        let t = self.text.trim_end();
        let body = t.strip_suffix(";;")?.to_string();
        self.text.clear();
        Some(body)
    }

    pub fn is_empty(&self) -> bool {
        self.text.trim().is_empty()
    }
}

/// Executes one statement group, printing results or the error. The
/// session survives errors.
pub fn eval(session: &mut Session, text: &str, fmt: Format, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) {
    match session.execute(text) {
        Ok(rs) => {
            for r in &rs {
                if let Err(e) = report(r, fmt, out, err) {
                    let _ = writeln!(err, "error: {}", e.msg);
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
        }
    }
}

fn index(s: &Session) -> CompletionIndex {
    CompletionIndex::from_catalog(&s.catalog, s.variables())
}

pub fn run(cfg: &CliConfig, mut session: Session) -> CliResult<()> {
    let (mut out, mut err) = (std::io::stdout(), std::io::stderr());
    let mut buf = StatementBuffer::default();
    if !std::io::stdin().is_terminal() {
        for line in std::io::stdin().lock().lines() {
            if let Some(stmt) = buf.push(&line?) {
                eval(&mut session, &stmt, cfg.output, &mut out, &mut err);
            }
        }
        return Ok(());
    }
    let mut ed: Editor<ReplHelper, _> =
        Editor::new().map_err(|e| crate::CliError::new(crate::EXIT_ERROR, e.to_string()))?;
    ed.set_helper(Some(ReplHelper(index(&session))));
    loop {
        let prompt = if buf.is_empty() { "tf> " } else { "..> " };
        match ed.readline(prompt) {
            Ok(line) => {
                let _ = ed.add_history_entry(line.as_str());
                if let Some(stmt) = buf.push(&line) {
                    eval(&mut session, &stmt, cfg.output, &mut out, &mut err);
                    ed.set_helper(Some(ReplHelper(index(&session))));
                }
            }
            Err(ReadlineError::Interrupted) => buf = StatementBuffer::default(),
            Err(ReadlineError::Eof) => return Ok(()),
            Err(e) => return Err(crate::CliError::new(crate::EXIT_ERROR, e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tesserflow::engine::Catalog;

    fn run_lines(lines: &[&str]) -> (String, String, Session) {
        let mut s = Session::new(Catalog::new());
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut buf = StatementBuffer::default();
        for l in lines {
            if let Some(stmt) = buf.push(l) {
                eval(&mut s, &stmt, Format::Jsonl, &mut out, &mut err);
            }
        }
        (String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap(), s)
    }

    #[test]
    fn multi_line_statements_and_reuse() {
        let (out, _, _) = run_lines(&[
            "let xs = [{a: 1}, {a: 2},",
            "  {a: 3}];;",
            "let big = xs.filter(r => r.a > 1).collect();;",
            "big.map(r => {b: r.a * 10});;",
        ]);
        assert_eq!(out, "{\"b\":20}\n{\"b\":30}\n");
    }

    #[test]
    fn syntax_error_keeps_variables() {
        let (out, err, s) = run_lines(&["let k = 5;;", "k +* 2;;", "k + 1;;"]);
        assert!(err.contains("syntax error"), "{err}");
        assert_eq!(out, "6\n");
        assert!(s.variables().any(|v| v == "k"));
    }
}
