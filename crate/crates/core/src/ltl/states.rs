use std::fmt::Write;

use super::LtlError;
use crate::machine::syntax::{lex, Parser};
use crate::machine::Expr;
use crate::trace_model::Value;

/// Ordered assignment blocks as written. Variables missing from a block keep
/// their value from the previous block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateTrace {
    pub blocks: Vec<Vec<(String, Value)>>,
}

impl StateTrace {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Variable names in order of first assignment.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for b in &self.blocks {
            for (n, _) in b {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
        }
        out
    }

    /// Value of every variable at every block after carry-forward; `None`
    /// where a variable has not been assigned yet.
    pub fn resolved(&self) -> (Vec<String>, Vec<Vec<Option<Value>>>) {
        let vars = self.variables();
        let mut rows = Vec::with_capacity(self.blocks.len());
        let mut cur: Vec<Option<Value>> = vec![None; vars.len()];
        for b in &self.blocks {
            for (n, v) in b {
                let i = vars.iter().position(|x| x == n).expect("collected above");
                cur[i] = Some(v.clone());
            }
            rows.push(cur.clone());
        }
        (vars, rows)
    }
}

/// Removes `/* */` block comments and `//` line comments, keeping line
/// breaks so positions stay meaningful.
fn strip_c_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find("/*") {
        out.push_str(&rest[..i]);
        match rest[i + 2..].find("*/") {
            Some(j) => {
                let inner = &rest[i + 2..i + 2 + j];
                out.extend(inner.chars().filter(|&c| c == '\n'));
                rest = &rest[i + 4 + j..];
            }
            None => {
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out.lines()
        .map(|l| l.find("//").map_or(l, |i| &l[..i]))
        .collect::<Vec<_>>()
        .join("\n")
}

fn syntax(line: usize, msg: impl Into<String>) -> LtlError {
    LtlError::Syntax {
        line,
        col: 1,
        msg: msg.into(),
    }
}

/// Parses a state-trace file: blocks separated by `---` lines, each holding
/// `name = value;` assignments.
pub fn parse_state_trace(text: &str) -> Result<StateTrace, LtlError> {
    let clean = strip_c_comments(text);
    let mut blocks = Vec::new();
    let mut cur: Vec<(String, Value)> = Vec::new();
    for (i, raw) in clean.lines().enumerate() {
        let line = i + 1;
        let l = raw.find('#').map_or(raw, |k| &raw[..k]).trim();
        if l == "---" {
            if !cur.is_empty() {
                blocks.push(std::mem::take(&mut cur));
            }
            continue;
        }
        for piece in l.split(';') {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            let (name, value) = piece
                .split_once('=')
                .ok_or_else(|| syntax(line, format!("expected `name = value`, found `{piece}`")))?;
            let name = name.trim();
            if !crate::trace_model::is_symbol(name) {
                return Err(syntax(line, format!("bad variable name `{name}`")));
            }
            let value = Value::parse_token(value.trim())
                .filter(|v| !v.is_wildcard())
                .ok_or_else(|| syntax(line, format!("bad value `{}`", value.trim())))?;
            match cur.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => slot.1 = value,
                None => cur.push((name.to_string(), value)),
            }
        }
    }
    if !cur.is_empty() {
        blocks.push(cur);
    }
    Ok(StateTrace { blocks })
}

pub fn render_state_trace(t: &StateTrace) -> String {
    let mut out = String::new();
    for (k, b) in t.blocks.iter().enumerate() {
        if k > 0 {
            out.push_str("---\n");
        }
        for (n, v) in b {
            let _ = writeln!(out, "{n} = {v};");
        }
    }
    out
}

/// Named propositions, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PropDefs {
    pub defs: Vec<(String, Expr)>,
}

impl PropDefs {
    pub fn get(&self, name: &str) -> Option<&Expr> {
        self.defs.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn names(&self) -> Vec<String> {
        self.defs.iter().map(|(n, _)| n.clone()).collect()
    }
}

pub(crate) fn expr_names(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Bool(_) | Expr::Int(_) => {}
        Expr::Name(n) => out.push(n.clone()),
        Expr::Not(a) | Expr::Neg(a) | Expr::Card(a) => expr_names(a, out),
        Expr::Bin(_, a, b) | Expr::Index(a, b) => {
            expr_names(a, out);
            expr_names(b, out);
        }
        Expr::SetLit(items) => items.iter().for_each(|x| expr_names(x, out)),
        Expr::Override(a, b, c) | Expr::Ite(a, b, c) => {
            expr_names(a, out);
            expr_names(b, out);
            expr_names(c, out);
        }
        Expr::MapLit(items) => {
            for (k, v) in items {
                expr_names(k, out);
                expr_names(v, out);
            }
        }
        Expr::MapComp(_, s, body) | Expr::Quant(_, _, s, body) => {
            expr_names(s, out);
            expr_names(body, out);
        }
    }
}

/// Parses `define name (expr)` lines; a leading `#` is optional. Other `#`
/// lines and C-style comments are ignored.
pub fn parse_defs(text: &str) -> Result<PropDefs, LtlError> {
    let clean = strip_c_comments(text);
    let mut defs: Vec<(String, Expr)> = Vec::new();
    for (i, raw) in clean.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        let body = if let Some(rest) = l.strip_prefix("#define") {
            rest
        } else if let Some(rest) = l.strip_prefix("define") {
            rest
        } else if l.is_empty() || l.starts_with('#') {
            continue;
        } else {
            return Err(syntax(line, format!("expected `define`, found `{l}`")));
        };
        let body = body.trim_start();
        let name_len = body
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(body.len());
        let name = &body[..name_len];
        if !crate::trace_model::is_symbol(name) {
            return Err(syntax(line, "expected a proposition name after `define`"));
        }
        let col = body.as_ptr() as usize - raw.as_ptr() as usize + name_len + 1;
        let toks = lex(&body[name_len..], line, col)?;
        let mut p = Parser::new(&toks, (line, raw.len() + 1));
        let e = p.expr()?;
        p.finish()?;
        if defs.iter().any(|(n, _)| n == name) {
            return Err(LtlError::DuplicateDefinition(name.to_string()));
        }
        defs.push((name.to_string(), e));
    }
    for (name, e) in &defs {
        let mut used = Vec::new();
        expr_names(e, &mut used);
        if let Some(u) = used.iter().find(|u| defs.iter().any(|(n, _)| &n == u)) {
            return Err(LtlError::NestedDefinition {
                name: name.clone(),
                uses: u.clone(),
            });
        }
    }
    Ok(PropDefs { defs })
}
