//! Correspondence rules between implementation record fields and model
//! variables.
//!
//! ```text
//! policy pass-through
//! corresponds([cctype,mc], [[cbit1,1], [cbit2,0]]).
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ltl::StateTrace;
use crate::trace_model::{is_symbol, TraceRecord, Value, RECORD_FIELDS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: a rule for [{field},{value}] already exists")]
    DuplicateLhs {
        field: String,
        value: String,
        line: usize,
    },
    #[error("record seq {seq}: no rule for {field} = {value}")]
    UnmatchedValue { field: String, value: String, seq: i64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Policy {
    /// Copy the field and value unchanged.
    #[default]
    PassThrough,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceRule {
    pub field: String,
    pub value: String,
    pub rhs: Vec<(String, Value)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    pub rules: Vec<CorrespondenceRule>,
    pub policy: Policy,
}

/// Field names compare without case or underscores, so `cctype` names the
/// `cc_type` record field.
fn norm(field: &str) -> String {
    field
        .chars()
        .filter(|&c| c != '_')
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl RuleSet {
    fn governs(&self, field: &str) -> bool {
        let n = norm(field);
        self.rules.iter().any(|r| norm(&r.field) == n)
    }

    pub fn lookup(&self, field: &str, value: &str) -> Option<&CorrespondenceRule> {
        let n = norm(field);
        self.rules
            .iter()
            .find(|r| r.value == value && norm(&r.field) == n)
    }
}

struct Cursor<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> TranslateError {
        TranslateError::Syntax {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.rest = self.rest.trim_start();
        match self.rest.strip_prefix(s) {
            Some(r) => {
                self.rest = r;
                true
            }
            None => false,
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), TranslateError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}` before `{}`", self.rest.trim())))
        }
    }

    fn token(&mut self) -> Result<&'a str, TranslateError> {
        self.rest = self.rest.trim_start();
        let end = self
            .rest
            .find(|c: char| c == ',' || c == ']' || c.is_whitespace())
            .unwrap_or(self.rest.len());
        let (tok, rest) = self.rest.split_at(end);
        if tok.is_empty() {
            return Err(self.err("expected a name or value"));
        }
        self.rest = rest;
        Ok(tok)
    }

    fn symbol(&mut self) -> Result<&'a str, TranslateError> {
        let t = self.token()?;
        if is_symbol(t) {
            Ok(t)
        } else {
            Err(self.err(format!("`{t}` is not a name")))
        }
    }
}

fn parse_rule(text: &str, line: usize) -> Result<CorrespondenceRule, TranslateError> {
    let mut c = Cursor { rest: text, line };
    c.expect("corresponds")?;
    c.expect("(")?;
    c.expect("[")?;
    let field = c.symbol()?.to_string();
    c.expect(",")?;
    let value = c.token()?.to_string();
    c.expect("]")?;
    c.expect(",")?;
    c.expect("[")?;
    let mut rhs: Vec<(String, Value)> = Vec::new();
    loop {
        c.expect("[")?;
        let var = c.symbol()?.to_string();
        c.expect(",")?;
        let tok = c.token()?;
        let val = Value::parse_token(tok)
            .filter(|v| !v.is_wildcard())
            .ok_or_else(|| c.err(format!("bad value `{tok}`")))?;
        c.expect("]")?;
        if rhs.iter().any(|(v, _)| v == &var) {
            return Err(c.err(format!("`{var}` assigned twice")));
        }
        rhs.push((var, val));
        if !c.eat(",") {
            break;
        }
    }
    c.expect("]")?;
    c.expect(")")?;
    c.eat(".");
    if !c.rest.trim().is_empty() {
        return Err(c.err(format!("unexpected `{}`", c.rest.trim())));
    }
    Ok(CorrespondenceRule { field, value, rhs })
}

pub fn parse_rules(text: &str) -> Result<RuleSet, TranslateError> {
    let mut rs = RuleSet::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with('%') {
            continue;
        }
        if let Some(p) = l.strip_prefix("policy") {
            rs.policy = match p.trim() {
                "pass-through" => Policy::PassThrough,
                "error" => Policy::Error,
                other => {
                    return Err(TranslateError::Syntax {
                        line,
                        msg: format!("unknown policy `{other}`"),
                    })
                }
            };
            continue;
        }
        let rule = parse_rule(l, line)?;
        if rs.lookup(&rule.field, &rule.value).is_some() {
            return Err(TranslateError::DuplicateLhs {
                field: rule.field,
                value: rule.value,
                line,
            });
        }
        rs.rules.push(rule);
    }
    Ok(rs)
}

pub fn render_rules(rs: &RuleSet) -> String {
    let mut out = String::from(match rs.policy {
        Policy::PassThrough => "policy pass-through\n",
        Policy::Error => "policy error\n",
    });
    for r in &rs.rules {
        let rhs: Vec<String> = r.rhs.iter().map(|(v, x)| format!("[{v},{x}]")).collect();
        out.push_str(&format!("corresponds([{},{}], [{}]).\n", r.field, r.value, rhs.join(", ")));
    }
    out
}

fn assign(block: &mut Vec<(String, Value)>, var: &str, v: Value) {
    match block.iter_mut().find(|(n, _)| n == var) {
        Some(slot) => slot.1 = v,
        None => block.push((var.to_string(), v)),
    }
}

/// Translates one record. Fields holding `none` are treated as absent.
pub fn translate_record(rs: &RuleSet, r: &TraceRecord) -> Result<Vec<(String, Value)>, TranslateError> {
    let mut block = Vec::new();
    for field in RECORD_FIELDS {
        let value = r.field(field).unwrap_or("none");
        if value == "none" {
            continue;
        }
        if let Some(rule) = rs.lookup(field, value) {
            for (var, v) in &rule.rhs {
                assign(&mut block, var, v.clone());
            }
        } else if rs.policy == Policy::Error && rs.governs(field) {
            return Err(TranslateError::UnmatchedValue {
                field: field.to_string(),
                value: value.to_string(),
                seq: r.seq,
            });
        } else if let Some(v) = Value::parse_token(value).filter(|v| !v.is_wildcard()) {
            assign(&mut block, field, v);
        }
    }
    Ok(block)
}

/// One block per record, in `seq` order.
pub fn apply_rules(rs: &RuleSet, records: &[TraceRecord]) -> Result<StateTrace, TranslateError> {
    let mut sorted: Vec<&TraceRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.seq);
    let blocks = sorted
        .into_iter()
        .map(|r| translate_record(rs, r))
        .collect::<Result<_, _>>()?;
    Ok(StateTrace { blocks })
}

/// Recovers `(field, value)` pairs from a translated block: every rule whose
/// whole right-hand side appears in the block.
pub fn reverse_block(rs: &RuleSet, block: &[(String, Value)]) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for r in &rs.rules {
        if r.rhs.iter().all(|(v, x)| block.iter().any(|(n, y)| n == v && y == x)) {
            out.insert(r.field.clone(), r.value.clone());
        }
    }
    out
}
