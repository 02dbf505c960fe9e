//! Trace data types: raw instrumentation records, normalized operation
//! traces, and the normalization passes (projection, consecutive dedup,
//! finitization) that turn the former into the latter.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single argument or output value appearing in an operation trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Symbol(String),
    /// `_`, only meaningful inside the outputs of an [`OpEvent`].
    Wildcard,
}

impl Value {
    /// Reads a bare token: integer, `true`/`false`, `_`, or an identifier.
    pub fn parse_token(tok: &str) -> Option<Value> {
        let tok = tok.trim();
        if tok == "_" {
            return Some(Value::Wildcard);
        }
        if tok == "true" {
            return Some(Value::Bool(true));
        }
        if tok == "false" {
            return Some(Value::Bool(false));
        }
        if let Ok(i) = tok.parse::<i64>() {
            return Some(Value::Int(i));
        }
        if is_symbol(tok) {
            return Some(Value::Symbol(tok.to_string()));
        }
        None
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, Value::Wildcard)
    }

    /// Wildcard-aware equality: `_` on either side matches anything.
    pub fn matches(&self, other: &Value) -> bool {
        self.is_wildcard() || other.is_wildcard() || self == other
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Symbol(s) => f.write_str(s),
            Value::Wildcard => f.write_str("_"),
        }
    }
}

/// Identifier grammar `[A-Za-z][A-Za-z0-9_]*`.
pub fn is_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// One normalized step `name(args) [--> (outs)]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpEvent {
    pub name: String,
    pub args: Vec<Value>,
    pub outs: Option<Vec<Value>>,
}

impl OpEvent {
    pub fn new(name: impl Into<String>, args: Vec<Value>) -> Self {
        OpEvent {
            name: name.into(),
            args,
            outs: None,
        }
    }

    pub fn with_outs(mut self, outs: Vec<Value>) -> Self {
        self.outs = Some(outs);
        self
    }

    /// True when `self` (possibly with wildcard or absent outputs) describes
    /// the concrete event `concrete`.
    pub fn matches(&self, concrete: &OpEvent) -> bool {
        if self.name != concrete.name || self.args != concrete.args {
            return false;
        }
        match (&self.outs, &concrete.outs) {
            (None, _) => true,
            (Some(mine), Some(theirs)) => {
                mine.len() == theirs.len() && mine.iter().zip(theirs).all(|(a, b)| a.matches(b))
            }
            (Some(mine), None) => mine.is_empty(),
        }
    }
}

impl fmt::Display for OpEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if !self.args.is_empty() {
            write!(f, "({})", join(&self.args))?;
        }
        if let Some(outs) = &self.outs {
            write!(f, " --> ({})", join(outs))?;
        }
        Ok(())
    }
}

fn join(vals: &[Value]) -> String {
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// An ordered operation trace, the input to replay.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpTrace {
    pub machine_name: Option<String>,
    /// Whether an `initialise_machine.` header line was present.
    pub initialise: bool,
    pub steps: Vec<OpEvent>,
}

impl OpTrace {
    pub fn new(steps: Vec<OpEvent>) -> Self {
        OpTrace {
            machine_name: None,
            initialise: false,
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn prefix(&self, k: usize) -> OpTrace {
        OpTrace {
            machine_name: self.machine_name.clone(),
            initialise: self.initialise,
            steps: self.steps[..k.min(self.steps.len())].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("header `{header}` at line {line} appears after a step")]
    UnexpectedHeader { line: usize, header: String },
    #[error("record on line {line}: missing mandatory field `{field}`")]
    Schema { line: usize, field: String },
    #[error("record on line {line}: {msg}")]
    BadRecord { line: usize, msg: String },
    #[error("duplicate seq {0}")]
    DuplicateSeq(i64),
    #[error("record seq {seq}: bad bop_name `{bop}`: {msg}")]
    BadBop { seq: i64, bop: String, msg: String },
    #[error("unknown record field `{0}`")]
    UnknownField(String),
}

// ---------------------------------------------------------------------------
// Op-trace text format

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col0: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize, col0: usize) -> Self {
        Cursor {
            src: src.as_bytes(),
            pos: 0,
            line,
            col0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> TraceError {
        TraceError::Syntax {
            line: self.line,
            col: self.col0 + self.pos + 1,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), TraceError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    fn ident(&mut self) -> Result<String, TraceError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos] as char;
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if is_symbol(s) {
            Ok(s.to_string())
        } else {
            self.pos = start;
            Err(self.err("expected identifier"))
        }
    }

    fn value(&mut self) -> Result<Value, TraceError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos] as char;
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let tok = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        Value::parse_token(tok).ok_or_else(|| {
            self.pos = start;
            self.err(format!("bad value `{tok}`"))
        })
    }

    fn value_list(&mut self) -> Result<Vec<Value>, TraceError> {
        self.expect("(")?;
        let mut out = Vec::new();
        if self.eat(")") {
            return Ok(out);
        }
        loop {
            out.push(self.value()?);
            if self.eat(")") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.src.len()
    }
}

/// `name(args)` with args free of wildcards.
fn op_head(cur: &mut Cursor<'_>) -> Result<OpEvent, TraceError> {
    let name = cur.ident()?;
    let args = if cur.peek() == Some(b'(') {
        cur.value_list()?
    } else {
        Vec::new()
    };
    if args.iter().any(Value::is_wildcard) {
        return Err(cur.err("wildcard not allowed in arguments"));
    }
    Ok(OpEvent::new(name, args))
}

/// Parses one step body (no trailing dot). Accepts the canonical arrow form
/// `op(args) --> (outs)` and the two nested forms `'-->'(op(args),out,...)`
/// and `'-->(op(args,_))`, where trailing wildcard arguments become outputs.
fn step_body(cur: &mut Cursor<'_>) -> Result<OpEvent, TraceError> {
    if cur.eat("'-->'") {
        cur.expect("(")?;
        let mut ev = op_head(cur)?;
        let mut outs = Vec::new();
        while cur.eat(",") {
            outs.push(cur.value()?);
        }
        cur.expect(")")?;
        ev.outs = Some(outs);
        return Ok(ev);
    }
    if cur.eat("'-->(") {
        let name = cur.ident()?;
        let mut vals = if cur.peek() == Some(b'(') {
            cur.value_list()?
        } else {
            Vec::new()
        };
        cur.expect(")")?;
        let split = vals
            .iter()
            .rposition(|v| !v.is_wildcard())
            .map_or(0, |i| i + 1);
        let outs = vals.split_off(split);
        if vals.iter().any(Value::is_wildcard) {
            return Err(cur.err("wildcard not allowed in arguments"));
        }
        return Ok(OpEvent {
            name,
            args: vals,
            outs: Some(outs),
        });
    }
    let mut ev = op_head(cur)?;
    if cur.eat("-->") {
        ev.outs = Some(cur.value_list()?);
    }
    Ok(ev)
}

/// Parses a bare `name(args) [--> (outs)]` string, as found in a record's
/// `bop_name` field. A trailing `.` is tolerated.
pub fn parse_op_event(text: &str) -> Result<OpEvent, TraceError> {
    let body = text.trim();
    let body = body.strip_suffix('.').unwrap_or(body);
    let mut cur = Cursor::new(body, 1, 0);
    let ev = step_body(&mut cur)?;
    if !cur.at_end() {
        return Err(cur.err("trailing input"));
    }
    Ok(ev)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

pub fn parse_op_trace(text: &str) -> Result<OpTrace, TraceError> {
    let mut trace = OpTrace::default();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col0 = line.len() - line.trim_start().len();
        let Some(body) = trimmed.strip_suffix('.') else {
            return Err(TraceError::Syntax {
                line: lineno,
                col: col0 + trimmed.len() + 1,
                msg: "expected `.` at end of step".into(),
            });
        };
        let mut cur = Cursor::new(body, lineno, col0);

        if body.trim() == "initialise_machine" {
            if !trace.steps.is_empty() {
                return Err(TraceError::UnexpectedHeader {
                    line: lineno,
                    header: "initialise_machine".into(),
                });
            }
            trace.initialise = true;
            continue;
        }
        if body.trim_start().starts_with("machine(") {
            if !trace.steps.is_empty() {
                return Err(TraceError::UnexpectedHeader {
                    line: lineno,
                    header: "machine".into(),
                });
            }
            cur.expect("machine")?;
            cur.expect("(")?;
            let quoted = cur.eat("'");
            let name = cur.ident()?;
            if quoted {
                cur.expect("'")?;
            }
            cur.expect(")")?;
            if !cur.at_end() {
                return Err(cur.err("trailing input after header"));
            }
            trace.machine_name = Some(name);
            continue;
        }

        let ev = step_body(&mut cur)?;
        if !cur.at_end() {
            return Err(cur.err("trailing input"));
        }
        trace.steps.push(ev);
    }
    Ok(trace)
}

pub fn render_op_trace(t: &OpTrace) -> String {
    let mut out = String::new();
    if let Some(name) = &t.machine_name {
        out.push_str(&format!("machine('{name}').\n"));
    }
    if t.initialise {
        out.push_str("initialise_machine.\n");
    }
    for step in &t.steps {
        out.push_str(&format!("{step}.\n"));
    }
    out
}

// ---------------------------------------------------------------------------
// Records

/// One raw instrumentation event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: i64,
    #[serde(default = "none_sym")]
    pub trace_id: String,
    #[serde(default = "none_sym")]
    pub session_id: String,
    #[serde(default = "none_sym")]
    pub user_id: String,
    #[serde(default = "none_sym")]
    pub book_type: String,
    #[serde(default = "none_sym")]
    pub cc_type: String,
    #[serde(default = "none_sym")]
    pub component: String,
    pub bop_name: String,
    /// Keys outside the fixed schema, kept so files round-trip.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

fn none_sym() -> String {
    "none".to_string()
}

/// Names of the symbol-valued record fields, in schema order.
pub const RECORD_FIELDS: [&str; 6] = [
    "trace_id",
    "session_id",
    "user_id",
    "book_type",
    "cc_type",
    "component",
];

impl TraceRecord {
    pub fn new(seq: i64, bop_name: impl Into<String>) -> Self {
        TraceRecord {
            seq,
            trace_id: none_sym(),
            session_id: none_sym(),
            user_id: none_sym(),
            book_type: none_sym(),
            cc_type: none_sym(),
            component: none_sym(),
            bop_name: bop_name.into(),
            extra: BTreeMap::new(),
        }
    }

    pub fn field(&self, name: &str) -> Option<&str> {
        Some(match name {
            "trace_id" => &self.trace_id,
            "session_id" => &self.session_id,
            "user_id" => &self.user_id,
            "book_type" => &self.book_type,
            "cc_type" => &self.cc_type,
            "component" => &self.component,
            "bop_name" => &self.bop_name,
            _ => return None,
        })
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut String> {
        Some(match name {
            "trace_id" => &mut self.trace_id,
            "session_id" => &mut self.session_id,
            "user_id" => &mut self.user_id,
            "book_type" => &mut self.book_type,
            "cc_type" => &mut self.cc_type,
            "component" => &mut self.component,
            _ => return None,
        })
    }
}

/// Parses JSON-lines records and returns them sorted by `seq`.
pub fn parse_records(jsonl: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out: Vec<TraceRecord> = Vec::new();
    for (idx, line) in jsonl.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Value =
            serde_json::from_str(line).map_err(|e| TraceError::BadRecord {
                line: lineno,
                msg: e.to_string(),
            })?;
        let Some(map) = obj.as_object() else {
            return Err(TraceError::BadRecord {
                line: lineno,
                msg: "expected a JSON object".into(),
            });
        };
        for field in ["seq", "bop_name"] {
            if !map.contains_key(field) {
                return Err(TraceError::Schema {
                    line: lineno,
                    field: field.into(),
                });
            }
        }
        let rec: TraceRecord = serde_json::from_value(obj).map_err(|e| TraceError::BadRecord {
            line: lineno,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    out.sort_by_key(|r| r.seq);
    if let Some(w) = out.windows(2).find(|w| w[0].seq == w[1].seq) {
        return Err(TraceError::DuplicateSeq(w[0].seq));
    }
    Ok(out)
}

pub fn render_records(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        // Serialization of plain strings and a map cannot fail.
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Normalization

/// Keeps only the operation of each record, in record order.
pub fn project_ops(records: &[TraceRecord]) -> Result<OpTrace, TraceError> {
    let steps = records
        .iter()
        .map(|r| {
            parse_op_event(&r.bop_name).map_err(|e| TraceError::BadBop {
                seq: r.seq,
                bop: r.bop_name.clone(),
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OpTrace::new(steps))
}

/// Drops a step when it is structurally identical to the step before it.
pub fn dedup_consecutive(t: &OpTrace) -> OpTrace {
    let mut steps = t.steps.clone();
    steps.dedup();
    OpTrace {
        machine_name: t.machine_name.clone(),
        initialise: t.initialise,
        steps,
    }
}

/// Bijection from raw field values to short finite tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FinitizationMap {
    pub key: String,
    /// Raw token to finite token, in first-appearance order.
    pub entries: Vec<(String, String)>,
}

impl FinitizationMap {
    pub fn get(&self, raw: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(r, _)| r == raw)
            .map(|(_, f)| f.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn rewrite_bop_args(bop: &str, map: &BTreeMap<&str, &str>) -> String {
    // Replace whole identifier-like tokens only.
    let mut out = String::with_capacity(bop.len());
    let mut tok = String::new();
    let flush = |tok: &mut String, out: &mut String| {
        if !tok.is_empty() {
            out.push_str(map.get(tok.as_str()).copied().unwrap_or(tok.as_str()));
            tok.clear();
        }
    };
    let mut depth = 0usize;
    for c in bop.chars() {
        if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
            tok.push(c);
            continue;
        }
        if depth > 0 {
            flush(&mut tok, &mut out);
        } else {
            out.push_str(&tok);
            tok.clear();
        }
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            _ => {}
        }
        out.push(c);
    }
    if depth > 0 {
        flush(&mut tok, &mut out);
    } else {
        out.push_str(&tok);
    }
    out
}

/// Replaces every raw value of field `key` with `prefix` + index (first
/// appearance order, starting at 1), also inside `bop_name` arguments.
///
/// Values that already have the finite form `prefix<n>` are kept as-is, so
/// finitizing already-finitized output is the identity.
pub fn finitize(
    records: &[TraceRecord],
    key: &str,
    prefix: &str,
) -> Result<(Vec<TraceRecord>, FinitizationMap), TraceError> {
    if !RECORD_FIELDS.contains(&key) {
        return Err(TraceError::UnknownField(key.to_string()));
    }
    let is_finite = |s: &str| {
        s.strip_prefix(prefix)
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) && !n.starts_with('0'))
    };
    let mut map = FinitizationMap {
        key: key.to_string(),
        entries: Vec::new(),
    };
    let mut used: Vec<String> = records
        .iter()
        .filter_map(|r| r.field(key))
        .filter(|v| is_finite(v))
        .map(str::to_string)
        .collect();
    let mut next = 1usize;
    for r in records {
        let raw = r.field(key).unwrap_or_default();
        if raw == "none" || map.get(raw).is_some() {
            continue;
        }
        let fin = if is_finite(raw) {
            raw.to_string()
        } else {
            loop {
                let cand = format!("{prefix}{next}");
                next += 1;
                if !used.contains(&cand) {
                    used.push(cand.clone());
                    break cand;
                }
            }
        };
        map.entries.push((raw.to_string(), fin));
    }
    let lookup: BTreeMap<&str, &str> = map
        .entries
        .iter()
        .map(|(r, f)| (r.as_str(), f.as_str()))
        .collect();
    let out = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(v) = r.field_mut(key) {
                if let Some(f) = lookup.get(v.as_str()) {
                    *v = f.to_string();
                }
            }
            r.bop_name = rewrite_bop_args(&r.bop_name, &lookup);
            r
        })
        .collect();
    Ok((out, map))
}
