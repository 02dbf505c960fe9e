//! Tokens and expression syntax shared by machine files and
//! proposition-definition files.

use std::fmt;

use super::MachineError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    /// Quoted atom such as `'TravelAgency'`.
    Quoted(String),
    Punct(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => f.write_str(s),
            Tok::Int(i) => write!(f, "{i}"),
            Tok::Quoted(s) => write!(f, "'{s}'"),
            Tok::Punct(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

// Longest first.
const PUNCTS: &[&str] = &[
    "|->", ":=", "..", "->", "&&", "||", "==", "/=", "!=", "<=", ">=", "(", ")", "[", "]", "{",
    "}", ",", ":", ";", "=", "<", ">", "+", "-", "!",
];

/// Tokenizes `src`, whose first character sits at (`line`, `col`).
pub fn lex(src: &str, line: usize, col: usize) -> Result<Vec<Spanned>, MachineError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let (mut ln, mut cl) = (line, col);
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '\n' {
            ln += 1;
            cl = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            cl += 1;
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start_col = cl;
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            cl += i - s;
            out.push(Spanned {
                tok: Tok::Ident(src[s..i].to_string()),
                line: ln,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            cl += i - s;
            let n = src[s..i].parse::<i64>().map_err(|_| MachineError::Syntax {
                line: ln,
                col: start_col,
                msg: "integer literal out of range".into(),
            })?;
            out.push(Spanned {
                tok: Tok::Int(n),
                line: ln,
                col: start_col,
            });
            continue;
        }
        if c == '\'' {
            let s = i + 1;
            let mut j = s;
            while j < bytes.len() && bytes[j] != b'\'' && bytes[j] != b'\n' {
                j += 1;
            }
            if j >= bytes.len() || bytes[j] != b'\'' {
                return Err(MachineError::Syntax {
                    line: ln,
                    col: start_col,
                    msg: "unterminated quoted atom".into(),
                });
            }
            out.push(Spanned {
                tok: Tok::Quoted(src[s..j].to_string()),
                line: ln,
                col: start_col,
            });
            cl += j + 1 - i;
            i = j + 1;
            continue;
        }
        match PUNCTS.iter().find(|p| src[i..].starts_with(*p)) {
            Some(p) => {
                out.push(Spanned {
                    tok: Tok::Punct(p),
                    line: ln,
                    col: start_col,
                });
                i += p.len();
                cl += p.len();
            }
            None => {
                return Err(MachineError::Syntax {
                    line: ln,
                    col: start_col,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Implies,
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    Add,
    Sub,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Implies => "->",
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "=",
            BinOp::Ne => "/=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::In => "in",
            BinOp::Add => "+",
            BinOp::Sub => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quant {
    Forall,
    Exists,
}

/// Source-level expression; names are unresolved.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Bool(bool),
    Int(i64),
    Name(String),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    SetLit(Vec<Expr>),
    Card(Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    /// `m[k := v]`
    Override(Box<Expr>, Box<Expr>, Box<Expr>),
    /// `[k1 |-> v1, ...]`
    MapLit(Vec<(Expr, Expr)>),
    /// `[x in S |-> e]`
    MapComp(String, Box<Expr>, Box<Expr>),
    Quant(Quant, String, Box<Expr>, Box<Expr>),
    /// `if c then a else b`
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    fn is_atomic(&self) -> bool {
        matches!(
            self,
            Expr::Bool(_)
                | Expr::Int(_)
                | Expr::Name(_)
                | Expr::SetLit(_)
                | Expr::Card(_)
                | Expr::Index(..)
                | Expr::Override(..)
                | Expr::MapLit(_)
                | Expr::MapComp(..)
        )
    }
}

fn paren(e: &Expr) -> String {
    if e.is_atomic() {
        e.to_string()
    } else {
        format!("({e})")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Int(i) if *i < 0 => write!(f, "({i})"),
            Expr::Int(i) => write!(f, "{i}"),
            Expr::Name(n) => f.write_str(n),
            Expr::Not(e) => write!(f, "!{}", paren(e)),
            Expr::Neg(e) => write!(f, "-{}", paren(e)),
            Expr::Bin(op, a, b) => write!(f, "{} {} {}", paren(a), op.symbol(), paren(b)),
            Expr::SetLit(items) => {
                let parts: Vec<String> = items.iter().map(|e| e.to_string()).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
            Expr::Card(e) => write!(f, "card({e})"),
            Expr::Index(m, k) => write!(f, "{}[{k}]", paren(m)),
            Expr::Override(m, k, v) => write!(f, "{}[{k} := {v}]", paren(m)),
            Expr::MapLit(items) => {
                let parts: Vec<String> = items.iter().map(|(k, v)| format!("{k} |-> {v}")).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Expr::MapComp(x, s, e) => write!(f, "[{x} in {} |-> {e}]", paren(s)),
            Expr::Ite(c, a, b) => write!(f, "if {c} then {a} else {b}"),
            Expr::Quant(q, x, s, body) => {
                let kw = match q {
                    Quant::Forall => "forall",
                    Quant::Exists => "exists",
                };
                write!(f, "{kw} {x} in {} : {}", paren(s), paren(body))
            }
        }
    }
}

/// Recursive-descent parser over a token slice.
pub struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    /// Position reported when input runs out.
    end: (usize, usize),
}

impl<'a> Parser<'a> {
    pub fn new(toks: &'a [Spanned], end: (usize, usize)) -> Self {
        Parser { toks, pos: 0, end }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    pub fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|s| &s.tok)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.end, |s| (s.line, s.col))
    }

    pub fn err(&self, msg: impl Into<String>) -> MachineError {
        let (line, col) = self.here();
        let found = self
            .peek()
            .map_or_else(|| "end of input".to_string(), |t| format!("`{t}`"));
        MachineError::Syntax {
            line,
            col,
            msg: format!("{}, found {found}", msg.into()),
        }
    }

    pub fn bump(&mut self) -> Option<Tok> {
        let t = self.peek().cloned();
        self.pos += 1;
        t
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    pub fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_punct(&mut self, p: &str) -> Result<(), MachineError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{p}`")))
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> Result<(), MachineError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{kw}`")))
        }
    }

    pub fn ident(&mut self) -> Result<String, MachineError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    pub fn int(&mut self) -> Result<i64, MachineError> {
        let neg = self.eat_punct("-");
        match self.peek() {
            Some(Tok::Int(i)) => {
                let i = *i;
                self.pos += 1;
                Ok(if neg { -i } else { i })
            }
            _ => Err(self.err("expected integer")),
        }
    }

    pub fn finish(&self) -> Result<(), MachineError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing input"))
        }
    }

    pub fn expr(&mut self) -> Result<Expr, MachineError> {
        if self.is_kw("forall") || self.is_kw("exists") {
            let q = if self.eat_kw("forall") {
                Quant::Forall
            } else {
                self.bump();
                Quant::Exists
            };
            let x = self.ident()?;
            self.expect_kw("in")?;
            let set = self.additive()?;
            self.expect_punct(":")?;
            let body = self.expr()?;
            return Ok(Expr::Quant(q, x, Box::new(set), Box::new(body)));
        }
        let lhs = self.or()?;
        if self.eat_punct("->") {
            let rhs = self.expr()?;
            return Ok(Expr::bin(BinOp::Implies, lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr, MachineError> {
        let mut e = self.and()?;
        while self.eat_punct("||") || self.eat_kw("or") {
            let r = self.and()?;
            e = Expr::bin(BinOp::Or, e, r);
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr, MachineError> {
        let mut e = self.not()?;
        while self.eat_punct("&&") || self.eat_kw("and") {
            let r = self.not()?;
            e = Expr::bin(BinOp::And, e, r);
        }
        Ok(e)
    }

    fn not(&mut self) -> Result<Expr, MachineError> {
        if self.eat_punct("!") || self.eat_kw("not") {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        if self.is_kw("forall") || self.is_kw("exists") {
            return self.expr();
        }
        self.comparison()
    }

    pub fn comparison(&mut self) -> Result<Expr, MachineError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Punct("=")) | Some(Tok::Punct("==")) => BinOp::Eq,
            Some(Tok::Punct("/=")) | Some(Tok::Punct("!=")) => BinOp::Ne,
            Some(Tok::Punct("<")) => BinOp::Lt,
            Some(Tok::Punct("<=")) => BinOp::Le,
            Some(Tok::Punct(">")) => BinOp::Gt,
            Some(Tok::Punct(">=")) => BinOp::Ge,
            Some(Tok::Ident(s)) if s == "in" => BinOp::In,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(Expr::bin(op, lhs, rhs))
    }

    pub fn additive(&mut self) -> Result<Expr, MachineError> {
        let mut e = self.unary()?;
        loop {
            let op = if self.eat_punct("+") {
                BinOp::Add
            } else if self.eat_punct("-") {
                BinOp::Sub
            } else {
                return Ok(e);
            };
            let r = self.unary()?;
            e = Expr::bin(op, e, r);
        }
    }

    fn unary(&mut self) -> Result<Expr, MachineError> {
        if self.eat_punct("-") {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Int(i) => Expr::Int(-i),
                other => Expr::Neg(Box::new(other)),
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, MachineError> {
        let mut e = self.primary()?;
        while self.eat_punct("[") {
            let k = self.expr()?;
            if self.eat_punct(":=") {
                let v = self.expr()?;
                self.expect_punct("]")?;
                e = Expr::Override(Box::new(e), Box::new(k), Box::new(v));
            } else {
                self.expect_punct("]")?;
                e = Expr::Index(Box::new(e), Box::new(k));
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, MachineError> {
        match self.peek().cloned() {
            Some(Tok::Int(i)) => {
                self.pos += 1;
                Ok(Expr::Int(i))
            }
            Some(Tok::Ident(s)) if s == "true" => {
                self.pos += 1;
                Ok(Expr::Bool(true))
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.pos += 1;
                Ok(Expr::Bool(false))
            }
            Some(Tok::Ident(s)) if s == "card" => {
                self.pos += 1;
                self.expect_punct("(")?;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(Expr::Card(Box::new(e)))
            }
            Some(Tok::Ident(s)) if s == "if" => {
                self.pos += 1;
                let c = self.expr()?;
                self.expect_kw("then")?;
                let a = self.expr()?;
                self.expect_kw("else")?;
                let b = self.expr()?;
                Ok(Expr::Ite(Box::new(c), Box::new(a), Box::new(b)))
            }
            Some(Tok::Ident(_)) => Ok(Expr::Name(self.ident()?)),
            Some(Tok::Punct("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Some(Tok::Punct("{")) => {
                self.pos += 1;
                let mut items = Vec::new();
                if !self.eat_punct("}") {
                    loop {
                        items.push(self.expr()?);
                        if self.eat_punct("}") {
                            break;
                        }
                        self.expect_punct(",")?;
                    }
                }
                Ok(Expr::SetLit(items))
            }
            Some(Tok::Punct("[")) => {
                self.pos += 1;
                // `[x in S |-> e]` or `[k |-> v, ...]`
                if let (Some(Tok::Ident(x)), Some(Tok::Ident(kw))) = (self.peek(), self.peek_at(1)) {
                    if kw == "in" && !is_reserved(x) {
                        let x = x.clone();
                        self.pos += 2;
                        let s = self.additive()?;
                        self.expect_punct("|->")?;
                        let body = self.expr()?;
                        self.expect_punct("]")?;
                        return Ok(Expr::MapComp(x, Box::new(s), Box::new(body)));
                    }
                }
                let mut items = Vec::new();
                if !self.eat_punct("]") {
                    loop {
                        let k = self.additive()?;
                        self.expect_punct("|->")?;
                        let v = self.expr()?;
                        items.push((k, v));
                        if self.eat_punct("]") {
                            break;
                        }
                        self.expect_punct(",")?;
                    }
                }
                Ok(Expr::MapLit(items))
            }
            _ => Err(self.err("expected expression")),
        }
    }
}

pub fn is_reserved(s: &str) -> bool {
    matches!(
        s,
        "in" | "forall"
            | "exists"
            | "card"
            | "true"
            | "false"
            | "and"
            | "or"
            | "not"
            | "if"
            | "then"
            | "else"
    )
}

/// Parses a complete standalone expression.
pub fn parse_expr(src: &str) -> Result<Expr, MachineError> {
    let toks = lex(src, 1, 1)?;
    let mut p = Parser::new(&toks, (1, src.len() + 1));
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}
