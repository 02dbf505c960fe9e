use std::fmt;

use super::{LtlError, PropDefs};
use crate::machine::syntax::{lex, Parser, Tok};
use crate::machine::Expr;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    /// A named proposition from the definitions file.
    Def(String),
    /// A boolean trace variable.
    Var(String),
    /// An inline comparison over trace variables.
    Cmp(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Bool(bool),
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn def(name: &str) -> Formula {
        Formula::Atom(Atom::Def(name.to_string()))
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Formula {
        Formula::Next(Box::new(f))
    }

    pub fn eventually(f: Formula) -> Formula {
        Formula::Eventually(Box::new(f))
    }

    pub fn always(f: Formula) -> Formula {
        Formula::Always(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Formula {
        Formula::Until(Box::new(a), Box::new(b))
    }

    fn is_atomic(&self) -> bool {
        matches!(self, Formula::Bool(_) | Formula::Atom(_))
    }

    /// Nesting depth; atoms have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Bool(_) | Formula::Atom(_) => 0,
            Formula::Not(a) | Formula::Next(a) | Formula::Eventually(a) | Formula::Always(a) => {
                1 + a.depth()
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Until(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }
}

fn operand(f: &Formula) -> String {
    if f.is_atomic() {
        f.to_string()
    } else {
        format!("({f})")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Bool(b) => write!(f, "{b}"),
            Formula::Atom(Atom::Def(n)) | Formula::Atom(Atom::Var(n)) => f.write_str(n),
            Formula::Atom(Atom::Cmp(e)) => write!(f, "({e})"),
            Formula::Not(a) => write!(f, "!{}", operand(a)),
            Formula::Next(a) => write!(f, "X {}", operand(a)),
            Formula::Eventually(a) => write!(f, "<>{}", operand(a)),
            Formula::Always(a) => write!(f, "[]{}", operand(a)),
            Formula::And(a, b) => write!(f, "{} && {}", operand(a), operand(b)),
            Formula::Or(a, b) => write!(f, "{} || {}", operand(a), operand(b)),
            Formula::Implies(a, b) => write!(f, "{} -> {}", operand(a), operand(b)),
            Formula::Until(a, b) => write!(f, "{} U {}", operand(a), operand(b)),
        }
    }
}

struct FormulaParser<'a, 'd> {
    p: Parser<'a>,
    defs: &'d PropDefs,
}

fn is_temporal_kw(t: Option<&Tok>) -> bool {
    matches!(t, Some(Tok::Ident(s)) if s == "G" || s == "F" || s == "X")
}

impl FormulaParser<'_, '_> {
    fn implies(&mut self) -> Result<Formula, LtlError> {
        let lhs = self.or()?;
        if self.p.eat_punct("->") {
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, LtlError> {
        let mut f = self.and()?;
        while self.p.eat_punct("||") {
            f = Formula::or(f, self.and()?);
        }
        Ok(f)
    }

    fn and(&mut self) -> Result<Formula, LtlError> {
        let mut f = self.until()?;
        while self.p.eat_punct("&&") {
            f = Formula::and(f, self.until()?);
        }
        Ok(f)
    }

    fn until(&mut self) -> Result<Formula, LtlError> {
        let lhs = self.unary()?;
        if self.p.eat_kw("U") {
            let rhs = self.until()?;
            return Ok(Formula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, LtlError> {
        if self.p.eat_punct("!") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.p.is_punct("[") && matches!(self.p.peek_at(1), Some(Tok::Punct("]"))) {
            self.p.bump();
            self.p.bump();
            return Ok(Formula::always(self.unary()?));
        }
        if self.p.is_punct("<") && matches!(self.p.peek_at(1), Some(Tok::Punct(">"))) {
            self.p.bump();
            self.p.bump();
            return Ok(Formula::eventually(self.unary()?));
        }
        if is_temporal_kw(self.p.peek()) && !self.is_comparison_at(1) {
            let Some(Tok::Ident(k)) = self.p.bump() else { unreachable!() };
            let inner = self.unary()?;
            return Ok(match k.as_str() {
                "G" => Formula::always(inner),
                "F" => Formula::eventually(inner),
                _ => Formula::next(inner),
            });
        }
        self.primary()
    }

    fn is_comparison_at(&self, k: usize) -> bool {
        match self.p.peek_at(k) {
            Some(Tok::Punct(p)) => {
                matches!(*p, "=" | "==" | "/=" | "!=" | "<=" | ">=" | ">")
                    || (*p == "<" && !matches!(self.p.peek_at(k + 1), Some(Tok::Punct(">"))))
            }
            None => true,
            Some(Tok::Ident(s)) => s == "in" || s == "U",
            _ => false,
        }
    }

    fn primary(&mut self) -> Result<Formula, LtlError> {
        if self.p.eat_punct("(") {
            let f = self.implies()?;
            self.p.expect_punct(")")?;
            return Ok(f);
        }
        if self.p.eat_kw("true") {
            return Ok(Formula::Bool(true));
        }
        if self.p.eat_kw("false") {
            return Ok(Formula::Bool(false));
        }
        let e = self.p.comparison()?;
        Ok(match e {
            Expr::Name(n) if self.defs.get(&n).is_some() => Formula::Atom(Atom::Def(n)),
            Expr::Name(n) => Formula::Atom(Atom::Var(n)),
            other => Formula::Atom(Atom::Cmp(other)),
        })
    }
}

/// Parses `text`. Bare names resolve to definitions first, then to boolean
/// trace variables. Both `G F X` and `[] <>` spellings are accepted.
pub fn parse_formula(text: &str, defs: &PropDefs) -> Result<Formula, LtlError> {
    let toks = lex(text, 1, 1)?;
    let end = (1, text.chars().count() + 1);
    let mut fp = FormulaParser {
        p: Parser::new(&toks, end),
        defs,
    };
    let f = fp.implies()?;
    fp.p.finish()?;
    Ok(f)
}

/// Right-nested eventually-chain `<>(p1 && (<>(p2 && ... (<>pn))))`.
pub fn trace_to_formula(props: &[String]) -> Result<Formula, LtlError> {
    let (last, rest) = props.split_last().ok_or(LtlError::EmptyList)?;
    let mut f = Formula::eventually(Formula::def(last));
    for p in rest.iter().rev() {
        f = Formula::eventually(Formula::and(Formula::def(p), f));
    }
    Ok(f)
}
