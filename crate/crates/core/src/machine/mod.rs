//! A small guarded-command abstract-machine notation: finite-domain state
//! variables, nondeterministic initialisation and operations, and named
//! invariant clauses.
//!
//! ```text
//! machine Flip
//! var x : bool
//! init x := false
//! invariant sane : x = x
//! op flip
//!   eff x := !x
//! end
//! ```

mod compile;
pub(crate) mod eval;
mod interp;
mod render;
pub mod syntax;
mod val;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use compile::parse_machine;
pub use eval::EvalError;
pub use interp::{
    check_invariant_subset, check_invariants, enabled_events, initial_states, invariants_at_risk,
    step, step_outcome, Binding, StepError, StepOutcome, Successor,
};
pub use render::render_machine;
pub use syntax::{parse_expr, BinOp, Expr, Quant};
pub use val::{natural_cmp, Val};

pub(crate) use eval::CExpr;
pub(crate) use compile::Scope;
pub(crate) use interp::all_successors;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("type error at line {line} in `{expr}`: expected {expected}, found {actual}")]
    Type {
        line: usize,
        expr: String,
        expected: String,
        actual: String,
    },
    #[error("unbound symbol `{name}` at line {line}")]
    UnboundSymbol { name: String, line: usize },
    #[error("variable `{0}` is initialised more than once")]
    DuplicateInit(String),
    #[error("variable `{0}` has no init clause")]
    MissingInit(String),
    #[error("duplicate declaration of `{name}` at line {line}")]
    DuplicateDecl { name: String, line: usize },
    #[error("operation `{op}` assigns `{var}` more than once")]
    DuplicateAssign { op: String, var: String },
    #[error("bad domain at line {line}: {msg}")]
    BadDomain { line: usize, msg: String },
    #[error("init choice for `{0}` is empty")]
    EmptyChoice(String),
    #[error("init value for `{var}` is outside its domain: {value}")]
    InitDomain { var: String, value: String },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Coarse static type used by the checker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Type {
    Bool,
    Int,
    Sym,
    Set(Box<Type>),
    Map(Box<Type>, Box<Type>),
    /// Unknown; compatible with everything. Used for the empty set's
    /// element type and for dynamically typed trace variables.
    Any,
}

impl Type {
    pub fn compatible(&self, other: &Type) -> bool {
        match (self, other) {
            (Type::Any, _) | (_, Type::Any) => true,
            (Type::Set(a), Type::Set(b)) => a.compatible(b),
            (Type::Map(k1, v1), Type::Map(k2, v2)) => k1.compatible(k2) && v1.compatible(v2),
            (a, b) => a == b,
        }
    }

    /// The more specific of two compatible types.
    pub fn join(&self, other: &Type) -> Type {
        match (self, other) {
            (Type::Any, t) | (t, Type::Any) => t.clone(),
            (Type::Set(a), Type::Set(b)) => Type::Set(Box::new(a.join(b))),
            (Type::Map(k1, v1), Type::Map(k2, v2)) => {
                Type::Map(Box::new(k1.join(k2)), Box::new(v1.join(v2)))
            }
            (a, _) => a.clone(),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Bool => f.write_str("bool"),
            Type::Int => f.write_str("int"),
            Type::Sym => f.write_str("symbol"),
            Type::Set(t) => write!(f, "set of {t}"),
            Type::Map(k, v) => write!(f, "map {k} -> {v}"),
            Type::Any => f.write_str("any"),
        }
    }
}

/// A finite value domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Domain {
    Bool,
    Range(i64, i64),
    /// Named (declared with `enum`) or inline enumeration.
    Enum {
        name: Option<String>,
        items: Vec<Arc<str>>,
    },
    SetOf(Box<Domain>),
    Map(Box<Domain>, Box<Domain>),
}

impl Domain {
    pub fn ty(&self) -> Type {
        match self {
            Domain::Bool => Type::Bool,
            Domain::Range(..) => Type::Int,
            Domain::Enum { .. } => Type::Sym,
            Domain::SetOf(d) => Type::Set(Box::new(d.ty())),
            Domain::Map(k, v) => Type::Map(Box::new(k.ty()), Box::new(v.ty())),
        }
    }

    pub fn contains(&self, v: &Val) -> bool {
        match (self, v) {
            (Domain::Bool, Val::Bool(_)) => true,
            (Domain::Range(lo, hi), Val::Int(i)) => lo <= i && i <= hi,
            (Domain::Enum { items, .. }, Val::Sym(s)) => items.iter().any(|it| it == s),
            (Domain::SetOf(d), Val::Set(s)) => s.iter().all(|x| d.contains(x)),
            // Distinct in-domain keys, as many as the key domain has: every
            // key is present.
            (Domain::Map(k, d), Val::Map(m)) => {
                m.len() as u128 == k.size() && m.iter().all(|(key, x)| k.contains(key) && d.contains(x))
            }
            _ => false,
        }
    }

    /// Number of values, saturating.
    pub fn size(&self) -> u128 {
        match self {
            Domain::Bool => 2,
            Domain::Range(lo, hi) => (hi - lo + 1) as u128,
            Domain::Enum { items, .. } => items.len() as u128,
            Domain::SetOf(d) => {
                let n = d.size();
                if n >= 127 {
                    u128::MAX
                } else {
                    1u128 << n
                }
            }
            Domain::Map(k, v) => {
                let base = v.size();
                let mut acc: u128 = 1;
                for _ in 0..k.size() {
                    acc = acc.saturating_mul(base);
                }
                acc
            }
        }
    }

    /// All values in the domain, in canonical order. Only sensible for
    /// small domains.
    pub fn values(&self) -> Vec<Val> {
        match self {
            Domain::Bool => vec![Val::Bool(false), Val::Bool(true)],
            Domain::Range(lo, hi) => (*lo..=*hi).map(Val::Int).collect(),
            Domain::Enum { items, .. } => items.iter().map(|s| Val::Sym(s.clone())).collect(),
            Domain::SetOf(d) => {
                let elems = d.values();
                let mut out = Vec::with_capacity(1 << elems.len().min(20));
                for mask in 0u64..(1u64 << elems.len().min(20)) {
                    out.push(Val::set(
                        elems
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| mask & (1 << i) != 0)
                            .map(|(_, v)| v.clone()),
                    ));
                }
                out
            }
            Domain::Map(k, v) => {
                let keys = k.values();
                let vals = v.values();
                let mut out = vec![Vec::new()];
                for key in &keys {
                    let mut next = Vec::with_capacity(out.len() * vals.len());
                    for partial in &out {
                        for val in &vals {
                            let mut p: Vec<(Val, Val)> = partial.clone();
                            p.push((key.clone(), val.clone()));
                            next.push(p);
                        }
                    }
                    out = next;
                }
                out.into_iter().map(Val::map).collect()
            }
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Bool => f.write_str("bool"),
            Domain::Range(lo, hi) => write!(f, "{lo}..{hi}"),
            Domain::Enum { name: Some(n), .. } => f.write_str(n),
            Domain::Enum { name: None, items } => {
                let parts: Vec<&str> = items.iter().map(|s| &**s).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
            Domain::SetOf(d) => write!(f, "set {d}"),
            Domain::Map(k, v) => write!(f, "map {k} -> {v}"),
        }
    }
}

/// Source expression paired with its compiled form.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub src: Expr,
    pub(crate) code: CExpr,
}

#[derive(Debug, Clone)]
pub struct VarDecl {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone)]
pub enum InitClause {
    Assign { var: usize, expr: Compiled },
    Choose { var: usize, set: Compiled },
}

#[derive(Debug, Clone)]
pub struct Effect {
    pub var: usize,
    /// `eff m[k] := v` keeps the key; the compiled value is the whole map.
    pub key: Option<Expr>,
    pub value: Expr,
    pub(crate) code: CExpr,
}

#[derive(Debug, Clone)]
pub struct Operation {
    pub name: String,
    pub params: Vec<(String, Domain)>,
    pub outs: Vec<(String, Domain)>,
    pub chooses: Vec<(String, Compiled)>,
    /// Conjuncts of the guard, one per `pre` line.
    pub guards: Vec<Compiled>,
    pub effects: Vec<Effect>,
    /// Output definitions, aligned with `outs`.
    pub out_defs: Vec<Compiled>,
}

#[derive(Debug, Clone)]
pub struct Invariant {
    pub id: String,
    pub pred: Compiled,
    /// Source text of the clause as written in the machine file.
    pub text: String,
}

/// A parsed, type-checked machine. Immutable after parsing.
#[derive(Debug, Clone)]
pub struct Machine {
    pub name: String,
    pub enums: Vec<(String, Vec<Arc<str>>)>,
    pub vars: Vec<VarDecl>,
    pub inits: Vec<InitClause>,
    pub ops: Vec<Operation>,
    pub invariants: Vec<Invariant>,
}

impl Machine {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn op(&self, name: &str) -> Option<&Operation> {
        self.ops.iter().find(|o| o.name == name)
    }

    pub fn invariant(&self, id: &str) -> Option<&Invariant> {
        self.invariants.iter().find(|i| i.id == id)
    }

    /// Product of all variable domain sizes, saturating.
    pub fn state_space_size(&self) -> u128 {
        self.vars
            .iter()
            .fold(1u128, |acc, v| acc.saturating_mul(v.domain.size()))
    }

    pub fn is_deterministic(&self) -> bool {
        self.ops.iter().all(|o| o.chooses.is_empty())
            && self.inits.iter().all(|i| matches!(i, InitClause::Assign { .. }))
    }

    /// Compiles a predicate over this machine's variables (and enum
    /// constants), e.g. a witness-search milestone.
    pub fn compile_predicate(&self, e: &Expr) -> Result<Compiled, MachineError> {
        compile::compile_state_predicate(self, e)
    }

    pub fn render_state(&self, s: &State) -> String {
        self.vars
            .iter()
            .zip(&s.0)
            .map(|(d, v)| format!("{}={}", d.name, v))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// A total assignment of the machine's variables, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(pub Vec<Val>);

impl State {
    pub fn get(&self, m: &Machine, var: &str) -> Option<&Val> {
        m.var_index(var).map(|i| &self.0[i])
    }
}

#[cfg(test)]
mod tests;
