use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::trace_model::Value;

/// A concrete machine value. Sets and maps are reference counted so states
/// clone cheaply.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Val {
    Bool(bool),
    Int(i64),
    Sym(Arc<str>),
    Set(Arc<BTreeSet<Val>>),
    Map(Arc<BTreeMap<Val, Val>>),
}

impl Val {
    pub fn sym(s: &str) -> Val {
        Val::Sym(Arc::from(s))
    }

    pub fn set(items: impl IntoIterator<Item = Val>) -> Val {
        Val::Set(Arc::new(items.into_iter().collect()))
    }

    pub fn map(items: impl IntoIterator<Item = (Val, Val)>) -> Val {
        Val::Map(Arc::new(items.into_iter().collect()))
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Val::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Val::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_set(&self) -> Option<&BTreeSet<Val>> {
        match self {
            Val::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&BTreeMap<Val, Val>> {
        match self {
            Val::Map(m) => Some(m),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Val::Bool(_) => 0,
            Val::Int(_) => 1,
            Val::Sym(_) => 2,
            Val::Set(_) => 3,
            Val::Map(_) => 4,
        }
    }

    /// Converts a trace value. Wildcards have no machine counterpart.
    pub fn from_value(v: &Value) -> Option<Val> {
        Some(match v {
            Value::Int(i) => Val::Int(*i),
            Value::Bool(b) => Val::Bool(*b),
            Value::Symbol(s) => Val::sym(s),
            Value::Wildcard => return None,
        })
    }

    /// Scalars convert back to trace values; sets and maps do not.
    pub fn to_value(&self) -> Option<Value> {
        Some(match self {
            Val::Int(i) => Value::Int(*i),
            Val::Bool(b) => Value::Bool(*b),
            Val::Sym(s) => Value::Symbol(s.to_string()),
            _ => return None,
        })
    }
}

/// Natural ordering of symbols: alphabetic runs compare as text, digit runs
/// numerically, so `ss2 < ss10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut x, mut y) = (a.as_bytes(), b.as_bytes());
    loop {
        match (x.first(), y.first()) {
            (None, None) => return a.cmp(b),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(c), Some(d)) if c.is_ascii_digit() && d.is_ascii_digit() => {
                let nx = x.iter().take_while(|c| c.is_ascii_digit()).count();
                let ny = y.iter().take_while(|c| c.is_ascii_digit()).count();
                let (dx, dy) = (trim_zeros(&x[..nx]), trim_zeros(&y[..ny]));
                let ord = dx.len().cmp(&dy.len()).then_with(|| dx.cmp(dy));
                if ord != Ordering::Equal {
                    return ord;
                }
                x = &x[nx..];
                y = &y[ny..];
            }
            (Some(c), Some(d)) => {
                if c != d {
                    return c.cmp(d);
                }
                x = &x[1..];
                y = &y[1..];
            }
        }
    }
}

fn trim_zeros(d: &[u8]) -> &[u8] {
    let n = d.iter().take_while(|&&c| c == b'0').count();
    &d[n..]
}

impl Ord for Val {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Val::Bool(a), Val::Bool(b)) => a.cmp(b),
            (Val::Int(a), Val::Int(b)) => a.cmp(b),
            (Val::Sym(a), Val::Sym(b)) => natural_cmp(a, b),
            (Val::Set(a), Val::Set(b)) => a.iter().cmp(b.iter()),
            (Val::Map(a), Val::Map(b)) => a.iter().cmp(b.iter()),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Val {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Val::Bool(b) => write!(f, "{b}"),
            Val::Int(i) => write!(f, "{i}"),
            Val::Sym(s) => f.write_str(s),
            Val::Set(s) => {
                f.write_str("{")?;
                for (i, v) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
            Val::Map(m) => {
                f.write_str("[")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k} |-> {v}")?;
                }
                f.write_str("]")
            }
        }
    }
}
