use super::{Atom, Formula, LtlError, PropDefs, StateTrace};
use crate::machine::eval::{eval_bool, EvalError};
use crate::machine::{CExpr, Expr, Scope, Type, Val};

struct Table {
    vars: Vec<String>,
    rows: Vec<Vec<Option<Val>>>,
}

impl Table {
    fn new(t: &StateTrace) -> Table {
        let (vars, rows) = t.resolved();
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.and_then(|v| Val::from_value(&v))).collect())
            .collect();
        Table { vars, rows }
    }

    fn compile(&self, e: &Expr) -> Result<CExpr, LtlError> {
        let lookup = |n: &str| {
            self.vars
                .iter()
                .position(|v| v == n)
                .map(|i| (CExpr::Var(i), Type::Any))
        };
        let mut scope = Scope {
            lookup: &lookup,
            unknown_as_symbol: true,
            locals: Vec::new(),
            line: 1,
        };
        let (code, ty) = scope.compile(e)?;
        if !ty.compatible(&Type::Bool) {
            return Err(LtlError::Eval {
                block: 0,
                msg: format!("`{e}` is not a condition"),
            });
        }
        Ok(code)
    }

    fn truth(&self, code: &CExpr) -> Result<Vec<bool>, LtlError> {
        let mut locals = Vec::new();
        self.rows
            .iter()
            .enumerate()
            .map(|(block, row)| {
                eval_bool(code, &row[..], &mut locals).map_err(|err| match err {
                    EvalError::Unbound(i) => LtlError::UnboundVariable {
                        name: self.vars[i].clone(),
                        block,
                    },
                    other => LtlError::Eval {
                        block,
                        msg: other.to_string(),
                    },
                })
            })
            .collect()
    }

    fn atom(&self, a: &Atom, defs: &PropDefs) -> Result<Vec<bool>, LtlError> {
        let code = match a {
            Atom::Def(n) | Atom::Var(n) => match defs.get(n) {
                Some(e) => self.compile(e)?,
                None => CExpr::Var(
                    self.vars
                        .iter()
                        .position(|v| v == n)
                        .ok_or_else(|| LtlError::UnknownAtom(n.clone()))?,
                ),
            },
            Atom::Cmp(e) => self.compile(e)?,
        };
        self.truth(&code)
    }
}

fn positions(f: &Formula, t: &Table, defs: &PropDefs) -> Result<Vec<bool>, LtlError> {
    let n = t.rows.len();
    Ok(match f {
        Formula::Bool(b) => vec![*b; n],
        Formula::Atom(a) => t.atom(a, defs)?,
        Formula::Not(a) => positions(a, t, defs)?.into_iter().map(|x| !x).collect(),
        Formula::And(a, b) => zip(positions(a, t, defs)?, positions(b, t, defs)?, |x, y| x && y),
        Formula::Or(a, b) => zip(positions(a, t, defs)?, positions(b, t, defs)?, |x, y| x || y),
        Formula::Implies(a, b) => zip(positions(a, t, defs)?, positions(b, t, defs)?, |x, y| !x || y),
        Formula::Next(a) => {
            let v = positions(a, t, defs)?;
            (0..n).map(|i| i + 1 < n && v[i + 1]).collect()
        }
        Formula::Eventually(a) => {
            let mut v = positions(a, t, defs)?;
            for i in (0..n.saturating_sub(1)).rev() {
                v[i] = v[i] || v[i + 1];
            }
            v
        }
        Formula::Always(a) => {
            let mut v = positions(a, t, defs)?;
            for i in (0..n.saturating_sub(1)).rev() {
                v[i] = v[i] && v[i + 1];
            }
            v
        }
        Formula::Until(a, b) => {
            let l = positions(a, t, defs)?;
            let mut v = positions(b, t, defs)?;
            for i in (0..n.saturating_sub(1)).rev() {
                v[i] = v[i] || (l[i] && v[i + 1]);
            }
            v
        }
    })
}

fn zip(a: Vec<bool>, b: Vec<bool>, f: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

/// Truth value of `f` at every position of `t`, computed bottom-up.
pub fn eval_positions(f: &Formula, t: &StateTrace, defs: &PropDefs) -> Result<Vec<bool>, LtlError> {
    if t.is_empty() {
        return Err(LtlError::EmptyTrace);
    }
    positions(f, &Table::new(t), defs)
}

/// Truth of `f` at the first position of `t`.
pub fn eval_finite(f: &Formula, t: &StateTrace, defs: &PropDefs) -> Result<bool, LtlError> {
    Ok(eval_positions(f, t, defs)?[0])
}
