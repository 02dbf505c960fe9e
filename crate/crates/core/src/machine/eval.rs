use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::syntax::{BinOp, Quant};
use super::Val;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("`{op}` cannot be applied to {found}")]
    Type { op: &'static str, found: String },
    #[error("key {0} not in map")]
    MissingKey(String),
    #[error("variable #{0} is unbound")]
    Unbound(usize),
    #[error("integer overflow")]
    Overflow,
}

/// Expression with names resolved to variable slots, local slots, or
/// literals.
#[derive(Debug, Clone, PartialEq)]
pub enum CExpr {
    Lit(Val),
    Var(usize),
    /// Index into the local stack: parameters, choices, then binders.
    Local(usize),
    Not(Box<CExpr>),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    SetLit(Vec<CExpr>),
    Card(Box<CExpr>),
    Index(Box<CExpr>, Box<CExpr>),
    Override(Box<CExpr>, Box<CExpr>, Box<CExpr>),
    MapLit(Vec<(CExpr, CExpr)>),
    /// Binds one local while evaluating the body for each set element.
    MapComp(Box<CExpr>, Box<CExpr>),
    Quant(Quant, Box<CExpr>, Box<CExpr>),
    Ite(Box<CExpr>, Box<CExpr>, Box<CExpr>),
}

impl CExpr {
    /// Marks every state variable slot the expression reads.
    pub(crate) fn mark_vars(&self, out: &mut [bool]) {
        match self {
            CExpr::Lit(_) | CExpr::Local(_) => {}
            CExpr::Var(i) => {
                if let Some(slot) = out.get_mut(*i) {
                    *slot = true;
                }
            }
            CExpr::Not(a) | CExpr::Neg(a) | CExpr::Card(a) => a.mark_vars(out),
            CExpr::Bin(_, a, b) | CExpr::Index(a, b) | CExpr::MapComp(a, b) | CExpr::Quant(_, a, b) => {
                a.mark_vars(out);
                b.mark_vars(out);
            }
            CExpr::Override(a, b, c) | CExpr::Ite(a, b, c) => {
                a.mark_vars(out);
                b.mark_vars(out);
                c.mark_vars(out);
            }
            CExpr::SetLit(items) => items.iter().for_each(|x| x.mark_vars(out)),
            CExpr::MapLit(items) => {
                for (k, v) in items {
                    k.mark_vars(out);
                    v.mark_vars(out);
                }
            }
        }
    }
}

/// Where variable slots are read from.
pub trait VarSource {
    fn var(&self, i: usize) -> Option<&Val>;
}

impl VarSource for [Val] {
    fn var(&self, i: usize) -> Option<&Val> {
        self.get(i)
    }
}

impl VarSource for [Option<Val>] {
    fn var(&self, i: usize) -> Option<&Val> {
        self.get(i).and_then(Option::as_ref)
    }
}

fn type_err(op: &'static str, v: &Val) -> EvalError {
    EvalError::Type {
        op,
        found: v.to_string(),
    }
}

fn want_bool(op: &'static str, v: Val) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| type_err(op, &v))
}

pub fn eval_bool<V: VarSource + ?Sized>(
    e: &CExpr,
    vars: &V,
    locals: &mut Vec<Val>,
) -> Result<bool, EvalError> {
    let v = eval(e, vars, locals)?;
    want_bool("condition", v)
}

/// Like [`eval`], but borrows variables, literals and map entries of
/// variables instead of cloning them.
fn eval_cow<'a, V: VarSource + ?Sized>(
    e: &'a CExpr,
    vars: &'a V,
    locals: &mut Vec<Val>,
) -> Result<Cow<'a, Val>, EvalError> {
    Ok(match e {
        CExpr::Lit(v) => Cow::Borrowed(v),
        CExpr::Var(i) => Cow::Borrowed(vars.var(*i).ok_or(EvalError::Unbound(*i))?),
        CExpr::Index(m, k) => {
            let mv = eval_cow(m, vars, locals)?;
            let kv = eval_cow(k, vars, locals)?;
            let missing = || EvalError::MissingKey(kv.to_string());
            match mv {
                Cow::Borrowed(mv) => {
                    let map = mv.as_map().ok_or_else(|| type_err("[]", mv))?;
                    Cow::Borrowed(map.get(&*kv).ok_or_else(missing)?)
                }
                Cow::Owned(mv) => {
                    let map = mv.as_map().ok_or_else(|| type_err("[]", &mv))?;
                    Cow::Owned(map.get(&*kv).cloned().ok_or_else(missing)?)
                }
            }
        }
        _ => Cow::Owned(eval(e, vars, locals)?),
    })
}

pub fn eval<V: VarSource + ?Sized>(
    e: &CExpr,
    vars: &V,
    locals: &mut Vec<Val>,
) -> Result<Val, EvalError> {
    Ok(match e {
        CExpr::Lit(v) => v.clone(),
        CExpr::Var(i) => vars.var(*i).cloned().ok_or(EvalError::Unbound(*i))?,
        CExpr::Local(i) => locals[*i].clone(),
        CExpr::Not(a) => Val::Bool(!want_bool("!", eval(a, vars, locals)?)?),
        CExpr::Neg(a) => {
            let v = eval(a, vars, locals)?;
            let i = v.as_int().ok_or_else(|| type_err("-", &v))?;
            Val::Int(i.checked_neg().ok_or(EvalError::Overflow)?)
        }
        CExpr::Bin(op, a, b) => return eval_bin(*op, a, b, vars, locals),
        CExpr::SetLit(items) => {
            let mut s = BTreeSet::new();
            for it in items {
                s.insert(eval(it, vars, locals)?);
            }
            Val::Set(Arc::new(s))
        }
        CExpr::Card(a) => {
            let v = eval(a, vars, locals)?;
            let s = v.as_set().ok_or_else(|| type_err("card", &v))?;
            Val::Int(s.len() as i64)
        }
        CExpr::Index(..) => eval_cow(e, vars, locals)?.into_owned(),
        CExpr::Override(m, k, v) => {
            let mv = eval(m, vars, locals)?;
            let kv = eval(k, vars, locals)?;
            let vv = eval(v, vars, locals)?;
            let map = mv.as_map().ok_or_else(|| type_err("[:=]", &mv))?;
            if !map.contains_key(&kv) {
                return Err(EvalError::MissingKey(kv.to_string()));
            }
            let mut map = map.clone();
            map.insert(kv, vv);
            Val::Map(Arc::new(map))
        }
        CExpr::MapLit(items) => {
            let mut m = BTreeMap::new();
            for (k, v) in items {
                let kv = eval(k, vars, locals)?;
                let vv = eval(v, vars, locals)?;
                m.insert(kv, vv);
            }
            Val::Map(Arc::new(m))
        }
        CExpr::MapComp(set, body) => {
            let sv = eval(set, vars, locals)?;
            let s = sv.as_set().ok_or_else(|| type_err("[in |->]", &sv))?;
            let mut m = BTreeMap::new();
            for x in s.iter() {
                locals.push(x.clone());
                let r = eval(body, vars, locals);
                locals.pop();
                m.insert(x.clone(), r?);
            }
            Val::Map(Arc::new(m))
        }
        CExpr::Ite(c, a, b) => {
            if eval_bool(c, vars, locals)? {
                eval(a, vars, locals)?
            } else {
                eval(b, vars, locals)?
            }
        }
        CExpr::Quant(q, set, body) => {
            let sv = eval(set, vars, locals)?;
            let s = sv.as_set().ok_or_else(|| type_err("quantifier", &sv))?;
            let want = matches!(q, Quant::Exists);
            for x in s.iter() {
                locals.push(x.clone());
                let r = eval_bool(body, vars, locals);
                locals.pop();
                if r? == want {
                    return Ok(Val::Bool(want));
                }
            }
            Val::Bool(!want)
        }
    })
}

fn eval_bin<V: VarSource + ?Sized>(
    op: BinOp,
    a: &CExpr,
    b: &CExpr,
    vars: &V,
    locals: &mut Vec<Val>,
) -> Result<Val, EvalError> {
    // Short-circuit connectives first.
    match op {
        BinOp::And => {
            let l = want_bool("&&", eval(a, vars, locals)?)?;
            return Ok(Val::Bool(l && want_bool("&&", eval(b, vars, locals)?)?));
        }
        BinOp::Or => {
            let l = want_bool("||", eval(a, vars, locals)?)?;
            return Ok(Val::Bool(l || want_bool("||", eval(b, vars, locals)?)?));
        }
        BinOp::Implies => {
            let l = want_bool("->", eval(a, vars, locals)?)?;
            return Ok(Val::Bool(!l || want_bool("->", eval(b, vars, locals)?)?));
        }
        _ => {}
    }
    let l = eval_cow(a, vars, locals)?;
    let r = eval_cow(b, vars, locals)?;
    Ok(match op {
        BinOp::Eq => Val::Bool(l == r),
        BinOp::Ne => Val::Bool(l != r),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let comparable = matches!(
                (&*l, &*r),
                (Val::Int(_), Val::Int(_)) | (Val::Sym(_), Val::Sym(_))
            );
            if !comparable {
                return Err(type_err(op.symbol(), &l));
            }
            let ord = l.as_ref().cmp(r.as_ref());
            Val::Bool(match op {
                BinOp::Lt => ord.is_lt(),
                BinOp::Le => ord.is_le(),
                BinOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            })
        }
        BinOp::In => {
            let s = r.as_set().ok_or_else(|| type_err("in", &r))?;
            Val::Bool(s.contains(&l))
        }
        BinOp::Add | BinOp::Sub => match (&*l, &*r) {
            (Val::Int(x), Val::Int(y)) => {
                let v = if op == BinOp::Add {
                    x.checked_add(*y)
                } else {
                    x.checked_sub(*y)
                };
                Val::Int(v.ok_or(EvalError::Overflow)?)
            }
            (Val::Set(x), Val::Set(y)) => {
                let s: BTreeSet<Val> = if op == BinOp::Add {
                    x.union(y).cloned().collect()
                } else {
                    x.difference(y).cloned().collect()
                };
                Val::Set(Arc::new(s))
            }
            _ => return Err(type_err(op.symbol(), &l)),
        },
        BinOp::And | BinOp::Or | BinOp::Implies => unreachable!("handled above"),
    })
}
