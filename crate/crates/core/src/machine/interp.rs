use thiserror::Error;

use super::eval::{eval, eval_bool, EvalError};
use super::{InitClause, Machine, MachineError, Operation, State, Val};
use crate::trace_model::{OpEvent, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("`{op}` takes {expected} argument(s), got {got}")]
    ArityMismatch {
        op: String,
        expected: usize,
        got: usize,
    },
    #[error("`{op}` expects {expected} output(s), got {got}")]
    OutArityMismatch {
        op: String,
        expected: usize,
        got: usize,
    },
    #[error("argument {index} of `{op}` ({value}) is outside its domain")]
    DomainError {
        op: String,
        index: usize,
        value: String,
    },
    #[error("while evaluating `{op}`: {err}")]
    Eval { op: String, err: EvalError },
}

/// One successor of a step: the post-state and the evaluated outputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Successor {
    pub state: State,
    pub outs: Vec<Val>,
}

/// Full result of applying one event, separating "enabled" from "outputs
/// matched" so callers can tell the two failure modes apart.
#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    /// Distinct successors whose guard held, before output filtering.
    pub enabled: Vec<Successor>,
    /// The subset of `enabled` whose outputs match the event.
    pub matched: Vec<Successor>,
}

/// `(op name, argument values)` of an enabled event.
pub type Binding = (String, Vec<Val>);

const NO_VARS: &[Val] = &[];

/// All states produced by resolving every init `choose`.
pub fn initial_states(m: &Machine) -> Result<Vec<State>, MachineError> {
    let placeholder = Val::Bool(false);
    let mut partial: Vec<Vec<Val>> = vec![vec![placeholder; m.vars.len()]];
    let mut locals = Vec::new();
    for clause in &m.inits {
        match clause {
            InitClause::Assign { var, expr } => {
                let v = eval(&expr.code, NO_VARS, &mut locals)?;
                check_init(m, *var, &v)?;
                for p in &mut partial {
                    p[*var] = v.clone();
                }
            }
            InitClause::Choose { var, set } => {
                let sv = eval(&set.code, NO_VARS, &mut locals)?;
                let items: Vec<Val> = sv.as_set().map(|s| s.iter().cloned().collect()).unwrap_or_default();
                if items.is_empty() {
                    return Err(MachineError::EmptyChoice(m.vars[*var].name.clone()));
                }
                for v in &items {
                    check_init(m, *var, v)?;
                }
                partial = partial
                    .into_iter()
                    .flat_map(|p| {
                        items.iter().map(move |v| {
                            let mut q = p.clone();
                            q[*var] = v.clone();
                            q
                        })
                    })
                    .collect();
            }
        }
    }
    let mut out: Vec<State> = Vec::with_capacity(partial.len());
    for p in partial {
        let s = State(p);
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

fn check_init(m: &Machine, var: usize, v: &Val) -> Result<(), MachineError> {
    if m.vars[var].domain.contains(v) {
        Ok(())
    } else {
        Err(MachineError::InitDomain {
            var: m.vars[var].name.clone(),
            value: v.to_string(),
        })
    }
}

fn resolve_event<'m>(m: &'m Machine, e: &OpEvent) -> Result<(&'m Operation, Vec<Val>), StepError> {
    let op = m
        .op(&e.name)
        .ok_or_else(|| StepError::UnknownOp(e.name.clone()))?;
    if op.params.len() != e.args.len() {
        return Err(StepError::ArityMismatch {
            op: op.name.clone(),
            expected: op.params.len(),
            got: e.args.len(),
        });
    }
    if let Some(outs) = &e.outs {
        if outs.len() != op.outs.len() {
            return Err(StepError::OutArityMismatch {
                op: op.name.clone(),
                expected: op.outs.len(),
                got: outs.len(),
            });
        }
    }
    let mut args = Vec::with_capacity(e.args.len());
    for (i, (a, (_, dom))) in e.args.iter().zip(&op.params).enumerate() {
        let v = Val::from_value(a)
            .filter(|v| dom.contains(v))
            .ok_or_else(|| StepError::DomainError {
                op: op.name.clone(),
                index: i,
                value: a.to_string(),
            })?;
        args.push(v);
    }
    Ok((op, args))
}

/// Enumerates every successor of `op` applied with `args` in `s`.
fn successors(m: &Machine, s: &State, op: &Operation, args: Vec<Val>) -> Result<Vec<Successor>, EvalError> {
    let mut out = Vec::new();
    let mut locals = args;
    expand(m, s, op, 0, &mut locals, &mut out)?;
    Ok(out)
}

fn expand(
    m: &Machine,
    s: &State,
    op: &Operation,
    depth: usize,
    locals: &mut Vec<Val>,
    out: &mut Vec<Successor>,
) -> Result<(), EvalError> {
    let vars = &s.0[..];
    if depth < op.chooses.len() {
        let sv = eval(&op.chooses[depth].1.code, vars, locals)?;
        let items: Vec<Val> = sv.as_set().map(|x| x.iter().cloned().collect()).unwrap_or_default();
        for v in items {
            locals.push(v);
            let r = expand(m, s, op, depth + 1, locals, out);
            locals.pop();
            r?;
        }
        return Ok(());
    }
    for g in &op.guards {
        if !eval_bool(&g.code, vars, locals)? {
            return Ok(());
        }
    }
    // Simultaneous update: every right-hand side sees the pre-state.
    let mut next = s.0.clone();
    for eff in &op.effects {
        next[eff.var] = eval(&eff.code, vars, locals)?;
    }
    let mut outs = Vec::with_capacity(op.out_defs.len());
    for def in &op.out_defs {
        outs.push(eval(&def.code, vars, locals)?);
    }
    // Out-of-domain results disable the branch. Untouched variables keep
    // their in-domain pre-state values.
    let in_domain = op.effects.iter().all(|eff| m.vars[eff.var].domain.contains(&next[eff.var]))
        && op.outs.iter().zip(&outs).all(|((_, d), v)| d.contains(v));
    if !in_domain {
        return Ok(());
    }
    let succ = Successor {
        state: State(next),
        outs,
    };
    if !out.contains(&succ) {
        out.push(succ);
    }
    Ok(())
}

fn outs_match(wanted: &Option<Vec<Value>>, got: &[Val]) -> bool {
    match wanted {
        None => true,
        Some(w) => w
            .iter()
            .zip(got)
            .all(|(w, g)| w.is_wildcard() || Val::from_value(w).as_ref() == Some(g)),
    }
}

/// Applies `e` in `s`, keeping enabled and output-matched successors apart.
pub fn step_outcome(m: &Machine, s: &State, e: &OpEvent) -> Result<StepOutcome, StepError> {
    let (op, args) = resolve_event(m, e)?;
    let enabled = successors(m, s, op, args).map_err(|err| StepError::Eval {
        op: op.name.clone(),
        err,
    })?;
    let matched = enabled
        .iter()
        .filter(|succ| outs_match(&e.outs, &succ.outs))
        .cloned()
        .collect();
    debug_assert!(enabled.iter().all(|succ| m
        .vars
        .iter()
        .zip(&succ.state.0)
        .all(|(d, v)| d.domain.contains(v))));
    Ok(StepOutcome { enabled, matched })
}

/// Successors of `s` under `e` whose outputs match; empty means the event is
/// not possible here.
pub fn step(m: &Machine, s: &State, e: &OpEvent) -> Result<Vec<Successor>, StepError> {
    Ok(step_outcome(m, s, e)?.matched)
}

/// Ids of violated invariant clauses, in declaration order.
pub fn check_invariants(m: &Machine, s: &State) -> Vec<String> {
    let mut locals = Vec::new();
    m.invariants
        .iter()
        .filter(|inv| !matches!(eval_bool(&inv.pred.code, &s.0[..], &mut locals), Ok(true)))
        .map(|inv| inv.id.clone())
        .collect()
}

/// Indices of the invariant clauses that read a variable `op` assigns. In a
/// successor of a state satisfying every clause, only these can fail.
pub fn invariants_at_risk(m: &Machine, op: &Operation) -> Vec<usize> {
    let mut written = vec![false; m.vars.len()];
    for eff in &op.effects {
        written[eff.var] = true;
    }
    m.invariants
        .iter()
        .enumerate()
        .filter(|(_, inv)| {
            let mut read = vec![false; m.vars.len()];
            inv.pred.code.mark_vars(&mut read);
            read.iter().zip(&written).any(|(r, w)| *r && *w)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Ids of violated clauses among `which`, in the order given.
pub fn check_invariant_subset(m: &Machine, s: &State, which: &[usize]) -> Vec<String> {
    let mut locals = Vec::new();
    which
        .iter()
        .map(|&i| &m.invariants[i])
        .filter(|inv| !matches!(eval_bool(&inv.pred.code, &s.0[..], &mut locals), Ok(true)))
        .map(|inv| inv.id.clone())
        .collect()
}

fn cartesian(domains: &[Vec<Val>]) -> Vec<Vec<Val>> {
    let mut out = vec![Vec::new()];
    for d in domains {
        let mut next = Vec::with_capacity(out.len() * d.len());
        for p in &out {
            for v in d {
                let mut q = p.clone();
                q.push(v.clone());
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Every `(op, args)` binding with at least one successor in `s`.
pub fn enabled_events(m: &Machine, s: &State) -> Vec<Binding> {
    let mut out = Vec::new();
    for op in &m.ops {
        let domains: Vec<Vec<Val>> = op.params.iter().map(|(_, d)| d.values()).collect();
        for args in cartesian(&domains) {
            if matches!(successors(m, s, op, args.clone()), Ok(v) if !v.is_empty()) {
                out.push((op.name.clone(), args));
            }
        }
    }
    out
}

/// All successors of `s` over every op and argument binding, paired with the
/// concrete event that produces them.
pub(crate) fn all_successors(m: &Machine, s: &State) -> Result<Vec<(OpEvent, State)>, StepError> {
    let mut out = Vec::new();
    for op in &m.ops {
        let domains: Vec<Vec<Val>> = op.params.iter().map(|(_, d)| d.values()).collect();
        for args in cartesian(&domains) {
            let succs = successors(m, s, op, args.clone()).map_err(|err| StepError::Eval {
                op: op.name.clone(),
                err,
            })?;
            for succ in succs {
                let mut ev = OpEvent::new(
                    op.name.clone(),
                    args.iter().filter_map(Val::to_value).collect(),
                );
                if !op.outs.is_empty() {
                    ev.outs = Some(succ.outs.iter().filter_map(Val::to_value).collect());
                }
                out.push((ev, succ.state));
            }
        }
    }
    Ok(out)
}
