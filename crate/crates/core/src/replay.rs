//! Replays an operation trace through a machine, resolving nondeterminism by
//! exhaustive search and checking every invariant clause along the way.
//!
//! The search walks the trace one step at a time and keeps the set of states
//! reachable on invariant-clean branches. A state that was already reached at
//! a given step is never expanded twice, so the work is bounded by
//! `|states| * |trace|`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write;

use rustc_hash::FxHashSet;
use thiserror::Error;

use crate::machine::{
    check_invariant_subset, check_invariants, enabled_events, initial_states, invariants_at_risk,
    step_outcome, Binding, Machine, MachineError, State, StepError,
};
use crate::trace_model::{OpEvent, OpTrace};

pub const DEFAULT_MAX_EXPANSIONS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayOptions {
    /// Upper bound on (state, step) expansions before giving up.
    pub max_expansions: u64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            max_expansions: DEFAULT_MAX_EXPANSIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailReason {
    NotEnabled,
    OutputMismatch,
    InvariantViolated { clauses: Vec<String> },
    UnknownOp,
}

impl FailReason {
    pub fn label(&self) -> &'static str {
        match self {
            FailReason::NotEnabled => "not-enabled",
            FailReason::OutputMismatch => "output-mismatch",
            FailReason::InvariantViolated { .. } => "invariant-violated",
            FailReason::UnknownOp => "unknown-op",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnosis {
    /// States surviving after the step before the failing one.
    pub frontier: Vec<State>,
    /// Enabled bindings, aligned with `frontier`.
    pub enabled_here: Vec<Vec<Binding>>,
    /// The event that could not be taken; `None` when the initial states
    /// themselves are rejected on an empty trace.
    pub attempted: Option<OpEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass {
        final_states: Vec<State>,
    },
    Fail {
        index: usize,
        reason: FailReason,
        diagnosis: Diagnosis,
    },
    Inconclusive {
        expansions: u64,
    },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass { .. })
    }

    pub fn fail_index(&self) -> Option<usize> {
        match self {
            Verdict::Fail { index, .. } => Some(*index),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("trace is for machine `{found}`, not `{expected}`")]
    MachineNameMismatch { expected: String, found: String },
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("step {index}: {err}")]
    Step { index: usize, err: StepError },
}

/// Collects distinct states in first-seen order.
#[derive(Default)]
struct Layer {
    seen: FxHashSet<State>,
    states: Vec<State>,
}

impl Layer {
    fn push(&mut self, s: State) {
        if self.seen.insert(s.clone()) {
            self.states.push(s);
        }
    }
}

fn diagnose(m: &Machine, frontier: Vec<State>, attempted: Option<OpEvent>) -> Diagnosis {
    let enabled_here = frontier.iter().map(|s| enabled_events(m, s)).collect();
    Diagnosis {
        frontier,
        enabled_here,
        attempted,
    }
}

/// Clause ids in machine declaration order.
fn ordered_clauses(m: &Machine, hit: &HashSet<String>) -> Vec<String> {
    m.invariants
        .iter()
        .filter(|i| hit.contains(&i.id))
        .map(|i| i.id.clone())
        .collect()
}

/// Decides whether `t` is a run of `m`.
pub fn replay(m: &Machine, t: &OpTrace, opts: &ReplayOptions) -> Result<Verdict, ReplayError> {
    if let Some(name) = &t.machine_name {
        if name != &m.name {
            return Err(ReplayError::MachineNameMismatch {
                expected: m.name.clone(),
                found: name.clone(),
            });
        }
    }
    // Frontier states satisfy every clause, so a successor only needs the
    // clauses reading a variable the operation writes.
    let at_risk: HashMap<&str, Vec<usize>> = m
        .ops
        .iter()
        .map(|op| (op.name.as_str(), invariants_at_risk(m, op)))
        .collect();
    let mut expansions: u64 = 0;
    let mut layer = Layer::default();
    let mut violated = HashSet::new();
    for s in initial_states(m)? {
        let bad = check_invariants(m, &s);
        if bad.is_empty() {
            layer.push(s);
        } else {
            violated.extend(bad);
        }
    }
    if layer.states.is_empty() {
        return Ok(Verdict::Fail {
            index: 0,
            reason: FailReason::InvariantViolated {
                clauses: ordered_clauses(m, &violated),
            },
            diagnosis: diagnose(m, Vec::new(), t.steps.first().cloned()),
        });
    }

    for (index, e) in t.steps.iter().enumerate() {
        let mut next = Layer::default();
        let mut any_enabled = false;
        let mut any_matched = false;
        let mut violated: HashSet<String> = HashSet::new();
        let risky = at_risk.get(e.name.as_str()).map_or(&[][..], Vec::as_slice);
        for s in &layer.states {
            expansions += 1;
            if expansions > opts.max_expansions {
                return Ok(Verdict::Inconclusive { expansions: expansions - 1 });
            }
            let outcome = match step_outcome(m, s, e) {
                Ok(o) => o,
                Err(StepError::UnknownOp(_)) => {
                    return Ok(Verdict::Fail {
                        index,
                        reason: FailReason::UnknownOp,
                        diagnosis: diagnose(m, layer.states, Some(e.clone())),
                    })
                }
                // An argument outside its parameter domain can never enable
                // the operation.
                Err(StepError::DomainError { .. }) => continue,
                Err(err) => return Err(ReplayError::Step { index, err }),
            };
            any_enabled |= !outcome.enabled.is_empty();
            any_matched |= !outcome.matched.is_empty();
            for succ in outcome.matched {
                let bad = check_invariant_subset(m, &succ.state, risky);
                if bad.is_empty() {
                    next.push(succ.state);
                } else {
                    violated.extend(bad);
                }
            }
        }
        if next.states.is_empty() {
            let reason = if !violated.is_empty() {
                FailReason::InvariantViolated {
                    clauses: ordered_clauses(m, &violated),
                }
            } else if any_enabled && !any_matched {
                FailReason::OutputMismatch
            } else {
                FailReason::NotEnabled
            };
            return Ok(Verdict::Fail {
                index,
                reason,
                diagnosis: diagnose(m, layer.states, Some(e.clone())),
            });
        }
        layer = next;
    }
    Ok(Verdict::Pass {
        final_states: layer.states,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumerateError {
    #[error("run cap exceeded after {partial} runs")]
    CapExceeded { partial: usize },
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// Every invariant-clean run of length at most `depth`, with concrete
/// arguments and outputs, in a canonical order.
pub fn enumerate_runs(m: &Machine, depth: usize, cap: usize) -> Result<Vec<OpTrace>, EnumerateError> {
    let mut runs: HashSet<Vec<OpEvent>> = HashSet::new();
    let mut queue: VecDeque<(State, Vec<OpEvent>)> = VecDeque::new();
    let mut seen: HashSet<(State, Vec<OpEvent>)> = HashSet::new();
    for s in initial_states(m)? {
        if check_invariants(m, &s).is_empty() {
            queue.push_back((s, Vec::new()));
        }
    }
    if !queue.is_empty() {
        runs.insert(Vec::new());
    }
    while let Some((s, path)) = queue.pop_front() {
        if path.len() == depth {
            continue;
        }
        for (e, next) in crate::machine::all_successors(m, &s)? {
            if !check_invariants(m, &next).is_empty() {
                continue;
            }
            let mut p = path.clone();
            p.push(e);
            runs.insert(p.clone());
            if runs.len() > cap {
                return Err(EnumerateError::CapExceeded { partial: runs.len() });
            }
            if seen.insert((next.clone(), p.clone())) {
                queue.push_back((next, p));
            }
        }
    }
    let mut out: Vec<OpTrace> = runs.into_iter().map(OpTrace::new).collect();
    out.sort();
    Ok(out)
}

/// True when the (possibly wildcarded) trace `t` describes one of `runs`.
pub fn describes_any(runs: &[OpTrace], t: &OpTrace) -> bool {
    runs.iter().any(|r| {
        r.len() == t.len() && t.steps.iter().zip(&r.steps).all(|(a, b)| a.matches(b))
    })
}

fn binding_text(b: &Binding) -> String {
    let (name, args) = b;
    if args.is_empty() {
        name.clone()
    } else {
        let a: Vec<String> = args.iter().map(|v| v.to_string()).collect();
        format!("{name}({})", a.join(","))
    }
}

/// Human-readable report with stable formatting.
pub fn explain(m: &Machine, v: &Verdict) -> String {
    let mut out = String::new();
    match v {
        Verdict::Pass { final_states } => {
            let _ = writeln!(out, "PASS ({} final states)", final_states.len());
        }
        Verdict::Inconclusive { expansions } => {
            let _ = writeln!(out, "INCONCLUSIVE (expansion cap reached after {expansions} expansions)");
        }
        Verdict::Fail {
            index,
            reason,
            diagnosis,
        } => {
            let _ = write!(out, "FAIL at step {index}");
            if let Some(e) = &diagnosis.attempted {
                let _ = write!(out, ": {e}");
            }
            out.push('\n');
            match reason {
                FailReason::NotEnabled => out.push_str("reason: operation not enabled\n"),
                FailReason::OutputMismatch => {
                    out.push_str("reason: operation enabled but no branch produces the recorded outputs\n")
                }
                FailReason::UnknownOp => out.push_str("reason: unknown operation\n"),
                FailReason::InvariantViolated { clauses } => {
                    out.push_str("reason: invariant violated\n");
                    for id in clauses {
                        let text = m.invariant(id).map_or("", |i| i.text.as_str());
                        let _ = writeln!(out, "  {id}: {text}");
                    }
                }
            }
            let _ = writeln!(out, "frontier ({} states):", diagnosis.frontier.len());
            for (k, (s, en)) in diagnosis.frontier.iter().zip(&diagnosis.enabled_here).enumerate() {
                let _ = writeln!(out, "  [{k}] {}", m.render_state(s));
                let names: Vec<String> = en.iter().map(binding_text).collect();
                let _ = writeln!(out, "      enabled: {}", names.join(" "));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
