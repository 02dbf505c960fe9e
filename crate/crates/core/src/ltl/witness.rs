use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::LtlError;
use crate::machine::eval::eval_bool;
use crate::machine::{check_invariants, initial_states, Compiled, Expr, Machine, State};
use crate::trace_model::{OpEvent, OpTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdmitOptions {
    /// Each state position satisfies at most one milestone.
    pub strict: bool,
    /// Upper bound on distinct (state, progress) nodes visited.
    pub max_states: usize,
}

impl Default for AdmitOptions {
    fn default() -> Self {
        AdmitOptions {
            strict: true,
            max_states: 1_000_000,
        }
    }
}

/// A run reaching every milestone in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub trace: OpTrace,
    /// For each milestone, the index into `states` where it holds.
    pub positions: Vec<usize>,
    /// States visited, starting with the initial state; one more than steps.
    pub states: Vec<State>,
}

struct Milestones {
    code: Vec<Compiled>,
    strict: bool,
}

impl Milestones {
    fn holds(&self, k: usize, s: &State) -> bool {
        let mut locals = Vec::new();
        matches!(eval_bool(&self.code[k].code, &s.0[..], &mut locals), Ok(true))
    }

    /// Progress after visiting `s` having matched `k` milestones already.
    fn advance(&self, mut k: usize, s: &State) -> usize {
        while k < self.code.len() && self.holds(k, s) {
            k += 1;
            if self.strict {
                break;
            }
        }
        k
    }
}

struct Node {
    state: State,
    progress: usize,
    parent: Option<(usize, OpEvent)>,
}

/// Invariant-clean run of at most `bound` steps along which the state
/// predicates `props` become true in order, or `None` if there is none.
///
/// Nodes are (state, milestones matched) pairs, matched as early as possible,
/// which loses no runs. The frontier is ordered by progress and then depth, so
/// each stretch between two milestones is as short as the search allows, while
/// the concurrency of unrelated sessions is left unexplored until needed. A
/// node reached again at a smaller depth is reopened, so the search is complete
/// up to `bound`.
pub fn machine_admits(
    m: &Machine,
    props: &[Expr],
    bound: usize,
    opts: &AdmitOptions,
) -> Result<Option<Witness>, LtlError> {
    let ms = Milestones {
        code: props
            .iter()
            .map(|p| m.compile_predicate(p))
            .collect::<Result<_, _>>()?,
        strict: opts.strict,
    };
    let goal = ms.code.len();
    let mut nodes: Vec<Node> = Vec::new();
    let mut best: HashMap<(State, usize), usize> = HashMap::new();
    let mut open: BinaryHeap<Reverse<(usize, usize, usize)>> = BinaryHeap::new();
    for s in initial_states(m)? {
        if !check_invariants(m, &s).is_empty() {
            continue;
        }
        let progress = ms.advance(0, &s);
        if best.insert((s.clone(), progress), 0).is_none() {
            open.push(Reverse((goal - progress, 0, nodes.len())));
            nodes.push(Node {
                state: s,
                progress,
                parent: None,
            });
        }
    }
    while let Some(Reverse((_, depth, at))) = open.pop() {
        let node = &nodes[at];
        if node.progress == goal {
            return Ok(Some(rebuild(&nodes, at, &ms)));
        }
        if best.get(&(node.state.clone(), node.progress)) != Some(&depth) || depth >= bound {
            continue;
        }
        let succs = crate::machine::all_successors(m, &node.state).map_err(|e| LtlError::Eval {
            block: depth,
            msg: e.to_string(),
        })?;
        let from = node.progress;
        for (ev, next) in succs {
            if !check_invariants(m, &next).is_empty() {
                continue;
            }
            let progress = ms.advance(from, &next);
            let key = (next, progress);
            if best.get(&key).is_some_and(|&d| d <= depth + 1) {
                continue;
            }
            if nodes.len() >= opts.max_states {
                return Err(LtlError::CapExceeded { visited: nodes.len() });
            }
            open.push(Reverse((goal - progress, depth + 1, nodes.len())));
            nodes.push(Node {
                state: key.0.clone(),
                progress,
                parent: Some((at, ev)),
            });
            best.insert(key, depth + 1);
        }
    }
    Ok(None)
}

fn rebuild(nodes: &[Node], mut at: usize, ms: &Milestones) -> Witness {
    let mut states = Vec::new();
    let mut steps = Vec::new();
    loop {
        states.push(nodes[at].state.clone());
        match &nodes[at].parent {
            Some((p, ev)) => {
                steps.push(ev.clone());
                at = *p;
            }
            None => break,
        }
    }
    states.reverse();
    steps.reverse();
    let mut positions = Vec::new();
    let mut k = 0;
    for (i, s) in states.iter().enumerate() {
        let next = ms.advance(k, s);
        positions.extend(std::iter::repeat_n(i, next - k));
        k = next;
    }
    Witness {
        trace: OpTrace::new(steps),
        positions,
        states,
    }
}
