//! Finite-trace propositional LTL with strong next.
//!
//! Formulas are evaluated over [`StateTrace`]s, sequences of variable
//! assignment blocks. Atoms are named propositions from a [`PropDefs`] file,
//! boolean trace variables, or inline comparisons such as `cbit1 == 1`.
//!
//! ```text
//! G((requested && available) -> F allocate)
//! <>(p1 && (<>p2))
//! ```

mod eval;
mod formula;
mod states;
mod witness;

use thiserror::Error;

use crate::machine::MachineError;

pub use eval::{eval_finite, eval_positions};
pub use formula::{parse_formula, trace_to_formula, Atom, Formula};
pub use states::{parse_defs, parse_state_trace, render_state_trace, PropDefs, StateTrace};
pub use witness::{machine_admits, AdmitOptions, Witness};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LtlError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown atom `{0}`: neither a definition nor a trace variable")]
    UnknownAtom(String),
    #[error("variable `{name}` has no value in block {block}")]
    UnboundVariable { name: String, block: usize },
    #[error("block {block}: {msg}")]
    Eval { block: usize, msg: String },
    #[error("cannot evaluate over an empty trace")]
    EmptyTrace,
    #[error("proposition list is empty")]
    EmptyList,
    #[error("definition `{name}` refers to definition `{uses}`")]
    NestedDefinition { name: String, uses: String },
    #[error("`{0}` is defined more than once")]
    DuplicateDefinition(String),
    #[error("search cap exceeded after visiting {visited} states")]
    CapExceeded { visited: usize },
    #[error(transparent)]
    Machine(MachineError),
}

impl From<MachineError> for LtlError {
    fn from(e: MachineError) -> Self {
        match e {
            MachineError::Syntax { line, col, msg } => LtlError::Syntax { line, col, msg },
            other => LtlError::Machine(other),
        }
    }
}

#[cfg(test)]
mod tests;
