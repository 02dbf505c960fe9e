use std::fmt::Write;

use super::{InitClause, Machine};

/// Renders a machine back into the machine-file notation. Parsing the result
/// yields an equivalent machine.
pub fn render_machine(m: &Machine) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "machine {}", m.name);
    for (name, items) in &m.enums {
        let items: Vec<&str> = items.iter().map(|s| &**s).collect();
        let _ = writeln!(out, "enum {name} = {{{}}}", items.join(", "));
    }
    for v in &m.vars {
        let _ = writeln!(out, "var {} : {}", v.name, v.domain);
    }
    for init in &m.inits {
        match init {
            InitClause::Assign { var, expr } => {
                let _ = writeln!(out, "init {} := {}", m.vars[*var].name, expr.src);
            }
            InitClause::Choose { var, set } => {
                let _ = writeln!(out, "init choose {} in {}", m.vars[*var].name, set.src);
            }
        }
    }
    for inv in &m.invariants {
        let _ = writeln!(out, "invariant {} : {}", inv.id, inv.pred.src);
    }
    for op in &m.ops {
        out.push('\n');
        out.push_str("op ");
        out.push_str(&op.name);
        if !op.params.is_empty() {
            let ps: Vec<String> = op
                .params
                .iter()
                .map(|(x, d)| format!("{x} : {}", d))
                .collect();
            let _ = write!(out, "({})", ps.join(", "));
        }
        out.push('\n');
        for (x, set) in &op.chooses {
            let _ = writeln!(out, "  choose {x} in {}", set.src);
        }
        for g in &op.guards {
            let _ = writeln!(out, "  pre {}", g.src);
        }
        for eff in &op.effects {
            let name = &m.vars[eff.var].name;
            match &eff.key {
                Some(k) => {
                    let _ = writeln!(out, "  eff {name}[{k}] := {}", eff.value);
                }
                None => {
                    let _ = writeln!(out, "  eff {name} := {}", eff.value);
                }
            }
        }
        for ((x, d), def) in op.outs.iter().zip(&op.out_defs) {
            let _ = writeln!(out, "  out {x} : {} := {}", d, def.src);
        }
        out.push_str("end\n");
    }
    out
}

