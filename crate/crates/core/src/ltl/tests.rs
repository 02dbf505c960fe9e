use proptest::prelude::*;

use super::*;
use crate::machine::{parse_expr, parse_machine, Expr, Machine};
use crate::models::{AGENCY_MACHINE, BOOKING_DEFS, BOOKING_STATES, BOOKING_STATES_EXTENDED, CARD_MILESTONES};
use crate::replay::{replay, ReplayOptions};
use crate::trace_model::Value;

const SAFETY: &str = "G((requested && available) -> F allocate)";

fn holds(formula: &str, states: &str, defs: &str) -> bool {
    let defs = parse_defs(defs).unwrap();
    let f = parse_formula(formula, &defs).unwrap();
    eval_finite(&f, &parse_state_trace(states).unwrap(), &defs).unwrap()
}

#[test]
fn booking_trace_satisfies_safety() {
    assert!(holds(SAFETY, BOOKING_STATES, BOOKING_DEFS));
}

#[test]
fn extended_booking_trace_violates_safety() {
    assert!(!holds(SAFETY, BOOKING_STATES_EXTENDED, BOOKING_DEFS));
}

#[test]
fn carry_forward_keeps_unassigned_values() {
    let t = parse_state_trace("x = 1; y = 2;\n---\nx = 3;\n").unwrap();
    let (vars, rows) = t.resolved();
    assert_eq!(vars, ["x", "y"]);
    assert_eq!(rows[1], vec![Some(Value::Int(3)), Some(Value::Int(2))]);
}

#[test]
fn unbound_variable_names_block() {
    let t = parse_state_trace("x = 1;\n---\ny = 2;\n").unwrap();
    let f = parse_formula("G(y = 2)", &PropDefs::default()).unwrap();
    let err = eval_finite(&f, &t, &PropDefs::default()).unwrap_err();
    assert_eq!(err, LtlError::UnboundVariable { name: "y".into(), block: 0 });
}

#[test]
fn edge_cases_of_strong_next() {
    assert!(holds("G p", "p = true;", ""));
    assert!(!holds("X p", "p = true;", ""));
    assert!(holds("X p", "p = false;\n---\np = true;", ""));
    assert!(!holds("p U q", "p = true; q = false;\n---\np = true;", ""));
    assert!(holds("p U q", "p = true; q = false;\n---\nq = true;", ""));
    assert!(holds("[]<>(x > 1)", "x = 0;\n---\nx = 2;", ""));
}

#[test]
fn empty_trace_is_rejected() {
    let f = parse_formula("true", &PropDefs::default()).unwrap();
    let err = eval_finite(&f, &StateTrace::default(), &PropDefs::default()).unwrap_err();
    assert_eq!(err, LtlError::EmptyTrace);
}

#[test]
fn unknown_atom_is_reported() {
    let f = parse_formula("F ghost", &PropDefs::default()).unwrap();
    let err = eval_finite(&f, &parse_state_trace("x = 1;").unwrap(), &PropDefs::default()).unwrap_err();
    assert_eq!(err, LtlError::UnknownAtom("ghost".into()));
}

#[test]
fn parse_errors() {
    let defs = PropDefs::default();
    assert!(matches!(parse_formula("G(", &defs), Err(LtlError::Syntax { .. })));
    assert!(matches!(parse_formula("p &&", &defs), Err(LtlError::Syntax { .. })));
    assert!(matches!(parse_defs("define a (x = 1)\ndefine a (x = 2)"), Err(LtlError::DuplicateDefinition(_))));
    assert!(matches!(parse_defs("define a (x = 1)\ndefine b (a && x = 2)"), Err(LtlError::NestedDefinition { .. })));
    assert!(matches!(parse_state_trace("x := 1"), Err(LtlError::Syntax { .. })));
}

#[test]
fn both_spellings_parse_alike() {
    let defs = parse_defs("define p1 (a = 1)\ndefine p2 (a = 2)").unwrap();
    let sym = parse_formula("F(p1 && F p2)", &defs).unwrap();
    let ascii = parse_formula("<>(p1 && (<>p2))", &defs).unwrap();
    assert_eq!(sym, ascii);
    assert_eq!(ascii, trace_to_formula(&["p1".into(), "p2".into()]).unwrap());
    let g = parse_formula("G(requested -> F allocate)", &parse_defs(BOOKING_DEFS).unwrap()).unwrap();
    assert_eq!(g.to_string(), "[](requested -> (<>allocate))");
}

#[test]
fn chain_rendering() {
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    assert_eq!(
        trace_to_formula(&names(&["p1", "p2", "p3", "p4"])).unwrap().to_string(),
        "<>(p1 && (<>(p2 && (<>(p3 && (<>p4))))))"
    );
    assert_eq!(trace_to_formula(&names(&["p1"])).unwrap().to_string(), "<>p1");
    assert_eq!(trace_to_formula(&names(&["p", "p"])).unwrap().to_string(), "<>(p && (<>p))");
    assert_eq!(trace_to_formula(&[]), Err(LtlError::EmptyList));
}

#[test]
fn rendered_formulas_reparse() {
    let defs = parse_defs(CARD_MILESTONES).unwrap();
    let f = parse_formula("(p1 U X p2) || !(p3 -> (cbit1 = 0))", &defs).unwrap();
    assert_eq!(parse_formula(&f.to_string(), &defs).unwrap(), f);
}

fn milestones() -> Vec<Expr> {
    parse_defs(CARD_MILESTONES).unwrap().defs.into_iter().map(|(_, e)| e).collect()
}

fn agency() -> Machine {
    parse_machine(AGENCY_MACHINE).unwrap()
}

#[test]
fn agency_admits_three_wrong_cards_then_mc() {
    let m = agency();
    let w = machine_admits(&m, &milestones(), 24, &AdmitOptions::default())
        .unwrap()
        .expect("witness");
    assert!(w.trace.len() <= 24);
    assert!(replay(&m, &w.trace, &ReplayOptions::default()).unwrap().is_pass());
    let cards: Vec<String> = w
        .trace
        .steps
        .iter()
        .filter(|e| e.name == "enterCard")
        .map(|e| e.to_string())
        .collect();
    assert_eq!(cards.len(), 4, "{cards:?}");
    assert_eq!(w.trace.steps.iter().filter(|e| e.name == "redoCard").count(), 3);
    check_positions(&m, &milestones(), &w, true);
}

fn check_positions(m: &Machine, props: &[Expr], w: &Witness, strict: bool) {
    assert_eq!(w.states.len(), w.trace.len() + 1);
    assert_eq!(w.positions.len(), props.len());
    for pair in w.positions.windows(2) {
        assert!(if strict { pair[0] < pair[1] } else { pair[0] <= pair[1] });
    }
    for (p, &i) in props.iter().zip(&w.positions) {
        let code = m.compile_predicate(p).unwrap();
        let mut locals = Vec::new();
        assert!(crate::machine::eval::eval_bool(&code.code, &w.states[i].0[..], &mut locals).unwrap());
    }
    // The claimed states are exactly the ones the trace produces.
    let mut s = w.states[0].clone();
    for (e, next) in w.trace.steps.iter().zip(&w.states[1..]) {
        let succ = crate::machine::step(m, &s, e).unwrap();
        assert!(succ.iter().any(|x| &x.state == next));
        s = next.clone();
    }
}

#[test]
fn non_strict_milestones_share_positions() {
    let m = agency();
    let opts = AdmitOptions { strict: false, ..AdmitOptions::default() };
    let w = machine_admits(&m, &milestones(), 24, &opts).unwrap().expect("witness");
    assert_eq!(w.positions[0], w.positions[2]);
    let strict = machine_admits(&m, &milestones(), 24, &AdmitOptions::default()).unwrap().unwrap();
    assert!(w.trace.len() < strict.trace.len());
    check_positions(&m, &milestones(), &w, false);
}

const TINY: &str = "machine Tiny
var x : 0..3
init x := 0
op inc
  pre x < 3
  eff x := x + 1
end
";

#[test]
fn trivial_admits() {
    let m = parse_machine(TINY).unwrap();
    let t = parse_expr("true").unwrap();
    let w = machine_admits(&m, &[t], 0, &AdmitOptions::default()).unwrap().unwrap();
    assert!(w.trace.is_empty());
    assert_eq!(w.positions, [0]);
    let five = parse_expr("x = 5").unwrap();
    assert_eq!(machine_admits(&m, &[five], 10, &AdmitOptions::default()).unwrap(), None);
    let three = parse_expr("x = 3").unwrap();
    assert_eq!(machine_admits(&m, std::slice::from_ref(&three), 2, &AdmitOptions::default()).unwrap(), None);
    let w = machine_admits(&m, &[three], 3, &AdmitOptions::default()).unwrap().unwrap();
    assert_eq!(w.trace.len(), 3);
}

#[test]
fn admits_cap() {
    let m = agency();
    let opts = AdmitOptions { max_states: 50, ..AdmitOptions::default() };
    assert!(matches!(
        machine_admits(&m, &milestones(), 24, &opts),
        Err(LtlError::CapExceeded { .. })
    ));
}

// Naive recursive semantics, written straight from the definitions.
fn naive(f: &Formula, rows: &[[bool; 3]], i: usize) -> bool {
    let n = rows.len();
    match f {
        Formula::Bool(b) => *b,
        Formula::Atom(Atom::Var(v)) => rows[i][(v.as_bytes()[0] - b'a') as usize],
        Formula::Atom(_) => unreachable!(),
        Formula::Not(a) => !naive(a, rows, i),
        Formula::And(a, b) => naive(a, rows, i) && naive(b, rows, i),
        Formula::Or(a, b) => naive(a, rows, i) || naive(b, rows, i),
        Formula::Implies(a, b) => !naive(a, rows, i) || naive(b, rows, i),
        Formula::Next(a) => i + 1 < n && naive(a, rows, i + 1),
        Formula::Eventually(a) => (i..n).any(|j| naive(a, rows, j)),
        Formula::Always(a) => (i..n).all(|j| naive(a, rows, j)),
        Formula::Until(a, b) => (i..n).any(|j| naive(b, rows, j) && (i..j).all(|k| naive(a, rows, k))),
    }
}

pub(crate) fn formula_strategy() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        any::<bool>().prop_map(Formula::Bool),
        prop::sample::select(vec!["a", "b", "c"]).prop_map(|v| Formula::Atom(Atom::Var(v.to_string()))),
    ];
    leaf.prop_recursive(5, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            inner.clone().prop_map(Formula::next),
            inner.clone().prop_map(Formula::eventually),
            inner.clone().prop_map(Formula::always),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::until(a, b)),
        ]
    })
}

fn to_trace(rows: &[[bool; 3]]) -> StateTrace {
    StateTrace {
        blocks: rows
            .iter()
            .map(|r| {
                ["a", "b", "c"]
                    .iter()
                    .zip(r)
                    .map(|(n, v)| (n.to_string(), Value::Bool(*v)))
                    .collect()
            })
            .collect(),
    }
}

fn rows_strategy() -> impl Strategy<Value = Vec<[bool; 3]>> {
    prop::collection::vec(any::<[bool; 3]>(), 1..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn dp_matches_naive(f in formula_strategy(), rows in rows_strategy()) {
        prop_assume!(f.depth() <= 5);
        let got = eval_positions(&f, &to_trace(&rows), &PropDefs::default()).unwrap();
        for (i, g) in got.iter().enumerate() {
            prop_assert_eq!(*g, naive(&f, &rows, i), "{} at {}", f, i);
        }
    }

    #[test]
    fn eventually_dualises_always(f in formula_strategy(), rows in rows_strategy()) {
        let t = to_trace(&rows);
        let d = PropDefs::default();
        let lhs = eval_finite(&Formula::not(Formula::eventually(f.clone())), &t, &d).unwrap();
        let rhs = eval_finite(&Formula::always(Formula::not(f)), &t, &d).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn chain_matches_position_search(
        props in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..=4),
        rows in rows_strategy(),
    ) {
        let names: Vec<String> = props.iter().map(|s| s.to_string()).collect();
        let f = trace_to_formula(&names).unwrap();
        let t = to_trace(&rows);
        let got = eval_finite(&f, &t, &PropDefs::default());
        // Greedy non-strict matching over positions.
        let mut k = 0;
        for r in &rows {
            while k < props.len() && r[(props[k].as_bytes()[0] - b'a') as usize] {
                k += 1;
            }
        }
        prop_assert_eq!(got.unwrap(), k == props.len());
    }

    #[test]
    fn formula_render_round_trips(f in formula_strategy()) {
        let back = parse_formula(&f.to_string(), &PropDefs::default()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn state_trace_round_trips(rows in rows_strategy()) {
        let t = to_trace(&rows);
        prop_assert_eq!(parse_state_trace(&render_state_trace(&t)).unwrap(), t);
    }
}
