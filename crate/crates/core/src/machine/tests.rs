use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::models::{AGENCY_MACHINE, AGENCY_SESSION_TRACE};
use crate::trace_model::{parse_op_event, parse_op_trace, OpEvent, Value};

const FLIP: &str = "machine Flip\nvar x : bool\ninit x := false\nop flip\n  eff x := !x\nend\n";

fn agency() -> Machine {
    parse_machine(AGENCY_MACHINE).unwrap()
}

fn ev(s: &str) -> OpEvent {
    parse_op_event(s).unwrap()
}

fn set_state(m: &Machine, s: &mut State, var: &str, key: &str, v: Val) {
    let i = m.var_index(var).unwrap();
    let Val::Map(map) = &s.0[i] else { panic!("{var} is not a map") };
    let mut map = (**map).clone();
    map.insert(Val::sym(key), v);
    s.0[i] = Val::Map(Arc::new(map));
}

/// Follows `events` keeping every successor, as a small frontier search.
fn run(m: &Machine, events: &[OpEvent]) -> Vec<State> {
    let mut frontier = initial_states(m).unwrap();
    for e in events {
        let mut next: Vec<State> = Vec::new();
        for s in &frontier {
            for succ in step(m, s, e).unwrap() {
                if check_invariants(m, &succ.state).is_empty() && !next.contains(&succ.state) {
                    next.push(succ.state);
                }
            }
        }
        frontier = next;
    }
    frontier
}

#[test]
fn agency_interface() {
    let m = agency();
    let ops: Vec<&str> = m.ops.iter().map(|o| o.name.as_str()).collect();
    for name in [
        "login",
        "choice",
        "chooseService",
        "enterCard",
        "redoCard",
        "pickShop",
        "respBookRoom",
        "respUnbookRoom",
        "respBookCar",
        "respUnbookCar",
        "logout",
        "bookRoom",
        "unbookCar",
    ] {
        assert!(ops.contains(&name), "missing op {name}");
    }
    let ids: Vec<&str> = m.invariants.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, ["c1", "c2", "c3", "c4", "c5", "c6"]);
    assert!(!m.is_deterministic());
    assert!(m.state_space_size() > 1_000_000);
}

#[test]
fn agency_initial_state() {
    let m = agency();
    let init = initial_states(&m).unwrap();
    assert_eq!(init.len(), 1);
    let s = &init[0];
    let sessions = ["ss1", "ss2", "ss3", "ss4"];
    let users = ["user1", "user2", "user3"];
    let all = |keys: &[&str], v: Val| Val::map(keys.iter().map(|k| (Val::sym(k), v.clone())));
    let golden = [
        ("sessUser", all(&sessions, Val::sym("nobody"))),
        ("phase", all(&sessions, Val::sym("fresh"))),
        ("req", all(&sessions, Val::sym("none"))),
        ("brand", all(&sessions, Val::sym("nocard"))),
        ("cardValid", all(&sessions, Val::Bool(false))),
        ("acted", all(&sessions, Val::Bool(false))),
        ("pending", all(&sessions, Val::Bool(false))),
        ("cbit1", Val::Int(0)),
        ("cbit2", Val::Int(0)),
        ("rooms", all(&["hotel1", "hotel2"], Val::Int(2))),
        ("cars", all(&["shop1", "shop2"], Val::Int(2))),
        ("userHotel", all(&users, Val::sym("nohotel"))),
        ("userShop", all(&users, Val::sym("noshop"))),
        ("nRooms", all(&users, Val::Int(0))),
        ("nCars", all(&users, Val::Int(0))),
        ("roomsAt", all(&users, Val::set([]))),
        ("carsAt", all(&users, Val::set([]))),
    ];
    assert_eq!(golden.len(), m.vars.len());
    for (name, v) in golden {
        assert_eq!(s.get(&m, name), Some(&v), "{name}");
    }
    assert!(check_invariants(&m, s).is_empty());
}

#[test]
fn agency_login_activates_first_session() {
    let m = agency();
    let s0 = initial_states(&m).unwrap().remove(0);
    let succ = step(&m, &s0, &ev("login(user1)")).unwrap();
    assert_eq!(succ.len(), 1);
    let s1 = &succ[0].state;
    let phase = s1.get(&m, "phase").unwrap().as_map().unwrap();
    assert_eq!(phase[&Val::sym("ss1")], Val::sym("welcome"));
    assert_eq!(phase[&Val::sym("ss2")], Val::sym("fresh"));
    let user = s1.get(&m, "sessUser").unwrap().as_map().unwrap();
    assert_eq!(user[&Val::sym("ss1")], Val::sym("user1"));
}

#[test]
fn agency_session_trace_is_feasible() {
    let m = agency();
    let t = parse_op_trace(AGENCY_SESSION_TRACE).unwrap();
    assert_eq!(t.machine_name.as_deref(), Some("TravelAgency"));
    assert_eq!(t.len(), 16);
    let end = run(&m, &t.steps);
    assert!(!end.is_empty());
    // After logout only logins remain.
    for s in &end {
        let enabled = enabled_events(&m, s);
        let names: BTreeSet<&str> = enabled.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, BTreeSet::from(["login"]));
        assert_eq!(enabled.len(), 3);
    }
}

#[test]
fn card_bits_follow_brand() {
    let m = agency();
    let s = run(&m, &[ev("login(user2)"), ev("choice(ss1)"), ev("chooseService(ss1,H)")]);
    assert_eq!(s.len(), 1);
    let succ = step(&m, &s[0], &ev("enterCard(ss1)")).unwrap();
    let mut bits: Vec<(String, i64, i64)> = succ
        .iter()
        .map(|x| {
            let c = x.state.get(&m, "brand").unwrap().as_map().unwrap()[&Val::sym("ss1")].to_string();
            let b1 = x.state.get(&m, "cbit1").unwrap().as_int().unwrap();
            let b2 = x.state.get(&m, "cbit2").unwrap().as_int().unwrap();
            (c, b1, b2)
        })
        .collect();
    bits.sort();
    assert_eq!(
        bits,
        [
            ("mc".to_string(), 1, 0),
            ("visa".to_string(), 0, 1),
            ("wrong".to_string(), 1, 1)
        ]
    );
}

#[test]
fn booking_answers_are_complementary() {
    let m = agency();
    let prefix = [
        "login(user1)",
        "choice(ss1)",
        "chooseService(ss1,H)",
        "enterCard(ss1)",
        "pickShop(ss1)",
    ];
    let events: Vec<OpEvent> = prefix.iter().map(|s| ev(s)).collect();
    let frontier = run(&m, &events);
    // Only the valid-card branches survive to the response.
    let done = ev("respBookRoom(ss1) --> (done)");
    let impossible = ev("respBookRoom(ss1) --> (impossible)");
    for s in &frontier {
        let ok: Vec<_> = step(&m, s, &done)
            .unwrap()
            .into_iter()
            .filter(|x| check_invariants(&m, &x.state).is_empty())
            .collect();
        let valid = s.get(&m, "cardValid").unwrap().as_map().unwrap()[&Val::sym("ss1")] == Val::Bool(true);
        // One branch per hotel with rooms.
        assert_eq!(ok.len(), if valid { 2 } else { 0 });
        assert!(step(&m, s, &impossible).unwrap().is_empty());
    }
}

#[test]
fn clause_one_and_five_detect_violations() {
    let m = agency();
    let mut s = initial_states(&m).unwrap().remove(0);
    set_state(&m, &mut s, "nRooms", "user1", Val::Int(1));
    assert!(check_invariants(&m, &s).contains(&"c1".to_string()));

    let mut s = initial_states(&m).unwrap().remove(0);
    set_state(&m, &mut s, "acted", "ss2", Val::Bool(true));
    assert_eq!(check_invariants(&m, &s), ["c5"]);
}

#[test]
fn flip_machine() {
    let m = parse_machine(FLIP).unwrap();
    assert_eq!(m.state_space_size(), 2);
    assert!(m.is_deterministic());
    let s0 = initial_states(&m).unwrap().remove(0);
    let s1 = step(&m, &s0, &ev("flip")).unwrap().remove(0).state;
    assert_eq!(s1.0, [Val::Bool(true)]);
    let s2 = step(&m, &s1, &ev("flip")).unwrap().remove(0).state;
    assert_eq!(s2, s0);
}

#[test]
fn undeclared_name_is_unbound() {
    let src = "machine M\nvar x : 0..3\ninit x := 0\nop bump\n  eff x := y + 1\nend\n";
    assert!(matches!(
        parse_machine(src),
        Err(MachineError::UnboundSymbol { ref name, line: 5 }) if name == "y"
    ));
}

#[test]
fn parse_errors() {
    let dup = "machine M\nvar x : bool\ninit x := true\ninit x := false\n";
    assert_eq!(parse_machine(dup).unwrap_err(), MachineError::DuplicateInit("x".into()));
    let missing = "machine M\nvar x : bool\n";
    assert_eq!(parse_machine(missing).unwrap_err(), MachineError::MissingInit("x".into()));
    let ty = "machine M\nvar x : bool\ninit x := 3\n";
    assert!(matches!(parse_machine(ty), Err(MachineError::Type { line: 3, .. })));
    let syntax = "machine M\nvar x : bool\ninit x := (true\n";
    assert!(matches!(parse_machine(syntax), Err(MachineError::Syntax { .. })));
    let twice = "machine M\nvar x : bool\ninit x := true\nop f\n  eff x := true\n  eff x := false\nend\n";
    assert!(matches!(parse_machine(twice), Err(MachineError::DuplicateAssign { .. })));
}

#[test]
fn init_choose() {
    let m = parse_machine("machine M\nvar x : 0..3\ninit choose x in {1, 2, 3}\n").unwrap();
    assert_eq!(initial_states(&m).unwrap().len(), 3);
    let m = parse_machine("machine M\nvar x : 0..3\ninit choose x in {}\n").unwrap();
    assert_eq!(initial_states(&m).unwrap_err(), MachineError::EmptyChoice("x".into()));
}

#[test]
fn guard_false_disables() {
    let m = parse_machine("machine M\nvar x : bool\ninit x := false\nop f\n  pre x\n  eff x := false\nend\n").unwrap();
    let s0 = initial_states(&m).unwrap().remove(0);
    assert!(step(&m, &s0, &ev("f")).unwrap().is_empty());
}

#[test]
fn two_branch_choose_with_wildcard_out() {
    let src = "machine M\nvar x : 0..2\ninit x := 0\nop pick\n  choose v in {1, 2}\n  eff x := v\n  out r : 0..2 := v\nend\n";
    let m = parse_machine(src).unwrap();
    let s0 = initial_states(&m).unwrap().remove(0);
    let succ = step(&m, &s0, &ev("pick --> (_)")).unwrap();
    let got: BTreeSet<(Vec<Val>, Vec<Val>)> = succ.into_iter().map(|x| (x.state.0, x.outs)).collect();
    let want = BTreeSet::from([
        (vec![Val::Int(1)], vec![Val::Int(1)]),
        (vec![Val::Int(2)], vec![Val::Int(2)]),
    ]);
    assert_eq!(got, want);
    assert_eq!(step(&m, &s0, &ev("pick --> (2)")).unwrap().len(), 1);
    let outcome = step_outcome(&m, &s0, &ev("pick --> (0)")).unwrap();
    assert_eq!(outcome.enabled.len(), 2);
    assert!(outcome.matched.is_empty());
}

#[test]
fn out_of_domain_branch_is_dropped() {
    let src = "machine M\nvar x : 0..1\ninit x := 1\nop inc\n  eff x := x + 1\nend\n";
    let m = parse_machine(src).unwrap();
    let s0 = initial_states(&m).unwrap().remove(0);
    assert!(step(&m, &s0, &ev("inc")).unwrap().is_empty());
}

#[test]
fn step_errors() {
    let m = agency();
    let s0 = initial_states(&m).unwrap().remove(0);
    assert_eq!(step(&m, &s0, &ev("fly(ss1)")).unwrap_err(), StepError::UnknownOp("fly".into()));
    assert!(matches!(step(&m, &s0, &ev("choice")), Err(StepError::ArityMismatch { .. })));
    assert!(matches!(step(&m, &s0, &ev("choice(ss9)")), Err(StepError::DomainError { .. })));
}

#[test]
fn enabled_event_enumeration() {
    let dead = parse_machine("machine D\nvar x : bool\ninit x := false\nop f\n  pre x\n  eff x := x\nend\n").unwrap();
    let s = initial_states(&dead).unwrap().remove(0);
    assert!(enabled_events(&dead, &s).is_empty());

    let three = parse_machine("machine T\nvar x : 0..2\ninit x := 0\nop set(v : 0..2)\n  eff x := v\nend\n").unwrap();
    let s = initial_states(&three).unwrap().remove(0);
    assert_eq!(
        enabled_events(&three, &s),
        (0..3).map(|i| ("set".to_string(), vec![Val::Int(i)])).collect::<Vec<_>>()
    );
}

#[test]
fn render_round_trips_agency() {
    let m = agency();
    let text = render_machine(&m);
    let again = parse_machine(&text).unwrap();
    assert_eq!(render_machine(&again), text);
    assert_eq!(initial_states(&again).unwrap(), initial_states(&m).unwrap());
}

#[test]
fn ite_expression() {
    let src = "machine M\nvar x : 0..5\ninit x := if 1 < 2 then 3 else 4\n";
    let m = parse_machine(src).unwrap();
    assert_eq!(initial_states(&m).unwrap()[0].0, [Val::Int(3)]);
}

// ---------------------------------------------------------------------------
// Brute-force oracle: random small machines are expanded naively over every
// assignment of the choose variables and compared with `step`.

#[derive(Debug, Clone)]
struct Toy {
    src: String,
}

fn toy_machine() -> impl Strategy<Value = Toy> {
    let var_count = 1..=3usize;
    (var_count, prop::collection::vec((0..3u8, 0..3u8, 0..3u8, any::<bool>()), 1..=3))
        .prop_map(|(nv, ops)| {
            let mut src = String::from("machine Toy\n");
            for i in 0..nv {
                src.push_str(&format!("var v{i} : 0..2\n"));
            }
            for i in 0..nv {
                src.push_str(&format!("init v{i} := 0\n"));
            }
            for (k, (target, guard, delta, branch)) in ops.into_iter().enumerate() {
                let t = target as usize % nv;
                let g = guard as usize % nv;
                src.push_str(&format!("op o{k}\n"));
                if branch {
                    src.push_str("  choose c in {0, 1, 2}\n");
                    src.push_str(&format!("  pre c /= v{g}\n"));
                    src.push_str(&format!("  eff v{t} := c\n"));
                } else {
                    src.push_str(&format!("  pre v{g} < 2\n"));
                    src.push_str(&format!("  eff v{t} := v{t} + {}\n", delta % 2 + 1));
                }
                src.push_str("end\n");
            }
            Toy { src }
        })
}

/// Naive successor function written directly against the toy shape.
fn naive_successors(m: &Machine, s: &State, op: &Operation) -> BTreeSet<State> {
    let mut out = BTreeSet::new();
    let values: Vec<Vec<Val>> = if op.chooses.is_empty() {
        vec![vec![]]
    } else {
        (0..3).map(|c| vec![Val::Int(c)]).collect()
    };
    for locals in values {
        let mut l = locals.clone();
        let ok = op
            .guards
            .iter()
            .all(|g| eval::eval_bool(&g.code, &s.0[..], &mut l).unwrap());
        if !ok {
            continue;
        }
        let mut next = s.0.clone();
        for e in &op.effects {
            next[e.var] = eval::eval(&e.code, &s.0[..], &mut l).unwrap();
        }
        if m.vars.iter().zip(&next).all(|(d, v)| d.domain.contains(v)) {
            out.insert(State(next));
        }
    }
    out
}

proptest! {
    #[test]
    fn step_matches_naive_expansion(toy in toy_machine()) {
        let m = parse_machine(&toy.src).unwrap();
        for s in m.vars[0].domain.values().into_iter().flat_map(|a| {
            let rest = m.vars.len() - 1;
            (0..3i64.pow(rest as u32)).map(move |code| {
                let mut vals = vec![a.clone()];
                let mut c = code;
                for _ in 0..rest {
                    vals.push(Val::Int(c % 3));
                    c /= 3;
                }
                State(vals)
            })
        }) {
            for op in &m.ops {
                let got: BTreeSet<State> = step(&m, &s, &OpEvent::new(op.name.clone(), vec![]))
                    .unwrap()
                    .into_iter()
                    .map(|x| x.state)
                    .collect();
                prop_assert_eq!(&got, &naive_successors(&m, &s, op));
                if m.is_deterministic() {
                    prop_assert!(got.len() <= 1);
                }
            }
        }
    }

    #[test]
    fn render_round_trips_random(toy in toy_machine()) {
        let m = parse_machine(&toy.src).unwrap();
        let text = render_machine(&m);
        let again = parse_machine(&text).unwrap();
        prop_assert_eq!(render_machine(&again), text);
    }
}

#[test]
fn value_conversion() {
    assert_eq!(Val::from_value(&Value::Int(3)), Some(Val::Int(3)));
    assert_eq!(Val::from_value(&Value::Wildcard), None);
}

#[test]
fn clauses_at_risk_follow_writes() {
    let m = agency();
    let ids = |op: &str| -> Vec<String> {
        invariants_at_risk(&m, m.op(op).unwrap())
            .into_iter()
            .map(|i| m.invariants[i].id.clone())
            .collect()
    };
    assert_eq!(ids("choice"), ["c5", "c6"]);
    assert!(ids("bookRoom").contains(&"c1".to_string()));
}

#[test]
fn subset_check_agrees_on_clean_states() {
    let m = agency();
    let mut frontier = initial_states(&m).unwrap();
    let mut compared = 0;
    for _ in 0..5 {
        let mut next: Vec<State> = Vec::new();
        for s in &frontier {
            for (e, succ) in all_successors(&m, s).unwrap() {
                let risky = invariants_at_risk(&m, m.op(&e.name).unwrap());
                let full = check_invariants(&m, &succ);
                assert_eq!(check_invariant_subset(&m, &succ, &risky), full, "{e}");
                compared += 1;
                if full.is_empty() && !next.contains(&succ) && next.len() < 200 {
                    next.push(succ);
                }
            }
        }
        frontier = next;
    }
    assert!(compared > 500);
}
