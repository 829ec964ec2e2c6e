//! Seeded random generators for components, assemblies and predicates.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use kmelia::expr::{BinOp, Expr, SemType};
use kmelia::model::{
    Action, Behavior, ChannelRef, Communication, Component, Dependency, Direction, Label, Param, ServiceKind,
    ServiceSpec, Signature, StateId, Transition,
};
use kmelia::syntax::parse_component_file;
use kmelia::{link, Assembly, Link, ServiceKey};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn pick<'a, T>(rng: &mut StdRng, xs: &'a [T]) -> &'a T {
    xs.choose(rng).expect("non-empty choice")
}

/// Random expression of type `ty` with tree depth at most `depth`.
pub fn expr(rng: &mut StdRng, ty: SemType, ints: &[String], bools: &[String], depth: usize) -> Expr {
    let leaf = depth <= 1 || rng.gen_bool(0.3);
    match ty {
        SemType::Int => {
            if leaf {
                if !ints.is_empty() && rng.gen_bool(0.5) {
                    Expr::var(pick(rng, ints).clone())
                } else {
                    Expr::Int(rng.gen_range(0..20))
                }
            } else if rng.gen_bool(0.15) {
                Expr::minus(expr(rng, SemType::Int, ints, bools, depth - 1))
            } else {
                let op = *pick(rng, &[BinOp::Add, BinOp::Sub, BinOp::Mul]);
                Expr::binary(
                    op,
                    expr(rng, SemType::Int, ints, bools, depth - 1),
                    expr(rng, SemType::Int, ints, bools, depth - 1),
                )
            }
        }
        SemType::Bool => {
            if leaf {
                if !bools.is_empty() && rng.gen_bool(0.5) {
                    Expr::var(pick(rng, bools).clone())
                } else {
                    Expr::Bool(rng.gen())
                }
            } else {
                match rng.gen_range(0..3) {
                    0 => Expr::negation(expr(rng, SemType::Bool, ints, bools, depth - 1)),
                    1 => {
                        let op = *pick(rng, &[BinOp::And, BinOp::Or]);
                        Expr::binary(
                            op,
                            expr(rng, SemType::Bool, ints, bools, depth - 1),
                            expr(rng, SemType::Bool, ints, bools, depth - 1),
                        )
                    }
                    _ => {
                        let op = *pick(rng, &[BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge]);
                        Expr::binary(
                            op,
                            expr(rng, SemType::Int, ints, bools, depth - 1),
                            expr(rng, SemType::Int, ints, bools, depth - 1),
                        )
                    }
                }
            }
        }
    }
}

fn ty(rng: &mut StdRng) -> SemType {
    if rng.gen_bool(0.7) {
        SemType::Int
    } else {
        SemType::Bool
    }
}

fn names(rng: &mut StdRng, pool: &[&str], max: usize) -> BTreeSet<String> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| pick(rng, pool).to_string()).collect()
}

fn label(rng: &mut StdRng, vars: &[Param], depth: usize) -> Label {
    let ints: Vec<String> = vars.iter().filter(|p| p.ty == SemType::Int).map(|p| p.name.clone()).collect();
    let bools: Vec<String> = vars.iter().filter(|p| p.ty == SemType::Bool).map(|p| p.name.clone()).collect();
    let guard = rng
        .gen_bool(0.3)
        .then(|| expr(rng, SemType::Bool, &ints, &bools, depth));
    let mut actions = Vec::new();
    for _ in 0..rng.gen_range(0..=3) {
        if !vars.is_empty() && rng.gen_bool(0.5) {
            let v = pick(rng, vars).clone();
            actions.push(Action::Assign {
                value: expr(rng, v.ty, &ints, &bools, depth),
                target: v.name,
            });
        } else {
            let channel = match rng.gen_range(0..4) {
                0 => ChannelRef::Caller,
                1 => ChannelRef::SelfChannel,
                _ => ChannelRef::Named(pick(rng, &["ch", "link", "q1"]).to_string()),
            };
            let direction = *pick(rng, &[Direction::Send, Direction::Receive, Direction::Call, Direction::Await]);
            let n = rng.gen_range(0..=2);
            let args = if direction.binds() {
                if vars.is_empty() {
                    Vec::new()
                } else {
                    (0..n).map(|_| Expr::var(pick(rng, vars).name.clone())).collect()
                }
            } else {
                (0..n)
                    .map(|_| {
                        let t = ty(rng);
                        expr(rng, t, &ints, &bools, depth)
                    })
                    .collect()
            };
            actions.push(Action::Comm(Communication {
                channel,
                direction,
                message: pick(rng, &["m", "ask", "reply", "s0", "s1"]).to_string(),
                args,
            }));
        }
    }
    Label::new(guard, actions)
}

fn behavior(rng: &mut StdRng, vars: &[Param], subs: &[String], depth: usize) -> Behavior {
    let n = rng.gen_range(1..=5);
    let states: Vec<StateId> = (0..n).map(|i| StateId(format!("st{i}"))).collect();
    let mut b = Behavior {
        states: states.iter().cloned().collect(),
        transitions: Vec::new(),
        annotations: BTreeMap::new(),
        initial: states[0].clone(),
        finals: BTreeSet::new(),
    };
    b.finals.insert(pick(rng, &states).clone());
    if rng.gen_bool(0.3) {
        b.finals.insert(pick(rng, &states).clone());
    }
    for _ in 0..rng.gen_range(0..=6) {
        let s = pick(rng, &states).clone();
        let t = pick(rng, &states).clone();
        b.transitions.push(Transition::new(s, label(rng, vars, depth), t));
    }
    if !subs.is_empty() && rng.gen_bool(0.3) {
        let s = pick(rng, &states).clone();
        b.annotations.insert(s, [pick(rng, subs).clone()].into());
    }
    b
}

/// A random well-formed component whose expressions have depth at most
/// `depth`.
pub fn component(rng: &mut StdRng, index: usize, depth: usize) -> Component {
    let n = rng.gen_range(1..=4);
    let svc_names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut c = Component::new(format!("Comp{index}"));
    for name in &svc_names {
        match rng.gen_range(0..5) {
            0 => {
                c.required.insert(name.clone());
            }
            1 => {}
            _ => {
                c.provided.insert(name.clone());
            }
        }
    }
    for name in &svc_names {
        let params: Vec<Param> = (0..rng.gen_range(0..=3))
            .map(|i| Param::new(format!("p{i}"), ty(rng)))
            .collect();
        let locals: Vec<Param> = (0..rng.gen_range(0..=2))
            .map(|i| Param::new(format!("l{i}"), ty(rng)))
            .collect();
        let mut sig = Signature::new(name.clone());
        sig.params = params.clone();
        sig.result = rng.gen_bool(0.4).then(|| ty(rng));
        let mut spec = ServiceSpec::new(sig, c.interface_kind(name));
        let vars: Vec<Param> = params.iter().chain(&locals).cloned().collect();
        let ints: Vec<String> = vars.iter().filter(|p| p.ty == SemType::Int).map(|p| p.name.clone()).collect();
        let bools: Vec<String> = vars.iter().filter(|p| p.ty == SemType::Bool).map(|p| p.name.clone()).collect();
        spec.locals = locals;
        spec.dependency = Dependency {
            subs: names(rng, &["s1", "s2", "aux"], 2),
            cals: names(rng, &["back", "s3"], 1),
            reqs: names(rng, &["s0", "s2", "ext"], 2),
            ints: names(rng, &["log", "s1"], 1),
        };
        spec.properties = names(rng, &["fast", "safe", "cheap"], 2).into_iter().collect();
        if rng.gen_bool(0.5) {
            spec.precondition = expr(rng, SemType::Bool, &ints, &bools, depth);
        }
        if rng.gen_bool(0.5) {
            spec.postcondition = expr(rng, SemType::Bool, &ints, &bools, depth);
        }
        let others: Vec<String> = svc_names.iter().filter(|s| *s != name).cloned().collect();
        if rng.gen_bool(0.8) {
            spec.behavior = behavior(rng, &vars, &others, depth);
        }
        c.services.insert(name.clone(), spec);
    }
    c
}

/// A component whose service `main` nests sub-services up to `levels`
/// deep through state annotations. Labels are distinct sends so traces
/// identify the transitions taken.
pub fn nested_component(rng: &mut StdRng, levels: usize) -> Component {
    let mut counter = 0;
    let mut c = Component::new("Nest");
    let mut level_names: Vec<Vec<String>> = vec![vec!["main".to_string()]];
    for l in 1..=levels {
        let k = rng.gen_range(1..=2);
        level_names.push((0..k).map(|i| format!("sub{l}x{i}")).collect());
    }
    for (l, svcs) in level_names.iter().enumerate() {
        for name in svcs {
            let n = rng.gen_range(1..=3);
            let states: Vec<StateId> = (0..n).map(|i| StateId(format!("q{i}"))).collect();
            let mut b = Behavior {
                states: states.iter().cloned().collect(),
                transitions: Vec::new(),
                annotations: BTreeMap::new(),
                initial: states[0].clone(),
                finals: [pick(rng, &states).clone()].into(),
            };
            for _ in 0..rng.gen_range(1..=4) {
                counter += 1;
                let label = Label::new(
                    None,
                    vec![Action::Comm(Communication {
                        channel: ChannelRef::Named("c".into()),
                        direction: Direction::Send,
                        message: format!("m{counter}"),
                        args: Vec::new(),
                    })],
                );
                let s = pick(rng, &states).clone();
                let t = pick(rng, &states).clone();
                b.transitions.push(Transition::new(s, label, t));
            }
            if let Some(next) = level_names.get(l + 1) {
                let s = pick(rng, &states).clone();
                let mut subs: BTreeSet<String> = [pick(rng, next).clone()].into();
                if rng.gen_bool(0.3) {
                    subs.insert(pick(rng, next).clone());
                }
                b.annotations.insert(s, subs);
            }
            let mut spec = ServiceSpec::new(Signature::new(name.clone()), ServiceKind::Provided);
            spec.behavior = b;
            c = c.with_service(spec);
        }
    }
    c
}

/// Random three-party assembly: `A.p(x)` talks to `B.q` on `c1` and
/// optionally to `C.r` on `c2`. The two sides start from matching
/// protocols, which are then perturbed and given extra random edges, so
/// both well-behaved and deadlocking assemblies come out. Assignments keep
/// values bounded so the concrete state space stays finite.
pub fn assembly(rng: &mut StdRng) -> (Assembly, ServiceKey, i64) {
    let with_c = rng.gen_bool(0.5);
    let mut a_spine: Vec<&str> = vec!["c1!!q(x)"];
    let mut b_spine: Vec<&str> = Vec::new();
    if rng.gen_bool(0.7) {
        b_spine.push("CALLER??q(v)");
    }
    for _ in 0..rng.gen_range(0..=3) {
        match rng.gen_range(0..5) {
            0 => {
                a_spine.push("c1!m(y)");
                b_spine.push("CALLER?m(w)");
            }
            1 => {
                a_spine.push("c1?n(z)");
                b_spine.push("CALLER!n(v)");
            }
            2 => a_spine.push("y := 1 - y"),
            3 => b_spine.push("w := 1 - w"),
            _ => {
                a_spine.push("[x > 0] c1!m(x)");
                b_spine.push("CALLER?m(w)");
            }
        }
    }
    let mut c_spine = vec![""];
    if with_c && rng.gen_bool(0.8) {
        a_spine.push("c2!!r()");
        if rng.gen_bool(0.5) {
            a_spine.push("c2?k()");
            c_spine = vec!["CALLER!k()"];
        }
    }
    b_spine.push(*pick(rng, &["CALLER!!q(w)", "CALLER!!q(v)"]));
    a_spine.push("c1??q(y)");

    let mut a_pool = vec![
        "c1!!q(x)", "c1!!q(y)", "c1??q(y)", "c1!m(y)", "c1?n(z)", "y := 1 - y", "y := x", "z := 2", "",
        "[y > 0] c1!m(x)", "[x = 1] y := 0", "[z <> 2]",
    ];
    if with_c {
        a_pool.extend(["c2!!r()", "c2?k()", "c2!j()"]);
    }
    let b_pool = [
        "CALLER!!q(v)", "CALLER!!q(w)", "CALLER?m(w)", "CALLER!n(v)", "w := v", "w := 1 - w", "",
        "[w > 0] CALLER!n(w)", "CALLER??q(v)",
    ];
    let c_pool = ["CALLER!k()", "CALLER?j()", "", "CALLER!k(); CALLER?j()"];

    let mut src = String::new();
    src.push_str(&format!(
        "COMPONENT A PROVIDES p REQUIRES q{}\n  SERVICE p(x: int) VARIABLES y: int, z: int\n{}  END\n  SERVICE q(v: int): int END\n{}END\n",
        if with_c { ", r" } else { "" },
        behavior_text(rng, a_spine, &a_pool),
        if with_c { "  SERVICE r() END\n" } else { "" },
    ));
    src.push_str(&format!(
        "COMPONENT B PROVIDES q\n  SERVICE q(v: int): int VARIABLES w: int\n{}  END\nEND\n",
        behavior_text(rng, b_spine, &b_pool)
    ));
    let mut links = vec![Link::new("c1", ServiceKey::new("A", "q"), ServiceKey::new("B", "q"))];
    if with_c {
        src.push_str(&format!(
            "COMPONENT C PROVIDES r\n  SERVICE r()\n{}  END\nEND\n",
            behavior_text(rng, c_spine, &c_pool)
        ));
        links.push(Link::new("c2", ServiceKey::new("A", "r"), ServiceKey::new("C", "r")));
    }
    let components = parse_component_file(&src).unwrap_or_else(|e| panic!("generated source: {e}\n{src}"));
    let a = link(components, links).unwrap_or_else(|e| panic!("generated links: {e}\n{src}"));
    (a, ServiceKey::new("A", "p"), rng.gen_range(0..3))
}

/// A BEHAVIOUR block following `spine` from `t0` to the final state, with
/// at most one step of the spine replaced or dropped and a few extra edges
/// drawn from `pool`.
fn behavior_text<'a>(rng: &mut StdRng, mut spine: Vec<&'a str>, pool: &[&'a str]) -> String {
    match rng.gen_range(0..8) {
        0 if spine.len() > 1 => {
            let i = rng.gen_range(0..spine.len());
            spine.remove(i);
        }
        1 => {
            let i = rng.gen_range(0..spine.len());
            spine[i] = pick(rng, pool);
        }
        _ => {}
    }
    let n = spine.len();
    let mut out = format!("    BEHAVIOUR\n      INIT t0\n      FINAL t{n}");
    if rng.gen_bool(0.2) {
        out.push_str(&format!(", t{}", rng.gen_range(0..n)));
    }
    out.push('\n');
    for (i, l) in spine.iter().enumerate() {
        out.push_str(&format!("      t{i} --- {l} ---> t{}\n", i + 1));
    }
    for _ in 0..rng.gen_range(0..=1) {
        let s = rng.gen_range(0..=n);
        let t = rng.gen_range(0..=n);
        out.push_str(&format!("      t{s} --- {} ---> t{t}\n", pick(rng, pool)));
    }
    out
}

/// Random predicate over `vars` for the entailment checks.
pub fn predicate(rng: &mut StdRng, vars: &[String], depth: usize) -> Expr {
    let atom = |rng: &mut StdRng| {
        let op = *pick(rng, &[BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge]);
        let lhs = if rng.gen_bool(0.3) {
            Expr::binary(BinOp::Add, Expr::var(pick(rng, vars).clone()), Expr::var(pick(rng, vars).clone()))
        } else {
            Expr::var(pick(rng, vars).clone())
        };
        Expr::binary(op, lhs, Expr::Int(rng.gen_range(-6..=6)))
    };
    if depth <= 1 || rng.gen_bool(0.35) {
        return atom(rng);
    }
    match rng.gen_range(0..3) {
        0 => Expr::negation(predicate(rng, vars, depth - 1)),
        1 => Expr::binary(BinOp::And, predicate(rng, vars, depth - 1), predicate(rng, vars, depth - 1)),
        _ => Expr::binary(BinOp::Or, predicate(rng, vars, depth - 1), predicate(rng, vars, depth - 1)),
    }
}
