//! Whole-corpus checks shared by the acceptance runner and the focused
//! test files. Each returns a one-line summary or a description of the
//! first failure.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;

use kmelia::analysis::{detect_deadlocks, synchronized_product, ProductLts, ProductOptions};
use kmelia::expr::{AbstractStore, AbstractValue, SemType, Store, Value};
use kmelia::flatten::{flatten_behavior, DEFAULT_DEPTH_LIMIT};
use kmelia::registry::{entails, Binding, Query, Registry, RegistryError, ServiceDescriptor, ENTAILMENT_DOMAIN};
use kmelia::semantics::ProductState;
use kmelia::sim::{self, init_session, ContractKind, Outcome, TraceKind};
use kmelia::syntax::{parse_component_file, render_component, render_components, SourceFile};
use kmelia::{Assembly, ServiceKey};

use super::gen;
use super::oracle::{flatten_mismatch, implies_exhaustive, naive_product};

pub type Check = Result<String, String>;

pub const ROUNDTRIP_COMPONENTS: usize = 500;
pub const ROUNDTRIP_LIMIT: Duration = Duration::from_secs(10);
pub const FLATTEN_FIXTURES: usize = 60;
pub const TRACE_LENGTH: usize = 8;
pub const PRODUCT_STATE_CAP: usize = 10_000;
pub const PRODUCT_LIMIT: Duration = Duration::from_secs(30);
pub const RANDOM_ASSEMBLIES: u64 = 120;
pub const SEEDS: u64 = 100;
pub const REGISTRY_OPS: usize = 1000;
pub const ENTAILMENT_PAIRS: usize = 200;
pub const SUITE_LIMIT: Duration = Duration::from_secs(60);

pub fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn key(s: &str) -> ServiceKey {
    s.parse().expect("service key")
}

/// An assembly with an entry point and, optionally, concrete entry arguments.
pub struct Fixture {
    pub name: String,
    pub assembly: Assembly,
    pub entry: ServiceKey,
    pub args: Option<Store>,
    pub deadlock: Option<bool>,
}

impl Fixture {
    pub fn abstract_args(&self) -> AbstractStore {
        self.args
            .iter()
            .flatten()
            .map(|(k, v)| (k.clone(), AbstractValue::Known(*v)))
            .collect()
    }

    /// Arguments for a concrete run: the given ones, zero/false otherwise.
    pub fn concrete_args(&self) -> Store {
        let mut out = self.args.clone().unwrap_or_default();
        let spec = self.assembly.service(&self.entry).expect("entry exists");
        for p in &spec.signature.params {
            out.entry(p.name.clone()).or_insert(p.ty.default_value());
        }
        out
    }

    pub fn product(&self) -> ProductLts {
        let opts = ProductOptions {
            entry_args: self.abstract_args(),
            ..ProductOptions::default()
        };
        synchronized_product(&self.assembly, &self.entry, &opts).expect("fixture product")
    }
}

/// The deadlock corpus with its recorded statuses.
pub fn deadlock_corpus() -> Vec<Fixture> {
    let dir = corpus().join("deadlock");
    let text = std::fs::read_to_string(dir.join("expected.json")).expect("expected.json");
    let entries: Vec<serde_json::Value> = serde_json::from_str(&text).expect("expected.json parses");
    entries
        .iter()
        .map(|e| {
            let file = e["assembly"].as_str().expect("assembly");
            let args = e.get("args").map(|a| {
                a.as_object()
                    .expect("args object")
                    .iter()
                    .map(|(k, v)| {
                        let v = match v {
                            serde_json::Value::Bool(b) => Value::Bool(*b),
                            other => Value::Int(other.as_i64().expect("int arg")),
                        };
                        (k.clone(), v)
                    })
                    .collect()
            });
            Fixture {
                name: match &args {
                    Some(a) => format!("{file} {a:?}"),
                    None => file.to_string(),
                },
                assembly: Assembly::load(&dir.join(file)).unwrap_or_else(|err| panic!("{file}: {err}")),
                entry: key(e["entry"].as_str().expect("entry")),
                args,
                deadlock: e["deadlock"].as_bool(),
            }
        })
        .collect()
}

pub fn random_fixtures(n: u64) -> Vec<Fixture> {
    (0..n)
        .map(|seed| {
            let mut rng = gen::rng(0xA55E_0000 + seed);
            let (assembly, entry, x) = gen::assembly(&mut rng);
            Fixture {
                name: format!("random assembly #{seed}"),
                assembly,
                entry,
                args: Some(Store::from([("x".to_string(), Value::Int(x))])),
                deadlock: None,
            }
        })
        .collect()
}

/// Corpus fixtures plus generated ones, each with abstract (no args) and
/// concrete variants where the corpus gives arguments.
pub fn all_fixtures() -> Vec<Fixture> {
    let mut out = deadlock_corpus();
    out.extend(random_fixtures(RANDOM_ASSEMBLIES));
    for f in deadlock_corpus().into_iter().chain(random_fixtures(RANDOM_ASSEMBLIES)) {
        if f.args.is_some() {
            out.push(Fixture {
                name: format!("{} (abstract)", f.name),
                args: None,
                ..f
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------

pub fn parser_roundtrip() -> Check {
    let started = Instant::now();
    for i in 0..ROUNDTRIP_COMPONENTS {
        let mut rng = gen::rng(i as u64);
        let c = gen::component(&mut rng, i, 4);
        let text = render_component(&c);
        let first = parse_component_file(&text).map_err(|e| format!("component #{i} does not parse: {e}\n{text}"))?;
        let again = parse_component_file(&render_components(&first))
            .map_err(|e| format!("component #{i}: rendered form does not parse: {e}"))?;
        if first != again {
            return Err(format!("component #{i}: parse(render(parse(t))) differs from parse(t)\n{text}"));
        }
    }
    let took = started.elapsed();
    if took > ROUNDTRIP_LIMIT {
        return Err(format!("{ROUNDTRIP_COMPONENTS} components took {took:.1?}, limit {ROUNDTRIP_LIMIT:?}"));
    }
    Ok(format!("{ROUNDTRIP_COMPONENTS}/{ROUNDTRIP_COMPONENTS} components round-trip in {took:.1?}"))
}

pub fn flatten_oracle() -> Check {
    let mut nested = 0;
    for i in 0..FLATTEN_FIXTURES {
        let mut rng = gen::rng(0xF1A7 + i as u64);
        let levels = 1 + i % 3;
        let c = gen::nested_component(&mut rng, levels);
        let flat = flatten_behavior(&c, "main", DEFAULT_DEPTH_LIMIT).map_err(|e| format!("fixture #{i}: {e}"))?;
        if flat.transitions.iter().any(|t| t.label.is_enter_exit()) {
            nested += 1;
        }
        if let Some(word) = flatten_mismatch(&c, "main", &flat, TRACE_LENGTH) {
            return Err(format!(
                "fixture #{i}: only one side performs {word:?}\n{}",
                render_component(&c)
            ));
        }
    }
    Ok(format!(
        "{FLATTEN_FIXTURES} fixtures ({nested} with inlined sub-services), trace sets up to length {TRACE_LENGTH} equal"
    ))
}

pub fn product_oracle() -> Check {
    let started = Instant::now();
    let mut compared = 0;
    let mut states = 0;
    for f in all_fixtures() {
        let naive = naive_product(&f.assembly, &f.entry, &f.abstract_args());
        if naive.states.len() > PRODUCT_STATE_CAP {
            continue;
        }
        let p = f.product();
        let got_states: BTreeSet<ProductState> = p.states.iter().cloned().collect();
        if got_states != naive.states {
            return Err(format!(
                "{}: {} states, enumerator found {}",
                f.name,
                got_states.len(),
                naive.states.len()
            ));
        }
        let got_edges: BTreeSet<_> = p
            .transitions
            .iter()
            .map(|(a, l, b)| (p.states[*a].clone(), l.clone(), p.states[*b].clone()))
            .collect();
        if got_edges != naive.edges || got_edges.len() != p.transitions.len() {
            let extra: Vec<String> = got_edges
                .difference(&naive.edges)
                .take(2)
                .map(|(a, l, b)| format!("{a} -{l}-> {b}"))
                .collect();
            let missing: Vec<String> = naive
                .edges
                .difference(&got_edges)
                .take(2)
                .map(|(a, l, b)| format!("{a} -{l}-> {b}"))
                .collect();
            return Err(format!("{}: transitions differ; extra {extra:?}, missing {missing:?}", f.name));
        }
        compared += 1;
        states += naive.states.len();
    }
    let took = started.elapsed();
    if took > PRODUCT_LIMIT {
        return Err(format!("{compared} assemblies took {took:.1?}, limit {PRODUCT_LIMIT:?}"));
    }
    Ok(format!("{compared} assemblies ({states} states) identical to the enumerator in {took:.1?}"))
}

pub fn deadlock_corpus_check() -> Check {
    let corpus = deadlock_corpus();
    let (mut fp, mut fneg) = (Vec::new(), Vec::new());
    for f in &corpus {
        let expected = f.deadlock.expect("corpus entries record their status");
        let exhaustive = !naive_product(&f.assembly, &f.entry, &f.abstract_args()).stuck.is_empty();
        if exhaustive != expected {
            return Err(format!("{}: recorded status {expected} but exhaustive search says {exhaustive}", f.name));
        }
        let found = !detect_deadlocks(&f.product()).is_empty();
        match (found, expected) {
            (true, false) => fp.push(f.name.clone()),
            (false, true) => fneg.push(f.name.clone()),
            _ => {}
        }
    }
    if !fp.is_empty() || !fneg.is_empty() {
        return Err(format!("false positives {fp:?}, false negatives {fneg:?}"));
    }
    let deadlocking = corpus.iter().filter(|f| f.deadlock == Some(true)).count();
    Ok(format!(
        "{} assemblies ({deadlocking} deadlocking): 0 false positives, 0 false negatives",
        corpus.len()
    ))
}

pub fn contract_checks() -> Check {
    let booking = Assembly::load(&corpus().join("booking.json")).map_err(|e| e.to_string())?;
    let bad_day = Store::from([("day".to_string(), Value::Int(-1))]);
    for seed in 0..SEEDS {
        let run = sim::run(&booking, &key("Booking.book"), &bad_day, seed, 100).map_err(|e| e.to_string())?;
        let first = &run.trace[0];
        let pre = first.kind == TraceKind::ContractViolation
            && first.step == 0
            && first.violation.as_ref().is_some_and(|v| v.which == ContractKind::Pre);
        if !pre || run.outcome != Outcome::Violation {
            return Err(format!("seed {seed}: no precondition violation at step 0"));
        }
    }
    let contracts = Assembly::load(&corpus().join("contracts.json")).map_err(|e| e.to_string())?;
    let server = key("Server.compute");
    let mut reached = 0;
    for seed in 0..SEEDS {
        let run = sim::run(&contracts, &key("Client.main"), &Store::new(), seed, 100).map_err(|e| e.to_string())?;
        let finished = run.trace.iter().any(|e| {
            e.kind == TraceKind::Result && e.component.as_deref() == Some("Server")
        });
        if !finished {
            continue;
        }
        reached += 1;
        let post = run.trace.iter().any(|e| {
            e.kind == TraceKind::ContractViolation
                && e.violation
                    .as_ref()
                    .is_some_and(|v| v.which == ContractKind::Post && v.service == server.to_string())
        });
        if !post {
            return Err(format!("seed {seed}: Server.compute finished without a postcondition violation"));
        }
    }
    if reached == 0 {
        return Err("no run reached the server's final state".into());
    }
    Ok(format!(
        "pre violation at step 0 in {SEEDS}/{SEEDS} seeds; post violation in {reached}/{reached} runs reaching the final state"
    ))
}

pub fn sim_agreement() -> Check {
    let mut deadlocks = 0;
    let mut steps = 0;
    let mut fixtures = 0;
    for f in deadlock_corpus().into_iter().chain(random_fixtures(RANDOM_ASSEMBLIES / 2)) {
        let args = f.concrete_args();
        let concrete = Fixture {
            args: Some(args.clone()),
            ..f
        };
        let p = concrete.product();
        if p.truncated {
            continue;
        }
        fixtures += 1;
        let stuck: Vec<&ProductState> = detect_deadlocks(&p)
            .iter()
            .map(|v| &p.states[v.state.expect("deadlock state")])
            .collect();
        for seed in 0..SEEDS {
            let mut s = init_session(&concrete.assembly, &concrete.entry, &args, seed)
                .map_err(|e| format!("{}: {e}", concrete.name))?;
            while s.outcome().is_none() && s.step_count() < 200 {
                let before = s.current().clone();
                let mark = s.trace().len();
                s.step().map_err(|e| format!("{}: {e}", concrete.name))?;
                if s.trace()[mark..].iter().all(|e| e.kind == TraceKind::Terminated) {
                    break;
                }
                steps += 1;
                let after = s.current();
                let i = p.index_of(&before).ok_or_else(|| {
                    format!("{} seed {seed}: simulator visited {before}, absent from the product", concrete.name)
                })?;
                if !p.outgoing(i).any(|(_, _, j)| &p.states[*j] == after) {
                    return Err(format!(
                        "{} seed {seed}: simulator moved {before} -> {after}, not a product transition",
                        concrete.name
                    ));
                }
            }
            if s.outcome() == Some(Outcome::Deadlock) {
                deadlocks += 1;
                let end = s.current();
                if !stuck.iter().any(|d| d.covers(end)) {
                    return Err(format!(
                        "{} seed {seed}: simulator deadlocked at {end}, not among the analysis verdicts",
                        concrete.name
                    ));
                }
            }
        }
    }
    Ok(format!(
        "{fixtures} fixtures x {SEEDS} seeds: {deadlocks} simulated deadlocks all flagged, {steps} steps valid in the product"
    ))
}

pub fn determinism() -> Check {
    let a = Assembly::load(&corpus().join("booking.json")).map_err(|e| e.to_string())?;
    let args = Store::from([("day".to_string(), Value::Int(3))]);
    let once = sim::run(&a, &key("Booking.book"), &args, 7, 100).map_err(|e| e.to_string())?;
    let twice = sim::run(&a, &key("Booking.book"), &args, 7, 100).map_err(|e| e.to_string())?;
    let (x, y) = (once.to_json_lines(), twice.to_json_lines());
    if x != y {
        return Err("two runs with seed 7 differ".into());
    }
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/booking_seed7.trace");
    let golden = std::fs::read_to_string(&golden_path).map_err(|e| format!("{}: {e}", golden_path.display()))?;
    if golden != x {
        return Err("seed 7 trace differs from the golden file".into());
    }
    Ok(format!("seed 7 traces byte-identical ({} bytes) and equal to the golden file", x.len()))
}

/// Services the registry check draws from.
fn registry_pool() -> Vec<(kmelia::model::Component, String)> {
    let mut out = Vec::new();
    for file in ["calendar.kmelia", "counter.kmelia", "booking.kmelia"] {
        let src = SourceFile::load(&corpus().join(file)).expect("corpus parses");
        for c in src.components {
            for s in c.provided.clone() {
                out.push((c.clone(), s));
            }
        }
    }
    out
}

fn default_args(d: &ServiceDescriptor) -> Store {
    d.signature
        .params
        .iter()
        .map(|p| {
            let v = match p.ty {
                SemType::Int => Value::Int(1),
                SemType::Bool => Value::Bool(true),
            };
            (p.name.clone(), v)
        })
        .collect()
}

/// Whether every service called by pool entry `k`'s component has a live
/// provider elsewhere whose own requirements are met in turn.
fn satisfiable(
    pool: &[(kmelia::model::Component, String)],
    ids: &BTreeMap<String, (usize, bool)>,
    k: usize,
    seen: &mut Vec<usize>,
) -> bool {
    if seen.contains(&k) {
        return true;
    }
    seen.push(k);
    let c = &pool[k].0;
    c.required.iter().all(|r| {
        let want = &c.services[r].signature;
        ids.values().any(|&(j, live)| {
            let (other, s) = &pool[j];
            let got = &other.services[s].signature;
            live && other.name != c.name
                && got.name == want.name
                && got.result == want.result
                && got.params.iter().map(|p| p.ty).eq(want.params.iter().map(|p| p.ty))
                && satisfiable(pool, ids, j, seen)
        })
    })
}

/// Random operation sequences checked against a plain model of the
/// registry lifecycle.
pub fn registry_lifecycle(seed: u64, ops: usize) -> Check {
    let pool = registry_pool();
    let mut rng = gen::rng(seed);
    let mut reg = Registry::new();
    // model: id -> (pool index, live)
    let mut ids: BTreeMap<String, (usize, bool)> = BTreeMap::new();
    let mut bindings: Vec<(Binding, bool)> = Vec::new();
    let mut last_epoch = reg.epoch();
    let mut stale_seen = 0;
    let mut unresolved = 0;
    for step in 0..ops {
        let fail = |what: String| Err(format!("seed {seed} op {step}: {what}"));
        match rng.gen_range(0..6) {
            0 => {
                let k = rng.gen_range(0..pool.len());
                let (c, s) = &pool[k];
                let dup = ids.values().any(|(j, live)| *live && *j == k);
                match (reg.register(ServiceDescriptor::new(c, s).expect("pool service")), dup) {
                    (Ok(id), false) => {
                        if ids.contains_key(&id) {
                            return fail(format!("id {id} reused"));
                        }
                        ids.insert(id, (k, true));
                    }
                    (Err(RegistryError::DuplicateRegistration { .. }), true) => {}
                    (r, _) => return fail(format!("register: {r:?}, duplicate expected {dup}")),
                }
            }
            1 => {
                let name = pool[rng.gen_range(0..pool.len())].1.clone();
                let q = Query::builder().name(name.clone()).build().expect("query");
                let found: BTreeSet<String> = reg.discover(&q).into_iter().map(|d| d.id).collect();
                let want: BTreeSet<String> = ids
                    .iter()
                    .filter(|(_, (k, live))| *live && pool[*k].1 == name)
                    .map(|(id, _)| id.clone())
                    .collect();
                if found != want {
                    return fail(format!("discover {name}: {found:?}, live matches {want:?}"));
                }
            }
            2 => {
                let id = match ids.keys().nth(rng.gen_range(0..=ids.len())) {
                    Some(id) => id.clone(),
                    None => "svc-0".to_string(),
                };
                let live = ids.get(&id).is_some_and(|(_, l)| *l);
                match (reg.bind("client", &id), live) {
                    (Ok(b), true) => bindings.push((b, true)),
                    (Err(RegistryError::UnknownId(_)), false) => {}
                    (r, _) => return fail(format!("bind {id}: {r:?}, live {live}")),
                }
            }
            3 => {
                let Some(id) = ids.keys().nth(rng.gen_range(0..=ids.len())).cloned() else { continue };
                let live = ids[&id].1;
                match (reg.unregister(&id), live) {
                    (Ok(()), true) => ids.get_mut(&id).expect("known").1 = false,
                    (Err(RegistryError::UnknownId(_)), false) => {}
                    (r, _) => return fail(format!("unregister {id}: {r:?}, live {live}")),
                }
            }
            4 => {
                if bindings.is_empty() {
                    continue;
                }
                let (b, bound) = bindings[rng.gen_range(0..bindings.len())].clone();
                let dead = !ids[&b.descriptor_id].1;
                let args = ServiceDescriptor::new(&pool[ids[&b.descriptor_id].0].0, &pool[ids[&b.descriptor_id].0].1)
                    .map(|d| default_args(&d))
                    .expect("pool service");
                let r = reg.invoke(&b, &args, step as u64, 50);
                let ready = satisfiable(&pool, &ids, ids[&b.descriptor_id].0, &mut Vec::new());
                match (r, dead, bound) {
                    (Err(RegistryError::StaleBinding(_)), true, _) => stale_seen += 1,
                    (Err(RegistryError::UnknownBinding(_)), false, false) => {}
                    (Ok(_), false, true) if ready => {}
                    (Err(RegistryError::UnresolvedRequirement { .. }), false, true) if !ready => unresolved += 1,
                    (r, _, _) => return fail(format!("invoke {}: {r:?}, dead {dead}, bound {bound}", b.channel)),
                }
            }
            _ => {
                if bindings.is_empty() {
                    continue;
                }
                let k = rng.gen_range(0..bindings.len());
                let (b, bound) = bindings[k].clone();
                match (reg.unbind(&b), bound) {
                    (Ok(()), true) => bindings[k].1 = false,
                    (Err(RegistryError::UnknownBinding(_)), false) => {}
                    (r, _) => return fail(format!("unbind {}: {r:?}, bound {bound}", b.channel)),
                }
            }
        }
        // discovery never returns a dead descriptor
        let everything = Query::builder().name("*").build().expect("query");
        for d in reg.discover(&everything) {
            if !ids.get(&d.id).is_some_and(|(_, l)| *l) {
                return fail(format!("discover returned dead descriptor {}", d.id));
            }
        }
        for (b, _) in &bindings {
            if reg.is_stale(b) != !ids[&b.descriptor_id].1 {
                return fail(format!("staleness of {} disagrees with the model", b.channel));
            }
        }
        if reg.epoch() < last_epoch {
            return fail("epoch went backwards".into());
        }
        last_epoch = reg.epoch();
    }
    Ok(format!(
        "{ops} operations, {stale_seen} stale and {unresolved} unresolved invocations rejected"
    ))
}

pub fn entailment_oracle(seed: u64, pairs: usize) -> Check {
    let mut rng = gen::rng(seed);
    let vars: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let domain: Vec<i64> = ENTAILMENT_DOMAIN.collect();
    let mut held = 0;
    for i in 0..pairs {
        let a = gen::predicate(&mut rng, &vars, 3);
        // half the consequents are weakened antecedents, so entailment holds often
        let b = if rng.gen_bool(0.5) {
            kmelia::expr::Expr::binary(kmelia::expr::BinOp::Or, a.clone(), gen::predicate(&mut rng, &vars, 2))
        } else {
            gen::predicate(&mut rng, &vars, 3)
        };
        let want = implies_exhaustive(&a, &b, &vars, &domain);
        let got = entails(&a, &b, &BTreeMap::new());
        if want != got {
            return Err(format!("pair #{i}: `{a}` => `{b}`: matcher {got}, exhaustive {want}"));
        }
        held += want as usize;
    }
    Ok(format!("{pairs} pairs agree ({held} entailments)"))
}

pub fn registry_checks() -> Check {
    let life = registry_lifecycle(0x5EED, REGISTRY_OPS)?;
    let ent = entailment_oracle(0xE7A1, ENTAILMENT_PAIRS)?;
    Ok(format!("{life}; entailment: {ent}"))
}
