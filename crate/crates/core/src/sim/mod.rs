//! Seeded execution of an assembly with runtime contract checking.
//!
//! Each step picks one enabled move uniformly with a [`SplitMix64`]
//! generator (`index = next_u64() % moves`), so a seed fixes the whole
//! trace. Preconditions are checked when a session starts and when a call
//! activates a service; a failing precondition halts the run. Postconditions
//! are checked when a service returns or the run terminates; by default a
//! failing postcondition is reported and the run continues.

mod rng;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::assembly::{Assembly, ServiceKey};
use crate::expr::{eval_abstract, AbstractStore, AbstractValue, Expr, Ident, Store, Value};
use crate::semantics::{Effect, Move, ProductState, Semantics, SemanticsError, SyncKind, SyncLabel};

pub use rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TraceKind {
    Internal,
    Send,
    Receive,
    Call,
    Start,
    Result,
    ContractViolation,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractKind {
    Pre,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContractViolation {
    pub service: String,
    pub which: ContractKind,
    pub predicate_text: String,
    pub store: AbstractStore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Deadlock,
    Violation,
    StepBudgetExhausted,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Success => "success",
            Outcome::Deadlock => "deadlock",
            Outcome::Violation => "violation",
            Outcome::StepBudgetExhausted => "step_budget_exhausted",
        })
    }
}

/// One trace line. `store_delta` maps each changed variable to its old and
/// new value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub step: usize,
    pub kind: TraceKind,
    pub component: Option<Ident>,
    pub service: Option<Ident>,
    pub channel: Option<Ident>,
    pub message: Option<Ident>,
    pub store_delta: BTreeMap<Ident, (AbstractValue, AbstractValue)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<ContractViolation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("`{0}` is not a provided service of the assembly")]
    UnknownEntry(String),
    #[error("missing argument `{0}`")]
    MissingArgument(Ident),
    #[error("`{0}` is not a parameter of the entry service")]
    UnexpectedArgument(Ident),
    #[error("argument `{name}` must be {expected}")]
    ArgumentType { name: Ident, expected: String },
    #[error("session already finished")]
    Finished,
    #[error("replay diverged at step {step}: no enabled move labelled {label}")]
    ReplayDiverged { step: usize, label: String },
    #[error(transparent)]
    Semantics(SemanticsError),
}

impl From<SemanticsError> for SimError {
    fn from(e: SemanticsError) -> Self {
        match e {
            SemanticsError::UnknownEntry(k) => SimError::UnknownEntry(k),
            other => SimError::Semantics(other),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    /// Halt the run on the first postcondition violation.
    pub fatal_post: bool,
}

#[derive(Debug, Clone)]
pub struct SimSession {
    sem: Semantics,
    entry: ServiceKey,
    current: ProductState,
    seed: u64,
    rng: SplitMix64,
    trace: Vec<TraceEvent>,
    /// Moves taken so far.
    step_count: usize,
    options: SimOptions,
    violated: bool,
    finished: Option<Outcome>,
}

pub fn init_session(a: &Assembly, entry: &ServiceKey, args: &Store, seed: u64) -> Result<SimSession, SimError> {
    init_session_with(a, entry, args, seed, SimOptions::default())
}

pub fn init_session_with(
    a: &Assembly,
    entry: &ServiceKey,
    args: &Store,
    seed: u64,
    options: SimOptions,
) -> Result<SimSession, SimError> {
    let sem = Semantics::new(a.clone())?;
    let abstract_args: AbstractStore = args.iter().map(|(k, v)| (k.clone(), AbstractValue::Known(*v))).collect();
    let current = sem.initial(entry, &abstract_args)?;
    let spec = &sem.service(entry).expect("initial checked the entry").spec;
    for p in &spec.signature.params {
        match args.get(&p.name) {
            None => return Err(SimError::MissingArgument(p.name.clone())),
            Some(v) if v.ty() != p.ty => {
                return Err(SimError::ArgumentType {
                    name: p.name.clone(),
                    expected: p.ty.to_string(),
                })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = args.keys().find(|k| !spec.signature.params.iter().any(|p| &p.name == *k)) {
        return Err(SimError::UnexpectedArgument(extra.clone()));
    }
    let pre = spec.precondition.clone();
    let mut s = SimSession {
        sem,
        entry: entry.clone(),
        current,
        seed,
        rng: SplitMix64::new(seed),
        trace: Vec::new(),
        step_count: 0,
        options,
        violated: false,
        finished: None,
    };
    let store = s.current.active[entry].store.clone();
    if let Some(v) = check(entry, ContractKind::Pre, &pre, &store) {
        s.push_violation(entry, v);
        s.finished = Some(Outcome::Violation);
    }
    Ok(s)
}

fn check(service: &ServiceKey, which: ContractKind, pred: &Expr, store: &AbstractStore) -> Option<ContractViolation> {
    (eval_abstract(pred, store) == AbstractValue::Known(Value::Bool(false))).then(|| ContractViolation {
        service: service.to_string(),
        which,
        predicate_text: pred.to_string(),
        store: store.clone(),
    })
}

fn delta(prev: Option<&AbstractStore>, next: Option<&AbstractStore>) -> BTreeMap<Ident, (AbstractValue, AbstractValue)> {
    let Some(next) = next else { return BTreeMap::new() };
    next.iter()
        .filter_map(|(k, v)| {
            let old = prev.and_then(|p| p.get(k)).copied().unwrap_or(AbstractValue::Unknown);
            (old != *v).then(|| (k.clone(), (old, *v)))
        })
        .collect()
}

impl SimSession {
    pub fn current(&self) -> &ProductState {
        &self.current
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entry(&self) -> &ServiceKey {
        &self.entry
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.finished
    }

    pub fn semantics(&self) -> &Semantics {
        &self.sem
    }

    pub fn enabled_moves(&self) -> Vec<Move> {
        self.sem.successors(&self.current).moves
    }

    /// Takes one move chosen by the session generator and returns the events
    /// it produced. With no move enabled, emits the Terminated event instead.
    pub fn step(&mut self) -> Result<Vec<TraceEvent>, SimError> {
        if self.finished.is_some() {
            return Err(SimError::Finished);
        }
        let start = self.trace.len();
        let mut moves = self.enabled_moves();
        if moves.is_empty() {
            self.terminate();
        } else {
            let i = self.rng.below(moves.len());
            let mv = moves.swap_remove(i);
            self.apply(mv);
        }
        Ok(self.trace[start..].to_vec())
    }

    /// Takes the enabled move carrying exactly `label`.
    pub fn step_label(&mut self, label: &SyncLabel) -> Result<Vec<TraceEvent>, SimError> {
        if self.finished.is_some() {
            return Err(SimError::Finished);
        }
        let start = self.trace.len();
        let mv = self
            .enabled_moves()
            .into_iter()
            .find(|m| &m.label == label)
            .ok_or_else(|| SimError::ReplayDiverged {
                step: self.step_count,
                label: label.to_string(),
            })?;
        self.apply(mv);
        Ok(self.trace[start..].to_vec())
    }

    fn event(&self, kind: TraceKind, key: Option<&ServiceKey>) -> TraceEvent {
        TraceEvent {
            step: self.trace.len(),
            kind,
            component: key.map(|k| k.component.clone()),
            service: key.map(|k| k.service.clone()),
            channel: None,
            message: None,
            store_delta: BTreeMap::new(),
            violation: None,
            outcome: None,
        }
    }

    fn push_violation(&mut self, key: &ServiceKey, v: ContractViolation) {
        let mut e = self.event(TraceKind::ContractViolation, Some(key));
        e.violation = Some(v);
        self.trace.push(e);
        self.violated = true;
    }

    fn apply(&mut self, mv: Move) {
        let prev = std::mem::replace(&mut self.current, mv.next);
        self.step_count += 1;
        let label = &mv.label;
        // the store a service had right before it was deactivated
        let final_store = |key: &ServiceKey| {
            mv.effects.iter().find_map(|e| match e {
                Effect::Deactivated { service, store } if service == key => Some(store),
                _ => None,
            })
        };
        // store a newly activated service starts from, before its start transition
        let starts: BTreeMap<ServiceKey, AbstractStore> = mv
            .effects
            .iter()
            .filter_map(|e| match e {
                Effect::Activated { service, args, .. } => {
                    let svc = self.sem.service(service)?;
                    let mut s = svc.initial_store();
                    for (i, p) in svc.spec.signature.params.iter().enumerate() {
                        s.insert(p.name.clone(), args.get(i).copied().unwrap_or(AbstractValue::Unknown));
                    }
                    Some((service.clone(), s))
                }
                _ => None,
            })
            .collect();
        let kinds: &[TraceKind] = match label.kind {
            SyncKind::Internal => &[TraceKind::Internal],
            SyncKind::Message => &[TraceKind::Send, TraceKind::Receive],
            SyncKind::Call => &[TraceKind::Call, TraceKind::Start],
            SyncKind::Result if label.participants.len() == 1 => &[TraceKind::Result],
            SyncKind::Result => &[TraceKind::Result, TraceKind::Receive],
            SyncKind::Start => &[TraceKind::Start],
        };
        for (p, kind) in label.participants.iter().zip(kinds) {
            let key = &p.service;
            let mut e = self.event(*kind, Some(key));
            if label.kind != SyncKind::Internal {
                e.channel = Some(label.channel.clone());
                e.message = Some(label.message.clone());
            }
            let before = prev.active.get(key).map(|a| a.store.clone()).or_else(|| starts.get(key).cloned());
            let after = self
                .current
                .active
                .get(key)
                .map(|a| &a.store)
                .or_else(|| final_store(key));
            e.store_delta = delta(before.as_ref(), after);
            self.trace.push(e);
        }

        for eff in &mv.effects {
            match eff {
                Effect::Activated { service, args, required } => {
                    if let Some(rk) = required {
                        if let Some(rspec) = self.sem.assembly().service(rk) {
                            let store: AbstractStore = rspec
                                .signature
                                .params
                                .iter()
                                .zip(args)
                                .map(|(p, v)| (p.name.clone(), *v))
                                .collect();
                            if let Some(v) = check(rk, ContractKind::Pre, &rspec.precondition, &store) {
                                self.push_violation(rk, v);
                                self.finished = Some(Outcome::Violation);
                            }
                        }
                    }
                    let Some(start) = starts.get(service) else { continue };
                    let pre = &self.sem.service(service).expect("activated").spec.precondition;
                    if let Some(v) = check(service, ContractKind::Pre, pre, start) {
                        self.push_violation(service, v);
                        self.finished = Some(Outcome::Violation);
                    }
                }
                Effect::Deactivated { service, store } => {
                    let post = &self.sem.service(service).expect("was active").spec.postcondition;
                    if let Some(v) = check(service, ContractKind::Post, post, store) {
                        self.push_violation(service, v);
                        if self.options.fatal_post {
                            self.finished = Some(Outcome::Violation);
                        }
                    }
                }
            }
        }
    }

    fn terminate(&mut self) {
        let success = self.sem.is_terminated(&self.current);
        if success {
            let still: Vec<(ServiceKey, AbstractStore)> = self
                .current
                .active
                .iter()
                .map(|(k, a)| (k.clone(), a.store.clone()))
                .collect();
            for (k, store) in still {
                let post = self.sem.service(&k).expect("active").spec.postcondition.clone();
                if let Some(v) = check(&k, ContractKind::Post, &post, &store) {
                    self.push_violation(&k, v);
                }
            }
        }
        let outcome = if self.violated {
            Outcome::Violation
        } else if success {
            Outcome::Success
        } else {
            Outcome::Deadlock
        };
        let mut e = self.event(TraceKind::Terminated, None);
        e.outcome = Some(if success { Outcome::Success } else { Outcome::Deadlock });
        self.trace.push(e);
        self.finished = Some(outcome);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimRun {
    pub trace: Vec<TraceEvent>,
    pub outcome: Outcome,
    pub final_state: ProductState,
}

impl SimRun {
    /// JSON lines: one per event, then a closing `{"outcome": ...}` line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::json!({ "outcome": self.outcome }).to_string());
        out.push('\n');
        out
    }
}

pub fn run(a: &Assembly, entry: &ServiceKey, args: &Store, seed: u64, max_steps: usize) -> Result<SimRun, SimError> {
    run_with(a, entry, args, seed, max_steps, SimOptions::default())
}

pub fn run_with(
    a: &Assembly,
    entry: &ServiceKey,
    args: &Store,
    seed: u64,
    max_steps: usize,
    options: SimOptions,
) -> Result<SimRun, SimError> {
    let mut s = init_session_with(a, entry, args, seed, options)?;
    run_session(&mut s, max_steps);
    Ok(SimRun {
        trace: s.trace.clone(),
        outcome: s.finished.unwrap_or(Outcome::StepBudgetExhausted),
        final_state: s.current,
    })
}

/// Steps until the session finishes or `max_steps` moves were taken.
/// Detecting termination does not count as a move.
pub fn run_session(s: &mut SimSession, max_steps: usize) {
    while s.finished.is_none() {
        if s.step_count >= max_steps && !s.enabled_moves().is_empty() {
            if s.violated {
                s.finished = Some(Outcome::Violation);
            }
            break;
        }
        s.step().expect("session not finished");
    }
}

/// Replays a sequence of product labels from the initial configuration.
pub fn replay(a: &Assembly, entry: &ServiceKey, args: &Store, labels: &[SyncLabel]) -> Result<SimSession, SimError> {
    let mut s = init_session(a, entry, args, 0)?;
    for l in labels {
        s.step_label(l)?;
    }
    Ok(s)
}
