//! Execution semantics of an assembly, shared by the analyzer and the
//! simulator.
//!
//! A configuration records, for every activated service, its location, its
//! store and who called it, plus the stack of open calls. Moves are either
//! internal steps of one service or rendezvous between two services on one
//! channel:
//!
//! - `ch!m` / `CALLER?m` and `ch?m` / `CALLER!m`: message exchange
//! - `ch!!s(args)`: call, activating the target service; if the target's
//!   initial state waits with `CALLER??s(x)` the call synchronizes with it
//! - `CALLER!!s(e)` / `ch??s(x)`: result, closing the call and deactivating
//!   the callee when it lands on a final state
//!
//! The entry service is called by the environment, which accepts its start
//! (`CALLER??entry`) and result (`CALLER!!entry`) moves on channel `env`.
//! Guards that evaluate to unknown are treated as enabled.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::assembly::{Assembly, ServiceKey};
use crate::expr::{eval_abstract, AbstractStore, AbstractValue, Ident, Value};
use crate::flatten::{flatten_behavior, inlined_services, FlattenError, DEFAULT_DEPTH_LIMIT};
use crate::model::{
    Action, Behavior, ChannelRef, Communication, Direction, Label, Param, ServiceKind, ServiceSpec,
    StateId, Transition,
};

pub const ENV_CHANNEL: &str = "env";
pub const SELF_CHANNEL: &str = "SELF";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CallerCtx {
    Environment,
    /// `callback` is set when the service was called back through its
    /// caller's own CALLER channel.
    Service {
        key: ServiceKey,
        channel: Ident,
        callback: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Activation {
    pub location: StateId,
    pub store: AbstractStore,
    pub caller: CallerCtx,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct OpenCall {
    pub channel: Ident,
    pub caller: ServiceKey,
    pub callee: ServiceKey,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProductState {
    pub active: BTreeMap<ServiceKey, Activation>,
    pub pending: Vec<OpenCall>,
}

impl ProductState {
    pub fn location(&self, key: &ServiceKey) -> Option<&StateId> {
        self.active.get(key).map(|a| &a.location)
    }

    /// True if `concrete` is one of the configurations this one stands for:
    /// same locations, callers and open calls, and every known value agrees.
    pub fn covers(&self, concrete: &ProductState) -> bool {
        self.pending == concrete.pending
            && self.active.len() == concrete.active.len()
            && self.active.iter().zip(&concrete.active).all(|((ka, a), (kc, c))| {
                ka == kc
                    && a.location == c.location
                    && a.caller == c.caller
                    && a.store.len() == c.store.len()
                    && a.store.iter().zip(&c.store).all(|((na, va), (nc, vc))| {
                        na == nc && (*va == AbstractValue::Unknown || va == vc)
                    })
            })
    }
}

impl fmt::Display for ProductState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, a)) in self.active.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}@{}", a.location)?;
        }
        f.write_str("}")?;
        if !self.pending.is_empty() {
            let chans: Vec<&str> = self.pending.iter().map(|c| c.channel.as_str()).collect();
            write!(f, " open[{}]", chans.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncKind {
    Internal,
    Message,
    Call,
    Result,
    /// Start of the entry service by the environment.
    Start,
}

/// A service taking part in a move, with the index of the transition it
/// fires in its flattened behavior (none for an implicit activation).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Participant {
    pub service: ServiceKey,
    pub transition: Option<usize>,
}

/// The label of a product move. The first participant initiates: it is the
/// sender, caller or result emitter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SyncLabel {
    pub kind: SyncKind,
    pub channel: Ident,
    pub message: Ident,
    pub participants: Vec<Participant>,
}

impl SyncLabel {
    pub fn direction(&self) -> &'static str {
        match self.kind {
            SyncKind::Internal => "tau",
            SyncKind::Message => "!",
            SyncKind::Call | SyncKind::Start => "!!",
            SyncKind::Result => "??",
        }
    }

    pub fn involves(&self, key: &ServiceKey) -> bool {
        self.participants.iter().any(|p| &p.service == key)
    }

    pub fn witness_item(&self) -> WitnessItem {
        WitnessItem {
            channel: self.channel.clone(),
            direction: self.direction().to_string(),
            message: self.message.clone(),
        }
    }
}

impl fmt::Display for SyncLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SyncKind::Internal => write!(f, "tau({})", self.channel),
            _ => write!(f, "{}{}{}", self.channel, self.direction(), self.message),
        }
    }
}

/// Serialized form of one witness step. Internal steps carry the service
/// as channel and the label text as message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WitnessItem {
    pub channel: Ident,
    pub direction: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    /// `required` names the required service the call went through, whose
    /// precondition applies at the call site.
    Activated {
        service: ServiceKey,
        args: Vec<AbstractValue>,
        required: Option<ServiceKey>,
    },
    Deactivated {
        service: ServiceKey,
        store: AbstractStore,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Move {
    pub label: SyncLabel,
    pub next: ProductState,
    pub effects: Vec<Effect>,
}

/// A call that cannot happen because its target is already active.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Reentrancy {
    pub caller: ServiceKey,
    pub target: ServiceKey,
    pub channel: Ident,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Successors {
    pub moves: Vec<Move>,
    pub blocked: Vec<Reentrancy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("`{0}` is not a provided service of the assembly")]
    UnknownEntry(String),
    #[error("cannot flatten {service}: {source}")]
    Flatten {
        service: String,
        #[source]
        source: FlattenError,
    },
}

/// A service ready for execution: flattened behavior and the variables of
/// every inlined sub-service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatService {
    pub spec: ServiceSpec,
    pub behavior: Behavior,
    pub vars: Vec<Param>,
}

impl FlatService {
    pub fn initial_store(&self) -> AbstractStore {
        self.vars
            .iter()
            .map(|p| (p.name.clone(), AbstractValue::Known(p.ty.default_value())))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Semantics {
    assembly: Assembly,
    services: BTreeMap<ServiceKey, FlatService>,
}

impl Semantics {
    pub fn new(assembly: Assembly) -> Result<Self, SemanticsError> {
        let mut services = BTreeMap::new();
        for c in assembly.components() {
            for (name, spec) in &c.services {
                if spec.kind == ServiceKind::Required {
                    continue;
                }
                let key = ServiceKey::new(&c.name, name);
                let flat_err = |source| SemanticsError::Flatten {
                    service: key.to_string(),
                    source,
                };
                let behavior = flatten_behavior(c, name, DEFAULT_DEPTH_LIMIT).map_err(flat_err)?;
                let mut vars: Vec<Param> = Vec::new();
                for sub in inlined_services(c, name, DEFAULT_DEPTH_LIMIT).map_err(flat_err)? {
                    for p in c.services[&sub].variables() {
                        if !vars.iter().any(|v| v.name == p.name) {
                            vars.push(p.clone());
                        }
                    }
                }
                services.insert(
                    key,
                    FlatService {
                        spec: spec.clone(),
                        behavior,
                        vars,
                    },
                );
            }
        }
        Ok(Semantics { assembly, services })
    }

    pub fn assembly(&self) -> &Assembly {
        &self.assembly
    }

    pub fn service(&self, key: &ServiceKey) -> Option<&FlatService> {
        self.services.get(key)
    }

    pub fn services(&self) -> impl Iterator<Item = (&ServiceKey, &FlatService)> {
        self.services.iter()
    }

    /// The configuration with only `entry` active, at its initial state.
    /// Parameters missing from `args` are unknown.
    pub fn initial(&self, entry: &ServiceKey, args: &AbstractStore) -> Result<ProductState, SemanticsError> {
        let provided = self
            .assembly
            .component(&entry.component)
            .is_some_and(|c| c.provided.contains(&entry.service));
        let svc = match self.services.get(entry) {
            Some(s) if provided => s,
            _ => return Err(SemanticsError::UnknownEntry(entry.to_string())),
        };
        let mut store = svc.initial_store();
        for p in &svc.spec.signature.params {
            store.insert(p.name.clone(), args.get(&p.name).copied().unwrap_or(AbstractValue::Unknown));
        }
        let mut st = ProductState::default();
        st.active.insert(
            entry.clone(),
            Activation {
                location: svc.behavior.initial.clone(),
                store,
                caller: CallerCtx::Environment,
            },
        );
        Ok(st)
    }

    /// Successful termination: every active service at a final state and no
    /// call left open.
    pub fn is_terminated(&self, st: &ProductState) -> bool {
        st.pending.is_empty()
            && st
                .active
                .iter()
                .all(|(k, a)| self.services[k].behavior.is_final(&a.location))
    }

    pub fn successors(&self, st: &ProductState) -> Successors {
        let mut out = Successors::default();
        for (key, act) in &st.active {
            let svc = &self.services[key];
            for (i, t) in self.enabled(svc, act) {
                let comm = t.label.communication().map(|(_, c)| c);
                match comm {
                    None => out.moves.push(self.internal(st, key, i, t)),
                    Some(c) => self.initiate(st, key, act, i, t, c, &mut out),
                }
            }
        }
        out
    }

    fn enabled<'a>(&'a self, svc: &'a FlatService, act: &'a Activation) -> impl Iterator<Item = (usize, &'a Transition)> + 'a {
        svc.behavior.outgoing(&act.location).filter(move |(_, t)| {
            t.label.communication_count() <= 1 && guard_open(&t.label, &act.store)
        })
    }

    fn internal(&self, st: &ProductState, key: &ServiceKey, i: usize, t: &Transition) -> Move {
        let mut next = st.clone();
        let act = next.active.get_mut(key).expect("active");
        act.store = run_label(&act.store, &t.label, &[]).0;
        act.location = t.target.clone();
        let mut effects = Vec::new();
        self.settle(&mut next, key, &mut effects);
        Move {
            label: SyncLabel {
                kind: SyncKind::Internal,
                channel: key.to_string(),
                message: t.label.to_string(),
                participants: vec![Participant {
                    service: key.clone(),
                    transition: Some(i),
                }],
            },
            next,
            effects,
        }
    }

    /// Moves initiated by a communication of `key`: calls, environment
    /// interactions, and pairs where `key` is the callee side.
    #[allow(clippy::too_many_arguments)]
    fn initiate(
        &self,
        st: &ProductState,
        key: &ServiceKey,
        act: &Activation,
        i: usize,
        t: &Transition,
        c: &Communication,
        out: &mut Successors,
    ) {
        let own = key.service.as_str();
        match (&c.channel, c.direction) {
            (ChannelRef::Named(_) | ChannelRef::SelfChannel, Direction::Call) => self.call(st, key, act, i, t, c, out),
            (ChannelRef::Caller, Direction::Call) if c.message != own => self.call(st, key, act, i, t, c, out),
            (ChannelRef::Caller, _) => match &act.caller {
                CallerCtx::Environment => self.with_environment(st, key, act, i, t, c, out),
                CallerCtx::Service {
                    key: peer,
                    channel,
                    callback,
                } => self.pair(st, key, i, t, c, peer, channel, *callback, out),
            },
            // caller-side sends, receives and awaits are driven by the callee
            _ => {}
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn call(
        &self,
        st: &ProductState,
        key: &ServiceKey,
        act: &Activation,
        i: usize,
        t: &Transition,
        c: &Communication,
        out: &mut Successors,
    ) {
        let (target, channel, callback, required) = match &c.channel {
            ChannelRef::Named(n) => {
                let Some(l) = self.assembly.resolve_named(&key.component, n) else { return };
                if c.message != l.from.service && c.message != l.to.service {
                    return;
                }
                (l.to.clone(), l.channel.clone(), false, Some(l.from.clone()))
            }
            ChannelRef::SelfChannel => (
                ServiceKey::new(&key.component, &c.message),
                SELF_CHANNEL.to_string(),
                false,
                None,
            ),
            ChannelRef::Caller => {
                let CallerCtx::Service { key: peer, channel, .. } = &act.caller else { return };
                (ServiceKey::new(&peer.component, &c.message), channel.clone(), true, None)
            }
        };
        let Some(tsvc) = self.services.get(&target) else { return };
        if st.active.contains_key(&target) {
            out.blocked.push(Reentrancy {
                caller: key.clone(),
                target,
                channel,
            });
            return;
        }
        let (caller_store, args) = run_label(&act.store, &t.label, &[]);
        let mut callee_store = tsvc.initial_store();
        for (idx, p) in tsvc.spec.signature.params.iter().enumerate() {
            callee_store.insert(p.name.clone(), args.get(idx).copied().unwrap_or(AbstractValue::Unknown));
        }
        let ctx = CallerCtx::Service {
            key: key.clone(),
            channel: channel.clone(),
            callback,
        };
        let initial = &tsvc.behavior.initial;
        let starts: Vec<(usize, &Transition)> = tsvc
            .behavior
            .outgoing(initial)
            .filter(|(_, s)| {
                s.label.communication_count() == 1
                    && matches!(s.label.communication(), Some((_, sc))
                        if sc.channel == ChannelRef::Caller
                            && sc.direction == Direction::Await
                            && sc.message == target.service)
            })
            .collect();

        let mut arrivals: Vec<(Option<usize>, StateId, AbstractStore)> = Vec::new();
        if starts.is_empty() {
            arrivals.push((None, initial.clone(), callee_store));
        } else {
            for (j, s) in starts {
                if guard_open(&s.label, &callee_store) {
                    let (store, _) = run_label(&callee_store, &s.label, &args);
                    arrivals.push((Some(j), s.target.clone(), store));
                }
            }
        }
        for (j, loc, store) in arrivals {
            let mut next = st.clone();
            let a = next.active.get_mut(key).expect("active");
            a.store = caller_store.clone();
            a.location = t.target.clone();
            next.active.insert(
                target.clone(),
                Activation {
                    location: loc,
                    store,
                    caller: ctx.clone(),
                },
            );
            next.pending.push(OpenCall {
                channel: channel.clone(),
                caller: key.clone(),
                callee: target.clone(),
            });
            let mut effects = vec![Effect::Activated {
                service: target.clone(),
                args: args.clone(),
                required: required.clone(),
            }];
            self.settle(&mut next, key, &mut effects);
            self.settle(&mut next, &target, &mut effects);
            out.moves.push(Move {
                label: SyncLabel {
                    kind: SyncKind::Call,
                    channel: channel.clone(),
                    message: c.message.clone(),
                    participants: vec![
                        Participant {
                            service: key.clone(),
                            transition: Some(i),
                        },
                        Participant {
                            service: target.clone(),
                            transition: j,
                        },
                    ],
                },
                next,
                effects,
            });
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn with_environment(
        &self,
        st: &ProductState,
        key: &ServiceKey,
        act: &Activation,
        i: usize,
        t: &Transition,
        c: &Communication,
        out: &mut Successors,
    ) {
        if c.message != key.service {
            return;
        }
        let svc = &self.services[key];
        let kind = match c.direction {
            Direction::Await => SyncKind::Start,
            Direction::Call => SyncKind::Result,
            _ => return,
        };
        let incoming: Vec<AbstractValue> = svc
            .spec
            .signature
            .params
            .iter()
            .map(|p| act.store.get(&p.name).copied().unwrap_or(AbstractValue::Unknown))
            .collect();
        let mut next = st.clone();
        let a = next.active.get_mut(key).expect("active");
        a.store = run_label(&act.store, &t.label, &incoming).0;
        a.location = t.target.clone();
        let mut effects = Vec::new();
        if kind == SyncKind::Result && svc.behavior.is_final(&t.target) {
            let gone = next.active.remove(key).expect("active");
            effects.push(Effect::Deactivated {
                service: key.clone(),
                store: gone.store,
            });
        }
        out.moves.push(Move {
            label: SyncLabel {
                kind,
                channel: ENV_CHANNEL.to_string(),
                message: c.message.clone(),
                participants: vec![Participant {
                    service: key.clone(),
                    transition: Some(i),
                }],
            },
            next,
            effects,
        });
    }

    /// Rendezvous between callee `key` (using CALLER) and its caller `peer`
    /// on `channel`.
    #[allow(clippy::too_many_arguments)]
    fn pair(
        &self,
        st: &ProductState,
        key: &ServiceKey,
        i: usize,
        t: &Transition,
        c: &Communication,
        peer: &ServiceKey,
        channel: &str,
        callback: bool,
        out: &mut Successors,
    ) {
        let Some(pact) = st.active.get(peer) else { return };
        let psvc = &self.services[peer];
        let act = &st.active[key];
        for (pi, pt) in self.enabled(psvc, pact) {
            let Some((_, pc)) = pt.label.communication() else { continue };
            let names = match (&pc.channel, callback) {
                (ChannelRef::Caller, true) => vec![key.service.clone()],
                (ChannelRef::SelfChannel, false) if channel == SELF_CHANNEL => vec![key.service.clone()],
                (ChannelRef::Named(n), false) => match self.assembly.resolve_named(&peer.component, n) {
                    Some(l) if l.channel == channel => vec![key.service.clone(), l.from.service.clone()],
                    _ => continue,
                },
                _ => continue,
            };
            let (kind, callee_sends) = match (c.direction, pc.direction) {
                (Direction::Send, Direction::Receive) if c.message == pc.message => (SyncKind::Message, true),
                (Direction::Receive, Direction::Send) if c.message == pc.message => (SyncKind::Message, false),
                (Direction::Call, Direction::Await) if c.message == key.service && names.contains(&pc.message) => {
                    (SyncKind::Result, true)
                }
                _ => continue,
            };
            let (callee_store, caller_store) = if callee_sends {
                let (s, vals) = run_label(&act.store, &t.label, &[]);
                (s, run_label(&pact.store, &pt.label, &vals).0)
            } else {
                let (s, vals) = run_label(&pact.store, &pt.label, &[]);
                (run_label(&act.store, &t.label, &vals).0, s)
            };
            let mut next = st.clone();
            let a = next.active.get_mut(key).expect("active");
            a.store = callee_store;
            a.location = t.target.clone();
            let pa = next.active.get_mut(peer).expect("active");
            pa.store = caller_store;
            pa.location = pt.target.clone();
            let mut effects = Vec::new();
            if kind == SyncKind::Result {
                close_call(&mut next, key);
                if self.services[key].behavior.is_final(&t.target) {
                    let gone = next.active.remove(key).expect("active");
                    effects.push(Effect::Deactivated {
                        service: key.clone(),
                        store: gone.store,
                    });
                }
            } else {
                self.settle(&mut next, key, &mut effects);
            }
            self.settle(&mut next, peer, &mut effects);
            let me = Participant {
                service: key.clone(),
                transition: Some(i),
            };
            let them = Participant {
                service: peer.clone(),
                transition: Some(pi),
            };
            let participants = if callee_sends { vec![me, them] } else { vec![them, me] };
            out.moves.push(Move {
                label: SyncLabel {
                    kind,
                    channel: channel.to_string(),
                    message: c.message.clone(),
                    participants,
                },
                next,
                effects,
            });
        }
    }

    /// A called service without a result returns as soon as it reaches a
    /// final state it cannot leave.
    fn settle(&self, st: &mut ProductState, key: &ServiceKey, effects: &mut Vec<Effect>) {
        let Some(act) = st.active.get(key) else { return };
        if act.caller == CallerCtx::Environment {
            return;
        }
        let svc = &self.services[key];
        let stuck_final = svc.behavior.is_final(&act.location) && svc.behavior.outgoing(&act.location).next().is_none();
        if svc.spec.signature.result.is_none() && stuck_final {
            let gone = st.active.remove(key).expect("active");
            close_call(st, key);
            effects.push(Effect::Deactivated {
                service: key.clone(),
                store: gone.store,
            });
        }
    }
}

fn close_call(st: &mut ProductState, callee: &ServiceKey) {
    if let Some(pos) = st.pending.iter().rposition(|c| &c.callee == callee) {
        st.pending.remove(pos);
    }
}

fn guard_open(label: &Label, store: &AbstractStore) -> bool {
    match &label.guard {
        None => true,
        Some(g) => eval_abstract(g, store) != AbstractValue::Known(Value::Bool(false)),
    }
}

/// Applies a label's actions in order. The communication either binds its
/// receivers from `incoming` or evaluates its arguments, which are returned.
pub fn run_label(store: &AbstractStore, label: &Label, incoming: &[AbstractValue]) -> (AbstractStore, Vec<AbstractValue>) {
    let mut s = store.clone();
    let mut outgoing = Vec::new();
    for a in &label.actions {
        match a {
            Action::Assign { target, value } => {
                let v = eval_abstract(value, &s);
                s.insert(target.clone(), v);
            }
            Action::Comm(c) if c.direction.binds() => {
                if let Some(binders) = c.binders() {
                    for (k, b) in binders.into_iter().enumerate() {
                        s.insert(b.to_string(), incoming.get(k).copied().unwrap_or(AbstractValue::Unknown));
                    }
                }
            }
            Action::Comm(c) => outgoing = c.args.iter().map(|e| eval_abstract(e, &s)).collect(),
            Action::Enter(_) | Action::Exit(_) => {}
        }
    }
    (s, outgoing)
}
