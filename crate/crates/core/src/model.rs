//! Component, service and behavior types.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::expr::{Expr, Ident, SemType};

/// A state of a service behavior.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub String);

impl StateId {
    pub fn new(s: impl Into<String>) -> Self {
        StateId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StateId {
    fn from(s: &str) -> Self {
        StateId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: Ident,
    pub ty: SemType,
}

impl Param {
    pub fn new(name: impl Into<Ident>, ty: SemType) -> Self {
        Param { name: name.into(), ty }
    }
}

/// Local variable declaration. Locals start at the type's default value.
pub type VarDecl = Param;

/// Service signature: name, typed parameters, optional result type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub name: Ident,
    pub params: Vec<Param>,
    pub result: Option<SemType>,
}

impl Signature {
    pub fn new(name: impl Into<Ident>) -> Self {
        Signature {
            name: name.into(),
            params: Vec::new(),
            result: None,
        }
    }

    pub fn param_types(&self) -> Vec<SemType> {
        self.params.iter().map(|p| p.ty).collect()
    }

    /// Arity and types agree; names are irrelevant.
    pub fn compatible_with(&self, other: &Signature) -> bool {
        self.param_types() == other.param_types() && self.result == other.result
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", p.name, p.ty)?;
        }
        f.write_str(")")?;
        if let Some(r) = self.result {
            write!(f, ": {r}")?;
        }
        Ok(())
    }
}

/// Service dependency: provided sub-services, services required from the
/// caller, services required from any component, internal services.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dependency {
    pub subs: BTreeSet<Ident>,
    pub cals: BTreeSet<Ident>,
    pub reqs: BTreeSet<Ident>,
    pub ints: BTreeSet<Ident>,
}

impl Dependency {
    pub fn is_empty(&self) -> bool {
        self.subs.is_empty() && self.cals.is_empty() && self.reqs.is_empty() && self.ints.is_empty()
    }

    /// Names occurring in more than one of the four sets.
    pub fn overlaps(&self) -> BTreeSet<Ident> {
        let sets = [&self.subs, &self.cals, &self.reqs, &self.ints];
        let mut seen = BTreeSet::new();
        let mut dup = BTreeSet::new();
        for set in sets {
            for name in set {
                if !seen.insert(name) {
                    dup.insert(name.clone());
                }
            }
        }
        dup
    }
}

/// Channel reference of a communication action. `Named` carries the name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelRef {
    Named(Ident),
    Caller,
    SelfChannel,
}

impl fmt::Display for ChannelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelRef::Named(n) => f.write_str(n),
            ChannelRef::Caller => f.write_str("CALLER"),
            ChannelRef::SelfChannel => f.write_str("SELF"),
        }
    }
}

/// `!` send, `?` receive, `!!` call or emit result, `??` wait start or result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Send,
    Receive,
    Call,
    Await,
}

impl Direction {
    pub fn symbol(self) -> &'static str {
        match self {
            Direction::Send => "!",
            Direction::Receive => "?",
            Direction::Call => "!!",
            Direction::Await => "??",
        }
    }

    /// Receiving directions carry binder names instead of expressions.
    pub fn binds(self) -> bool {
        matches!(self, Direction::Receive | Direction::Await)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Communication {
    pub channel: ChannelRef,
    pub direction: Direction,
    pub message: Ident,
    /// Argument expressions for `!`/`!!`; plain variables (binders) for `?`/`??`.
    pub args: Vec<Expr>,
}

impl Communication {
    /// Binder names of a receiving action; `None` if some argument is not a variable.
    pub fn binders(&self) -> Option<Vec<&str>> {
        self.args
            .iter()
            .map(|a| match a {
                Expr::Var(v) => Some(v.as_str()),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for Communication {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}(", self.channel, self.direction.symbol(), self.message)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    /// Elementary action: `target := value`.
    Assign { target: Ident, value: Expr },
    Comm(Communication),
    /// Internal edge into an inlined sub-service (produced by flattening).
    Enter(Ident),
    /// Internal edge back from an inlined sub-service (produced by flattening).
    Exit(Ident),
}

impl Action {
    pub fn comm(&self) -> Option<&Communication> {
        match self {
            Action::Comm(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_enter_exit(&self) -> bool {
        matches!(self, Action::Enter(_) | Action::Exit(_))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Assign { target, value } => write!(f, "{target} := {value}"),
            Action::Comm(c) => c.fmt(f),
            Action::Enter(p) => write!(f, "enter({p})"),
            Action::Exit(p) => write!(f, "exit({p})"),
        }
    }
}

/// `[guard] action; action; ...`
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub guard: Option<Expr>,
    pub actions: Vec<Action>,
}

impl Label {
    pub fn new(guard: Option<Expr>, actions: Vec<Action>) -> Self {
        Label { guard, actions }
    }

    pub fn silent() -> Self {
        Label::default()
    }

    /// The first communication action and its position in the action list.
    pub fn communication(&self) -> Option<(usize, &Communication)> {
        self.actions
            .iter()
            .enumerate()
            .find_map(|(i, a)| a.comm().map(|c| (i, c)))
    }

    pub fn communication_count(&self) -> usize {
        self.actions.iter().filter(|a| a.comm().is_some()).count()
    }

    pub fn is_enter_exit(&self) -> bool {
        self.guard.is_none() && self.actions.len() == 1 && self.actions[0].is_enter_exit()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        if let Some(g) = &self.guard {
            write!(f, "[{g}]")?;
            first = false;
        }
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            } else if !first {
                f.write_str(" ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub source: StateId,
    pub label: Label,
    pub target: StateId,
}

impl Transition {
    pub fn new(source: impl Into<StateId>, label: Label, target: impl Into<StateId>) -> Self {
        Transition {
            source: source.into(),
            label,
            target: target.into(),
        }
    }
}

impl From<String> for StateId {
    fn from(s: String) -> Self {
        StateId(s)
    }
}

/// Extended labelled transition system of a service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Behavior {
    pub states: BTreeSet<StateId>,
    pub transitions: Vec<Transition>,
    /// Sub-service names annotating states.
    pub annotations: BTreeMap<StateId, BTreeSet<Ident>>,
    pub initial: StateId,
    pub finals: BTreeSet<StateId>,
}

impl Behavior {
    /// One state that is both initial and final.
    pub fn single_state(name: impl Into<String>) -> Self {
        let s = StateId::new(name);
        Behavior {
            states: [s.clone()].into(),
            transitions: Vec::new(),
            annotations: BTreeMap::new(),
            initial: s.clone(),
            finals: [s].into(),
        }
    }

    /// The default behavior given to a service declared without one.
    pub fn default_for_service() -> Self {
        Behavior::single_state("idle")
    }

    /// The label set L, derived from the transition relation.
    pub fn labels(&self) -> BTreeSet<&Label> {
        self.transitions.iter().map(|t| &t.label).collect()
    }

    pub fn outgoing<'a>(&'a self, s: &'a StateId) -> impl Iterator<Item = (usize, &'a Transition)> + 'a {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| &t.source == s)
    }

    pub fn is_final(&self, s: &StateId) -> bool {
        self.finals.contains(s)
    }

    pub fn is_annotated(&self) -> bool {
        self.annotations.values().any(|v| !v.is_empty())
    }

    /// States reachable from the initial state along transitions.
    pub fn reachable(&self) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.initial.clone()];
        while let Some(s) = stack.pop() {
            if seen.insert(s.clone()) {
                for (_, t) in self.outgoing(&s) {
                    if !seen.contains(&t.target) {
                        stack.push(t.target.clone());
                    }
                }
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ServiceKind {
    Provided,
    Required,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceSpec {
    pub signature: Signature,
    pub precondition: Expr,
    pub postcondition: Expr,
    pub locals: Vec<VarDecl>,
    pub dependency: Dependency,
    pub properties: Vec<Ident>,
    pub behavior: Behavior,
    pub kind: ServiceKind,
}

impl ServiceSpec {
    /// A service with trivial contracts and the default behavior.
    pub fn new(signature: Signature, kind: ServiceKind) -> Self {
        ServiceSpec {
            signature,
            precondition: Expr::Bool(true),
            postcondition: Expr::Bool(true),
            locals: Vec::new(),
            dependency: Dependency::default(),
            properties: Vec::new(),
            behavior: Behavior::default_for_service(),
            kind,
        }
    }

    pub fn name(&self) -> &str {
        &self.signature.name
    }

    /// Parameters followed by locals, with their types.
    pub fn variables(&self) -> impl Iterator<Item = &Param> {
        self.signature.params.iter().chain(self.locals.iter())
    }

    pub fn type_env(&self) -> BTreeMap<Ident, SemType> {
        self.variables().map(|p| (p.name.clone(), p.ty)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub name: Ident,
    pub services: BTreeMap<Ident, ServiceSpec>,
    pub provided: BTreeSet<Ident>,
    pub required: BTreeSet<Ident>,
}

impl Component {
    pub fn new(name: impl Into<Ident>) -> Self {
        Component {
            name: name.into(),
            services: BTreeMap::new(),
            provided: BTreeSet::new(),
            required: BTreeSet::new(),
        }
    }

    /// Adds a service, recording it in the provided or required interface
    /// according to its kind.
    pub fn with_service(mut self, spec: ServiceSpec) -> Self {
        let name = spec.name().to_string();
        match spec.kind {
            ServiceKind::Provided => self.provided.insert(name.clone()),
            ServiceKind::Required => self.required.insert(name.clone()),
        };
        self.services.insert(name, spec);
        self
    }

    /// Adds a service that appears in neither interface list.
    pub fn with_internal_service(mut self, spec: ServiceSpec) -> Self {
        self.services.insert(spec.name().to_string(), spec);
        self
    }

    pub fn service(&self, name: &str) -> Option<&ServiceSpec> {
        self.services.get(name)
    }

    /// Kind implied by the interface lists: required iff listed only as required.
    pub fn interface_kind(&self, name: &str) -> ServiceKind {
        if self.required.contains(name) && !self.provided.contains(name) {
            ServiceKind::Required
        } else {
            ServiceKind::Provided
        }
    }
}
