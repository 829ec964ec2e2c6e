//! Well-formedness checks for components.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::expr::{type_of, Expr, Ident, SemType};
use crate::model::{Action, ChannelRef, Component, Direction, ServiceKind, ServiceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnknownInterfaceService,
    KindMismatch,
    SignatureMismatch,
    DuplicateParameter,
    DuplicateVariable,
    DependencyOverlap,
    UnresolvedDependency,
    UndeclaredState,
    AnnotationNotSub,
    UndeclaredVariable,
    TypeError,
    BinderNotVariable,
    MultipleCommunications,
    CallerOutsideProvided,
    SelfCallNotInternal,
}

impl ViolationKind {
    /// Structural violations are the ones the parser can never produce.
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            ViolationKind::UnknownInterfaceService
                | ViolationKind::KindMismatch
                | ViolationKind::SignatureMismatch
                | ViolationKind::DuplicateParameter
                | ViolationKind::DuplicateVariable
                | ViolationKind::UndeclaredState
                | ViolationKind::BinderNotVariable
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// `Component`, `Component.service` or `Component.service@state`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn structural(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.kind.is_structural())
    }

    fn push(&mut self, kind: ViolationKind, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            location: location.into(),
            message: message.into(),
        });
    }
}

/// Reports every violated well-formedness rule of `c`. An empty report
/// means the component is well formed.
pub fn validate_component(c: &Component) -> ValidationReport {
    let mut r = ValidationReport::default();
    for name in c.provided.iter().chain(c.required.iter()) {
        if !c.services.contains_key(name) {
            r.push(
                ViolationKind::UnknownInterfaceService,
                &c.name,
                format!("interface lists `{name}` but no such service is declared"),
            );
        }
    }
    for (name, spec) in &c.services {
        let loc = format!("{}.{}", c.name, name);
        if spec.name() != name {
            r.push(
                ViolationKind::SignatureMismatch,
                &loc,
                format!("service is keyed `{name}` but its signature names `{}`", spec.name()),
            );
        }
        if spec.kind != c.interface_kind(name) {
            r.push(
                ViolationKind::KindMismatch,
                &loc,
                format!("kind {:?} disagrees with the component interface", spec.kind),
            );
        }
        validate_service(c, spec, &loc, &mut r);
    }
    r
}

fn validate_service(c: &Component, s: &ServiceSpec, loc: &str, r: &mut ValidationReport) {
    let mut env: BTreeMap<Ident, SemType> = BTreeMap::new();
    for p in &s.signature.params {
        if env.insert(p.name.clone(), p.ty).is_some() {
            r.push(ViolationKind::DuplicateParameter, loc, format!("parameter `{}` declared twice", p.name));
        }
    }
    let mut locals = BTreeSet::new();
    for v in &s.locals {
        if !locals.insert(&v.name) || env.contains_key(&v.name) {
            r.push(ViolationKind::DuplicateVariable, loc, format!("variable `{}` declared twice", v.name));
        }
    }
    for v in &s.locals {
        env.entry(v.name.clone()).or_insert(v.ty);
    }

    let dep = &s.dependency;
    let overlap = dep.overlaps();
    if !overlap.is_empty() {
        let names: Vec<_> = overlap.into_iter().collect();
        r.push(
            ViolationKind::DependencyOverlap,
            loc,
            format!("dependency sets not disjoint: {}", names.join(", ")),
        );
    }
    for name in dep.subs.iter().chain(dep.ints.iter()) {
        if !c.services.contains_key(name) {
            r.push(
                ViolationKind::UnresolvedDependency,
                loc,
                format!("`{name}` is not a service of {}", c.name),
            );
        }
    }

    check_bool(&s.precondition, &env, loc, "precondition", r);
    check_bool(&s.postcondition, &env, loc, "postcondition", r);

    let b = &s.behavior;
    if !b.states.contains(&b.initial) {
        r.push(ViolationKind::UndeclaredState, loc, format!("initial state `{}` is not declared", b.initial));
    }
    for f in &b.finals {
        if !b.states.contains(f) {
            r.push(ViolationKind::UndeclaredState, loc, format!("final state `{f}` is not declared"));
        }
    }
    for (state, subs) in &b.annotations {
        if !b.states.contains(state) {
            r.push(ViolationKind::UndeclaredState, loc, format!("annotated state `{state}` is not declared"));
        }
        for p in subs {
            if !dep.subs.contains(p) {
                r.push(
                    ViolationKind::AnnotationNotSub,
                    format!("{loc}@{state}"),
                    format!("annotation `{p}` is not listed in subs"),
                );
            }
        }
    }
    for t in &b.transitions {
        let tloc = format!("{loc}@{}", t.source);
        for end in [&t.source, &t.target] {
            if !b.states.contains(end) {
                r.push(
                    ViolationKind::UndeclaredState,
                    &tloc,
                    format!("transition endpoint `{end}` is not declared"),
                );
            }
        }
        if let Some(g) = &t.label.guard {
            check_bool(g, &env, &tloc, "guard", r);
        }
        if t.label.communication_count() > 1 {
            r.push(
                ViolationKind::MultipleCommunications,
                &tloc,
                "a label may carry at most one communication action",
            );
        }
        for a in &t.label.actions {
            check_action(c, s, a, &env, &tloc, r);
        }
    }
}

fn check_bool(e: &Expr, env: &BTreeMap<Ident, SemType>, loc: &str, what: &str, r: &mut ValidationReport) {
    match type_of(e, env) {
        Ok(SemType::Bool) => {}
        Ok(SemType::Int) => r.push(ViolationKind::TypeError, loc, format!("{what} `{e}` is not boolean")),
        Err(err) => report_type_error(err, loc, what, r),
    }
}

fn report_type_error(err: crate::expr::TypeError, loc: &str, what: &str, r: &mut ValidationReport) {
    let kind = match err {
        crate::expr::TypeError::Undeclared(_) => ViolationKind::UndeclaredVariable,
        _ => ViolationKind::TypeError,
    };
    r.push(kind, loc, format!("{what}: {err}"));
}

fn check_action(
    c: &Component,
    s: &ServiceSpec,
    a: &Action,
    env: &BTreeMap<Ident, SemType>,
    loc: &str,
    r: &mut ValidationReport,
) {
    match a {
        Action::Assign { target, value } => match env.get(target) {
            None => r.push(
                ViolationKind::UndeclaredVariable,
                loc,
                format!("assignment to undeclared variable `{target}`"),
            ),
            Some(want) => match type_of(value, env) {
                Ok(got) if got == *want => {}
                Ok(got) => r.push(
                    ViolationKind::TypeError,
                    loc,
                    format!("`{target} := {value}` assigns {got} to {want}"),
                ),
                Err(err) => report_type_error(err, loc, "assignment", r),
            },
        },
        Action::Comm(comm) => {
            if comm.direction.binds() {
                match comm.binders() {
                    None => r.push(
                        ViolationKind::BinderNotVariable,
                        loc,
                        format!("`{comm}` must bind plain variables"),
                    ),
                    Some(names) => {
                        for n in names {
                            if !env.contains_key(n) {
                                r.push(
                                    ViolationKind::UndeclaredVariable,
                                    loc,
                                    format!("binder `{n}` is not declared"),
                                );
                            }
                        }
                    }
                }
            } else {
                for arg in &comm.args {
                    if let Err(err) = type_of(arg, env) {
                        report_type_error(err, loc, "message argument", r);
                    }
                }
            }
            match comm.channel {
                ChannelRef::Caller if s.kind != ServiceKind::Provided => r.push(
                    ViolationKind::CallerOutsideProvided,
                    loc,
                    "CALLER is only meaningful inside a provided service",
                ),
                ChannelRef::SelfChannel
                    if matches!(comm.direction, Direction::Call | Direction::Await)
                        && !(s.dependency.ints.contains(&comm.message)
                            && c.services.contains_key(&comm.message)) =>
                {
                    r.push(
                        ViolationKind::SelfCallNotInternal,
                        loc,
                        format!("SELF call to `{}` which is not an internal service", comm.message),
                    )
                }
                _ => {}
            }
        }
        Action::Enter(_) | Action::Exit(_) => {}
    }
}
