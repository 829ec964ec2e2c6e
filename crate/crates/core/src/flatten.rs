//! Expansion of sub-service annotations into a plain LTS.
//!
//! For every state `s` annotated with sub-service `p`, the behavior of `p`
//! (itself flattened) is inlined under fresh state ids `s.p.<state>`, an
//! internal `enter(p)` edge leads from `s` to the inlined initial state and
//! an `exit(p)` edge leads from each inlined final state back to `s`. The
//! annotated state keeps its own transitions, so sub-services stay optional.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::Ident;
use crate::model::{Action, Behavior, Component, Label, StateId, Transition};

pub const DEFAULT_DEPTH_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlattenError {
    #[error("service `{0}` does not exist")]
    UnknownService(Ident),
    #[error("sub-service nesting deeper than {limit} at `{service}`")]
    DepthExceeded { service: Ident, limit: usize },
}

pub fn flatten_behavior(c: &Component, svc: &str, depth_limit: usize) -> Result<Behavior, FlattenError> {
    flatten_at(c, svc, 0, depth_limit)
}

fn flatten_at(c: &Component, svc: &str, depth: usize, limit: usize) -> Result<Behavior, FlattenError> {
    if depth > limit {
        return Err(FlattenError::DepthExceeded {
            service: svc.to_string(),
            limit,
        });
    }
    let spec = c
        .service(svc)
        .ok_or_else(|| FlattenError::UnknownService(svc.to_string()))?;
    let b = &spec.behavior;
    if !b.is_annotated() {
        let mut plain = b.clone();
        plain.annotations.clear();
        return Ok(plain);
    }

    let mut out = Behavior {
        states: b.states.clone(),
        transitions: b.transitions.clone(),
        annotations: BTreeMap::new(),
        initial: b.initial.clone(),
        finals: b.finals.clone(),
    };
    for (state, subs) in &b.annotations {
        for sub in subs {
            let inner = flatten_at(c, sub, depth + 1, limit)?;
            let fresh = |s: &StateId| StateId(format!("{state}.{sub}.{s}"));
            out.states.extend(inner.states.iter().map(fresh));
            out.transitions.push(Transition {
                source: state.clone(),
                label: Label::new(None, vec![Action::Enter(sub.clone())]),
                target: fresh(&inner.initial),
            });
            out.transitions.extend(inner.transitions.iter().map(|t| Transition {
                source: fresh(&t.source),
                label: t.label.clone(),
                target: fresh(&t.target),
            }));
            for f in &inner.finals {
                out.transitions.push(Transition {
                    source: fresh(f),
                    label: Label::new(None, vec![Action::Exit(sub.clone())]),
                    target: state.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Names of every service inlined when flattening `svc`, including `svc`.
pub fn inlined_services(c: &Component, svc: &str, depth_limit: usize) -> Result<Vec<Ident>, FlattenError> {
    fn walk(c: &Component, svc: &str, depth: usize, limit: usize, out: &mut Vec<Ident>) -> Result<(), FlattenError> {
        if depth > limit {
            return Err(FlattenError::DepthExceeded {
                service: svc.to_string(),
                limit,
            });
        }
        let spec = c
            .service(svc)
            .ok_or_else(|| FlattenError::UnknownService(svc.to_string()))?;
        if !out.iter().any(|s| s == svc) {
            out.push(svc.to_string());
        }
        for subs in spec.behavior.annotations.values() {
            for sub in subs {
                walk(c, sub, depth + 1, limit, out)?;
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(c, svc, 0, depth_limit, &mut out)?;
    Ok(out)
}
