//! In-memory service registry: registration, discovery, binding and
//! invocation, with unregistration modelling volatile services.
//!
//! Every mutation increments the registry epoch. A binding records the
//! epoch it was made at and goes stale once its descriptor is unregistered.

mod query;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, PoisonError, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{link, AssemblyError, Link, ServiceKey};
use crate::expr::{Expr, Ident, Store};
use crate::model::{
    Action, Behavior, ChannelRef, Communication, Component, Direction, Label, ServiceKind, ServiceSpec, Signature,
    StateId, Transition, VarDecl,
};
use crate::sim::{self, SimError, SimRun};
use crate::syntax::{parse_component_file, render_component};

pub use query::{entails, Query, QueryBuilder, ENTAILMENT_DOMAIN, ENTAILMENT_MAX_VARS};

pub type DescriptorId = String;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{provider} already registers {signature}")]
    DuplicateRegistration { provider: Ident, signature: String },
    #[error("unknown descriptor id `{0}`")]
    UnknownId(DescriptorId),
    #[error("binding on channel `{0}` is stale: its service was unregistered")]
    StaleBinding(Ident),
    #[error("no binding on channel `{0}`")]
    UnknownBinding(Ident),
    #[error("a query needs at least one criterion")]
    EmptyQuery,
    #[error("bad name pattern {0}")]
    BadPattern(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("no live service satisfies {provider}'s requirement {service}")]
    UnresolvedRequirement { provider: Ident, service: String },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A published service. The descriptor fields are copied from the
/// provider component's service, which is kept for invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDescriptor {
    pub id: DescriptorId,
    pub provider: Ident,
    pub signature: Signature,
    pub precondition: Expr,
    pub postcondition: Expr,
    pub properties: Vec<Ident>,
    pub component: Component,
}

impl ServiceDescriptor {
    /// Describes provided service `service` of `component`. The id is
    /// assigned on registration.
    pub fn new(component: &Component, service: &str) -> Result<Self, RegistryError> {
        let spec = component
            .service(service)
            .filter(|s| s.kind == ServiceKind::Provided && component.provided.contains(service))
            .ok_or_else(|| {
                RegistryError::InvalidDescriptor(format!("{} does not provide `{service}`", component.name))
            })?;
        Ok(ServiceDescriptor {
            id: DescriptorId::new(),
            provider: component.name.clone(),
            signature: spec.signature.clone(),
            precondition: spec.precondition.clone(),
            postcondition: spec.postcondition.clone(),
            properties: spec.properties.clone(),
            component: component.clone(),
        })
    }

    pub fn spec(&self) -> &ServiceSpec {
        &self.component.services[&self.signature.name]
    }

    pub fn key(&self) -> ServiceKey {
        ServiceKey::new(&self.provider, &self.signature.name)
    }

    fn consistent(&self) -> bool {
        self.component.name == self.provider
            && self.component.provided.contains(&self.signature.name)
            && self.component.service(&self.signature.name).is_some_and(|s| {
                s.signature == self.signature
                    && s.precondition == self.precondition
                    && s.postcondition == self.postcondition
                    && s.properties == self.properties
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub client: Ident,
    pub descriptor_id: DescriptorId,
    pub channel: Ident,
    pub epoch: u64,
}

#[derive(Debug, Clone)]
struct Entry {
    descriptor: ServiceDescriptor,
    unregistered_at: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: Vec<Entry>,
    bindings: BTreeMap<Ident, Binding>,
    epoch: u64,
    next_id: u64,
    next_channel: u64,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Number of live descriptors.
    pub fn len(&self) -> usize {
        self.live().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn live(&self) -> impl Iterator<Item = &ServiceDescriptor> {
        self.entries
            .iter()
            .filter(|e| e.unregistered_at.is_none())
            .map(|e| &e.descriptor)
    }

    fn entry(&self, id: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.descriptor.id == id)
    }

    pub fn get(&self, id: &str) -> Option<&ServiceDescriptor> {
        self.entry(id)
            .filter(|e| e.unregistered_at.is_none())
            .map(|e| &e.descriptor)
    }

    pub fn register(&mut self, mut d: ServiceDescriptor) -> Result<DescriptorId, RegistryError> {
        if !d.consistent() {
            return Err(RegistryError::InvalidDescriptor(format!(
                "fields of {} disagree with its component",
                d.key()
            )));
        }
        if self
            .live()
            .any(|o| o.provider == d.provider && o.signature == d.signature)
        {
            return Err(RegistryError::DuplicateRegistration {
                provider: d.provider,
                signature: d.signature.to_string(),
            });
        }
        self.next_id += 1;
        d.id = format!("svc-{}", self.next_id);
        let id = d.id.clone();
        self.entries.push(Entry {
            descriptor: d,
            unregistered_at: None,
        });
        self.epoch += 1;
        Ok(id)
    }

    /// Live descriptors matching `q`, most shared property tags first, then
    /// in registration order.
    pub fn discover(&self, q: &Query) -> Vec<ServiceDescriptor> {
        let mut hits: Vec<&ServiceDescriptor> = self.live().filter(|d| q.matches(d)).collect();
        hits.sort_by_key(|d| Reverse(q.overlap(d)));
        hits.into_iter().cloned().collect()
    }

    pub fn bind(&mut self, client: &str, id: &str) -> Result<Binding, RegistryError> {
        if self.get(id).is_none() {
            return Err(RegistryError::UnknownId(id.to_string()));
        }
        self.epoch += 1;
        self.next_channel += 1;
        let b = Binding {
            client: client.to_string(),
            descriptor_id: id.to_string(),
            channel: format!("ch{}", self.next_channel),
            epoch: self.epoch,
        };
        self.bindings.insert(b.channel.clone(), b.clone());
        Ok(b)
    }

    pub fn unbind(&mut self, b: &Binding) -> Result<(), RegistryError> {
        if self.bindings.remove(&b.channel).is_none() {
            return Err(RegistryError::UnknownBinding(b.channel.clone()));
        }
        self.epoch += 1;
        Ok(())
    }

    /// Marks the descriptor dead; its bindings become stale.
    pub fn unregister(&mut self, id: &str) -> Result<(), RegistryError> {
        let epoch = self.epoch + 1;
        let e = self
            .entries
            .iter_mut()
            .find(|e| e.descriptor.id == id && e.unregistered_at.is_none())
            .ok_or_else(|| RegistryError::UnknownId(id.to_string()))?;
        e.unregistered_at = Some(epoch);
        self.epoch = epoch;
        Ok(())
    }

    pub fn is_stale(&self, b: &Binding) -> bool {
        self.entry(&b.descriptor_id)
            .and_then(|e| e.unregistered_at)
            .is_some_and(|at| at > b.epoch)
    }

    /// Runs the bound service behind a generated client stub.
    pub fn invoke(&self, b: &Binding, args: &Store, seed: u64, max_steps: usize) -> Result<SimRun, RegistryError> {
        if self.is_stale(b) {
            return Err(RegistryError::StaleBinding(b.channel.clone()));
        }
        if self.bindings.get(&b.channel) != Some(b) {
            return Err(RegistryError::UnknownBinding(b.channel.clone()));
        }
        let d = self
            .get(&b.descriptor_id)
            .ok_or_else(|| RegistryError::UnknownId(b.descriptor_id.clone()))?;
        let stub = client_stub(b, d);
        let entry = ServiceKey::new(&stub.name, "invoke");
        let required = ServiceKey::new(&stub.name, &d.signature.name);
        let mut links = vec![Link::new(b.channel.clone(), required, d.key())];
        let mut components = vec![stub];
        self.resolve_requirements(d, &mut components, &mut links)?;
        let assembly = link(components, links)?;
        Ok(sim::run(&assembly, &entry, args, seed, max_steps)?)
    }

    /// Adds `d`'s provider and, transitively, a live provider for every
    /// service it calls, taken in registration order.
    fn resolve_requirements(
        &self,
        d: &ServiceDescriptor,
        components: &mut Vec<Component>,
        links: &mut Vec<Link>,
    ) -> Result<(), RegistryError> {
        let mut todo = vec![d.clone()];
        while let Some(d) = todo.pop() {
            if components.iter().any(|c| c.name == d.provider) {
                continue;
            }
            let c = &d.component;
            for (channel, req) in required_calls(c) {
                let sig = &c.services[&req].signature;
                let found = self
                    .live()
                    .find(|o| same_shape(&o.signature, sig) && o.provider != c.name)
                    .ok_or_else(|| RegistryError::UnresolvedRequirement {
                        provider: c.name.clone(),
                        service: sig.to_string(),
                    })?;
                links.push(Link::new(channel, ServiceKey::new(&c.name, &req), found.key()));
                todo.push(found.clone());
            }
            components.push(d.component.clone());
        }
        Ok(())
    }

    /// Live descriptors as snapshot records.
    pub fn export(&self) -> Vec<DescriptorRecord> {
        self.live().map(DescriptorRecord::from).collect()
    }

    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(&self.export()).expect("records serialize")
    }

    /// A registry holding the given descriptors, ids preserved.
    pub fn import(records: &[DescriptorRecord]) -> Result<Registry, RegistryError> {
        let mut r = Registry::new();
        for rec in records {
            let d = rec.to_descriptor()?;
            if r.entry(&d.id).is_some() {
                return Err(RegistryError::Snapshot(format!("id `{}` appears twice", d.id)));
            }
            if r.live().any(|o| o.provider == d.provider && o.signature == d.signature) {
                return Err(RegistryError::DuplicateRegistration {
                    provider: d.provider,
                    signature: d.signature.to_string(),
                });
            }
            if let Some(n) = d.id.strip_prefix("svc-").and_then(|n| n.parse::<u64>().ok()) {
                r.next_id = r.next_id.max(n);
            }
            r.entries.push(Entry {
                descriptor: d,
                unregistered_at: None,
            });
            r.epoch += 1;
        }
        Ok(r)
    }

    pub fn import_json(text: &str) -> Result<Registry, RegistryError> {
        let records: Vec<DescriptorRecord> =
            serde_json::from_str(text).map_err(|e| RegistryError::Snapshot(e.to_string()))?;
        Registry::import(&records)
    }
}

/// Same name, parameter types and result type.
fn same_shape(a: &Signature, b: &Signature) -> bool {
    a.name == b.name
        && a.result == b.result
        && a.params.len() == b.params.len()
        && a.params.iter().zip(&b.params).all(|(x, y)| x.ty == y.ty)
}

/// (channel, required service) pairs for every call of a required service
/// made on a named channel in `c`.
fn required_calls(c: &Component) -> BTreeSet<(Ident, Ident)> {
    c.services
        .values()
        .flat_map(|s| &s.behavior.transitions)
        .filter_map(|t| t.label.communication().map(|(_, comm)| comm))
        .filter(|comm| comm.direction == Direction::Call && c.required.contains(&comm.message))
        .filter_map(|comm| match &comm.channel {
            ChannelRef::Named(ch) => Some((ch.clone(), comm.message.clone())),
            _ => None,
        })
        .collect()
}

fn client_stub(b: &Binding, d: &ServiceDescriptor) -> Component {
    let name = if b.client == d.provider {
        format!("{}_client", b.client)
    } else {
        b.client.clone()
    };
    let sig = &d.signature;
    let mut reply = "reply".to_string();
    while sig.params.iter().any(|p| p.name == reply) {
        reply.push('_');
    }
    let params: Vec<Expr> = sig.params.iter().map(|p| Expr::var(&p.name)).collect();
    let comm = |direction, args| {
        Action::Comm(Communication {
            channel: ChannelRef::Named(b.channel.clone()),
            direction,
            message: sig.name.clone(),
            args,
        })
    };
    let mut behavior = Behavior::single_state("s0");
    behavior.finals.clear();
    behavior.states.insert(StateId::new("s1"));
    behavior.transitions.push(Transition::new(
        "s0",
        Label::new(None, vec![comm(Direction::Call, params)]),
        "s1",
    ));
    let mut locals = Vec::new();
    if let Some(ty) = sig.result {
        locals.push(VarDecl::new(&reply, ty));
        behavior.states.insert(StateId::new("s2"));
        behavior.transitions.push(Transition::new(
            "s1",
            Label::new(None, vec![comm(Direction::Await, vec![Expr::var(&reply)])]),
            "s2",
        ));
        behavior.finals.insert(StateId::new("s2"));
    } else {
        behavior.finals.insert(StateId::new("s1"));
    }

    let mut entry = ServiceSpec::new(
        Signature {
            name: "invoke".into(),
            params: sig.params.clone(),
            result: None,
        },
        ServiceKind::Provided,
    );
    entry.precondition = d.precondition.clone();
    entry.locals = locals;
    entry.behavior = behavior;
    entry.dependency.reqs.insert(sig.name.clone());

    let mut required = ServiceSpec::new(sig.clone(), ServiceKind::Required);
    required.precondition = d.precondition.clone();
    Component::new(name).with_service(entry).with_service(required)
}

/// Snapshot form of a descriptor. `source` is the provider component in
/// canonical `.kmelia` syntax; the other fields are for readers and are
/// checked against it on import.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorRecord {
    pub id: DescriptorId,
    pub provider: Ident,
    pub service: Ident,
    pub signature: String,
    pub precondition: String,
    pub postcondition: String,
    pub properties: Vec<Ident>,
    pub source: String,
}

impl From<&ServiceDescriptor> for DescriptorRecord {
    fn from(d: &ServiceDescriptor) -> Self {
        DescriptorRecord {
            id: d.id.clone(),
            provider: d.provider.clone(),
            service: d.signature.name.clone(),
            signature: d.signature.to_string(),
            precondition: d.precondition.to_string(),
            postcondition: d.postcondition.to_string(),
            properties: d.properties.clone(),
            source: render_component(&d.component),
        }
    }
}

impl DescriptorRecord {
    pub fn to_descriptor(&self) -> Result<ServiceDescriptor, RegistryError> {
        let bad = |m: String| RegistryError::Snapshot(format!("record `{}`: {m}", self.id));
        let comps = parse_component_file(&self.source).map_err(|e| bad(e.to_string()))?;
        let [c] = comps.as_slice() else {
            return Err(bad("source must hold exactly one component".into()));
        };
        if c.name != self.provider {
            return Err(bad(format!("source defines {}, not {}", c.name, self.provider)));
        }
        let mut d = ServiceDescriptor::new(c, &self.service)?;
        d.id = self.id.clone();
        if DescriptorRecord::from(&d) != *self {
            return Err(bad("fields disagree with source".into()));
        }
        Ok(d)
    }
}

/// A registry shared between threads: discovers run concurrently,
/// mutations are exclusive.
#[derive(Debug, Clone, Default)]
pub struct SharedRegistry(Arc<RwLock<Registry>>);

impl SharedRegistry {
    pub fn new(r: Registry) -> Self {
        SharedRegistry(Arc::new(RwLock::new(r)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Registry> {
        self.0.read().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Registry> {
        self.0.write().unwrap_or_else(PoisonError::into_inner)
    }
}

/// Fans discovery out to child registries and merges the answers with the
/// same ordering rule, children taken in order.
#[derive(Debug, Clone, Default)]
pub struct Federation {
    pub children: Vec<SharedRegistry>,
}

impl Federation {
    pub fn new(children: Vec<SharedRegistry>) -> Self {
        Federation { children }
    }

    /// Matches tagged with the index of the child that holds them.
    pub fn discover(&self, q: &Query) -> Vec<(usize, ServiceDescriptor)> {
        let mut hits: Vec<(usize, ServiceDescriptor)> = self
            .children
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.read().discover(q).into_iter().map(move |d| (i, d)))
            .collect();
        hits.sort_by_key(|(_, d)| Reverse(q.overlap(d)));
        hits
    }
}
