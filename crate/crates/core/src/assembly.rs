//! Assemblies: components plus channel links from required services to
//! provided services.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Ident;
use crate::model::{Action, ChannelRef, Component, Direction, ServiceKind, ServiceSpec};
use crate::syntax::{LoadError, SourceFile};

/// `Component.service`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServiceKey {
    pub component: Ident,
    pub service: Ident,
}

impl ServiceKey {
    pub fn new(component: impl Into<Ident>, service: impl Into<Ident>) -> Self {
        ServiceKey {
            component: component.into(),
            service: service.into(),
        }
    }
}

impl fmt::Display for ServiceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.service)
    }
}

impl Serialize for ServiceKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for ServiceKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((c, svc)) if !c.is_empty() && !svc.is_empty() && !svc.contains('.') => {
                Ok(ServiceKey::new(c, svc))
            }
            _ => Err(format!("`{s}` is not of the form Component.service")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub channel: Ident,
    /// Required side.
    pub from: ServiceKey,
    /// Provided side.
    pub to: ServiceKey,
}

impl Link {
    pub fn new(channel: impl Into<Ident>, from: ServiceKey, to: ServiceKey) -> Self {
        Link {
            channel: channel.into(),
            from,
            to,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssemblyError {
    #[error("unresolved endpoint {endpoint}: {reason}")]
    UnresolvedEndpoint { endpoint: String, reason: String },
    #[error("channel `{channel}`: signature {required} cannot bind {provided}")]
    SignatureMismatch {
        channel: Ident,
        required: String,
        provided: String,
    },
    #[error("duplicate channel `{0}`")]
    DuplicateChannel(Ident),
    #[error("component `{0}` appears twice")]
    DuplicateComponent(Ident),
}

/// A validated set of components and links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    components: Vec<Component>,
    links: Vec<Link>,
}

impl Assembly {
    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn service(&self, key: &ServiceKey) -> Option<&ServiceSpec> {
        self.component(&key.component)?.service(&key.service)
    }

    /// The link a named channel reference inside `component` designates:
    /// either the link of the required service with that name, or the link
    /// whose channel has that name.
    pub fn resolve_named(&self, component: &str, name: &str) -> Option<&Link> {
        self.links
            .iter()
            .find(|l| l.from.component == component && (l.from.service == name || l.channel == name))
    }

    pub fn incoming(&self, provided: &ServiceKey) -> impl Iterator<Item = &Link> {
        let key = provided.clone();
        self.links.iter().filter(move |l| l.to == key)
    }

    /// Loads an assembly file; component paths are relative to the file.
    pub fn load(path: &Path) -> Result<Assembly, AssemblyLoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| AssemblyLoadError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: AssemblyFile = serde_json::from_str(&text).map_err(|source| AssemblyLoadError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        file.resolve(base)
    }
}

/// On-disk assembly description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyFile {
    pub components: Vec<String>,
    pub links: Vec<LinkSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub channel: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Error)]
pub enum AssemblyLoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Source(#[from] LoadError),
    #[error(transparent)]
    Link(#[from] AssemblyError),
}

impl AssemblyFile {
    pub fn resolve(&self, base: &Path) -> Result<Assembly, AssemblyLoadError> {
        let mut components = Vec::new();
        for rel in &self.components {
            components.extend(SourceFile::load(&base.join(rel))?.components);
        }
        let mut links = Vec::new();
        for spec in &self.links {
            let parse = |s: &str| {
                s.parse::<ServiceKey>().map_err(|reason| AssemblyError::UnresolvedEndpoint {
                    endpoint: s.to_string(),
                    reason,
                })
            };
            links.push(Link::new(spec.channel.clone(), parse(&spec.from)?, parse(&spec.to)?));
        }
        Ok(link(components, links)?)
    }
}

/// Validates endpoints, signatures and channel names and builds the assembly.
pub fn link(components: Vec<Component>, links: Vec<Link>) -> Result<Assembly, AssemblyError> {
    let mut names = BTreeSet::new();
    for c in &components {
        if !names.insert(c.name.clone()) {
            return Err(AssemblyError::DuplicateComponent(c.name.clone()));
        }
    }
    let find = |key: &ServiceKey| -> Result<&ServiceSpec, AssemblyError> {
        let unresolved = |reason: String| AssemblyError::UnresolvedEndpoint {
            endpoint: key.to_string(),
            reason,
        };
        let c = components
            .iter()
            .find(|c| c.name == key.component)
            .ok_or_else(|| unresolved("no such component".into()))?;
        c.service(&key.service)
            .ok_or_else(|| unresolved("no such service".into()))
    };

    let mut channels = BTreeSet::new();
    let mut bound_required = BTreeSet::new();
    for l in &links {
        let req = find(&l.from)?;
        let prov = find(&l.to)?;
        if req.kind != ServiceKind::Required {
            return Err(AssemblyError::UnresolvedEndpoint {
                endpoint: l.from.to_string(),
                reason: "link source must be a required service".into(),
            });
        }
        if prov.kind != ServiceKind::Provided {
            return Err(AssemblyError::UnresolvedEndpoint {
                endpoint: l.to.to_string(),
                reason: "link target must be a provided service".into(),
            });
        }
        if !req.signature.compatible_with(&prov.signature) {
            return Err(AssemblyError::SignatureMismatch {
                channel: l.channel.clone(),
                required: req.signature.to_string(),
                provided: prov.signature.to_string(),
            });
        }
        if !channels.insert(l.channel.clone()) {
            return Err(AssemblyError::DuplicateChannel(l.channel.clone()));
        }
        // one channel per required service
        if !bound_required.insert(l.from.clone()) {
            return Err(AssemblyError::DuplicateChannel(l.channel.clone()));
        }
    }
    // a channel name must not shadow another linked required service of the same component
    for l in &links {
        if links
            .iter()
            .any(|o| o != l && o.from.component == l.from.component && o.from.service == l.channel)
        {
            return Err(AssemblyError::DuplicateChannel(l.channel.clone()));
        }
    }

    let asm = Assembly { components, links };
    for c in &asm.components {
        for (name, spec) in &c.services {
            if spec.kind != ServiceKind::Provided {
                continue;
            }
            for t in &spec.behavior.transitions {
                for a in &t.label.actions {
                    let Action::Comm(comm) = a else { continue };
                    let ChannelRef::Named(n) = &comm.channel else { continue };
                    let known = asm.resolve_named(&c.name, n).is_some()
                        || spec.dependency.cals.contains(n)
                        || spec.dependency.reqs.contains(n)
                        || c.required.contains(n);
                    if !known {
                        return Err(AssemblyError::UnresolvedEndpoint {
                            endpoint: format!("{}.{}", c.name, name),
                            reason: format!("channel `{n}` matches no link and no required service"),
                        });
                    }
                }
            }
        }
    }
    Ok(asm)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DependencyFinding {
    /// A service requires `missing` from its caller, but a linked caller
    /// component does not provide it.
    CallerLacksService {
        service: String,
        missing: Ident,
        caller: Ident,
        channel: Ident,
    },
    /// A scoped sub-service is used from outside the interaction it belongs to.
    OutOfScopeUse {
        service: String,
        scope: Vec<String>,
        user: String,
    },
}

impl fmt::Display for DependencyFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DependencyFinding::CallerLacksService {
                service,
                missing,
                caller,
                channel,
            } => write!(
                f,
                "{service} requires `{missing}` from its caller, but {caller} (channel `{channel}`) does not provide it"
            ),
            DependencyFinding::OutOfScopeUse { service, scope, user } => write!(
                f,
                "{service} is only accessible during an interaction with {}, but {user} uses it",
                scope.join(" or ")
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DependencyReport {
    pub findings: Vec<DependencyFinding>,
}

impl DependencyReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks caller-provided requirements and the scope rule of sub-services.
pub fn check_dependencies(a: &Assembly) -> DependencyReport {
    let mut report = DependencyReport::default();

    for l in &a.links {
        let Some(provider) = a.service(&l.to) else { continue };
        let Some(caller) = a.component(&l.from.component) else { continue };
        for r in &provider.dependency.cals {
            if !caller.provided.contains(r) {
                report.findings.push(DependencyFinding::CallerLacksService {
                    service: l.to.to_string(),
                    missing: r.clone(),
                    caller: caller.name.clone(),
                    channel: l.channel.clone(),
                });
            }
        }
    }

    // scoped sub-service -> the services whose interaction gives access to it
    let mut scopes: BTreeMap<ServiceKey, Vec<ServiceKey>> = BTreeMap::new();
    for c in &a.components {
        for (name, spec) in &c.services {
            for q in &spec.dependency.subs {
                if c.services.contains_key(q) && !c.provided.contains(q) {
                    scopes
                        .entry(ServiceKey::new(&c.name, q))
                        .or_default()
                        .push(ServiceKey::new(&c.name, name));
                }
            }
        }
    }
    if scopes.is_empty() {
        return report;
    }

    let mut uses: BTreeSet<(ServiceKey, ServiceKey)> = BTreeSet::new();
    for c in &a.components {
        for (name, spec) in &c.services {
            let user = ServiceKey::new(&c.name, name);
            for target in direct_uses(a, c, spec) {
                if scopes.contains_key(&target) {
                    uses.insert((user.clone(), target));
                }
            }
        }
    }
    for (user, q) in uses {
        let owners = &scopes[&q];
        if owners.contains(&user) {
            continue;
        }
        let inside = owners.iter().any(|r| reachable_from(a, r).contains(&user));
        if !inside {
            report.findings.push(DependencyFinding::OutOfScopeUse {
                service: q.to_string(),
                scope: owners.iter().map(|k| k.to_string()).collect(),
                user: user.to_string(),
            });
        }
    }
    report
}

/// Services a service may activate or nest directly: annotated sub-services,
/// internal services, SELF calls and calls through linked channels.
fn direct_uses(a: &Assembly, c: &Component, spec: &ServiceSpec) -> BTreeSet<ServiceKey> {
    let mut out = BTreeSet::new();
    for subs in spec.behavior.annotations.values() {
        out.extend(subs.iter().map(|p| ServiceKey::new(&c.name, p)));
    }
    for p in &spec.dependency.ints {
        out.insert(ServiceKey::new(&c.name, p));
    }
    for t in &spec.behavior.transitions {
        let Some((_, comm)) = t.label.communication() else { continue };
        if comm.direction != Direction::Call {
            continue;
        }
        match &comm.channel {
            ChannelRef::SelfChannel => {
                out.insert(ServiceKey::new(&c.name, &comm.message));
            }
            ChannelRef::Named(n) => {
                if let Some(l) = a.resolve_named(&c.name, n) {
                    out.insert(l.to.clone());
                }
            }
            ChannelRef::Caller => {}
        }
    }
    out
}

fn reachable_from(a: &Assembly, root: &ServiceKey) -> BTreeSet<ServiceKey> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![root.clone()];
    while let Some(k) = stack.pop() {
        if !seen.insert(k.clone()) {
            continue;
        }
        let (Some(c), Some(spec)) = (a.component(&k.component), a.service(&k)) else {
            continue;
        };
        for next in direct_uses(a, c, spec).into_iter().chain(
            spec.dependency
                .subs
                .iter()
                .map(|p| ServiceKey::new(&c.name, p)),
        ) {
            if !seen.contains(&next) {
                stack.push(next);
            }
        }
    }
    seen
}
