//! Scripted registry sessions for `kmelia registry-demo`.
//!
//! A script is `{"steps": [...]}`; each step has an `op` among register,
//! discover, bind, invoke, unbind, unregister, export and import. Steps may
//! name their result with `as` and later steps refer to that name. A step
//! may state what it expects (`expect`, `expect_error`); any unmet
//! expectation or unexpected error is a finding.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use kmelia::expr::{SemType, Store};
use kmelia::registry::{Binding, Query, Registry, RegistryError, ServiceDescriptor};
use kmelia::syntax::{parse_expr, SourceFile};

use crate::Status;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Script {
    steps: Vec<Step>,
}

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Step {
    Register {
        source: String,
        component: Option<String>,
        service: String,
        #[serde(rename = "as")]
        alias: Option<String>,
        expect_error: Option<String>,
    },
    Discover {
        name: Option<String>,
        arity: Option<usize>,
        result: Option<SemType>,
        #[serde(default)]
        properties: Vec<String>,
        entails: Option<String>,
        /// Expected ids or aliases, in order.
        expect: Option<Vec<String>>,
    },
    Bind {
        client: String,
        id: String,
        #[serde(rename = "as")]
        alias: String,
        expect_error: Option<String>,
    },
    Invoke {
        binding: String,
        #[serde(default)]
        args: Store,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_steps")]
        max_steps: usize,
        expect: Option<String>,
        expect_error: Option<String>,
    },
    Unbind {
        binding: String,
        expect_error: Option<String>,
    },
    Unregister {
        id: String,
        expect_error: Option<String>,
    },
    Export {
        path: String,
    },
    Import {
        path: String,
    },
}

fn default_steps() -> usize {
    1000
}

fn error_name(e: &RegistryError) -> &'static str {
    match e {
        RegistryError::DuplicateRegistration { .. } => "DuplicateRegistration",
        RegistryError::UnknownId(_) => "UnknownId",
        RegistryError::StaleBinding(_) => "StaleBinding",
        RegistryError::UnknownBinding(_) => "UnknownBinding",
        RegistryError::EmptyQuery => "EmptyQuery",
        RegistryError::BadPattern(_) => "BadPattern",
        RegistryError::InvalidDescriptor(_) => "InvalidDescriptor",
        RegistryError::Snapshot(_) => "Snapshot",
        RegistryError::UnresolvedRequirement { .. } => "UnresolvedRequirement",
        RegistryError::Assembly(_) => "Assembly",
        RegistryError::Sim(_) => "Sim",
    }
}

struct Session {
    registry: Registry,
    ids: BTreeMap<String, String>,
    bindings: BTreeMap<String, Binding>,
    findings: usize,
}

impl Session {
    fn id(&self, name: &str) -> String {
        self.ids.get(name).cloned().unwrap_or_else(|| name.to_string())
    }

    fn binding(&self, name: &str) -> Result<Binding> {
        self.bindings
            .get(name)
            .cloned()
            .ok_or_else(|| anyhow!("script refers to unknown binding `{name}`"))
    }

    /// Prints the outcome of a fallible step against its expectation.
    fn settle<T>(&mut self, n: usize, what: &str, r: Result<T, RegistryError>, expect_error: Option<&str>, ok: impl FnOnce(&mut Self, T) -> String) {
        match (r, expect_error) {
            (Ok(v), None) => {
                let msg = ok(self, v);
                println!("{n} {what}: {msg}");
            }
            (Ok(_), Some(want)) => {
                println!("{n} {what}: FAIL expected {want}, got success");
                self.findings += 1;
            }
            (Err(e), Some(want)) if error_name(&e) == want => println!("{n} {what}: {want} as expected ({e})"),
            (Err(e), _) => {
                println!("{n} {what}: FAIL {}: {e}", error_name(&e));
                self.findings += 1;
            }
        }
    }
}

pub fn run(path: &Path) -> Result<Status> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let script: Script = serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut s = Session {
        registry: Registry::new(),
        ids: BTreeMap::new(),
        bindings: BTreeMap::new(),
        findings: 0,
    };
    for (i, step) in script.steps.into_iter().enumerate() {
        let n = i + 1;
        match step {
            Step::Register {
                source,
                component,
                service,
                alias,
                expect_error,
            } => {
                let src = SourceFile::load(&base.join(&source))?;
                let c = src
                    .components
                    .iter()
                    .find(|c| component.as_ref().is_none_or(|n| &c.name == n) && c.services.contains_key(&service))
                    .ok_or_else(|| anyhow!("{source} has no service `{service}`"))?;
                let r = ServiceDescriptor::new(c, &service).and_then(|d| s.registry.register(d));
                s.settle(n, "register", r, expect_error.as_deref(), |s, id| {
                    if let Some(a) = alias {
                        s.ids.insert(a, id.clone());
                    }
                    format!("{}.{service} -> {id}", c.name)
                });
            }
            Step::Discover {
                name,
                arity,
                result,
                properties,
                entails,
                expect,
            } => {
                let mut q = Query::builder();
                if let Some(p) = name {
                    q = q.name(p);
                }
                if let Some(a) = arity {
                    q = q.arity(a);
                }
                if let Some(t) = result {
                    q = q.result(t);
                }
                for p in properties {
                    q = q.property(p);
                }
                if let Some(e) = entails {
                    q = q.entails(parse_expr(&e).map_err(|err| anyhow!("entails `{e}`: {err}"))?);
                }
                let q = q.build()?;
                let found: Vec<String> = s.registry.discover(&q).into_iter().map(|d| d.id).collect();
                match expect {
                    Some(want) => {
                        let want: Vec<String> = want.iter().map(|w| s.id(w)).collect();
                        if want == found {
                            println!("{n} discover: [{}]", found.join(", "));
                        } else {
                            println!("{n} discover: FAIL expected [{}], got [{}]", want.join(", "), found.join(", "));
                            s.findings += 1;
                        }
                    }
                    None => println!("{n} discover: [{}]", found.join(", ")),
                }
            }
            Step::Bind {
                client,
                id,
                alias,
                expect_error,
            } => {
                let r = s.registry.bind(&client, &s.id(&id));
                s.settle(n, "bind", r, expect_error.as_deref(), |s, b| {
                    let msg = format!("{client} -> {} on channel {}", b.descriptor_id, b.channel);
                    s.bindings.insert(alias, b);
                    msg
                });
            }
            Step::Invoke {
                binding,
                args,
                seed,
                max_steps,
                expect,
                expect_error,
            } => {
                let b = s.binding(&binding)?;
                let r = s.registry.invoke(&b, &args, seed, max_steps);
                let mut unmet = false;
                s.settle(n, "invoke", r, expect_error.as_deref(), |_, run| {
                    let got = run.outcome.to_string();
                    match &expect {
                        Some(want) if *want != got => {
                            unmet = true;
                            format!("FAIL expected {want}, got {got}")
                        }
                        _ => format!("{got} after {} events", run.trace.len()),
                    }
                });
                if unmet {
                    s.findings += 1;
                }
            }
            Step::Unbind { binding, expect_error } => {
                let b = s.binding(&binding)?;
                let r = s.registry.unbind(&b);
                s.settle(n, "unbind", r, expect_error.as_deref(), |_, ()| format!("{binding} removed"));
            }
            Step::Unregister { id, expect_error } => {
                let id = s.id(&id);
                let r = s.registry.unregister(&id);
                s.settle(n, "unregister", r, expect_error.as_deref(), |_, ()| format!("{id} removed"));
            }
            Step::Export { path } => {
                let target = base.join(&path);
                std::fs::write(&target, s.registry.export_json())
                    .with_context(|| format!("cannot write {}", target.display()))?;
                println!("{n} export: {} descriptors to {path}", s.registry.len());
            }
            Step::Import { path } => {
                let text = std::fs::read_to_string(base.join(&path)).with_context(|| format!("cannot read {path}"))?;
                s.registry = match Registry::import_json(&text) {
                    Ok(r) => r,
                    Err(e) => bail!("import {path}: {e}"),
                };
                s.bindings.clear();
                println!("{n} import: {} descriptors from {path}", s.registry.len());
            }
        }
    }
    Ok(if s.findings == 0 { Status::Clean } else { Status::Findings })
}
