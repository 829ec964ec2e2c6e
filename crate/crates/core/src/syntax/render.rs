use std::fmt::Write;

use crate::model::{Behavior, Component, ServiceSpec};

/// Canonical text of a component. Parsing the output yields an equal component.
pub fn render_component(c: &Component) -> String {
    let mut out = String::new();
    writeln!(out, "COMPONENT {}", c.name).unwrap();
    if !c.provided.is_empty() {
        writeln!(out, "  PROVIDES {}", join(c.provided.iter())).unwrap();
    }
    if !c.required.is_empty() {
        writeln!(out, "  REQUIRES {}", join(c.required.iter())).unwrap();
    }
    for spec in c.services.values() {
        out.push('\n');
        render_service(&mut out, spec);
    }
    out.push_str("END\n");
    out
}

pub fn render_components(cs: &[Component]) -> String {
    cs.iter().map(render_component).collect::<Vec<_>>().join("\n")
}

fn join<'a>(items: impl Iterator<Item = &'a String>) -> String {
    items.map(String::as_str).collect::<Vec<_>>().join(", ")
}

fn render_service(out: &mut String, s: &ServiceSpec) {
    writeln!(out, "  SERVICE {}", s.signature).unwrap();
    out.push_str("    INTERFACE\n");
    let dep = &s.dependency;
    for (key, set) in [("subs", &dep.subs), ("cals", &dep.cals), ("reqs", &dep.reqs), ("ints", &dep.ints)] {
        if !set.is_empty() {
            writeln!(out, "      {key}: {}", join(set.iter())).unwrap();
        }
    }
    if !s.properties.is_empty() {
        writeln!(out, "    PROPERTIES {}", join(s.properties.iter())).unwrap();
    }
    writeln!(out, "    PRE {}", s.precondition).unwrap();
    writeln!(out, "    POST {}", s.postcondition).unwrap();
    if !s.locals.is_empty() {
        let decls: Vec<String> = s.locals.iter().map(|v| format!("{}: {}", v.name, v.ty)).collect();
        writeln!(out, "    VARIABLES {}", decls.join(", ")).unwrap();
    }
    out.push_str("    BEHAVIOUR\n");
    out.push_str(&render_behavior(&s.behavior, 6));
    out.push_str("  END\n");
}

/// The body of a BEHAVIOUR block. Flattened behaviors print their
/// enter/exit edges as `enter(p)` / `exit(p)`, which the parser does not accept.
pub fn render_behavior(b: &Behavior, indent: usize) -> String {
    let pad = " ".repeat(indent);
    let mut out = String::new();
    writeln!(out, "{pad}INIT {}", b.initial).unwrap();
    if !b.finals.is_empty() {
        let finals: Vec<&str> = b.finals.iter().map(|s| s.as_str()).collect();
        writeln!(out, "{pad}FINAL {}", finals.join(", ")).unwrap();
    }
    let states: Vec<&str> = b.states.iter().map(|s| s.as_str()).collect();
    writeln!(out, "{pad}STATES {}", states.join(", ")).unwrap();
    for (state, subs) in &b.annotations {
        writeln!(out, "{pad}{state} <{}>", join(subs.iter())).unwrap();
    }
    for t in &b.transitions {
        let label = t.label.to_string();
        if label.is_empty() {
            writeln!(out, "{pad}{} --- ---> {}", t.source, t.target).unwrap();
        } else {
            writeln!(out, "{pad}{} --- {label} ---> {}", t.source, t.target).unwrap();
        }
    }
    out
}
