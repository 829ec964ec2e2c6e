//! Synthetic assemblies for the benchmarks.

use kmelia::assembly::{link, Assembly, Link, ServiceKey};
use kmelia::syntax::parse_component_file;

/// Source of a call chain `C0 -> C1 -> ... -> C{n-1}`: component `Ci`
/// forwards its argument to the next on channel `ni` and returns the
/// answer plus one.
pub fn chain_source(n: usize) -> String {
    let mut out = String::new();
    for i in 0..n {
        let last = i + 1 == n;
        out.push_str(&format!("COMPONENT C{i}\n  PROVIDES s\n"));
        if !last {
            out.push_str("  REQUIRES t\n");
        }
        out.push_str("  SERVICE s(v: int): int\n    VARIABLES r: int\n    BEHAVIOUR\n      INIT a\n      FINAL z\n");
        if i > 0 {
            out.push_str("      a --- CALLER??s(v) ---> b\n");
        } else {
            out.push_str("      a --- ---> b\n");
        }
        if last {
            out.push_str("      b --- r := v ---> d\n");
        } else {
            out.push_str(&format!("      b --- n{i}!!t(v) ---> c\n      c --- n{i}??t(r) ---> d\n"));
        }
        out.push_str("      d --- CALLER!!s(r + 1) ---> z\n  END\n");
        if !last {
            out.push_str("  SERVICE t(v: int): int\n  END\n");
        }
        out.push_str("END\n\n");
    }
    out
}

pub fn chain(n: usize) -> Assembly {
    let components = parse_component_file(&chain_source(n)).expect("generated source parses");
    let links = (0..n.saturating_sub(1))
        .map(|i| {
            Link::new(
                format!("n{i}"),
                ServiceKey::new(format!("C{i}"), "t"),
                ServiceKey::new(format!("C{}", i + 1), "s"),
            )
        })
        .collect();
    link(components, links).expect("generated chain links")
}
