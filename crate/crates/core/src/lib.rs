//! Toolkit for the Kmelia multi-service component model.
//!
//! - [`syntax`]: `.kmelia` parser and canonical printer
//! - [`model`], [`expr`], [`validate`], [`flatten`]: the component model
//! - [`assembly`]: binding required services to provided services
//! - [`analysis`]: synchronized product, deadlock and reachability checks
//! - [`sim`]: seeded execution with runtime contract checking
//! - [`registry`]: register / discover / bind / invoke lifecycle

pub mod analysis;
pub mod assembly;
pub mod expr;
pub mod flatten;
pub mod model;
pub mod registry;
pub mod semantics;
pub mod sim;
pub mod syntax;
pub mod validate;

pub use analysis::{
    check_protocol_compatibility, check_reachability, detect_deadlocks, synchronized_product, Goal,
    ProductLts, ProductOptions, Verdict, VerdictKind,
};
pub use assembly::{check_dependencies, link, Assembly, AssemblyError, Link, ServiceKey};
pub use expr::{eval_expr, AbstractValue, BinOp, EvalError, Expr, Ident, SemType, Store, Value};
pub use flatten::{flatten_behavior, FlattenError, DEFAULT_DEPTH_LIMIT};
pub use model::{
    Action, Behavior, ChannelRef, Communication, Component, Dependency, Direction, Label, Param,
    ServiceKind, ServiceSpec, Signature, StateId, Transition, VarDecl,
};
pub use registry::{Binding, Query, Registry, RegistryError, ServiceDescriptor};
pub use sim::{init_session, run, Outcome, SimRun, SimSession, TraceEvent, TraceKind};
pub use syntax::{parse_component_file, parse_expr, render_component, ParseError, SourceFile};
pub use validate::{validate_component, ValidationReport, Violation, ViolationKind};
