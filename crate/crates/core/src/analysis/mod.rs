//! Explicit-state verification: the synchronized product of an assembly
//! and the checks run on it.
//!
//! Guards whose variables are unknown are explored both ways, so absence of
//! a deadlock is only conclusive for guard-free or fully concrete runs
//! (pass entry arguments through [`ProductOptions::entry_args`]).

mod goal;
mod protocol;

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::assembly::{Assembly, ServiceKey};
use crate::expr::AbstractStore;
use crate::semantics::{ProductState, Reentrancy, Semantics, SemanticsError, SyncLabel, WitnessItem};

pub use goal::{parse_goal, Goal};
pub use protocol::check_protocol_compatibility;

pub const DEFAULT_BOUND: usize = 100_000;

pub const GUARD_NOTE: &str = "guards over unknown values are explored both ways";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductOptions {
    /// Maximum number of product states.
    pub bound: usize,
    pub entry_args: AbstractStore,
}

impl Default for ProductOptions {
    fn default() -> Self {
        ProductOptions {
            bound: DEFAULT_BOUND,
            entry_args: AbstractStore::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateStatus {
    /// Has at least one move.
    Open,
    /// No move, successful termination.
    Terminated,
    /// No move, some service not final or a call still open.
    Stuck,
}

/// Reachable part of the product, states numbered in breadth-first order
/// from the initial state 0.
#[derive(Debug, Clone)]
pub struct ProductLts {
    pub entry: ServiceKey,
    pub states: Vec<ProductState>,
    pub transitions: Vec<(usize, SyncLabel, usize)>,
    pub status: Vec<StateStatus>,
    /// Set when the state bound cut exploration short.
    pub truncated: bool,
    pub reentrancy: BTreeSet<Reentrancy>,
    index: HashMap<ProductState, usize>,
    /// Transition through which each state was first reached.
    parent: Vec<Option<usize>>,
    /// Every active service final and no call open, per state.
    completed: Vec<bool>,
}

impl ProductLts {
    pub const INITIAL: usize = 0;

    pub fn index_of(&self, st: &ProductState) -> Option<usize> {
        self.index.get(st).copied()
    }

    pub fn outgoing(&self, s: usize) -> impl Iterator<Item = &(usize, SyncLabel, usize)> {
        self.transitions.iter().filter(move |t| t.0 == s)
    }

    /// Whether `st`, a state of this product, is a successful termination
    /// point (it may still have moves).
    pub fn is_completed(&self, st: &ProductState) -> bool {
        self.index_of(st).is_some_and(|i| self.completed[i])
    }

    /// Shortest sequence of labels from the initial state to `s`.
    pub fn witness(&self, mut s: usize) -> Vec<SyncLabel> {
        let mut out = Vec::new();
        while let Some(t) = self.parent[s] {
            let (from, label, _) = &self.transitions[t];
            out.push(label.clone());
            s = *from;
        }
        out.reverse();
        out
    }
}

pub fn synchronized_product(a: &Assembly, entry: &ServiceKey, opts: &ProductOptions) -> Result<ProductLts, AnalysisError> {
    let sem = Semantics::new(a.clone())?;
    explore(&sem, entry, opts)
}

/// Breadth-first construction of the product from `entry`'s activation.
pub fn explore(sem: &Semantics, entry: &ServiceKey, opts: &ProductOptions) -> Result<ProductLts, AnalysisError> {
    let init = sem.initial(entry, &opts.entry_args)?;
    let mut p = ProductLts {
        entry: entry.clone(),
        states: vec![init.clone()],
        transitions: Vec::new(),
        status: Vec::new(),
        truncated: false,
        reentrancy: BTreeSet::new(),
        index: HashMap::from([(init, 0)]),
        parent: vec![None],
        completed: Vec::new(),
    };
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let succ = sem.successors(&p.states[i]);
        p.reentrancy.extend(succ.blocked);
        let completed = sem.is_terminated(&p.states[i]);
        p.completed.push(completed);
        let status = if !succ.moves.is_empty() {
            StateStatus::Open
        } else if completed {
            StateStatus::Terminated
        } else {
            StateStatus::Stuck
        };
        // states are expanded in index order
        debug_assert_eq!(p.status.len(), i);
        p.status.push(status);
        for mv in succ.moves {
            let j = match p.index.get(&mv.next) {
                Some(&j) => j,
                None if p.states.len() < opts.bound.max(1) => {
                    let j = p.states.len();
                    p.index.insert(mv.next.clone(), j);
                    p.states.push(mv.next);
                    p.parent.push(Some(p.transitions.len()));
                    queue.push_back(j);
                    j
                }
                None => {
                    p.truncated = true;
                    continue;
                }
            };
            p.transitions.push((i, mv.label, j));
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Deadlock,
    Unreachable,
    ProtocolMismatch,
    Ok,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub witness: Option<Vec<SyncLabel>>,
    /// Index of the flagged state in the product it was computed on.
    pub state: Option<usize>,
}

impl Verdict {
    pub fn ok() -> Self {
        Verdict {
            kind: VerdictKind::Ok,
            witness: None,
            state: None,
        }
    }
}

/// One deadlock verdict per stuck reachable state, each with a shortest
/// witness. When `p.truncated`, absence of verdicts proves nothing.
pub fn detect_deadlocks(p: &ProductLts) -> Vec<Verdict> {
    p.status
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == StateStatus::Stuck)
        .map(|(i, _)| Verdict {
            kind: VerdictKind::Deadlock,
            witness: Some(p.witness(i)),
            state: Some(i),
        })
        .collect()
}

/// Ok with a shortest witness to the first state satisfying `goal`,
/// Unreachable if none does.
pub fn check_reachability(p: &ProductLts, goal: impl Fn(&ProductState) -> bool) -> Verdict {
    match p.states.iter().position(goal) {
        Some(i) => Verdict {
            kind: VerdictKind::Ok,
            witness: Some(p.witness(i)),
            state: Some(i),
        },
        None => Verdict {
            kind: VerdictKind::Unreachable,
            witness: None,
            state: None,
        },
    }
}

/// Serialized verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub kind: VerdictKind,
    pub witness: Vec<WitnessItem>,
    pub states_explored: usize,
    pub truncated: bool,
}

impl Report {
    pub fn new(v: &Verdict, p: &ProductLts) -> Self {
        Report {
            kind: v.kind,
            witness: v
                .witness
                .iter()
                .flatten()
                .map(SyncLabel::witness_item)
                .collect(),
            states_explored: p.states.len(),
            truncated: p.truncated,
        }
    }
}
