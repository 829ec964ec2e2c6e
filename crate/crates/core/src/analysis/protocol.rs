use std::collections::{HashMap, VecDeque};

use crate::assembly::ServiceKey;
use crate::expr::{eval_abstract, AbstractStore, AbstractValue, Value};
use crate::model::{Behavior, ChannelRef, Communication, Direction, ServiceSpec, StateId, Transition};
use crate::semantics::{run_label, Participant, SyncKind, SyncLabel};

use super::{Verdict, VerdictKind, DEFAULT_BOUND};

type PairState = (StateId, StateId, AbstractStore, AbstractStore);

/// Pairwise product of a provider service and a consumer behavior that uses
/// it through `channel`. Both start together; the provider's CALLER actions
/// synchronize with the consumer's actions on `channel`, everything else
/// moves alone. A deadlock in which either side still offers a move on the
/// channel is a protocol mismatch.
///
/// The provider's own sub-service annotations are not expanded here; pass
/// a flattened spec if it has any.
pub fn check_protocol_compatibility(provider: &ServiceSpec, consumer: &Behavior, channel: &str) -> Verdict {
    let pkey = ServiceKey::new("provider", provider.name());
    let ckey = ServiceKey::new("consumer", channel);
    let mut pstore = AbstractStore::new();
    for p in provider.variables() {
        pstore.insert(p.name.clone(), AbstractValue::Known(p.ty.default_value()));
    }
    for p in &provider.signature.params {
        pstore.insert(p.name.clone(), AbstractValue::Unknown);
    }
    let pb = &provider.behavior;
    let on_channel = |c: &Communication| matches!(&c.channel, ChannelRef::Named(n) if n == channel);

    let init: PairState = (pb.initial.clone(), consumer.initial.clone(), pstore, AbstractStore::new());
    let mut states = vec![init.clone()];
    let mut parent: Vec<Option<(usize, SyncLabel)>> = vec![None];
    let mut index = HashMap::from([(init, 0usize)]);
    let mut queue = VecDeque::from([0usize]);

    let part = |k: &ServiceKey, i: usize| Participant {
        service: k.clone(),
        transition: Some(i),
    };

    while let Some(i) = queue.pop_front() {
        let (ploc, cloc, ps, cs) = states[i].clone();
        let mut next: Vec<(SyncLabel, PairState)> = Vec::new();
        let p_out: Vec<(usize, &Transition)> = open(pb, &ploc, &ps);
        let c_out: Vec<(usize, &Transition)> = open(consumer, &cloc, &cs);

        for &(pi, pt) in &p_out {
            match pt.label.communication() {
                Some((_, c)) if c.channel == ChannelRef::Caller => {}
                _ => {
                    let (s, _) = run_label(&ps, &pt.label, &[]);
                    let label = internal(&pkey, pi, pt);
                    next.push((label, (pt.target.clone(), cloc.clone(), s, cs.clone())));
                }
            }
        }
        for &(ci, ct) in &c_out {
            match ct.label.communication() {
                Some((_, c)) if on_channel(c) => {}
                _ => {
                    let (s, _) = run_label(&cs, &ct.label, &[]);
                    let label = internal(&ckey, ci, ct);
                    next.push((label, (ploc.clone(), ct.target.clone(), ps.clone(), s)));
                }
            }
        }
        for &(pi, pt) in &p_out {
            let Some((_, pc)) = pt.label.communication() else { continue };
            if pc.channel != ChannelRef::Caller {
                continue;
            }
            for &(ci, ct) in &c_out {
                let Some((_, cc)) = ct.label.communication() else { continue };
                if !on_channel(cc) {
                    continue;
                }
                let own = pc.message == provider.name();
                // (kind, provider initiates)
                let (kind, provider_first) = match (pc.direction, cc.direction) {
                    (Direction::Send, Direction::Receive) if pc.message == cc.message => (SyncKind::Message, true),
                    (Direction::Receive, Direction::Send) if pc.message == cc.message => (SyncKind::Message, false),
                    (Direction::Call, Direction::Await) if own => (SyncKind::Result, true),
                    (Direction::Await, Direction::Call) if own => (SyncKind::Call, false),
                    _ => continue,
                };
                let (ps2, cs2) = if provider_first {
                    let (s, vals) = run_label(&ps, &pt.label, &[]);
                    (s, run_label(&cs, &ct.label, &vals).0)
                } else {
                    let (s, vals) = run_label(&cs, &ct.label, &[]);
                    (run_label(&ps, &pt.label, &vals).0, s)
                };
                let (first, second) = if provider_first {
                    (part(&pkey, pi), part(&ckey, ci))
                } else {
                    (part(&ckey, ci), part(&pkey, pi))
                };
                let label = SyncLabel {
                    kind,
                    channel: channel.to_string(),
                    message: if provider_first { pc.message.clone() } else { cc.message.clone() },
                    participants: vec![first, second],
                };
                next.push((label, (pt.target.clone(), ct.target.clone(), ps2, cs2)));
            }
        }

        if next.is_empty() {
            let done = pb.is_final(&ploc) && consumer.is_final(&cloc);
            let waits = p_out
                .iter()
                .any(|(_, t)| matches!(t.label.communication(), Some((_, c)) if c.channel == ChannelRef::Caller))
                || c_out
                    .iter()
                    .any(|(_, t)| matches!(t.label.communication(), Some((_, c)) if on_channel(c)));
            if !done && waits {
                let mut witness = Vec::new();
                let mut s = i;
                while let Some((from, label)) = &parent[s] {
                    witness.push(label.clone());
                    s = *from;
                }
                witness.reverse();
                return Verdict {
                    kind: VerdictKind::ProtocolMismatch,
                    witness: Some(witness),
                    state: Some(i),
                };
            }
        }
        for (label, st) in next {
            if index.contains_key(&st) || states.len() >= DEFAULT_BOUND {
                continue;
            }
            index.insert(st.clone(), states.len());
            parent.push(Some((i, label)));
            queue.push_back(states.len());
            states.push(st);
        }
    }
    Verdict::ok()
}

fn open<'a>(b: &'a Behavior, loc: &'a StateId, store: &AbstractStore) -> Vec<(usize, &'a Transition)> {
    b.outgoing(loc)
        .filter(|(_, t)| {
            t.label.communication_count() <= 1
                && t.label
                    .guard
                    .as_ref()
                    .is_none_or(|g| eval_abstract(g, store) != AbstractValue::Known(Value::Bool(false)))
        })
        .collect()
}

fn internal(key: &ServiceKey, i: usize, t: &Transition) -> SyncLabel {
    SyncLabel {
        kind: SyncKind::Internal,
        channel: key.to_string(),
        message: t.label.to_string(),
        participants: vec![Participant {
            service: key.clone(),
            transition: Some(i),
        }],
    }
}
