//! Offline views of a recorded trace: which conversations each agent had,
//! and the message path behind any one of them.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::protocol::ProtocolId;
use crate::repository::Repository;
use crate::runtime::{Message, Tick, Trace, TraceKind};
use crate::term::{match_pattern, BindingSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversationSummary {
    /// Agent whose manager tracked the conversation.
    pub owner: String,
    pub cid: String,
    pub protocol: ProtocolId,
    pub started: Tick,
    /// Last state reached, or `-` before the first message.
    pub state: String,
    pub length: usize,
    /// `active`, or the status from the conversation's `ended`,
    /// `timed_out` or `cancelled` record.
    pub status: String,
    /// `(tick, state, length, trace line)` of every advance.
    pub advances: Vec<(Tick, String, usize, usize)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InspectError {
    #[error("no conversation {0} in the trace")]
    UnknownCid(String),
    #[error("line {line}: malformed EVT record: {message}")]
    Malformed { line: usize, message: String },
}

/// Every conversation started in `trace`, in start order.
pub fn conversations(trace: &Trace) -> Result<Vec<ConversationSummary>, InspectError> {
    let mut out: Vec<ConversationSummary> = Vec::new();
    let find = |out: &mut Vec<ConversationSummary>, owner: &str, cid: &str| {
        out.iter_mut()
            .rposition(|c| c.owner == owner && c.cid == cid)
    };
    for (i, r) in trace.records().iter().enumerate() {
        if r.kind != TraceKind::Evt {
            continue;
        }
        let line = i + 1;
        let f = &r.fields;
        let (owner, kind, cid) = (&f[0], f[1].as_str(), &f[2]);
        match kind {
            "started" => {
                let protocol =
                    ProtocolId::parse_compact(&f[5]).map_err(|e| InspectError::Malformed {
                        line,
                        message: e.to_string(),
                    })?;
                out.push(ConversationSummary {
                    owner: owner.clone(),
                    cid: cid.clone(),
                    protocol,
                    started: r.tick,
                    state: "-".into(),
                    length: 0,
                    status: "active".into(),
                    advances: Vec::new(),
                });
            }
            "advanced" => {
                let length = f[4].parse().map_err(|_| InspectError::Malformed {
                    line,
                    message: format!("length {:?} is not a number", f[4]),
                })?;
                if let Some(k) = find(&mut out, owner, cid) {
                    let c = &mut out[k];
                    c.state = f[3].clone();
                    c.length = length;
                    c.advances.push((r.tick, f[3].clone(), length, line));
                }
            }
            "ended" | "cancelled" | "timed_out" => {
                if let Some(k) = find(&mut out, owner, cid) {
                    out[k].status = if kind == "ended" {
                        f[5].clone()
                    } else {
                        kind.to_string()
                    };
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

/// One line per conversation: `cid protocol state length status`.
pub fn list_conversations(trace: &Trace) -> Result<String, InspectError> {
    let mut s = String::new();
    for c in conversations(trace)? {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            c.cid,
            c.protocol.qualified_name(),
            c.state,
            c.length,
            c.status
        );
    }
    Ok(s)
}

/// One transition of an explained conversation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub tick: Tick,
    pub from: String,
    pub to: String,
    /// The message that drove it and its trace line, when one could be
    /// identified.
    pub message: Option<(usize, Message)>,
}

/// Pairs each advance of conversation `cid` with the message behind it.
///
/// An advance at tick `t` came either from a message the owner sent at `t`
/// or from one sent to it at `t - 1`; among those, the first not yet used
/// that fits a transition between the two states wins.
pub fn explain(
    trace: &Trace,
    repository: &Repository,
    cid: &str,
) -> Result<Vec<Step>, InspectError> {
    let all = conversations(trace)?;
    let conv = all
        .iter()
        .find(|c| c.cid == cid)
        .ok_or_else(|| InspectError::UnknownCid(cid.to_string()))?;
    let descriptor = repository.get(&conv.protocol).ok();
    let mut state = descriptor
        .as_ref()
        .and_then(|d| d.initial_state().map(str::to_string))
        .unwrap_or_else(|| "?".into());

    let records = trace.records();
    let mut used = BTreeSet::new();
    let mut counterpart: Option<String> = None;
    let mut steps = Vec::new();
    for (tick, to, _, evt_line) in &conv.advances {
        let fits = |m: &Message| match &descriptor {
            Some(d) => d.transitions().iter().any(|t| {
                t.from == state
                    && t.to == *to
                    && t.performative == m.performative
                    && match_pattern(&t.content, &m.content, &BindingSet::new()).is_some()
            }),
            None => true,
        };
        let found = records.iter().enumerate().find_map(|(i, r)| {
            let line = i + 1;
            if used.contains(&line) {
                return None;
            }
            let (m, _) = r.message()?;
            let outgoing = m.sender.name == conv.owner && r.tick == *tick && line > *evt_line;
            let incoming = m.receiver.name == conv.owner && r.tick + 1 == *tick;
            if !outgoing && !incoming {
                return None;
            }
            let other = if outgoing {
                &m.receiver.name
            } else {
                &m.sender.name
            };
            if counterpart.as_ref().is_some_and(|c| c != other) {
                return None;
            }
            fits(&m).then_some((line, m))
        });
        if let Some((line, m)) = &found {
            used.insert(*line);
            if counterpart.is_none() {
                let other = if m.sender.name == conv.owner {
                    &m.receiver.name
                } else {
                    &m.sender.name
                };
                counterpart = Some(other.clone());
            }
        }
        steps.push(Step {
            tick: *tick,
            from: std::mem::replace(&mut state, to.clone()),
            to: to.clone(),
            message: found,
        });
    }
    Ok(steps)
}

/// One annotated line per step.
pub fn explain_text(steps: &[Step]) -> String {
    let mut s = String::new();
    for step in steps {
        let _ = write!(s, "tick {}: {} -> {}", step.tick, step.from, step.to);
        match &step.message {
            Some((line, m)) => {
                let _ = writeln!(
                    s,
                    "  [line {line}] {} -> {} {} {}",
                    m.sender.name, m.receiver.name, m.performative, m.content
                );
            }
            None => s.push_str("  [no message found]\n"),
        }
    }
    s
}
