//! Deterministic in-process agent platform.
//!
//! Agents are synchronous step functions scheduled in registration order
//! once per tick. Messages travel over a FIFO bus with exactly one tick of
//! latency, randomness comes from named seeded streams that can be recorded
//! and replayed, and everything observable lands in an append-only trace.

mod platform;
mod rng;
mod trace;

use std::fmt;

use crate::term::Term;

pub use platform::{AgentContext, Behavior, BehaviorError, Platform, PlatformError, RunReport};
pub use rng::{DrawRecord, RandomSource, ReplayDivergence};
pub use trace::{
    fnv1a64, Trace, TraceKind, TraceLoadError, TraceParseError, TraceRecord, FORGED, UNDELIVERABLE,
};

/// Simulation clock value.
pub type Tick = u64;

/// Default transport address used by the bundled agents.
pub const LOCAL_ADDRESS: &str = "local:localhost";

/// An agent's name plus the transport addresses it can be reached at.
///
/// Conversation matching only ever looks at the name; the bus uses the
/// addresses for routing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    pub name: String,
    pub addresses: Vec<String>,
}

impl AgentId {
    pub fn new(name: impl Into<String>, addresses: Vec<String>) -> Self {
        AgentId {
            name: name.into(),
            addresses,
        }
    }

    /// An agent reachable at [`LOCAL_ADDRESS`].
    pub fn local(name: impl Into<String>) -> Self {
        Self::new(name, vec![LOCAL_ADDRESS.to_string()])
    }

    /// True if the two ids share at least one address.
    pub fn shares_address(&self, other: &AgentId) -> bool {
        self.addresses.iter().any(|a| other.addresses.contains(a))
    }

    /// `agentID(name,addresses("..."))`
    pub fn to_term(&self) -> Term {
        Term::compound(
            "agentID",
            vec![
                Term::constant(self.name.clone()),
                Term::compound(
                    "addresses",
                    self.addresses.iter().cloned().map(Term::Str).collect(),
                ),
            ],
        )
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    pub performative: String,
    pub sender: AgentId,
    pub receiver: AgentId,
    /// Always ground.
    pub content: Term,
    pub cid_hint: Option<String>,
    /// Stamped by the bus when the message is sent.
    pub sent_tick: Tick,
}

impl Message {
    pub fn new(
        performative: impl Into<String>,
        sender: AgentId,
        receiver: AgentId,
        content: Term,
    ) -> Self {
        Message {
            performative: performative.into(),
            sender,
            receiver,
            content,
            cid_hint: None,
            sent_tick: 0,
        }
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.cid_hint = Some(hint.into());
        self
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}->{} {}",
            self.performative, self.sender.name, self.receiver.name, self.content
        )
    }
}
