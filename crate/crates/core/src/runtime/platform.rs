use thiserror::Error;

use super::rng::{DrawRecord, RandomSource, ReplayDivergence};
use super::trace::{Trace, TraceRecord, FORGED, UNDELIVERABLE};
use super::{AgentId, Message, Tick};
use crate::conversation::{ConversationEvent, EngineError};
use crate::term::is_identifier;

/// An agent's program. Called once per tick with the messages delivered
/// that tick.
pub trait Behavior {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError>;

    /// True when the agent has no scheduled work left. The platform stops
    /// early once every agent is idle and nothing is in flight.
    fn is_idle(&self) -> bool {
        true
    }
}

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Replay(#[from] ReplayDivergence),
    #[error("{0} may not send messages under another name")]
    ForgeryNotPermitted(String),
}

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("agent name {0:?} is not an identifier")]
    InvalidName(String),
    #[error("agent {0} has no transport address")]
    NoAddress(String),
    #[error("agent {0} is already registered")]
    DuplicateAgent(String),
    #[error("no agent named {0}")]
    UnknownAgent(String),
    #[error(transparent)]
    Replay(#[from] ReplayDivergence),
}

/// What an agent can see and do during its step.
pub struct AgentContext<'a> {
    tick: Tick,
    me: &'a AgentId,
    inbox: Vec<Message>,
    directory: &'a [AgentId],
    staged: &'a mut Vec<(usize, Message)>,
    rng: &'a mut RandomSource,
    trace: &'a mut Trace,
    forger: bool,
}

impl<'a> AgentContext<'a> {
    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn me(&self) -> &AgentId {
        self.me
    }

    /// Messages delivered this tick, in send order.
    pub fn inbox(&self) -> &[Message] {
        &self.inbox
    }

    pub fn take_inbox(&mut self) -> Vec<Message> {
        std::mem::take(&mut self.inbox)
    }

    /// Sends `msg` under this agent's own identity. Returns false if no
    /// registered agent matches the receiver's name and addresses; the
    /// message is then traced as undeliverable and dropped.
    pub fn send(&mut self, mut msg: Message) -> bool {
        msg.sender = self.me.clone();
        self.route(msg, None)
    }

    /// Sends `msg` with whatever sender it already carries. Only agents
    /// granted the privilege may do this; such messages are flagged in the
    /// trace.
    pub fn send_forged(&mut self, msg: Message) -> Result<bool, BehaviorError> {
        if !self.forger {
            return Err(BehaviorError::ForgeryNotPermitted(self.me.name.clone()));
        }
        Ok(self.route(msg, Some(FORGED)))
    }

    fn route(&mut self, mut msg: Message, flag: Option<&str>) -> bool {
        msg.sent_tick = self.tick;
        let target = self
            .directory
            .iter()
            .position(|id| id.name == msg.receiver.name && id.shares_address(&msg.receiver));
        match target {
            Some(i) => {
                self.trace.push(TraceRecord::msg(self.tick, &msg, flag));
                self.staged.push((i, msg));
                true
            }
            None => {
                self.trace
                    .push(TraceRecord::msg(self.tick, &msg, Some(UNDELIVERABLE)));
                false
            }
        }
    }

    /// Uniform integer in `[lo, hi]` from the named stream.
    pub fn random(&mut self, stream: &str, lo: i64, hi: i64) -> Result<i64, ReplayDivergence> {
        let v = self.rng.draw(self.tick, stream, lo, hi)?;
        let d: &DrawRecord = self.rng.drawn().last().expect("draw recorded");
        self.trace.push(TraceRecord::rng(d));
        Ok(v)
    }

    pub fn record_events(&mut self, events: &[ConversationEvent]) {
        for e in events {
            self.trace
                .push(TraceRecord::evt(self.tick, &self.me.name, e));
        }
    }

    pub fn record_game<S: Into<String>>(&mut self, fields: impl IntoIterator<Item = S>) {
        self.trace.push(TraceRecord::game(self.tick, fields));
    }
}

struct Slot {
    behavior: Box<dyn Behavior>,
    inbox: Vec<Message>,
    suspended: Option<String>,
    forger: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub ticks: Tick,
    pub quiescent: bool,
    pub messages: usize,
    pub undeliverable: usize,
    pub suspended: Vec<(String, String)>,
    pub trace_hash: String,
}

/// The scheduler, message bus and random source for one run.
pub struct Platform {
    tick: Tick,
    ids: Vec<AgentId>,
    slots: Vec<Slot>,
    staged: Vec<(usize, Message)>,
    rng: RandomSource,
    trace: Trace,
}

impl Platform {
    pub fn new(seed: u64) -> Self {
        Self::with_rng(RandomSource::seeded(seed))
    }

    /// A platform whose random draws come from a recorded run.
    pub fn replaying(draws: Vec<DrawRecord>) -> Self {
        Self::with_rng(RandomSource::replaying(draws))
    }

    fn with_rng(rng: RandomSource) -> Self {
        Platform {
            tick: 0,
            ids: Vec::new(),
            slots: Vec::new(),
            staged: Vec::new(),
            rng,
            trace: Trace::new(),
        }
    }

    /// Adds an agent. Agents step in registration order.
    pub fn register(
        &mut self,
        id: AgentId,
        behavior: Box<dyn Behavior>,
    ) -> Result<(), PlatformError> {
        if !is_identifier(&id.name) {
            return Err(PlatformError::InvalidName(id.name));
        }
        if id.addresses.is_empty() {
            return Err(PlatformError::NoAddress(id.name));
        }
        if self.ids.iter().any(|other| other.name == id.name) {
            return Err(PlatformError::DuplicateAgent(id.name));
        }
        self.ids.push(id);
        self.slots.push(Slot {
            behavior,
            inbox: Vec::new(),
            suspended: None,
            forger: false,
        });
        Ok(())
    }

    /// Lets `name` send messages under other agents' names.
    pub fn grant_forgery(&mut self, name: &str) -> Result<(), PlatformError> {
        let i = self
            .ids
            .iter()
            .position(|id| id.name == name)
            .ok_or_else(|| PlatformError::UnknownAgent(name.to_string()))?;
        self.slots[i].forger = true;
        Ok(())
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.ids
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut Trace {
        &mut self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Runs one tick: deliver everything sent last tick, then step each
    /// live agent in registration order.
    pub fn step(&mut self) -> Result<(), PlatformError> {
        self.tick += 1;
        for (i, msg) in std::mem::take(&mut self.staged) {
            self.slots[i].inbox.push(msg);
        }
        for i in 0..self.slots.len() {
            let slot = &mut self.slots[i];
            if slot.suspended.is_some() {
                continue;
            }
            let mut ctx = AgentContext {
                tick: self.tick,
                me: &self.ids[i],
                inbox: std::mem::take(&mut slot.inbox),
                directory: &self.ids,
                staged: &mut self.staged,
                rng: &mut self.rng,
                trace: &mut self.trace,
                forger: slot.forger,
            };
            let result = slot.behavior.step(&mut ctx);
            if let Some(d) = self.rng.divergence() {
                return Err(d.clone().into());
            }
            if let Err(e) = result {
                let reason = e.to_string();
                self.trace.push(TraceRecord::suspended(
                    self.tick,
                    &self.ids[i].name,
                    &reason,
                ));
                self.slots[i].suspended = Some(reason);
            }
        }
        Ok(())
    }

    /// Nothing in flight, no undelivered mail, every live agent idle.
    pub fn is_quiescent(&self) -> bool {
        self.staged.is_empty()
            && self
                .slots
                .iter()
                .filter(|s| s.suspended.is_none())
                .all(|s| s.inbox.is_empty() && s.behavior.is_idle())
    }

    /// Steps until `max_ticks` or quiescence, whichever comes first.
    pub fn run(&mut self, max_ticks: Tick) -> Result<RunReport, PlatformError> {
        let mut quiescent = false;
        while self.tick < max_ticks {
            self.step()?;
            if self.is_quiescent() {
                quiescent = true;
                break;
            }
        }
        self.rng.finish()?;
        Ok(self.report(quiescent))
    }

    fn report(&self, quiescent: bool) -> RunReport {
        let msgs = self.trace.records().iter().filter_map(TraceRecord::message);
        let (mut messages, mut undeliverable) = (0, 0);
        for (_, flag) in msgs {
            messages += 1;
            if flag == Some(UNDELIVERABLE) {
                undeliverable += 1;
            }
        }
        RunReport {
            ticks: self.tick,
            quiescent,
            messages,
            undeliverable,
            suspended: self
                .ids
                .iter()
                .zip(&self.slots)
                .filter_map(|(id, s)| s.suspended.clone().map(|r| (id.name.clone(), r)))
                .collect(),
            trace_hash: self.trace.hash_hex(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::TraceKind;
    use crate::term::Term;

    /// Sends `ping(n)` to its peer on tick 1, then answers every ping with
    /// `ping(n+1)` until `limit`.
    struct Pinger {
        peer: AgentId,
        start: bool,
        limit: i64,
        seen: Vec<(Tick, i64)>,
    }

    impl Behavior for Pinger {
        fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
            if self.start && ctx.tick() == 1 {
                ctx.send(Message::new(
                    "inform",
                    ctx.me().clone(),
                    self.peer.clone(),
                    Term::compound("ping", vec![Term::int(0)]),
                ));
            }
            for m in ctx.take_inbox() {
                let n = m.content.args()[0].as_int().unwrap();
                self.seen.push((ctx.tick(), n));
                if n < self.limit {
                    // The draw only exists so replay has something to check.
                    ctx.random("jitter", 0, 3)?;
                    ctx.send(Message::new(
                        "inform",
                        ctx.me().clone(),
                        self.peer.clone(),
                        Term::compound("ping", vec![Term::int(n + 1)]),
                    ));
                }
            }
            Ok(())
        }
    }

    fn pair(p: &mut Platform) {
        p.register(
            AgentId::local("a"),
            Box::new(Pinger {
                peer: AgentId::local("b"),
                start: true,
                limit: 4,
                seen: vec![],
            }),
        )
        .unwrap();
        p.register(
            AgentId::local("b"),
            Box::new(Pinger {
                peer: AgentId::local("a"),
                start: false,
                limit: 4,
                seen: vec![],
            }),
        )
        .unwrap();
    }

    #[test]
    fn one_tick_latency_and_quiescence() {
        let mut p = Platform::new(1);
        pair(&mut p);
        let report = p.run(100).unwrap();
        assert!(report.quiescent);
        assert_eq!(report.messages, 5);
        // ping(k) is sent at tick k+1 and handled at tick k+2.
        let ticks: Vec<Tick> = p
            .trace()
            .records()
            .iter()
            .filter(|r| r.kind == TraceKind::Msg)
            .map(|r| r.tick)
            .collect();
        assert_eq!(ticks, [1, 2, 3, 4, 5]);
        assert_eq!(report.ticks, 6);
    }

    #[test]
    fn replay_matches_and_divergence_aborts() {
        let mut p = Platform::new(42);
        pair(&mut p);
        p.run(100).unwrap();
        let draws = p.trace().draws();
        assert_eq!(draws.len(), 4);

        let mut again = Platform::replaying(draws.clone());
        pair(&mut again);
        again.run(100).unwrap();
        assert_eq!(again.trace().to_text(), p.trace().to_text());

        let mut tampered = draws;
        tampered[2].stream = "other".into();
        let mut bad = Platform::replaying(tampered);
        pair(&mut bad);
        assert!(matches!(bad.run(100), Err(PlatformError::Replay(_))));
    }

    #[test]
    fn registration_rules() {
        let mut p = Platform::new(0);
        pair(&mut p);
        let dup = p.register(AgentId::local("a"), Box::new(Idle));
        assert!(matches!(dup, Err(PlatformError::DuplicateAgent(_))));
        let bad = p.register(AgentId::local("bad-name"), Box::new(Idle));
        assert!(matches!(bad, Err(PlatformError::InvalidName(_))));
        let none = p.register(AgentId::new("c", vec![]), Box::new(Idle));
        assert!(matches!(none, Err(PlatformError::NoAddress(_))));
    }

    struct Idle;
    impl Behavior for Idle {
        fn step(&mut self, _: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
            Ok(())
        }
    }

    struct Sender(Message, bool);
    impl Behavior for Sender {
        fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
            if ctx.tick() == 1 {
                if self.1 {
                    ctx.send_forged(self.0.clone())?;
                } else {
                    ctx.send(self.0.clone());
                }
            }
            Ok(())
        }
    }

    #[test]
    fn routing_needs_name_and_address() {
        let to_remote = Message::new(
            "inform",
            AgentId::local("s"),
            AgentId::local("r"),
            Term::constant("x"),
        );
        let mut p = Platform::new(0);
        p.register(AgentId::local("s"), Box::new(Sender(to_remote, false)))
            .unwrap();
        p.register(
            AgentId::new("r", vec!["remote:host2".into()]),
            Box::new(Idle),
        )
        .unwrap();
        let report = p.run(5).unwrap();
        assert_eq!(report.undeliverable, 1);
    }

    #[test]
    fn forgery_is_privileged_and_flagged() {
        let forged = Message::new(
            "inform",
            AgentId::local("guru"),
            AgentId::local("r"),
            Term::constant("x"),
        );
        let mut p = Platform::new(0);
        p.register(AgentId::local("s"), Box::new(Sender(forged.clone(), true)))
            .unwrap();
        p.register(AgentId::local("r"), Box::new(Idle)).unwrap();
        let report = p.run(5).unwrap();
        assert_eq!(report.suspended.len(), 1);
        assert_eq!(report.messages, 0);

        let mut p = Platform::new(0);
        p.register(AgentId::local("s"), Box::new(Sender(forged, true)))
            .unwrap();
        p.register(AgentId::local("r"), Box::new(Idle)).unwrap();
        p.grant_forgery("s").unwrap();
        p.run(5).unwrap();
        let (m, flag) = p.trace().records()[0].message().unwrap();
        assert_eq!(m.sender.name, "guru");
        assert_eq!(flag, Some(FORGED));
    }
}
