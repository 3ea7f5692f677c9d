//! Per-agent conversation engine.
//!
//! A [`ConversationManager`] belongs to exactly one agent. Every message the
//! agent sends or receives is routed through [`ConversationManager::process_message`],
//! which either advances one of the agent's active conversations, starts a
//! new one from the repository's initiating transitions, or reports the
//! message as unmatched. Matching is purely structural: performative, sender
//! name, receiver name and content pattern, checked in that order.
//!
//! Bindings are write-once, with one exception needed by looping protocols
//! (a guru sending tip after tip, an auction running round after round): a
//! transition that re-enters a state already visited by the conversation
//! releases the content variables it mentions before matching. Participant
//! variables and anything bound by the initiating transition stay fixed.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::protocol::{Participant, ProtocolDescriptor, ProtocolId, Transition};
use crate::repository::{Repository, RepositoryError};
use crate::runtime::{AgentId, Message, Tick};
use crate::term::{match_pattern, BindingSet, Term};

/// Deadline applied to protocols that do not declare their own timeout.
pub const DEFAULT_TIMEOUT: Tick = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Incoming,
    Outgoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConversationStatus {
    Active,
    Done,
    Cancelled,
    TimedOut,
}

impl ConversationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ConversationStatus::Active => "active",
            ConversationStatus::Done => "done",
            ConversationStatus::Cancelled => "cancelled",
            ConversationStatus::TimedOut => "timed_out",
        }
    }
}

impl fmt::Display for ConversationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a message could not be attached to any conversation.
///
/// Ordered from least to most specific; when several active conversations
/// with the same counterpart fail for different reasons the most specific
/// one is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnmatchedReason {
    NoActiveMatchNoInitiation,
    OutOfSequence,
    WrongSender,
    ContentMismatch,
}

impl UnmatchedReason {
    pub fn code(self) -> &'static str {
        match self {
            UnmatchedReason::NoActiveMatchNoInitiation => "NO_ACTIVE_MATCH_NO_INITIATION",
            UnmatchedReason::OutOfSequence => "OUT_OF_SEQUENCE",
            UnmatchedReason::WrongSender => "WRONG_SENDER",
            UnmatchedReason::ContentMismatch => "CONTENT_MISMATCH",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [
            UnmatchedReason::NoActiveMatchNoInitiation,
            UnmatchedReason::OutOfSequence,
            UnmatchedReason::WrongSender,
            UnmatchedReason::ContentMismatch,
        ]
        .into_iter()
        .find(|r| r.code() == code)
    }
}

impl fmt::Display for UnmatchedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConversationEvent {
    Started {
        cid: String,
        protocol: ProtocolId,
    },
    Advanced {
        cid: String,
        state: String,
        length: usize,
    },
    Ended {
        cid: String,
        status: ConversationStatus,
    },
    TimedOut {
        cid: String,
    },
    Cancelled {
        cid: String,
        reason: String,
    },
    Unmatched {
        message: Box<Message>,
        reason: UnmatchedReason,
    },
    Ambiguous {
        message: Box<Message>,
        candidates: Vec<String>,
        chosen: String,
    },
}

impl ConversationEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            ConversationEvent::Started { .. } => "started",
            ConversationEvent::Advanced { .. } => "advanced",
            ConversationEvent::Ended { .. } => "ended",
            ConversationEvent::TimedOut { .. } => "timed_out",
            ConversationEvent::Cancelled { .. } => "cancelled",
            ConversationEvent::Unmatched { .. } => "unmatched",
            ConversationEvent::Ambiguous { .. } => "ambiguous",
        }
    }

    pub fn cid(&self) -> Option<&str> {
        match self {
            ConversationEvent::Started { cid, .. }
            | ConversationEvent::Advanced { cid, .. }
            | ConversationEvent::Ended { cid, .. }
            | ConversationEvent::TimedOut { cid }
            | ConversationEvent::Cancelled { cid, .. } => Some(cid),
            ConversationEvent::Ambiguous { chosen, .. } => Some(chosen),
            ConversationEvent::Unmatched { .. } => None,
        }
    }

    /// The `cid state length detail` columns of an `EVT` trace record, with
    /// `-` for fields that do not apply.
    pub fn trace_fields(&self) -> [String; 4] {
        let dash = || "-".to_string();
        match self {
            ConversationEvent::Started { cid, protocol } => {
                [cid.clone(), dash(), dash(), protocol.to_string()]
            }
            ConversationEvent::Advanced { cid, state, length } => {
                [cid.clone(), state.clone(), length.to_string(), dash()]
            }
            ConversationEvent::Ended { cid, status } => {
                [cid.clone(), dash(), dash(), status.to_string()]
            }
            ConversationEvent::TimedOut { cid } => [cid.clone(), dash(), dash(), dash()],
            ConversationEvent::Cancelled { cid, reason } => {
                [cid.clone(), dash(), dash(), sanitize(reason)]
            }
            ConversationEvent::Unmatched { reason, .. } => {
                [dash(), dash(), dash(), reason.code().to_string()]
            }
            ConversationEvent::Ambiguous {
                candidates, chosen, ..
            } => [chosen.clone(), dash(), dash(), candidates.join(",")],
        }
    }
}

/// Makes free text safe for a single tab-separated trace field.
pub(crate) fn sanitize(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect();
    if cleaned.is_empty() {
        "-".to_string()
    } else {
        cleaned
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    AdvancedExisting,
    StartedNew,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    pub kind: MatchKind,
    pub cid: Option<String>,
    pub reason: Option<UnmatchedReason>,
    pub events: Vec<ConversationEvent>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Repository(#[from] RepositoryError),
    #[error("{protocol}: no initiating transition accepts {performative} {content}")]
    NoInitiatingTransition {
        protocol: Box<ProtocolId>,
        performative: String,
        content: Term,
    },
    #[error("unknown conversation {0}")]
    UnknownCid(String),
    #[error("conversation {cid} is {status}")]
    NotActive {
        cid: String,
        status: ConversationStatus,
    },
    #[error("conversation {cid} in state {state} has no transition for {performative} {content}")]
    OutOfSequence {
        cid: String,
        state: String,
        performative: String,
        content: Term,
    },
    #[error("message content {0} is not ground")]
    NonGroundContent(Term),
}

/// One conversation as seen by its owning agent.
#[derive(Debug, Clone)]
pub struct Conversation {
    cid: String,
    thread: String,
    protocol: Arc<ProtocolDescriptor>,
    state: String,
    bindings: BindingSet,
    pinned: BTreeSet<String>,
    initiator: AgentId,
    counterpart: AgentId,
    history: Vec<Message>,
    path: Vec<String>,
    status: ConversationStatus,
    deadline: Tick,
}

impl Conversation {
    pub fn cid(&self) -> &str {
        &self.cid
    }

    /// Identifier shared by both sides: the initiator's cid.
    pub fn thread(&self) -> &str {
        &self.thread
    }

    pub fn protocol(&self) -> &Arc<ProtocolDescriptor> {
        &self.protocol
    }

    pub fn state(&self) -> &str {
        &self.state
    }

    pub fn bindings(&self) -> &BindingSet {
        &self.bindings
    }

    pub fn initiator(&self) -> &AgentId {
        &self.initiator
    }

    pub fn counterpart(&self) -> &AgentId {
        &self.counterpart
    }

    pub fn history(&self) -> &[Message] {
        &self.history
    }

    /// States visited so far, starting with the initial state.
    pub fn path(&self) -> &[String] {
        &self.path
    }

    pub fn status(&self) -> ConversationStatus {
        self.status
    }

    pub fn is_active(&self) -> bool {
        self.status == ConversationStatus::Active
    }

    pub fn deadline(&self) -> Tick {
        self.deadline
    }

    fn answers_to(&self, hint: &str) -> bool {
        self.cid == hint || self.thread == hint
    }

    /// Bindings a transition is matched against: the current set, minus the
    /// transition's releasable content variables when it closes a cycle.
    fn bindings_for(&self, t: &Transition) -> BindingSet {
        if !self.path.contains(&t.to) {
            return self.bindings.clone();
        }
        let mut b = self.bindings.clone();
        for v in t.content.variables() {
            if !self.pinned.contains(v) {
                b.release(v);
            }
        }
        b
    }

    /// First outgoing transition from the current state that accepts `msg`.
    fn first_match(&self, msg: &Message) -> Option<(usize, BindingSet)> {
        self.protocol.outgoing(&self.state).find_map(|(i, t)| {
            try_transition(t, msg, &self.bindings_for(t))
                .ok()
                .map(|b| (i, b))
        })
    }

    /// Most specific reason none of the current state's transitions accepts `msg`.
    fn mismatch(&self, msg: &Message) -> UnmatchedReason {
        self.protocol
            .outgoing(&self.state)
            .filter_map(|(_, t)| try_transition(t, msg, &self.bindings_for(t)).err())
            .map(|m| match m {
                Mismatch::Performative => UnmatchedReason::OutOfSequence,
                Mismatch::Participant => UnmatchedReason::WrongSender,
                Mismatch::Content => UnmatchedReason::ContentMismatch,
            })
            .max()
            .unwrap_or(UnmatchedReason::OutOfSequence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mismatch {
    Performative,
    Participant,
    Content,
}

fn bind_participant(p: &Participant, agent: &AgentId, b: &mut BindingSet) -> bool {
    match p {
        Participant::Agent(name) => *name == agent.name,
        Participant::Var(v) => b.bind(v, Term::constant(agent.name.clone())).is_ok(),
    }
}

fn try_transition(
    t: &Transition,
    msg: &Message,
    base: &BindingSet,
) -> Result<BindingSet, Mismatch> {
    if t.performative != msg.performative {
        return Err(Mismatch::Performative);
    }
    let mut b = base.clone();
    if !bind_participant(&t.sender, &msg.sender, &mut b)
        || !bind_participant(&t.receiver, &msg.receiver, &mut b)
    {
        return Err(Mismatch::Participant);
    }
    match_pattern(&t.content, &msg.content, &b).ok_or(Mismatch::Content)
}

/// The conversation engine for one agent.
#[derive(Debug, Clone)]
pub struct ConversationManager {
    owner: AgentId,
    repository: Arc<Repository>,
    conversations: Vec<Conversation>,
    next_id: u64,
    now: Tick,
    default_timeout: Tick,
    pending: Vec<ConversationEvent>,
    log: Vec<ConversationEvent>,
}

impl ConversationManager {
    pub fn new(owner: AgentId, repository: Arc<Repository>) -> Self {
        ConversationManager {
            owner,
            repository,
            conversations: Vec::new(),
            next_id: 1,
            now: 0,
            default_timeout: DEFAULT_TIMEOUT,
            pending: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn with_default_timeout(mut self, ticks: Tick) -> Self {
        self.default_timeout = ticks;
        self
    }

    pub fn owner(&self) -> &AgentId {
        &self.owner
    }

    pub fn repository(&self) -> &Arc<Repository> {
        &self.repository
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    /// All conversations in creation order.
    pub fn conversations(&self) -> &[Conversation] {
        &self.conversations
    }

    pub fn active(&self) -> impl Iterator<Item = &Conversation> {
        self.conversations.iter().filter(|c| c.is_active())
    }

    pub fn inspect(&self, cid: &str) -> Result<&Conversation, EngineError> {
        self.conversations
            .iter()
            .find(|c| c.cid == cid)
            .ok_or_else(|| EngineError::UnknownCid(cid.to_string()))
    }

    /// Finds a conversation by its own cid or by the shared thread id.
    pub fn find_by_thread(&self, hint: &str) -> Option<&Conversation> {
        self.conversations.iter().find(|c| c.answers_to(hint))
    }

    /// Events produced since the last call, oldest first.
    pub fn take_events(&mut self) -> Vec<ConversationEvent> {
        std::mem::take(&mut self.pending)
    }

    /// Every event this manager has ever produced.
    pub fn event_log(&self) -> &[ConversationEvent] {
        &self.log
    }

    fn emit(&mut self, e: ConversationEvent) {
        self.pending.push(e.clone());
        self.log.push(e);
    }

    fn timeout_for(&self, p: &ProtocolDescriptor) -> Tick {
        p.timeout().unwrap_or(self.default_timeout)
    }

    /// Routes one sent or received message. Never fails: anything that does
    /// not fit a conversation comes back as [`MatchKind::Unmatched`].
    pub fn process_message(&mut self, msg: &Message, dir: Direction) -> MatchOutcome {
        let mark = self.pending.len();
        let (kind, cid, reason) = self.route(msg, dir);
        MatchOutcome {
            kind,
            cid,
            reason,
            events: self.pending[mark..].to_vec(),
        }
    }

    fn route(
        &mut self,
        msg: &Message,
        dir: Direction,
    ) -> (MatchKind, Option<String>, Option<UnmatchedReason>) {
        if !msg.content.is_ground() {
            return self.unmatched(msg, UnmatchedReason::ContentMismatch);
        }

        let candidates: Vec<(usize, usize, BindingSet)> = self
            .conversations
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_active())
            .filter_map(|(i, c)| c.first_match(msg).map(|(t, b)| (i, t, b)))
            .collect();

        if let Some((ci, ti, b)) = candidates.first().cloned() {
            if self.hint_conflicts(msg, Some(ci)) {
                return self.unmatched(msg, UnmatchedReason::ContentMismatch);
            }
            if candidates.len() > 1 {
                let ids = candidates
                    .iter()
                    .map(|(i, _, _)| self.conversations[*i].cid.clone())
                    .collect();
                self.emit(ConversationEvent::Ambiguous {
                    message: Box::new(msg.clone()),
                    candidates: ids,
                    chosen: self.conversations[ci].cid.clone(),
                });
            }
            self.apply(ci, ti, b, msg.clone());
            let cid = self.conversations[ci].cid.clone();
            return (MatchKind::AdvancedExisting, Some(cid), None);
        }

        let found = self.repository.protocols().find_map(|p| {
            let init = p.initial_state()?;
            p.outgoing(init).find_map(|(ti, t)| {
                try_transition(t, msg, &BindingSet::new())
                    .ok()
                    .map(|b| (Arc::clone(p), ti, b))
            })
        });
        if let Some((protocol, ti, b)) = found {
            if self.hint_conflicts(msg, None) {
                return self.unmatched(msg, UnmatchedReason::ContentMismatch);
            }
            let ci = self.create(protocol, msg, dir);
            self.apply(ci, ti, b, msg.clone());
            let cid = self.conversations[ci].cid.clone();
            return (MatchKind::StartedNew, Some(cid), None);
        }

        let counterpart = match dir {
            Direction::Incoming => &msg.sender.name,
            Direction::Outgoing => &msg.receiver.name,
        };
        let reason = self
            .active()
            .filter(|c| c.counterpart.name == *counterpart)
            .map(|c| c.mismatch(msg))
            .max()
            .unwrap_or(UnmatchedReason::NoActiveMatchNoInitiation);
        self.unmatched(msg, reason)
    }

    /// A hint that names a known conversation other than the chosen one
    /// means the message claims a conversation it does not fit.
    fn hint_conflicts(&self, msg: &Message, chosen: Option<usize>) -> bool {
        let Some(hint) = msg.cid_hint.as_deref() else {
            return false;
        };
        if chosen.is_some_and(|i| self.conversations[i].answers_to(hint)) {
            return false;
        }
        self.find_by_thread(hint).is_some()
    }

    fn unmatched(
        &mut self,
        msg: &Message,
        reason: UnmatchedReason,
    ) -> (MatchKind, Option<String>, Option<UnmatchedReason>) {
        self.emit(ConversationEvent::Unmatched {
            message: Box::new(msg.clone()),
            reason,
        });
        (MatchKind::Unmatched, None, Some(reason))
    }

    fn create(
        &mut self,
        protocol: Arc<ProtocolDescriptor>,
        msg: &Message,
        dir: Direction,
    ) -> usize {
        let cid = format!("{}-{}", self.owner.name, self.next_id);
        self.next_id += 1;
        let (initiator, counterpart, thread) = match dir {
            Direction::Outgoing => (msg.sender.clone(), msg.receiver.clone(), cid.clone()),
            Direction::Incoming => (
                msg.sender.clone(),
                msg.sender.clone(),
                msg.cid_hint.clone().unwrap_or_else(|| cid.clone()),
            ),
        };
        let initial = protocol.initial_state().unwrap_or_default().to_string();
        let deadline = self.now + self.timeout_for(&protocol);
        self.emit(ConversationEvent::Started {
            cid: cid.clone(),
            protocol: protocol.id().clone(),
        });
        self.conversations.push(Conversation {
            cid,
            thread,
            protocol,
            state: initial.clone(),
            bindings: BindingSet::new(),
            pinned: BTreeSet::new(),
            initiator,
            counterpart,
            history: Vec::new(),
            path: vec![initial],
            status: ConversationStatus::Active,
            deadline,
        });
        self.conversations.len() - 1
    }

    fn apply(&mut self, ci: usize, ti: usize, bindings: BindingSet, msg: Message) {
        let timeout = self.timeout_for(&self.conversations[ci].protocol);
        let now = self.now;
        let c = &mut self.conversations[ci];
        let t = &c.protocol.transitions()[ti];
        let to = t.to.clone();
        if c.history.is_empty() {
            c.pinned = bindings.iter().map(|(k, _)| k.to_string()).collect();
        }
        for p in [&t.sender, &t.receiver] {
            if let Participant::Var(v) = p {
                c.pinned.insert(v.clone());
            }
        }
        c.bindings = bindings;
        c.state = to.clone();
        c.path.push(to.clone());
        c.history.push(msg);
        c.deadline = now + timeout;
        let done = c.protocol.is_terminal(&to);
        if done {
            c.status = ConversationStatus::Done;
        }
        let (cid, length) = (c.cid.clone(), c.history.len());
        self.emit(ConversationEvent::Advanced {
            cid: cid.clone(),
            state: to,
            length,
        });
        if done {
            self.emit(ConversationEvent::Ended {
                cid,
                status: ConversationStatus::Done,
            });
        }
    }

    /// Starts a new conversation of `protocol` with `receiver` by sending
    /// `performative content`. Returns the new cid and the message to put
    /// on the wire.
    pub fn start_conversation(
        &mut self,
        protocol: &ProtocolId,
        receiver: &AgentId,
        performative: &str,
        content: Term,
    ) -> Result<(String, Message), EngineError> {
        if !content.is_ground() {
            return Err(EngineError::NonGroundContent(content));
        }
        let p = self.repository.get(protocol)?;
        let cid = format!("{}-{}", self.owner.name, self.next_id);
        let msg = Message::new(performative, self.owner.clone(), receiver.clone(), content)
            .with_hint(cid.clone());
        let init = p.initial_state().unwrap_or_default();
        let found = p.outgoing(init).find_map(|(ti, t)| {
            try_transition(t, &msg, &BindingSet::new())
                .ok()
                .map(|b| (ti, b))
        });
        let Some((ti, b)) = found else {
            return Err(EngineError::NoInitiatingTransition {
                protocol: Box::new(protocol.clone()),
                performative: performative.to_string(),
                content: msg.content,
            });
        };
        let ci = self.create(p, &msg, Direction::Outgoing);
        debug_assert_eq!(self.conversations[ci].cid, cid);
        self.apply(ci, ti, b, msg.clone());
        Ok((cid, msg))
    }

    /// Sends the next message of an active conversation. The transition is
    /// checked before anything changes; on error the conversation is untouched.
    pub fn advance_conversation(
        &mut self,
        cid: &str,
        performative: &str,
        content: Term,
    ) -> Result<Message, EngineError> {
        if !content.is_ground() {
            return Err(EngineError::NonGroundContent(content));
        }
        let ci = self.index_of_active(cid)?;
        let c = &self.conversations[ci];
        let msg = Message::new(
            performative,
            self.owner.clone(),
            c.counterpart.clone(),
            content,
        )
        .with_hint(c.thread.clone());
        let Some((ti, b)) = c.first_match(&msg) else {
            return Err(EngineError::OutOfSequence {
                cid: cid.to_string(),
                state: c.state.clone(),
                performative: performative.to_string(),
                content: msg.content,
            });
        };
        self.apply(ci, ti, b, msg.clone());
        Ok(msg)
    }

    /// Abandons an active conversation and produces the `cancel` message
    /// telling the counterpart.
    pub fn cancel_conversation(
        &mut self,
        cid: &str,
        reason: &str,
    ) -> Result<(ConversationEvent, Message), EngineError> {
        let ci = self.index_of_active(cid)?;
        let c = &mut self.conversations[ci];
        c.status = ConversationStatus::Cancelled;
        let content = Term::compound(
            "cancelled",
            vec![Term::string(c.cid.clone()), Term::string(reason)],
        );
        let msg = Message::new("cancel", self.owner.clone(), c.counterpart.clone(), content)
            .with_hint(c.thread.clone());
        let event = ConversationEvent::Cancelled {
            cid: cid.to_string(),
            reason: reason.to_string(),
        };
        self.emit(event.clone());
        Ok((event, msg))
    }

    fn index_of_active(&self, cid: &str) -> Result<usize, EngineError> {
        let i = self
            .conversations
            .iter()
            .position(|c| c.cid == cid)
            .ok_or_else(|| EngineError::UnknownCid(cid.to_string()))?;
        let c = &self.conversations[i];
        if c.is_active() {
            Ok(i)
        } else {
            Err(EngineError::NotActive {
                cid: cid.to_string(),
                status: c.status,
            })
        }
    }

    /// Advances the clock and times out every active conversation whose
    /// deadline has passed, in creation order.
    pub fn tick(&mut self, now: Tick) -> Vec<ConversationEvent> {
        self.now = now;
        let mut out = Vec::new();
        for i in 0..self.conversations.len() {
            let c = &mut self.conversations[i];
            if c.is_active() && c.deadline < now {
                c.status = ConversationStatus::TimedOut;
                let cid = c.cid.clone();
                out.push(ConversationEvent::TimedOut { cid: cid.clone() });
                out.push(ConversationEvent::Ended {
                    cid,
                    status: ConversationStatus::TimedOut,
                });
            }
        }
        for e in &out {
            self.emit(e.clone());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse_term;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn repo() -> Arc<Repository> {
        Arc::new(Repository::bundled())
    }

    fn id(s: &str) -> ProtocolId {
        ProtocolId::parse_compact(s).unwrap()
    }

    fn msg(perf: &str, from: &str, to: &str, content: &str) -> Message {
        Message::new(perf, AgentId::local(from), AgentId::local(to), t(content))
    }

    #[test]
    fn open_account_both_sides() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        let mut banker = ConversationManager::new(AgentId::local("banker"), repo());

        let (cid, req) = player
            .start_conversation(
                &id("trading/open@1.0"),
                &AgentId::local("banker"),
                "request",
                t("openAccount"),
            )
            .unwrap();
        assert_eq!(cid, "player-1");
        assert_eq!(req.cid_hint.as_deref(), Some("player-1"));

        let out = banker.process_message(&req, Direction::Incoming);
        assert_eq!(out.kind, MatchKind::StartedNew);
        let bcid = out.cid.unwrap();
        assert_eq!(banker.inspect(&bcid).unwrap().thread(), "player-1");

        let reply = banker
            .advance_conversation(&bcid, "inform", t("openedAccount(acct1,1000)"))
            .unwrap();
        assert_eq!(reply.cid_hint.as_deref(), Some("player-1"));
        assert!(!banker.inspect(&bcid).unwrap().is_active());

        let out = player.process_message(&reply, Direction::Incoming);
        assert_eq!(out.kind, MatchKind::AdvancedExisting);
        let c = player.inspect(&cid).unwrap();
        assert_eq!(c.status(), ConversationStatus::Done);
        assert_eq!(c.state(), "done");
        assert_eq!(c.history().len(), 2);
        assert_eq!(c.bindings().get("amt"), Some(&Term::Int(1000)));
        let kinds: Vec<_> = player.take_events().iter().map(|e| e.kind()).collect();
        assert_eq!(kinds, ["started", "advanced", "advanced", "ended"]);
    }

    #[test]
    fn wrong_sender_is_unmatched() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        player
            .start_conversation(
                &id("trading/open@1.0"),
                &AgentId::local("banker"),
                "request",
                t("openAccount"),
            )
            .unwrap();
        let forged = msg("inform", "mallory", "player", "openedAccount(x,1)");
        let out = player.process_message(&forged, Direction::Incoming);
        assert_eq!(out.kind, MatchKind::Unmatched);
        assert_eq!(out.reason, Some(UnmatchedReason::NoActiveMatchNoInitiation));
        assert_eq!(player.inspect("player-1").unwrap().history().len(), 1);
    }

    #[test]
    fn reasons_for_known_counterpart() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        player
            .start_conversation(
                &id("trading/enquiry@1.0"),
                &AgentId::local("banker"),
                "query",
                t("balance"),
            )
            .unwrap();
        let cases = [
            ("agree", "balance(1)", UnmatchedReason::OutOfSequence),
            ("inform", "wealth(1)", UnmatchedReason::ContentMismatch),
        ];
        for (perf, content, want) in cases {
            let out = player
                .process_message(&msg(perf, "banker", "player", content), Direction::Incoming);
            assert_eq!(out.reason, Some(want), "{perf} {content}");
        }
        // Addressed to someone else but delivered here: participant check fails.
        let out = player.process_message(
            &msg("inform", "banker", "other", "balance(1)"),
            Direction::Incoming,
        );
        assert_eq!(out.reason, Some(UnmatchedReason::WrongSender));
    }

    #[test]
    fn advance_checks_sequence_and_leaves_state_alone() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        let (cid, _) = player
            .start_conversation(
                &id("trading/open@1.0"),
                &AgentId::local("banker"),
                "request",
                t("openAccount"),
            )
            .unwrap();
        let err = player
            .advance_conversation(&cid, "inform", t("openedAccount(a,1)"))
            .unwrap_err();
        assert!(matches!(err, EngineError::OutOfSequence { .. }));
        assert_eq!(player.inspect(&cid).unwrap().state(), "requested");
        assert!(matches!(
            player.advance_conversation(&cid, "request", t("?x")),
            Err(EngineError::NonGroundContent(_))
        ));
        assert!(matches!(
            player.advance_conversation("nobody-9", "request", t("x")),
            Err(EngineError::UnknownCid(_))
        ));
    }

    #[test]
    fn start_rejects_bad_protocol_and_content() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        let banker = AgentId::local("banker");
        assert!(matches!(
            player.start_conversation(
                &id("trading/open@2.0"),
                &banker,
                "request",
                t("openAccount")
            ),
            Err(EngineError::Repository(
                RepositoryError::UnknownVersion { .. }
            ))
        ));
        assert!(matches!(
            player.start_conversation(
                &id("trading/open@1.0"),
                &banker,
                "request",
                t("closeAccount")
            ),
            Err(EngineError::NoInitiatingTransition { .. })
        ));
        assert!(player.conversations().is_empty());
    }

    #[test]
    fn guru_tips_rebind_on_each_loop() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        let guru = AgentId::local("guru");
        let (cid, _) = player
            .start_conversation(
                &id("trading/guru-subscribe@1.0"),
                &guru,
                "subscribe",
                t("tips"),
            )
            .unwrap();
        for m in [
            msg("agree", "guru", "player", "tips"),
            msg("inform", "guru", "player", "tip(acme,rise)"),
            msg("inform", "guru", "player", "tip(zinc,fall)"),
            msg("inform", "guru", "player", "tip(acme,fall)"),
        ] {
            let out = player.process_message(&m.with_hint(cid.clone()), Direction::Incoming);
            assert_eq!(out.kind, MatchKind::AdvancedExisting);
        }
        let c = player.inspect(&cid).unwrap();
        assert_eq!(c.history().len(), 5);
        assert_eq!(c.bindings().get("stock"), Some(&t("acme")));
        assert_eq!(c.bindings().get("kind"), Some(&t("fall")));
        assert_eq!(c.bindings().get("guru"), Some(&t("guru")));
        // The guru itself is pinned; a tip from anyone else is rejected.
        let out = player.process_message(
            &msg("inform", "rogue", "player", "tip(a,rise)"),
            Direction::Incoming,
        );
        assert_eq!(out.kind, MatchKind::Unmatched);
    }

    #[test]
    fn hint_naming_another_conversation_is_rejected() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        let banker = AgentId::local("banker");
        player
            .start_conversation(&id("trading/enquiry@1.0"), &banker, "query", t("balance"))
            .unwrap();
        player
            .start_conversation(
                &id("trading/open@1.0"),
                &banker,
                "request",
                t("openAccount"),
            )
            .unwrap();
        let m = msg("inform", "banker", "player", "balance(5)").with_hint("player-2");
        let out = player.process_message(&m, Direction::Incoming);
        assert_eq!(out.reason, Some(UnmatchedReason::ContentMismatch));
        let m = msg("inform", "banker", "player", "balance(5)").with_hint("player-1");
        assert_eq!(
            player
                .process_message(&m, Direction::Incoming)
                .cid
                .as_deref(),
            Some("player-1")
        );
    }

    #[test]
    fn ambiguous_picks_earliest() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        let banker = AgentId::local("banker");
        for _ in 0..2 {
            player
                .start_conversation(&id("trading/enquiry@1.0"), &banker, "query", t("balance"))
                .unwrap();
        }
        player.take_events();
        let out = player.process_message(
            &msg("inform", "banker", "player", "balance(5)"),
            Direction::Incoming,
        );
        assert_eq!(out.cid.as_deref(), Some("player-1"));
        match &out.events[0] {
            ConversationEvent::Ambiguous {
                candidates, chosen, ..
            } => {
                assert_eq!(candidates, &["player-1", "player-2"]);
                assert_eq!(chosen, "player-1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timeouts_fire_after_deadline() {
        let mut player =
            ConversationManager::new(AgentId::local("player"), repo()).with_default_timeout(5);
        let (cid, _) = player
            .start_conversation(
                &id("trading/open@1.0"),
                &AgentId::local("banker"),
                "request",
                t("openAccount"),
            )
            .unwrap();
        assert!(player.tick(5).is_empty());
        let ev = player.tick(6);
        assert_eq!(ev[0], ConversationEvent::TimedOut { cid: cid.clone() });
        assert_eq!(
            player.inspect(&cid).unwrap().status(),
            ConversationStatus::TimedOut
        );
        let late = msg("inform", "banker", "player", "openedAccount(a,1)");
        assert_eq!(
            player.process_message(&late, Direction::Incoming).kind,
            MatchKind::Unmatched
        );
    }

    #[test]
    fn cancel_produces_message_and_blocks_further_use() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        let (cid, _) = player
            .start_conversation(
                &id("trading/open@1.0"),
                &AgentId::local("banker"),
                "request",
                t("openAccount"),
            )
            .unwrap();
        let (ev, m) = player.cancel_conversation(&cid, "changed my mind").unwrap();
        assert_eq!(ev.trace_fields()[3], "changed_my_mind");
        assert_eq!(m.performative, "cancel");
        assert_eq!(
            m.content.to_string(),
            r#"cancelled("player-1","changed my mind")"#
        );
        assert!(matches!(
            player.cancel_conversation(&cid, "again"),
            Err(EngineError::NotActive { .. })
        ));
        let reply = msg("inform", "banker", "player", "openedAccount(a,1)");
        assert_eq!(
            player.process_message(&reply, Direction::Incoming).reason,
            Some(UnmatchedReason::NoActiveMatchNoInitiation)
        );
    }

    #[test]
    fn outgoing_raw_messages_are_tracked_passively() {
        let mut player = ConversationManager::new(AgentId::local("player"), repo());
        let out = player.process_message(
            &msg("query", "player", "banker", "portfolio"),
            Direction::Outgoing,
        );
        assert_eq!(out.kind, MatchKind::StartedNew);
        let c = player.inspect(out.cid.as_deref().unwrap()).unwrap();
        assert_eq!(c.protocol().id().name, "portfolio");
        assert_eq!(c.counterpart().name, "banker");
        assert_eq!(c.thread(), c.cid());
    }
}
