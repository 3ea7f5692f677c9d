//! Interaction protocols as finite-state machines.
//!
//! Protocols are written in a small line-oriented format:
//!
//! ```text
//! protocol trading/open 1.0
//! timeout 20                         # optional, in ticks
//! state start initial
//! state requested normal
//! state done terminal
//! transition start -> requested : request from ?player to ?banker content openAccount
//! transition requested -> done : inform from ?banker to ?player content openedAccount(?id,?amt)
//! ```
//!
//! `#` starts a comment that runs to the end of the line (outside string
//! literals). Participant expressions are either `?variable` or a literal
//! agent name.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::term::{is_identifier, parse_term, Term};

/// Name syntax shared by namespaces, protocol names and performatives:
/// an identifier that may also contain `-`.
pub fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn is_version(s: &str) -> bool {
    !s.is_empty()
        && s.split('.')
            .all(|part| !part.is_empty() && part.bytes().all(|b| b.is_ascii_digit()))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProtocolId {
    pub namespace: String,
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid protocol id `{0}`")]
pub struct InvalidProtocolId(pub String);

impl ProtocolId {
    pub fn new(
        namespace: impl Into<String>,
        name: impl Into<String>,
        version: impl Into<String>,
    ) -> Result<Self, InvalidProtocolId> {
        let id = ProtocolId {
            namespace: namespace.into(),
            name: name.into(),
            version: version.into(),
        };
        if is_name(&id.namespace) && is_name(&id.name) && is_version(&id.version) {
            Ok(id)
        } else {
            Err(InvalidProtocolId(format!(
                "{}/{} {}",
                id.namespace, id.name, id.version
            )))
        }
    }

    /// Parses `namespace/name` plus a separate version string.
    pub fn parse(qualified: &str, version: &str) -> Result<Self, InvalidProtocolId> {
        let (ns, name) = qualified
            .split_once('/')
            .ok_or_else(|| InvalidProtocolId(qualified.to_string()))?;
        Self::new(ns, name, version)
    }

    /// Parses the compact `namespace/name@version` form used in traces.
    pub fn parse_compact(s: &str) -> Result<Self, InvalidProtocolId> {
        let (q, v) = s
            .split_once('@')
            .ok_or_else(|| InvalidProtocolId(s.to_string()))?;
        Self::parse(q, v)
    }

    /// `namespace/name`, without the version.
    pub fn qualified_name(&self) -> String {
        format!("{}/{}", self.namespace, self.name)
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}@{}", self.namespace, self.name, self.version)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateKind {
    Initial,
    Normal,
    Terminal,
}

impl StateKind {
    fn keyword(self) -> &'static str {
        match self {
            StateKind::Initial => "initial",
            StateKind::Normal => "normal",
            StateKind::Terminal => "terminal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State {
    pub name: String,
    pub kind: StateKind,
}

/// Who may send or receive a message on a transition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Participant {
    /// Bound on first use, fixed for the rest of the conversation.
    Var(String),
    /// A literal agent name.
    Agent(String),
}

impl Participant {
    fn parse(s: &str) -> Option<Self> {
        match s.strip_prefix('?') {
            Some(v) if is_identifier(v) => Some(Participant::Var(v.to_string())),
            Some(_) => None,
            None if is_identifier(s) => Some(Participant::Agent(s.to_string())),
            None => None,
        }
    }
}

impl fmt::Display for Participant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Participant::Var(v) => write!(f, "?{v}"),
            Participant::Agent(a) => f.write_str(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub performative: String,
    pub sender: Participant,
    pub receiver: Participant,
    pub content: Term,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "transition {} -> {} : {} from {} to {} content {}",
            self.from, self.to, self.performative, self.sender, self.receiver, self.content
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolDescriptor {
    id: ProtocolId,
    states: Vec<State>,
    transitions: Vec<Transition>,
    timeout: Option<u64>,
}

impl ProtocolDescriptor {
    /// Builds a descriptor without validating it. States are stored in
    /// canonical order: initial states first, then declaration order.
    pub fn new(
        id: ProtocolId,
        states: Vec<State>,
        transitions: Vec<Transition>,
        timeout: Option<u64>,
    ) -> Self {
        let (mut ordered, rest): (Vec<State>, Vec<State>) = states
            .into_iter()
            .partition(|s| s.kind == StateKind::Initial);
        ordered.extend(rest);
        ProtocolDescriptor {
            id,
            states: ordered,
            transitions,
            timeout,
        }
    }

    pub fn id(&self) -> &ProtocolId {
        &self.id
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn timeout(&self) -> Option<u64> {
        self.timeout
    }

    pub fn state_kind(&self, name: &str) -> Option<StateKind> {
        self.states.iter().find(|s| s.name == name).map(|s| s.kind)
    }

    pub fn is_terminal(&self, name: &str) -> bool {
        self.state_kind(name) == Some(StateKind::Terminal)
    }

    pub fn initial_state(&self) -> Option<&str> {
        self.states
            .iter()
            .find(|s| s.kind == StateKind::Initial)
            .map(|s| s.name.as_str())
    }

    /// Transitions leaving `state`, with their declaration index.
    pub fn outgoing<'a>(
        &'a self,
        state: &'a str,
    ) -> impl Iterator<Item = (usize, &'a Transition)> + 'a {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.from == state)
    }

    /// Transitions leaving the initial state, in declaration order.
    pub fn initiating_transitions(&self) -> Vec<&Transition> {
        match self.initial_state() {
            Some(init) => self.outgoing(init).map(|(_, t)| t).collect(),
            None => Vec::new(),
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate_protocol(self)
    }

    pub fn to_source(&self) -> String {
        serialize_protocol(self)
    }
}

/// Free-function form of [`ProtocolDescriptor::initiating_transitions`].
pub fn initiating_transitions(p: &ProtocolDescriptor) -> Vec<&Transition> {
    p.initiating_transitions()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiagnosticCode {
    NoInitial,
    MultipleInitial,
    NoTerminal,
    DanglingEndpoint,
    TerminalOutgoing,
    UnreachableState,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::NoInitial => "NO_INITIAL",
            DiagnosticCode::MultipleInitial => "MULTIPLE_INITIAL",
            DiagnosticCode::NoTerminal => "NO_TERMINAL",
            DiagnosticCode::DanglingEndpoint => "DANGLING_ENDPOINT",
            DiagnosticCode::TerminalOutgoing => "TERMINAL_OUTGOING",
            DiagnosticCode::UnreachableState => "UNREACHABLE_STATE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    /// The offending state name, or `from->to` for a transition.
    pub element: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.code.as_str(), self.element)
    }
}

/// Static well-formedness checks. The result is sorted, so it does not
/// depend on the order in which transitions were declared.
pub fn validate_protocol(p: &ProtocolDescriptor) -> Vec<Diagnostic> {
    let mut out = BTreeSet::new();
    let diag = |code, element: &str| Diagnostic {
        code,
        element: element.to_string(),
    };

    let initials: Vec<&str> = p
        .states
        .iter()
        .filter(|s| s.kind == StateKind::Initial)
        .map(|s| s.name.as_str())
        .collect();
    match initials.len() {
        0 => {
            out.insert(diag(DiagnosticCode::NoInitial, &p.id.to_string()));
        }
        1 => {}
        _ => {
            out.insert(diag(DiagnosticCode::MultipleInitial, &initials.join(",")));
        }
    }
    if !p.states.iter().any(|s| s.kind == StateKind::Terminal) {
        out.insert(diag(DiagnosticCode::NoTerminal, &p.id.to_string()));
    }

    let declared: HashSet<&str> = p.states.iter().map(|s| s.name.as_str()).collect();
    for t in &p.transitions {
        for end in [&t.from, &t.to] {
            if !declared.contains(end.as_str()) {
                out.insert(diag(
                    DiagnosticCode::DanglingEndpoint,
                    &format!("{}->{}", t.from, t.to),
                ));
            }
        }
        if p.is_terminal(&t.from) {
            out.insert(diag(DiagnosticCode::TerminalOutgoing, &t.from));
        }
    }

    if !initials.is_empty() {
        let mut seen: HashSet<&str> = initials.iter().copied().collect();
        let mut queue: VecDeque<&str> = initials.iter().copied().collect();
        while let Some(s) = queue.pop_front() {
            for t in p.transitions.iter().filter(|t| t.from == s) {
                if seen.insert(&t.to) {
                    queue.push_back(&t.to);
                }
            }
        }
        for s in &p.states {
            if !seen.contains(s.name.as_str()) {
                out.insert(diag(DiagnosticCode::UnreachableState, &s.name));
            }
        }
    }
    out.into_iter().collect()
}

/// Canonical source text: header, optional timeout, states (initial first),
/// then transitions in declaration order.
pub fn serialize_protocol(p: &ProtocolDescriptor) -> String {
    let mut out = format!(
        "protocol {}/{} {}\n",
        p.id.namespace, p.id.name, p.id.version
    );
    if let Some(t) = p.timeout {
        out.push_str(&format!("timeout {t}\n"));
    }
    for s in &p.states {
        out.push_str(&format!("state {} {}\n", s.name, s.kind.keyword()));
    }
    for t in &p.transitions {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolParseError {
    #[error("missing protocol header")]
    MissingHeader,
    #[error("line {line}: duplicate protocol header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: duplicate state `{state}`")]
    DuplicateState { line: usize, state: String },
    #[error("line {line}: transition uses undeclared state `{state}`")]
    UndeclaredState { line: usize, state: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
        } else if c == '"' {
            in_string = true;
        } else if c == '#' {
            return &line[..i];
        }
    }
    line
}

/// Splits off the next whitespace-delimited token.
fn next_token<'a>(rest: &mut &'a str) -> Option<&'a str> {
    let s = rest.trim_start();
    if s.is_empty() {
        return None;
    }
    let end = s.find(char::is_whitespace).unwrap_or(s.len());
    *rest = &s[end..];
    Some(&s[..end])
}

pub fn parse_protocol(source: &str) -> Result<ProtocolDescriptor, ProtocolParseError> {
    let mut id: Option<ProtocolId> = None;
    let mut timeout = None;
    let mut states: Vec<State> = Vec::new();
    let mut transitions: Vec<(usize, Transition)> = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let syntax = |message: &str| ProtocolParseError::Syntax {
            line,
            message: message.to_string(),
        };
        let mut rest = strip_comment(raw);
        let Some(keyword) = next_token(&mut rest) else {
            continue;
        };
        if keyword != "protocol" && id.is_none() {
            return Err(ProtocolParseError::MissingHeader);
        }
        match keyword {
            "protocol" => {
                if id.is_some() {
                    return Err(ProtocolParseError::DuplicateHeader { line });
                }
                let (Some(q), Some(v), None) = (
                    next_token(&mut rest),
                    next_token(&mut rest),
                    next_token(&mut rest),
                ) else {
                    return Err(syntax("expected `protocol <namespace>/<name> <version>`"));
                };
                id = Some(ProtocolId::parse(q, v).map_err(|e| syntax(&e.to_string()))?);
            }
            "timeout" => {
                if timeout.is_some() {
                    return Err(syntax("duplicate timeout"));
                }
                let (Some(n), None) = (next_token(&mut rest), next_token(&mut rest)) else {
                    return Err(syntax("expected `timeout <ticks>`"));
                };
                match n.parse::<u64>() {
                    Ok(n) if n > 0 => timeout = Some(n),
                    _ => return Err(syntax("timeout must be a positive integer")),
                }
            }
            "state" => {
                let (Some(name), Some(kind), None) = (
                    next_token(&mut rest),
                    next_token(&mut rest),
                    next_token(&mut rest),
                ) else {
                    return Err(syntax("expected `state <name> initial|normal|terminal`"));
                };
                if !is_identifier(name) {
                    return Err(syntax(&format!("bad state name `{name}`")));
                }
                let kind = match kind {
                    "initial" => StateKind::Initial,
                    "normal" => StateKind::Normal,
                    "terminal" => StateKind::Terminal,
                    other => return Err(syntax(&format!("unknown state kind `{other}`"))),
                };
                if states.iter().any(|s| s.name == name) {
                    return Err(ProtocolParseError::DuplicateState {
                        line,
                        state: name.to_string(),
                    });
                }
                states.push(State {
                    name: name.to_string(),
                    kind,
                });
            }
            "transition" => transitions.push((line, parse_transition(line, rest)?)),
            other => return Err(syntax(&format!("unknown keyword `{other}`"))),
        }
    }

    let id = id.ok_or(ProtocolParseError::MissingHeader)?;
    for (line, t) in &transitions {
        for end in [&t.from, &t.to] {
            if !states.iter().any(|s| &s.name == end) {
                return Err(ProtocolParseError::UndeclaredState {
                    line: *line,
                    state: end.clone(),
                });
            }
        }
    }
    Ok(ProtocolDescriptor::new(
        id,
        states,
        transitions.into_iter().map(|(_, t)| t).collect(),
        timeout,
    ))
}

fn parse_transition(line: usize, mut rest: &str) -> Result<Transition, ProtocolParseError> {
    let syntax = |message: String| ProtocolParseError::Syntax { line, message };
    let mut expect = |what: &str| {
        next_token(&mut rest).ok_or_else(|| syntax(format!("transition: expected {what}")))
    };
    let from = expect("source state")?;
    let arrow = expect("`->`")?;
    let to = expect("target state")?;
    let colon = expect("`:`")?;
    let performative = expect("performative")?;
    let kw_from = expect("`from`")?;
    let sender = expect("sender")?;
    let kw_to = expect("`to`")?;
    let receiver = expect("receiver")?;
    let kw_content = expect("`content`")?;
    if arrow != "->"
        || colon != ":"
        || kw_from != "from"
        || kw_to != "to"
        || kw_content != "content"
    {
        return Err(syntax(
            "expected `transition <from> -> <to> : <performative> from <expr> to <expr> content <term>`"
                .into(),
        ));
    }
    for s in [from, to] {
        if !is_identifier(s) {
            return Err(syntax(format!("bad state name `{s}`")));
        }
    }
    if !is_name(performative) {
        return Err(syntax(format!("bad performative `{performative}`")));
    }
    let sender =
        Participant::parse(sender).ok_or_else(|| syntax(format!("bad participant `{sender}`")))?;
    let receiver = Participant::parse(receiver)
        .ok_or_else(|| syntax(format!("bad participant `{receiver}`")))?;
    if let (Participant::Agent(a), Participant::Agent(b)) = (&sender, &receiver) {
        if a == b {
            return Err(syntax(format!("sender and receiver are both `{a}`")));
        }
    }
    let content = parse_term(rest.trim()).map_err(|e| syntax(format!("content: {e}")))?;
    Ok(Transition {
        from: from.to_string(),
        to: to.to_string(),
        performative: performative.to_string(),
        sender,
        receiver,
        content,
    })
}
