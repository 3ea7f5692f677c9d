//! Append-only run trace.
//!
//! One record per line, fields separated by tabs, every line terminated by
//! `\n`:
//!
//! ```text
//! MSG   <tick> <sender> <receiver> <performative> <content> <hint|-> [UNDELIVERABLE|FORGED]
//! EVT   <tick> <agent> <event> <cid|-> <state|-> <length|-> <detail|->
//! RNG   <tick> <stream> <lo> <hi> <value>
//! GAME  <tick> <kind> <args...>
//! ```
//!
//! Two runs are identical exactly when their trace texts are byte-equal;
//! [`Trace::hash`] condenses that into a 64-bit FNV-1a digest.

use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{AgentId, DrawRecord, Message, Tick};
use crate::conversation::ConversationEvent;
use crate::term::parse_term;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceKind {
    Msg,
    Evt,
    Rng,
    Game,
}

impl TraceKind {
    pub fn tag(self) -> &'static str {
        match self {
            TraceKind::Msg => "MSG",
            TraceKind::Evt => "EVT",
            TraceKind::Rng => "RNG",
            TraceKind::Game => "GAME",
        }
    }

    fn from_tag(s: &str) -> Option<Self> {
        match s {
            "MSG" => Some(TraceKind::Msg),
            "EVT" => Some(TraceKind::Evt),
            "RNG" => Some(TraceKind::Rng),
            "GAME" => Some(TraceKind::Game),
            _ => None,
        }
    }
}

/// Extra flag on a `MSG` record.
pub const UNDELIVERABLE: &str = "UNDELIVERABLE";
pub const FORGED: &str = "FORGED";

const EVENT_KINDS: &[&str] = &[
    "started",
    "advanced",
    "ended",
    "timed_out",
    "cancelled",
    "unmatched",
    "ambiguous",
    "suspended",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub tick: Tick,
    pub kind: TraceKind,
    pub fields: Vec<String>,
}

impl TraceRecord {
    pub fn msg(tick: Tick, m: &Message, flag: Option<&str>) -> Self {
        let mut fields = vec![
            m.sender.name.clone(),
            m.receiver.name.clone(),
            m.performative.clone(),
            m.content.to_string(),
            m.cid_hint.clone().unwrap_or_else(|| "-".into()),
        ];
        if let Some(f) = flag {
            fields.push(f.to_string());
        }
        TraceRecord {
            tick,
            kind: TraceKind::Msg,
            fields,
        }
    }

    pub fn evt(tick: Tick, agent: &str, e: &ConversationEvent) -> Self {
        let mut fields = vec![agent.to_string(), e.kind().to_string()];
        fields.extend(e.trace_fields());
        TraceRecord {
            tick,
            kind: TraceKind::Evt,
            fields,
        }
    }

    pub fn suspended(tick: Tick, agent: &str, reason: &str) -> Self {
        let reason = crate::conversation::sanitize(reason);
        TraceRecord {
            tick,
            kind: TraceKind::Evt,
            fields: vec![
                agent.to_string(),
                "suspended".into(),
                "-".into(),
                "-".into(),
                "-".into(),
                reason,
            ],
        }
    }

    pub fn rng(d: &DrawRecord) -> Self {
        TraceRecord {
            tick: d.tick,
            kind: TraceKind::Rng,
            fields: vec![
                d.stream.clone(),
                d.lo.to_string(),
                d.hi.to_string(),
                d.value.to_string(),
            ],
        }
    }

    pub fn game<S: Into<String>>(tick: Tick, fields: impl IntoIterator<Item = S>) -> Self {
        TraceRecord {
            tick,
            kind: TraceKind::Game,
            fields: fields.into_iter().map(Into::into).collect(),
        }
    }

    /// Rebuilds the message of a `MSG` record, with its flag. Addresses are
    /// not traced, so both ids come back with none.
    pub fn message(&self) -> Option<(Message, Option<&str>)> {
        if self.kind != TraceKind::Msg {
            return None;
        }
        let content = parse_term(&self.fields[3]).ok()?;
        let mut m = Message::new(
            self.fields[2].clone(),
            AgentId::new(self.fields[0].clone(), Vec::new()),
            AgentId::new(self.fields[1].clone(), Vec::new()),
            content,
        );
        if self.fields[4] != "-" {
            m.cid_hint = Some(self.fields[4].clone());
        }
        m.sent_tick = self.tick;
        Some((m, self.fields.get(5).map(String::as_str)))
    }

    pub fn draw(&self) -> Option<DrawRecord> {
        if self.kind != TraceKind::Rng {
            return None;
        }
        Some(DrawRecord {
            tick: self.tick,
            stream: self.fields[0].clone(),
            lo: self.fields[1].parse().ok()?,
            hi: self.fields[2].parse().ok()?,
            value: self.fields[3].parse().ok()?,
        })
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.kind.tag(), self.tick)?;
        for field in &self.fields {
            write!(f, "\t{field}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line} (byte offset {offset}): {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum TraceLoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: TraceParseError,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    pub fn hash(&self) -> u64 {
        fnv1a64(self.to_text().as_bytes())
    }

    /// The hash as 16 lowercase hex digits.
    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    /// All `RNG` records as draws.
    pub fn draws(&self) -> Vec<DrawRecord> {
        self.records.iter().filter_map(TraceRecord::draw).collect()
    }

    /// Replay file contents: only the `RNG` records.
    pub fn replay_text(&self) -> String {
        let mut s = String::new();
        for r in self.records.iter().filter(|r| r.kind == TraceKind::Rng) {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        let mut records = Vec::new();
        let mut offset = 0;
        let mut last_tick = 0;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let err = |message: String| TraceParseError {
                line: i + 1,
                offset,
                message,
            };
            let Some(body) = line.strip_suffix('\n') else {
                return Err(err("truncated record (no line terminator)".into()));
            };
            let r = parse_record(body).map_err(err)?;
            if r.tick < last_tick {
                return Err(err(format!(
                    "tick {} goes backwards from {last_tick}",
                    r.tick
                )));
            }
            last_tick = r.tick;
            records.push(r);
            offset += line.len();
        }
        Ok(Trace { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Trace, TraceLoadError> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let bytes = fs::read(path).map_err(|source| TraceLoadError::Io {
            path: name.clone(),
            source,
        })?;
        let text = match String::from_utf8(bytes) {
            Ok(t) => t,
            Err(e) => {
                let offset = e.utf8_error().valid_up_to();
                return Err(TraceLoadError::Parse {
                    path: name,
                    source: TraceParseError {
                        line: e.as_bytes()[..offset]
                            .iter()
                            .filter(|b| **b == b'\n')
                            .count()
                            + 1,
                        offset,
                        message: "invalid UTF-8".into(),
                    },
                });
            }
        };
        Trace::parse(&text).map_err(|source| TraceLoadError::Parse { path: name, source })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_text())
    }
}

impl Extend<TraceRecord> for Trace {
    fn extend<I: IntoIterator<Item = TraceRecord>>(&mut self, iter: I) {
        self.records.extend(iter);
    }
}

fn parse_record(line: &str) -> Result<TraceRecord, String> {
    let mut parts = line.split('\t');
    let tag = parts.next().unwrap_or_default();
    let kind = TraceKind::from_tag(tag).ok_or_else(|| format!("unknown record kind {tag:?}"))?;
    let tick: Tick = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| "missing or bad tick".to_string())?;
    let fields: Vec<String> = parts.map(str::to_string).collect();
    if fields.iter().any(|f| f.is_empty()) {
        return Err("empty field".into());
    }
    let n = fields.len();
    match kind {
        TraceKind::Msg => {
            if !(5..=6).contains(&n) {
                return Err(format!("MSG needs 5 or 6 fields, found {n}"));
            }
            parse_term(&fields[3]).map_err(|e| format!("bad content: {e}"))?;
            if let Some(flag) = fields.get(5) {
                if flag != UNDELIVERABLE && flag != FORGED {
                    return Err(format!("unknown MSG flag {flag:?}"));
                }
            }
        }
        TraceKind::Evt => {
            if n != 6 {
                return Err(format!("EVT needs 6 fields, found {n}"));
            }
            if !EVENT_KINDS.contains(&fields[1].as_str()) {
                return Err(format!("unknown event {:?}", fields[1]));
            }
        }
        TraceKind::Rng => {
            if n != 4 {
                return Err(format!("RNG needs 4 fields, found {n}"));
            }
            if fields[1..].iter().any(|f| f.parse::<i64>().is_err()) {
                return Err("RNG bounds and value must be integers".into());
            }
        }
        TraceKind::Game => {
            if n == 0 {
                return Err("GAME record without a kind".into());
            }
        }
    }
    Ok(TraceRecord { tick, kind, fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Term;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    fn sample() -> Trace {
        let mut t = Trace::new();
        t.push(TraceRecord::game(
            0,
            ["CONFIG", "player", "mark_to_market", "1000"],
        ));
        let m = Message::new(
            "inform",
            AgentId::local("a"),
            AgentId::local("b"),
            Term::compound("say", vec![Term::string("tab\there")]),
        )
        .with_hint("a-1");
        t.push(TraceRecord::msg(1, &m, None));
        t.push(TraceRecord::msg(1, &m, Some(FORGED)));
        t.push(TraceRecord::rng(&DrawRecord {
            tick: 2,
            stream: "price:acme".into(),
            lo: -3,
            hi: 3,
            value: 1,
        }));
        t.push(TraceRecord::suspended(3, "b", "panic in step"));
        t
    }

    #[test]
    fn round_trip() {
        let t = sample();
        let text = t.to_text();
        assert!(text.ends_with('\n'));
        let back = Trace::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.hash_hex().len(), 16);
        let (m, flag) = back.records()[2].message().unwrap();
        assert_eq!(m.cid_hint.as_deref(), Some("a-1"));
        assert_eq!(flag, Some(FORGED));
        assert_eq!(back.draws().len(), 1);
        assert_eq!(
            Trace::parse(&t.replay_text()).unwrap().draws(),
            back.draws()
        );
    }

    #[test]
    fn corruption_reports_offset() {
        let text = sample().to_text();
        let first = text.find('\n').unwrap() + 1;
        let mut bad = text.clone();
        bad.insert_str(first, "XYZ\t");
        let e = Trace::parse(&bad).unwrap_err();
        assert_eq!((e.line, e.offset), (2, first));

        let truncated = &text[..text.len() - 1];
        let e = Trace::parse(truncated).unwrap_err();
        assert!(e.message.contains("truncated"));
        assert_eq!(e.line, 5);

        let backwards = "RNG\t5\ts\t0\t1\t0\nRNG\t4\ts\t0\t1\t0\n";
        assert!(Trace::parse(backwards)
            .unwrap_err()
            .message
            .contains("backwards"));
    }
}
