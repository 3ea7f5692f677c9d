//! Adversarial probing of a player.
//!
//! A rogue agent with the bus's forgery privilege joins an ordinary game
//! and feeds the player messages it should ignore: tips and calls from an
//! agent it never talked to, and confirmations of trades it never agreed
//! to. Separate runs move one core agent to a new name or a new address to
//! see whether the player can still reach it. Each issue is scored on a
//! three-level rubric from the number of accepted injections or failed
//! variant runs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::conversation::{ConversationEvent, UnmatchedReason};
use crate::game::{
    protocol, run_game, ConfigError, ConfigIssue, ExtraAgent, GameConfig, GameError, GameResult,
    PlayerKind, Role, RunOptions, PLAYER,
};
use crate::runtime::{
    AgentContext, AgentId, Behavior, BehaviorError, Message, Tick, Trace, TraceKind, TraceRecord,
};
use crate::term::Term;

/// Name of the injected agent.
pub const ROGUE: &str = "rogue";

/// Ticks of the four injections. Chosen to sit between the bundled
/// configs' scheduled events.
pub const DEFAULT_PROBE_TICKS: [Tick; 4] = [14, 15, 16, 17];

/// Address used for the address-variant runs.
pub const ALTERNATE_ADDRESS: &str = "remote:host2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Issue {
    /// Acts on messages without checking who sent them.
    Sender,
    /// Acts on messages that do not follow from the conversation so far.
    Progress,
    /// Only works with a counterpart of one specific name.
    Name,
    /// Only works with a counterpart at one specific address.
    Address,
}

impl Issue {
    pub const ALL: [Issue; 4] = [Issue::Sender, Issue::Progress, Issue::Name, Issue::Address];

    pub fn as_str(self) -> &'static str {
        match self {
            Issue::Sender => "Sender",
            Issue::Progress => "Progress",
            Issue::Name => "Name",
            Issue::Address => "Address",
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Issue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Issue::ALL
            .into_iter()
            .find(|i| i.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown check {s:?} (expected sender, progress, name or address)")
            })
    }
}

/// Parses a comma-separated check list such as `sender,progress`.
pub fn parse_checks(list: &str) -> Result<BTreeSet<Issue>, String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Susceptibility {
    Not,
    Somewhat,
    Totally,
}

impl Susceptibility {
    /// None accepted is not susceptible, all accepted is totally, anything
    /// between is somewhat.
    pub fn classify(accepted: usize, injected: usize) -> Self {
        if accepted == 0 {
            Susceptibility::Not
        } else if accepted >= injected {
            Susceptibility::Totally
        } else {
            Susceptibility::Somewhat
        }
    }

    /// Single-token form used in trace records.
    pub fn token(self) -> &'static str {
        match self {
            Susceptibility::Not => "not_susceptible",
            Susceptibility::Somewhat => "somewhat_susceptible",
            Susceptibility::Totally => "totally_susceptible",
        }
    }
}

impl fmt::Display for Susceptibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Susceptibility::Not => "not susceptible",
            Susceptibility::Somewhat => "somewhat susceptible",
            Susceptibility::Totally => "totally susceptible",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub issue: Issue,
    pub accepted: usize,
    pub injected: usize,
    pub class: Susceptibility,
    /// Trace excerpts (with 1-based line numbers in the probe trace) or
    /// variant-run descriptions backing each accepted injection.
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VulnerabilityReport {
    pub player: PlayerKind,
    /// One per selected check, in [`Issue::ALL`] order.
    pub findings: Vec<Finding>,
    /// Injected messages that an engine-backed player let advance a
    /// conversation or did not report as unmatched. Always empty for a
    /// correct engine.
    pub engine_violations: Vec<String>,
    /// The injection run's trace with the report's `PROBE` records
    /// appended, if there was an injection run.
    pub trace: Option<Trace>,
}

impl VulnerabilityReport {
    pub fn all_clear(&self) -> bool {
        self.engine_violations.is_empty()
            && self.findings.iter().all(|f| f.class == Susceptibility::Not)
    }

    pub fn finding(&self, issue: Issue) -> Option<&Finding> {
        self.findings.iter().find(|f| f.issue == issue)
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Game(#[from] GameError),
}

impl From<ConfigError> for ProbeError {
    fn from(e: ConfigError) -> Self {
        ProbeError::Game(GameError::Config(e))
    }
}

/// One message the rogue sends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub issue: Issue,
    pub tick: Tick,
    /// Name the message claims to come from; `None` sends under the
    /// rogue's own name.
    pub forged_as: Option<String>,
    pub performative: String,
    pub content: Term,
    /// Constant unique to this injection. The player accepted the injection
    /// if any later message of its mentions it.
    pub bait: String,
}

impl Injection {
    fn message(&self) -> Message {
        let sender = AgentId::local(self.forged_as.as_deref().unwrap_or(ROGUE));
        Message::new(
            self.performative.clone(),
            sender,
            AgentId::local(PLAYER),
            self.content.clone(),
        )
    }
}

/// The Sender and Progress injections at the given ticks.
pub fn injections(checks: &BTreeSet<Issue>, ticks: [Tick; 4]) -> Vec<Injection> {
    let c = Term::constant;
    let i = Term::int;
    let mut out = Vec::new();
    if checks.contains(&Issue::Sender) {
        out.push(Injection {
            issue: Issue::Sender,
            tick: ticks[0],
            forged_as: None,
            performative: "inform".into(),
            content: Term::compound("tip", vec![c("bait1"), c("rise")]),
            bait: "bait1".into(),
        });
        out.push(Injection {
            issue: Issue::Sender,
            tick: ticks[1],
            forged_as: None,
            performative: "cfp".into(),
            content: Term::compound("bid", vec![c("bait2"), i(1)]),
            bait: "bait2".into(),
        });
    }
    if checks.contains(&Issue::Progress) {
        out.push(Injection {
            issue: Issue::Progress,
            tick: ticks[2],
            forged_as: Some("broker".into()),
            performative: "inform".into(),
            content: Term::compound("purchased", vec![c("bait3"), i(5), i(50)]),
            bait: "bait3".into(),
        });
        out.push(Injection {
            issue: Issue::Progress,
            tick: ticks[3],
            forged_as: Some("auctioneer".into()),
            performative: "inform".into(),
            content: Term::compound("sold", vec![c("bait4"), i(1)]),
            bait: "bait4".into(),
        });
    }
    out
}

/// Sends its injections on schedule and nothing else.
pub struct Rogue {
    plan: Vec<Injection>,
    now: Tick,
}

impl Rogue {
    pub fn new(plan: Vec<Injection>) -> Self {
        Rogue { plan, now: 0 }
    }
}

impl Behavior for Rogue {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        self.now = ctx.tick();
        ctx.take_inbox();
        for inj in self.plan.iter().filter(|i| i.tick == self.now) {
            if inj.forged_as.is_some() {
                ctx.send_forged(inj.message())?;
            } else {
                ctx.send(inj.message());
            }
        }
        Ok(())
    }

    fn is_idle(&self) -> bool {
        self.plan.iter().all(|i| i.tick <= self.now)
    }
}

fn excerpt(line: usize, r: &TraceRecord) -> String {
    format!("line {line}: {r}")
}

/// The player sent something mentioning `bait` after `tick`.
fn accepted_by(result: &GameResult, inj: &Injection) -> Option<String> {
    result
        .trace
        .records()
        .iter()
        .enumerate()
        .find_map(|(n, r)| {
            let (m, _) = r.message()?;
            let hit = r.tick > inj.tick && m.sender.name == PLAYER && m.content.mentions(&inj.bait);
            hit.then(|| excerpt(n + 1, r))
        })
}

/// Checks that the player's manager reported every injection as unmatched
/// and that none appears in any conversation's history.
fn engine_violations(result: &GameResult, plan: &[Injection]) -> Vec<String> {
    let Some(engine) = &result.engine else {
        return Vec::new();
    };
    let manager = engine.manager();
    let mut out = Vec::new();
    for inj in plan {
        let sent = inj.message();
        let same = |m: &Message| {
            m.performative == sent.performative
                && m.content == sent.content
                && m.sender.name == sent.sender.name
        };
        let unmatched = manager.event_log().iter().any(|e| match e {
            ConversationEvent::Unmatched { message, .. } => same(message),
            _ => false,
        });
        if !unmatched {
            out.push(format!(
                "{} {} was not reported unmatched",
                inj.performative, inj.content
            ));
        }
        for conv in manager.conversations() {
            if conv.history().iter().any(same) {
                out.push(format!(
                    "{} {} advanced {}",
                    inj.performative,
                    inj.content,
                    conv.cid()
                ));
            }
        }
        let evt = result.trace.records().iter().any(|r| {
            r.kind == TraceKind::Evt
                && r.tick == inj.tick + 1
                && r.fields[0] == PLAYER
                && r.fields[1] == "unmatched"
                && UnmatchedReason::from_code(&r.fields[5]).is_some()
        });
        if !evt {
            out.push(format!("no unmatched EVT record at tick {}", inj.tick + 1));
        }
    }
    out
}

/// Core agent moved in each variant run, and the protocol that shows
/// whether the player still reached it.
const VARIANT_ROLES: [(Role, &str); 3] = [
    (Role::Banker, "open"),
    (Role::Broker, "listing"),
    (Role::Guru, "guru-subscribe"),
];

fn variant_finding(
    config: &GameConfig,
    player: PlayerKind,
    issue: Issue,
) -> Result<Finding, ProbeError> {
    let mut evidence = Vec::new();
    for (role, key) in VARIANT_ROLES {
        let id = match issue {
            Issue::Name => AgentId::local(format!("{}2", role.as_str())),
            _ => AgentId::new(role.as_str(), vec![ALTERNATE_ADDRESS.to_string()]),
        };
        let described = format!("{}@{}", id.name, id.addresses.join(","));
        let options = RunOptions {
            variant: Some((role, id)),
            ..RunOptions::default()
        };
        let result = run_game(config, player, options)?;
        if result.completion(key).is_none() {
            evidence.push(format!(
                "{} as {described}: {} never completed",
                role.as_str(),
                protocol(key)
            ));
        }
    }
    let injected = VARIANT_ROLES.len();
    Ok(Finding {
        issue,
        accepted: evidence.len(),
        injected,
        class: Susceptibility::classify(evidence.len(), injected),
        evidence,
    })
}

/// Probe ticks must not coincide with the config's scheduled events.
pub fn check_ticks(config: &GameConfig, ticks: [Tick; 4]) -> Result<(), ConfigError> {
    let scheduled = config.scheduled_ticks();
    let issues: Vec<ConfigIssue> = ticks
        .iter()
        .filter(|t| scheduled.contains(t))
        .map(|t| ConfigIssue {
            field: "probe".into(),
            message: format!("probe tick {t} collides with a scheduled tip or auction"),
        })
        .collect();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(issues))
    }
}

/// Runs the selected checks against `player` and scores them.
pub fn probe_player(
    config: &GameConfig,
    player: PlayerKind,
    checks: &BTreeSet<Issue>,
) -> Result<VulnerabilityReport, ProbeError> {
    probe_player_at(config, player, checks, DEFAULT_PROBE_TICKS)
}

pub fn probe_player_at(
    config: &GameConfig,
    player: PlayerKind,
    checks: &BTreeSet<Issue>,
    ticks: [Tick; 4],
) -> Result<VulnerabilityReport, ProbeError> {
    let mut findings = Vec::new();
    let mut violations = Vec::new();
    let mut trace = None;

    let plan = injections(checks, ticks);
    if !plan.is_empty() {
        check_ticks(config, ticks)?;
        let options = RunOptions {
            extras: vec![ExtraAgent {
                id: AgentId::local(ROGUE),
                behavior: Box::new(Rogue::new(plan.clone())),
                forger: true,
            }],
            ..RunOptions::default()
        };
        let result = run_game(config, player, options)?;
        for issue in [Issue::Sender, Issue::Progress] {
            let mine: Vec<&Injection> = plan.iter().filter(|i| i.issue == issue).collect();
            if mine.is_empty() {
                continue;
            }
            let evidence: Vec<String> = mine
                .iter()
                .filter_map(|i| accepted_by(&result, i))
                .collect();
            findings.push(Finding {
                issue,
                accepted: evidence.len(),
                injected: mine.len(),
                class: Susceptibility::classify(evidence.len(), mine.len()),
                evidence,
            });
        }
        violations = engine_violations(&result, &plan);
        trace = Some(result.trace);
    }
    for issue in [Issue::Name, Issue::Address] {
        if checks.contains(&issue) {
            findings.push(variant_finding(config, player, issue)?);
        }
    }

    let mut report = VulnerabilityReport {
        player,
        findings,
        engine_violations: violations,
        trace: None,
    };
    if let Some(mut t) = trace {
        let tick = t.records().last().map_or(0, |r| r.tick);
        t.extend(report_records(&report, tick));
        report.trace = Some(t);
    }
    Ok(report)
}

/// `GAME PROBE` records for a report, stamped at `tick`.
pub fn report_records(report: &VulnerabilityReport, tick: Tick) -> Vec<TraceRecord> {
    report
        .findings
        .iter()
        .map(|f| {
            TraceRecord::game(
                tick,
                [
                    "PROBE".to_string(),
                    f.issue.to_string(),
                    format!("{}/{}", f.accepted, f.injected),
                    f.class.token().to_string(),
                ],
            )
        })
        .collect()
}

/// Human-readable report: a header, then one line per check (with its
/// evidence indented beneath it).
pub fn explain_report(report: &VulnerabilityReport) -> String {
    let mut out = format!("probe report for {} player\n", report.player);
    for f in &report.findings {
        out.push_str(&format!(
            "{}: {} ({}/{})\n",
            f.issue, f.class, f.accepted, f.injected
        ));
        for e in &f.evidence {
            out.push_str(&format!("    {e}\n"));
        }
    }
    for v in &report.engine_violations {
        out.push_str(&format!("engine violation: {v}\n"));
    }
    out
}

/// Parses the `PROBE` records back out of a trace line, for tools that
/// only have the trace.
pub fn parse_probe_record(r: &TraceRecord) -> Option<(Issue, usize, usize)> {
    if r.kind != TraceKind::Game
        || r.fields.first().map(String::as_str) != Some("PROBE")
        || r.fields.len() != 4
    {
        return None;
    }
    let issue = r.fields[1].parse().ok()?;
    let (a, n) = r.fields[2].split_once('/')?;
    Some((issue, a.parse().ok()?, n.parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rubric() {
        assert_eq!(Susceptibility::classify(0, 2), Susceptibility::Not);
        assert_eq!(Susceptibility::classify(1, 2), Susceptibility::Somewhat);
        assert_eq!(Susceptibility::classify(2, 2), Susceptibility::Totally);
        assert_eq!(Susceptibility::classify(0, 0), Susceptibility::Not);
    }

    #[test]
    fn check_lists() {
        let all = parse_checks("sender,progress,name,address").unwrap();
        assert_eq!(all.len(), 4);
        assert!(parse_checks("sender,bogus").is_err());
        assert!(parse_checks("").unwrap().is_empty());
    }

    #[test]
    fn empty_report_is_header_only() {
        let report = VulnerabilityReport {
            player: PlayerKind::Reference,
            findings: Vec::new(),
            engine_violations: Vec::new(),
            trace: None,
        };
        assert_eq!(explain_report(&report).lines().count(), 1);
    }
}
