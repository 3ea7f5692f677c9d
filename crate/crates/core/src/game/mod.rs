//! The asset-trading game: five kinds of core agent, a market that only
//! goes up, and a player who has to chain ten protocols together to get
//! rich.
//!
//! [`run_game`] wires everything onto one [`Platform`], runs it to
//! quiescence or `max_ticks`, and returns the trace plus the score.

pub mod agents;
pub mod config;
pub mod player;
pub mod score;
pub mod state;

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;
use std::sync::Arc;

use thiserror::Error;

use crate::agent::EngineHandle;
use crate::conversation::ConversationManager;
use crate::protocol::ProtocolId;
use crate::repository::Repository;
use crate::runtime::{
    AgentId, Behavior, DrawRecord, Platform, PlatformError, RunReport, Tick, Trace, TraceRecord,
};

pub use agents::{Auctioneer, Banker, Bidder, Broker, Guru, Market};
pub use config::{ConfigError, ConfigIssue, GameConfig, PriceSeries, ScoreMode, TipKind};
pub use player::{Contacts, PlayerKind, Strategy};
pub use score::{score_trace, Score, ScoreError};
pub use state::{price_step, property_step, GameState};

/// Game state shared by the core agents of one run.
pub type Shared = Rc<RefCell<GameState>>;

pub const NAMESPACE: &str = "trading";
pub const VERSION: &str = "1.0";

/// The ten game protocols, in task order.
pub const PROTOCOLS: [&str; 10] = [
    "open",
    "enquiry",
    "listing",
    "price",
    "portfolio",
    "broker-buy",
    "broker-sell",
    "guru-subscribe",
    "auction-subscribe",
    "bidder-sell",
];

/// The player's registered name.
pub const PLAYER: &str = "player";

/// Ticks the scripted players hold a stock before selling.
pub const DEFAULT_HOLD_TICKS: Tick = 10;

/// Id of one of the bundled game protocols.
pub fn protocol(name: &str) -> ProtocolId {
    ProtocolId::new(NAMESPACE, name, VERSION).expect("bundled protocol names are valid")
}

/// A core agent the probe can move to a different name or address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Banker,
    Broker,
    Guru,
    Auctioneer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Banker => "banker",
            Role::Broker => "broker",
            Role::Guru => "guru",
            Role::Auctioneer => "auctioneer",
        }
    }
}

/// An extra agent to register after the player.
pub struct ExtraAgent {
    pub id: AgentId,
    pub behavior: Box<dyn Behavior>,
    pub forger: bool,
}

#[derive(Default)]
pub struct RunOptions {
    /// Overrides the config's seed.
    pub seed: Option<u64>,
    /// Take random draws from a recorded run instead of the seed.
    pub replay: Option<Vec<DrawRecord>>,
    /// Defaults to [`Repository::bundled`].
    pub repository: Option<Arc<Repository>>,
    /// Register one core agent under this identity instead of its usual one.
    /// The player's contacts are updated to match.
    pub variant: Option<(Role, AgentId)>,
    pub strategy: Option<Strategy>,
    pub extras: Vec<ExtraAgent>,
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error("protocol {0} is missing from the repository")]
    MissingProtocol(ProtocolId),
}

impl GameError {
    pub fn is_replay_divergence(&self) -> bool {
        matches!(self, GameError::Platform(PlatformError::Replay(_)))
    }
}

pub struct GameResult {
    pub player: PlayerKind,
    /// Final capital under the config's score mode; 0 without an account.
    pub capital: i64,
    pub no_account: bool,
    /// First completion tick of each game protocol, in [`PROTOCOLS`] order.
    pub completions: Vec<(ProtocolId, Option<Tick>)>,
    pub report: RunReport,
    pub trace: Trace,
    pub state: GameState,
    /// The player's conversation manager, for engine-backed players.
    pub engine: Option<EngineHandle>,
}

impl GameResult {
    pub fn completed(&self) -> usize {
        self.completions.iter().filter(|(_, t)| t.is_some()).count()
    }

    pub fn completion(&self, name: &str) -> Option<Tick> {
        let id = protocol(name);
        self.completions
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, t)| *t)
    }

    pub fn trace_hash(&self) -> &str {
        &self.report.trace_hash
    }

    /// `key<TAB>value` summary lines.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push('\t');
            out.push_str(&v);
            out.push('\n');
        };
        line("player", self.player.to_string());
        line("ticks", self.report.ticks.to_string());
        line("quiescent", self.report.quiescent.to_string());
        line("messages", self.report.messages.to_string());
        line(
            "protocols",
            format!("{}/{}", self.completed(), PROTOCOLS.len()),
        );
        for (id, t) in &self.completions {
            let v = t.map_or_else(|| "-".to_string(), |t| t.to_string());
            line(&format!("done:{}", id.name), v);
        }
        if self.no_account {
            line("capital", "0".to_string());
            line("status", "no_account".to_string());
        } else {
            line("capital", self.capital.to_string());
            line("status", "ok".to_string());
        }
        for (agent, reason) in &self.report.suspended {
            line("suspended", format!("{agent}: {reason}"));
        }
        line("trace_hash", self.report.trace_hash.clone());
        out
    }
}

/// Runs one game with `player` against the core agents described by
/// `config`.
pub fn run_game(
    config: &GameConfig,
    player: PlayerKind,
    options: RunOptions,
) -> Result<GameResult, GameError> {
    config.validate()?;
    let repository = options
        .repository
        .unwrap_or_else(|| Arc::new(Repository::bundled()));
    for name in PROTOCOLS {
        let id = protocol(name);
        if repository.get(&id).is_err() {
            return Err(GameError::MissingProtocol(id));
        }
    }

    let seed = options.seed.unwrap_or(config.seed);
    let mut platform = match options.replay {
        Some(draws) => Platform::replaying(draws),
        None => Platform::new(seed),
    };
    let state: Shared = Rc::new(RefCell::new(GameState::new(config)));

    let bidder_names: Vec<String> = config.bidders.iter().map(|b| b.name.clone()).collect();
    let mut contacts = Contacts::standard(&bidder_names);
    if let Some((role, id)) = &options.variant {
        let slot = match role {
            Role::Banker => &mut contacts.banker,
            Role::Broker => &mut contacts.broker,
            Role::Guru => &mut contacts.guru,
            Role::Auctioneer => &mut contacts.auctioneer,
        };
        *slot = id.clone();
    }
    let engine =
        |id: &AgentId| EngineHandle::new(ConversationManager::new(id.clone(), repository.clone()));

    platform.trace_mut().push(TraceRecord::game(
        0,
        [
            "CONFIG".to_string(),
            player.to_string(),
            config.score_mode.as_str().to_string(),
            config.initial_capital.to_string(),
        ],
    ));
    for r in state.borrow().price_records() {
        platform.trace_mut().push(TraceRecord::game(0, r));
    }

    let series = config.series.clone();
    platform.register(
        AgentId::local("market"),
        Box::new(Market::new(state.clone(), config.stocks.clone(), series)),
    )?;
    let banker = contacts.banker.clone();
    platform.register(
        banker.clone(),
        Box::new(Banker::new(engine(&banker), state.clone())),
    )?;
    let broker = contacts.broker.clone();
    platform.register(
        broker.clone(),
        Box::new(Broker::new(engine(&broker), state.clone())),
    )?;
    let guru = contacts.guru.clone();
    platform.register(
        guru.clone(),
        Box::new(Guru::new(engine(&guru), state.clone(), config.tips.clone())),
    )?;
    let auctioneer = contacts.auctioneer.clone();
    platform.register(
        auctioneer.clone(),
        Box::new(Auctioneer::new(
            engine(&auctioneer),
            state.clone(),
            config.auctions.clone(),
            config.round_ticks,
            config.auction_increment,
        )),
    )?;
    for spec in &config.bidders {
        let id = AgentId::local(spec.name.clone());
        platform.register(
            id.clone(),
            Box::new(Bidder::new(engine(&id), state.clone(), spec.clone())),
        )?;
    }

    let strategy = options.strategy.unwrap_or(Strategy {
        hold_ticks: DEFAULT_HOLD_TICKS,
        target: config.min_property_price,
    });
    let (behavior, player_engine) = player.build(contacts, repository.clone(), strategy);
    platform.register(AgentId::local(PLAYER), behavior)?;
    for extra in options.extras {
        let name = extra.id.name.clone();
        platform.register(extra.id, extra.behavior)?;
        if extra.forger {
            platform.grant_forgery(&name)?;
        }
    }

    let mut report = platform.run(config.max_ticks)?;
    let final_state = state.borrow().clone();
    let capital = final_state.capital(PLAYER, config.score_mode);
    let tick = platform.tick();
    let result_fields = match capital {
        Some(c) => [
            "RESULT".to_string(),
            PLAYER.to_string(),
            c.to_string(),
            "ok".to_string(),
        ],
        None => [
            "RESULT".to_string(),
            PLAYER.to_string(),
            "0".to_string(),
            "no_account".to_string(),
        ],
    };
    platform
        .trace_mut()
        .push(TraceRecord::game(tick, result_fields));
    let trace = platform.into_trace();
    report.trace_hash = trace.hash_hex();

    let by_protocol: BTreeMap<&ProtocolId, Tick> = final_state
        .completions
        .iter()
        .filter(|((p, _), _)| p == PLAYER)
        .map(|((_, id), t)| (id, *t))
        .collect();
    let completions = PROTOCOLS
        .iter()
        .map(|n| {
            let id = protocol(n);
            let t = by_protocol.get(&id).copied();
            (id, t)
        })
        .collect();

    Ok(GameResult {
        player,
        capital: capital.unwrap_or(0),
        no_account: capital.is_none(),
        completions,
        report,
        trace,
        state: final_state,
        engine: player_engine,
    })
}
