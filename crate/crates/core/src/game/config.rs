//! Game configuration files.
//!
//! A `.game` file is TOML. Every key is required except `price_series`
//! (path to a pre-recorded price file, relative to the config) and
//! `score_mode`. All quantities are integers.
//!
//! ```toml
//! seed = 1
//! initial_capital = 10000
//! min_property_price = 15000
//! max_ticks = 500
//! round_ticks = 5
//! auction_increment = 500
//!
//! [[stocks]]
//! symbol = "acme"
//! price = 20
//! step = [1, 5]
//!
//! [[properties]]
//! name = "villa"
//! value = 2000
//! growth = [5, 100]
//!
//! [[tips]]
//! tick = 6
//! stock = "acme"
//! kind = "rise"
//!
//! [[auctions]]
//! tick = 40
//! property = "villa"
//!
//! [[bidders]]
//! name = "bidder1"
//! factor = [90, 120]
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::runtime::Tick;
use crate::term::is_identifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    BankOnly,
    #[default]
    MarkToMarket,
}

impl ScoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::BankOnly => "bank_only",
            ScoreMode::MarkToMarket => "mark_to_market",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bank_only" => Some(ScoreMode::BankOnly),
            "mark_to_market" => Some(ScoreMode::MarkToMarket),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipKind {
    Rise,
    Avoid,
}

impl TipKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TipKind::Rise => "rise",
            TipKind::Avoid => "avoid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StockSpec {
    pub symbol: String,
    pub price: i64,
    /// Inclusive per-tick rise bounds.
    pub step: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertySpec {
    pub name: String,
    pub value: i64,
    /// Per-tick growth as numerator, denominator.
    pub growth: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TipSpec {
    pub tick: Tick,
    pub stock: String,
    pub kind: TipKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionSpec {
    pub tick: Tick,
    pub property: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidderSpec {
    pub name: String,
    /// Inclusive bounds of the offer, as a percentage of current value.
    pub factor: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub seed: u64,
    pub initial_capital: i64,
    pub min_property_price: i64,
    pub max_ticks: Tick,
    pub round_ticks: Tick,
    pub auction_increment: i64,
    #[serde(default)]
    pub price_series: Option<String>,
    #[serde(default)]
    pub score_mode: ScoreMode,
    pub stocks: Vec<StockSpec>,
    pub properties: Vec<PropertySpec>,
    pub tips: Vec<TipSpec>,
    pub auctions: Vec<AuctionSpec>,
    pub bidders: Vec<BidderSpec>,
    /// Loaded from `price_series` by [`GameConfig::load`].
    #[serde(skip)]
    pub series: Option<PriceSeries>,
}

/// One violated rule, named by the offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("invalid game config:\n  {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<ConfigIssue>),
    #[error("price series line {line}: {message}")]
    PriceSeries { line: usize, message: String },
}

/// Agent names the game reserves for itself.
pub const RESERVED_NAMES: &[&str] = &[
    "market",
    "banker",
    "broker",
    "guru",
    "auctioneer",
    "player",
    "rogue",
];

impl GameConfig {
    /// Parses and validates config text. `base` resolves a relative
    /// `price_series` path; with `None` the series is left unloaded.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config: GameConfig =
            toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        if let (Some(rel), Some(base)) = (&config.price_series, base) {
            let path = base.join(rel);
            let series = PriceSeries::load(&path)?;
            config.set_series(series)?;
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, Some(path.parent().unwrap_or(Path::new("."))))
    }

    /// Installs a pre-recorded price series, checking it against the stocks.
    pub fn set_series(&mut self, series: PriceSeries) -> Result<(), ConfigError> {
        series.check_against(self)?;
        self.series = Some(series);
        Ok(())
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |field: String, message: &str| {
            issues.push(ConfigIssue {
                field,
                message: message.to_string(),
            })
        };

        if self.initial_capital <= 0 {
            bad("initial_capital".into(), "must be positive");
        }
        if self.min_property_price <= self.initial_capital {
            bad(
                "min_property_price".into(),
                "must be greater than initial_capital",
            );
        }
        if self.max_ticks == 0 {
            bad("max_ticks".into(), "must be at least 1");
        }
        if self.round_ticks == 0 {
            bad("round_ticks".into(), "must be at least 1");
        }
        if self.auction_increment <= 0 {
            bad("auction_increment".into(), "must be positive");
        }

        let mut names: BTreeSet<&str> = BTreeSet::new();
        if self.stocks.is_empty() {
            bad("stocks".into(), "at least one stock is required");
        }
        for (i, s) in self.stocks.iter().enumerate() {
            let f = |k: &str| format!("stocks[{i}].{k}");
            if !is_identifier(&s.symbol) || !names.insert(&s.symbol) {
                bad(f("symbol"), "must be a unique identifier");
            }
            if s.price < 1 {
                bad(f("price"), "must be at least 1");
            }
            if s.step[0] < 1 {
                bad(f("step"), "lower bound must be at least 1");
            }
            if s.step[0] > s.step[1] {
                bad(f("step"), "lower bound exceeds upper bound");
            }
        }
        for (i, p) in self.properties.iter().enumerate() {
            let f = |k: &str| format!("properties[{i}].{k}");
            if !is_identifier(&p.name) || !names.insert(&p.name) {
                bad(f("name"), "must be a unique identifier");
            }
            if p.value < 1 {
                bad(f("value"), "must be at least 1");
            }
            if p.growth[0] < 1 || p.growth[1] < 1 {
                bad(f("growth"), "must be strictly positive");
            }
        }

        let best_step = self.stocks.iter().map(|s| s.step[1]).max().unwrap_or(0);
        for (i, t) in self.tips.iter().enumerate() {
            let f = |k: &str| format!("tips[{i}].{k}");
            if t.tick == 0 || t.tick > self.max_ticks {
                bad(f("tick"), "must lie in 1..=max_ticks");
            }
            match self.stocks.iter().find(|s| s.symbol == t.stock) {
                None => bad(f("stock"), "unknown stock"),
                Some(s) if t.kind == TipKind::Rise && s.step[1] != best_step => bad(
                    f("stock"),
                    "a rise tip must name a stock with the largest step upper bound",
                ),
                Some(_) => {}
            }
        }

        let mut auction_ticks = BTreeSet::new();
        for (i, a) in self.auctions.iter().enumerate() {
            let f = |k: &str| format!("auctions[{i}].{k}");
            if a.tick == 0 || a.tick > self.max_ticks {
                bad(f("tick"), "must lie in 1..=max_ticks");
            }
            if !auction_ticks.insert(a.tick) {
                bad(f("tick"), "two auctions share a tick");
            }
            if !self.properties.iter().any(|p| p.name == a.property) {
                bad(f("property"), "unknown property");
            }
        }

        let mut bidders = BTreeSet::new();
        if self.bidders.is_empty() {
            bad("bidders".into(), "at least one bidder is required");
        }
        for (i, b) in self.bidders.iter().enumerate() {
            let f = |k: &str| format!("bidders[{i}].{k}");
            if !is_identifier(&b.name)
                || RESERVED_NAMES.contains(&b.name.as_str())
                || !bidders.insert(&b.name)
            {
                bad(
                    f("name"),
                    "must be a unique identifier not used by another agent",
                );
            }
            if b.factor[0] < 1 || b.factor[0] > b.factor[1] {
                bad(f("factor"), "bounds must satisfy 1 <= lo <= hi");
            }
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    pub fn stock(&self, symbol: &str) -> Option<&StockSpec> {
        self.stocks.iter().find(|s| s.symbol == symbol)
    }

    /// Ticks at which something is scheduled (tips and auction starts).
    pub fn scheduled_ticks(&self) -> BTreeSet<Tick> {
        self.tips
            .iter()
            .map(|t| t.tick)
            .chain(self.auctions.iter().map(|a| a.tick))
            .collect()
    }
}

/// Pre-recorded stock prices: `PRICES <symbol>...` then one row per tick,
/// starting at tick 1. Once the rows run out prices are drawn as usual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceSeries {
    pub symbols: Vec<String>,
    pub rows: Vec<Vec<i64>>,
}

impl PriceSeries {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let err = |line: usize, message: &str| ConfigError::PriceSeries {
            line,
            message: message.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (n, header) = lines.next().ok_or_else(|| err(1, "empty price file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("PRICES") {
            return Err(err(n, "expected `PRICES <symbol>...` header"));
        }
        let symbols: Vec<String> = fields.map(str::to_string).collect();
        if symbols.is_empty() {
            return Err(err(n, "header names no symbols"));
        }
        let mut rows = Vec::new();
        for (n, line) in lines {
            let row: Vec<i64> = line
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| err(n, "prices must be integers")))
                .collect::<Result<_, _>>()?;
            if row.len() != symbols.len() {
                return Err(err(n, "row length does not match the header"));
            }
            rows.push(row);
        }
        Ok(PriceSeries { symbols, rows })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Same stocks as the config, and every price strictly above the
    /// previous tick's.
    fn check_against(&self, config: &GameConfig) -> Result<(), ConfigError> {
        let mut want: Vec<&str> = config.stocks.iter().map(|s| s.symbol.as_str()).collect();
        let mut have: Vec<&str> = self.symbols.iter().map(String::as_str).collect();
        want.sort_unstable();
        have.sort_unstable();
        if want != have {
            return Err(ConfigError::PriceSeries {
                line: 1,
                message: format!("symbols {have:?} do not match the config's {want:?}"),
            });
        }
        for (col, sym) in self.symbols.iter().enumerate() {
            let mut prev = config.stock(sym).map(|s| s.price).unwrap_or_default();
            for (r, row) in self.rows.iter().enumerate() {
                if row[col] <= prev {
                    return Err(ConfigError::PriceSeries {
                        line: r + 2,
                        message: format!("{sym} does not rise ({prev} -> {})", row[col]),
                    });
                }
                prev = row[col];
            }
        }
        Ok(())
    }

    /// Price of `symbol` at `tick`, if the series covers it.
    pub fn price(&self, symbol: &str, tick: Tick) -> Option<i64> {
        let col = self.symbols.iter().position(|s| s == symbol)?;
        let row = self.rows.get(usize::try_from(tick).ok()?.checked_sub(1)?)?;
        Some(row[col])
    }
}
