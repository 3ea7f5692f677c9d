//! Shared economic state of one game and the trace records it produces.
//!
//! Every mutation goes through a method that also appends the matching
//! `GAME` record, so the trace alone is enough to recompute the score.

use std::collections::BTreeMap;

use super::config::{GameConfig, ScoreMode};
use crate::protocol::ProtocolId;
use crate::runtime::{AgentContext, Tick};
use crate::term::Term;

/// One tick of stock movement: prices only ever go up.
pub fn price_step(price: i64, draw: i64) -> i64 {
    debug_assert!(draw >= 1);
    price.saturating_add(draw)
}

/// One tick of property growth: `value + ceil(value * num / den)`.
pub fn property_step(value: i64, num: i64, den: i64) -> i64 {
    let v = i128::from(value);
    let inc = (v * i128::from(num) + i128::from(den) - 1) / i128::from(den);
    i64::try_from(v + inc).unwrap_or(i64::MAX)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub id: String,
    pub balance: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Property {
    pub owner: Option<String>,
    pub value: i64,
    pub growth: (i64, i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub tick: Tick,
    pub owner: String,
    pub account: String,
    pub delta: i64,
    pub balance: i64,
    pub reason: Term,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsufficientFunds;

#[derive(Debug, Clone)]
pub struct GameState {
    pub initial_capital: i64,
    pub min_property_price: i64,
    /// Stock symbols in config order.
    pub stocks: Vec<String>,
    pub prices: BTreeMap<String, i64>,
    /// Property names in config order.
    pub property_names: Vec<String>,
    pub properties: BTreeMap<String, Property>,
    pub accounts: BTreeMap<String, Account>,
    pub holdings: BTreeMap<String, BTreeMap<String, i64>>,
    pub ledger: Vec<LedgerEntry>,
    /// First completion tick per (player, protocol).
    pub completions: BTreeMap<(String, ProtocolId), Tick>,
    next_account: u32,
}

impl GameState {
    pub fn new(config: &GameConfig) -> Self {
        GameState {
            initial_capital: config.initial_capital,
            min_property_price: config.min_property_price,
            stocks: config.stocks.iter().map(|s| s.symbol.clone()).collect(),
            prices: config
                .stocks
                .iter()
                .map(|s| (s.symbol.clone(), s.price))
                .collect(),
            property_names: config.properties.iter().map(|p| p.name.clone()).collect(),
            properties: config
                .properties
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        Property {
                            owner: None,
                            value: p.value,
                            growth: (p.growth[0], p.growth[1]),
                        },
                    )
                })
                .collect(),
            accounts: BTreeMap::new(),
            holdings: BTreeMap::new(),
            ledger: Vec::new(),
            completions: BTreeMap::new(),
            next_account: 1,
        }
    }

    /// `PRICE` records for every stock and property, in config order.
    pub fn price_records(&self) -> Vec<[String; 3]> {
        let stocks = self
            .stocks
            .iter()
            .map(|s| ["PRICE".into(), s.clone(), self.prices[s].to_string()]);
        let props = self.property_names.iter().map(|p| {
            [
                "PRICE".into(),
                p.clone(),
                self.properties[p].value.to_string(),
            ]
        });
        stocks.chain(props).collect()
    }

    pub fn set_price(&mut self, symbol: &str, price: i64) {
        self.prices.insert(symbol.to_string(), price);
    }

    pub fn grow_properties(&mut self) {
        for p in self.properties.values_mut() {
            p.value = property_step(p.value, p.growth.0, p.growth.1);
        }
    }

    pub fn account(&self, owner: &str) -> Option<&Account> {
        self.accounts.get(owner)
    }

    pub fn balance(&self, owner: &str) -> Option<i64> {
        self.accounts.get(owner).map(|a| a.balance)
    }

    /// Opens an account funded with the initial capital. `None` if the
    /// owner already has one.
    pub fn open_account(
        &mut self,
        ctx: &mut AgentContext<'_>,
        owner: &str,
    ) -> Option<(String, i64)> {
        if self.accounts.contains_key(owner) {
            return None;
        }
        let id = format!("acc{}", self.next_account);
        self.next_account += 1;
        self.accounts.insert(
            owner.to_string(),
            Account {
                id: id.clone(),
                balance: 0,
            },
        );
        self.post(ctx, owner, self.initial_capital, Term::constant("open"))
            .expect("opening grant is positive");
        Some((id, self.initial_capital))
    }

    /// Applies `delta` to `owner`'s account. Refused, with no change, if
    /// the account is missing or the balance would go negative.
    pub fn post(
        &mut self,
        ctx: &mut AgentContext<'_>,
        owner: &str,
        delta: i64,
        reason: Term,
    ) -> Result<i64, InsufficientFunds> {
        let acct = self.accounts.get_mut(owner).ok_or(InsufficientFunds)?;
        let balance = acct.balance.checked_add(delta).ok_or(InsufficientFunds)?;
        if balance < 0 {
            return Err(InsufficientFunds);
        }
        acct.balance = balance;
        let entry = LedgerEntry {
            tick: ctx.tick(),
            owner: owner.to_string(),
            account: acct.id.clone(),
            delta,
            balance,
            reason,
        };
        ctx.record_game([
            "LEDGER".to_string(),
            entry.owner.clone(),
            entry.account.clone(),
            entry.delta.to_string(),
            entry.balance.to_string(),
            entry.reason.to_string(),
        ]);
        self.ledger.push(entry);
        Ok(balance)
    }

    pub fn holding(&self, owner: &str, symbol: &str) -> i64 {
        self.holdings
            .get(owner)
            .and_then(|h| h.get(symbol))
            .copied()
            .unwrap_or(0)
    }

    pub fn set_holding(&mut self, ctx: &mut AgentContext<'_>, owner: &str, symbol: &str, qty: i64) {
        self.holdings
            .entry(owner.to_string())
            .or_default()
            .insert(symbol.to_string(), qty);
        ctx.record_game(["OWN", owner, symbol, &qty.to_string()]);
    }

    /// Non-zero stock holdings of `owner`, in config order.
    pub fn portfolio(&self, owner: &str) -> Vec<(String, i64)> {
        self.stocks
            .iter()
            .map(|s| (s.clone(), self.holding(owner, s)))
            .filter(|(_, q)| *q != 0)
            .collect()
    }

    pub fn transfer_property(&mut self, ctx: &mut AgentContext<'_>, name: &str, to: &str) {
        let Some(p) = self.properties.get_mut(name) else {
            return;
        };
        if let Some(old) = p.owner.replace(to.to_string()) {
            ctx.record_game(["OWN", old.as_str(), name, "0"]);
        }
        ctx.record_game(["OWN", to, name, "1"]);
    }

    pub fn owner_of(&self, property: &str) -> Option<&str> {
        self.properties.get(property)?.owner.as_deref()
    }

    /// Marks a protocol as completed by `player`.
    pub fn complete(&mut self, ctx: &mut AgentContext<'_>, protocol: &ProtocolId, player: &str) {
        self.completions
            .entry((player.to_string(), protocol.clone()))
            .or_insert(ctx.tick());
        ctx.record_game(["DONE".to_string(), protocol.to_string(), player.to_string()]);
    }

    /// Final capital, or `None` if `player` never opened an account.
    pub fn capital(&self, player: &str, mode: ScoreMode) -> Option<i64> {
        let balance = self.balance(player)?;
        if mode == ScoreMode::BankOnly {
            return Some(balance);
        }
        let stocks: i64 = self
            .portfolio(player)
            .iter()
            .map(|(s, q)| q * self.prices[s])
            .sum();
        let props: i64 = self
            .properties
            .values()
            .filter(|p| p.owner.as_deref() == Some(player))
            .map(|p| p.value)
            .sum();
        Some(balance + stocks + props)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps() {
        assert_eq!(price_step(100, 3), 103);
        assert_eq!(property_step(20000, 5, 100), 21000);
        assert_eq!(property_step(1, 1, 1000), 2);
    }

    #[test]
    fn ten_ticks_of_growth_match_float_oracle() {
        // Independent oracle: floating-point ceil, exact at these magnitudes.
        let mut oracle = 20000.0_f64;
        let mut v = 20000;
        for _ in 0..10 {
            oracle += (oracle * 5.0 / 100.0).ceil();
            v = property_step(v, 5, 100);
        }
        assert_eq!(v, oracle as i64);
        // Per-tick rounding compounds: one-shot ceil(20000 * 1.05^10) would be 32578.
        assert_eq!(v, 32583);
    }
}
