//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use colloquy::game::{run_game, GameConfig, GameResult, PlayerKind, RunOptions};
use colloquy::runtime::{Tick, Trace, TraceKind};

pub fn game_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("games")
        .join(name)
}

pub fn load(name: &str) -> GameConfig {
    GameConfig::load(game_path(name)).expect("bundled config loads")
}

pub const BUNDLED_GAMES: [&str; 2] = ["default.game", "series.game"];

pub fn run(name: &str, player: PlayerKind) -> GameResult {
    run_game(&load(name), player, RunOptions::default()).expect("bundled game runs")
}

/// `GAME` records of `trace` whose first field is `kind`, with their ticks.
pub fn game_records<'a>(trace: &'a Trace, kind: &str) -> Vec<(Tick, &'a [String])> {
    trace
        .records()
        .iter()
        .filter(|r| r.kind == TraceKind::Game && r.fields[0] == kind)
        .map(|r| (r.tick, &r.fields[1..]))
        .collect()
}

/// Every violation of the market rules: stock prices must rise strictly
/// from one PRICE record to the next, property values must never fall.
pub fn price_violations(trace: &Trace, stocks: &[String]) -> Vec<String> {
    let mut last: BTreeMap<&str, i64> = BTreeMap::new();
    let mut out = Vec::new();
    for (tick, f) in game_records(trace, "PRICE") {
        let v: i64 = f[1].parse().expect("integer price");
        if let Some(prev) = last.insert(&f[0], v) {
            let is_stock = stocks.iter().any(|s| *s == f[0]);
            let ok = if is_stock { v > prev } else { v >= prev };
            if !ok {
                out.push(format!("tick {tick}: {} went {prev} -> {v}", f[0]));
            }
        }
    }
    out
}

/// First completion tick of the named game protocol, from `DONE` records.
pub fn done_tick(trace: &Trace, name: &str) -> Option<Tick> {
    let id = format!("trading/{name}@1.0");
    game_records(trace, "DONE")
        .into_iter()
        .find(|(_, f)| f[0] == id && f[1] == "player")
        .map(|(t, _)| t)
}

/// Tick of the first sell whose unit price beats the unit price of the
/// buy before it, from `LEDGER` reasons.
pub fn first_profitable_sell(trace: &Trace) -> Option<Tick> {
    let mut bought: BTreeMap<String, (i64, i64)> = BTreeMap::new();
    for (tick, f) in game_records(trace, "LEDGER") {
        if f[0] != "player" {
            continue;
        }
        let reason = colloquy::term::parse_term(&f[4]).expect("canonical reason");
        let args: Vec<i64> = reason.args().iter().filter_map(|a| a.as_int()).collect();
        let stock = reason
            .args()
            .first()
            .and_then(|a| a.as_const())
            .unwrap_or_default()
            .to_string();
        match reason.functor() {
            Some("buy") => {
                bought.insert(stock, (args[0], args[1]));
            }
            Some("sell") => {
                if let Some((q, t)) = bought.get(&stock) {
                    // Compare unit prices without division.
                    if args[1] * q > t * args[0] {
                        return Some(tick);
                    }
                }
            }
            _ => {}
        }
    }
    None
}

/// `(open, first buy, first profitable sell, auction win, bidder sale)`.
pub fn chain(trace: &Trace) -> [Option<Tick>; 5] {
    [
        done_tick(trace, "open"),
        done_tick(trace, "broker-buy"),
        first_profitable_sell(trace),
        done_tick(trace, "auction-subscribe"),
        done_tick(trace, "bidder-sell"),
    ]
}

pub fn chain_holds(c: &[Option<Tick>; 5]) -> bool {
    match c {
        [Some(a), Some(b), Some(s), Some(w), Some(p)] => a < b && b <= s && s < w && w < p,
        _ => false,
    }
}

/// Lengths of the player's advanced events on the guru subscription's
/// `subscribed` state, after the subscribe/agree prefix.
pub fn guru_loop_lengths(trace: &Trace) -> Vec<usize> {
    let Some(cid) = trace.records().iter().find_map(|r| {
        (r.kind == TraceKind::Evt
            && r.fields[0] == "player"
            && r.fields[1] == "started"
            && r.fields[5] == "trading/guru-subscribe@1.0")
            .then(|| r.fields[2].clone())
    }) else {
        return Vec::new();
    };
    trace
        .records()
        .iter()
        .filter(|r| {
            r.kind == TraceKind::Evt
                && r.fields[0] == "player"
                && r.fields[1] == "advanced"
                && r.fields[2] == cid
                && r.fields[3] == "subscribed"
        })
        .map(|r| r.fields[4].parse().expect("length"))
        .skip(1)
        .collect()
}
