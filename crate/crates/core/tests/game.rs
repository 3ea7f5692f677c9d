mod common;

use std::collections::BTreeMap;

use colloquy::game::{run_game, score_trace, PlayerKind, RunOptions};
use colloquy::inspect::conversations;
use colloquy::runtime::{DrawRecord, Trace};
use colloquy::term::parse_term;

use common::*;

#[test]
fn golden_trace_reproduces() {
    let golden = include_str!("golden/default-reference.trace");
    let r = run("default.game", PlayerKind::Reference);
    assert_eq!(r.trace.to_text(), golden);
    assert_eq!(r.trace_hash(), "5f3fd48159896d3c");
    assert_eq!(Trace::parse(golden).unwrap().hash_hex(), r.trace_hash());
}

#[test]
fn golden_trace_scores_and_chains() {
    let trace = Trace::parse(include_str!("golden/default-reference.trace")).unwrap();
    let score = score_trace(&trace).unwrap();
    assert_eq!(score.capital, 28263);
    assert!(chain_holds(&chain(&trace)), "{:?}", chain(&trace));
}

#[test]
fn seed_changes_the_run() {
    let config = load("default.game");
    let a = run_game(
        &config,
        PlayerKind::Reference,
        RunOptions {
            seed: Some(1),
            ..Default::default()
        },
    )
    .unwrap();
    let b = run_game(
        &config,
        PlayerKind::Reference,
        RunOptions {
            seed: Some(2),
            ..Default::default()
        },
    )
    .unwrap();
    assert_ne!(a.trace_hash(), b.trace_hash());
    assert_eq!(b.completed(), 10);
}

#[test]
fn replay_reproduces_and_tampering_diverges() {
    let config = load("default.game");
    let first = run("default.game", PlayerKind::Reference);
    let draws = first.trace.draws();
    let again = run_game(
        &config,
        PlayerKind::Reference,
        RunOptions {
            seed: Some(99),
            replay: Some(draws.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(again.trace.to_text(), first.trace.to_text());

    let mut tampered: Vec<DrawRecord> = draws;
    tampered[3].stream.push('x');
    let Err(err) = run_game(
        &config,
        PlayerKind::Reference,
        RunOptions {
            replay: Some(tampered),
            ..Default::default()
        },
    ) else {
        panic!("tampered replay ran to the end");
    };
    assert!(err.is_replay_divergence(), "{err}");
}

#[test]
fn every_run_keeps_market_and_ledger_rules() {
    for game in BUNDLED_GAMES {
        let config = load(game);
        let stocks: Vec<String> = config.stocks.iter().map(|s| s.symbol.clone()).collect();
        for player in PlayerKind::ALL {
            let r = run(game, player);
            assert!(
                price_violations(&r.trace, &stocks).is_empty(),
                "{game}/{player}"
            );
            let score = score_trace(&r.trace).unwrap_or_else(|e| panic!("{game}/{player}: {e}"));
            assert_eq!(score.capital, r.capital, "{game}/{player}");
            assert_eq!(score.no_account, r.no_account, "{game}/{player}");
            assert!(r.report.ticks <= config.max_ticks);
        }
    }
}

#[test]
fn activity_pays() {
    for game in BUNDLED_GAMES {
        let config = load(game);
        let idle = run(game, PlayerKind::Idle);
        assert!(idle.no_account);
        assert_eq!(idle.completed(), 0);
        for player in [
            PlayerKind::Reference,
            PlayerKind::Naive,
            PlayerKind::Partial,
        ] {
            let r = run(game, player);
            assert!(
                r.capital > config.initial_capital,
                "{game}/{player}: {}",
                r.capital
            );
            assert!(r.capital > idle.capital);
        }
    }
}

#[test]
fn reference_completes_everything_in_both_games() {
    for game in BUNDLED_GAMES {
        let r = run(game, PlayerKind::Reference);
        assert_eq!(r.completed(), 10, "{game}: {}", r.summary());
        assert!(
            chain_holds(&chain(&r.trace)),
            "{game}: {:?}",
            chain(&r.trace)
        );
    }
}

#[test]
fn holdings_follow_the_trades() {
    for game in BUNDLED_GAMES {
        for player in [
            PlayerKind::Reference,
            PlayerKind::Naive,
            PlayerKind::Partial,
        ] {
            let r = run(game, player);
            let mut net: BTreeMap<String, i64> = BTreeMap::new();
            for (_, f) in game_records(&r.trace, "LEDGER") {
                let reason = parse_term(&f[4]).unwrap();
                let sign = match reason.functor() {
                    Some("buy") => 1,
                    Some("sell") => -1,
                    _ => continue,
                };
                let stock = reason.args()[0].as_const().unwrap().to_string();
                *net.entry(stock).or_default() += sign * reason.args()[1].as_int().unwrap();
            }
            let mut owned: BTreeMap<String, i64> = BTreeMap::new();
            for (_, f) in game_records(&r.trace, "OWN") {
                if f[0] == "player" {
                    owned.insert(f[1].clone(), f[2].parse().unwrap());
                }
            }
            for (stock, q) in &net {
                assert_eq!(
                    owned.get(stock).copied().unwrap_or(0),
                    *q,
                    "{game}/{player} {stock}"
                );
            }
        }
    }
}

#[test]
fn one_bidder_pays_the_rest_are_rejected() {
    let r = run("default.game", PlayerKind::Reference);
    let mut statuses: Vec<String> = conversations(&r.trace)
        .unwrap()
        .into_iter()
        .filter(|c| c.owner == "player" && c.protocol.name == "bidder-sell")
        .map(|c| c.state)
        .collect();
    statuses.sort();
    assert_eq!(statuses, ["done", "rejected", "rejected"]);
    let sales = game_records(&r.trace, "LEDGER")
        .into_iter()
        .filter(|(_, f)| f[0] == "player" && f[4].starts_with("sale("))
        .count();
    assert_eq!(sales, 1);
}

#[test]
fn guru_loop_grows_by_one_per_tip() {
    for game in BUNDLED_GAMES {
        let config = load(game);
        let r = run(game, PlayerKind::Reference);
        let lengths = guru_loop_lengths(&r.trace);
        let expected: Vec<usize> = (0..config.tips.len()).map(|i| 3 + i).collect();
        assert_eq!(lengths, expected, "{game}");
    }
}

#[test]
fn scripted_players_miss_one_protocol() {
    for player in [PlayerKind::Naive, PlayerKind::Partial] {
        let r = run("default.game", player);
        assert_eq!(r.completed(), 9, "{}", r.summary());
    }
}
