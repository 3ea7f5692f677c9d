//! Core agents driven by a raw scripted client, without any player logic.
//! The market is left out so prices stay where each test puts them.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use colloquy::agent::EngineHandle;
use colloquy::conversation::ConversationManager;
use colloquy::game::config::{AuctionSpec, BidderSpec, TipSpec};
use colloquy::game::state::Account;
use colloquy::game::{
    Auctioneer, Banker, Bidder, Broker, GameConfig, GameState, Guru, Shared, TipKind,
};
use colloquy::repository::Repository;
use colloquy::runtime::{
    AgentContext, AgentId, Behavior, BehaviorError, Message, Platform, Tick, Trace, TraceKind,
};
use colloquy::term::parse_term;

const CLIENT: &str = "client";

/// Sends each planned message at its tick and ignores everything it gets.
struct Script {
    plan: Vec<(Tick, &'static str, &'static str, &'static str)>,
    now: Tick,
}

impl Behavior for Script {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        self.now = ctx.tick();
        ctx.take_inbox();
        for (_, perf, to, content) in self.plan.iter().filter(|p| p.0 == self.now) {
            let content = parse_term(content).expect("planned content parses");
            ctx.send(Message::new(
                *perf,
                ctx.me().clone(),
                AgentId::local(*to),
                content,
            ));
        }
        Ok(())
    }

    fn is_idle(&self) -> bool {
        self.plan.iter().all(|p| p.0 <= self.now)
    }
}

struct World {
    config: GameConfig,
    state: Shared,
}

impl World {
    fn new() -> Self {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/games/default.game");
        let mut config = GameConfig::load(path).expect("default config");
        config.tips.clear();
        config.auctions.clear();
        let state = Rc::new(RefCell::new(GameState::new(&config)));
        World { config, state }
    }

    fn account(&self, balance: i64) {
        let account = Account {
            id: "acct9".into(),
            balance,
        };
        self.state
            .borrow_mut()
            .accounts
            .insert(CLIENT.into(), account);
    }

    fn set_price(&self, symbol: &str, price: i64) {
        self.state.borrow_mut().set_price(symbol, price);
    }

    fn run(&self, plan: Vec<(Tick, &'static str, &'static str, &'static str)>) -> Trace {
        let repo = Arc::new(Repository::bundled());
        let engine = |name: &str| {
            EngineHandle::new(ConversationManager::new(AgentId::local(name), repo.clone()))
        };
        let st = || self.state.clone();
        let c = &self.config;
        let mut p = Platform::new(c.seed);
        p.register(
            AgentId::local("banker"),
            Box::new(Banker::new(engine("banker"), st())),
        )
        .unwrap();
        p.register(
            AgentId::local("broker"),
            Box::new(Broker::new(engine("broker"), st())),
        )
        .unwrap();
        p.register(
            AgentId::local("guru"),
            Box::new(Guru::new(engine("guru"), st(), c.tips.clone())),
        )
        .unwrap();
        let auctioneer = Auctioneer::new(
            engine("auctioneer"),
            st(),
            c.auctions.clone(),
            c.round_ticks,
            c.auction_increment,
        );
        p.register(AgentId::local("auctioneer"), Box::new(auctioneer))
            .unwrap();
        for b in &c.bidders {
            p.register(
                AgentId::local(b.name.clone()),
                Box::new(Bidder::new(engine(&b.name), st(), b.clone())),
            )
            .unwrap();
        }
        p.register(AgentId::local(CLIENT), Box::new(Script { plan, now: 0 }))
            .unwrap();
        p.run(200).expect("run completes");
        p.into_trace()
    }

    fn balance(&self) -> Option<i64> {
        self.state.borrow().balance(CLIENT)
    }
}

/// `(send tick, performative, sender, content)` of every message to the client.
fn received(trace: &Trace) -> Vec<(Tick, String, String, String)> {
    trace
        .records()
        .iter()
        .filter_map(|r| r.message().map(|(m, _)| (r.tick, m)))
        .filter(|(_, m)| m.receiver.name == CLIENT)
        .map(|(t, m)| (t, m.performative, m.sender.name, m.content.to_string()))
        .collect()
}

fn replies(trace: &Trace) -> Vec<String> {
    received(trace)
        .into_iter()
        .map(|(_, perf, _, content)| format!("{perf} {content}"))
        .collect()
}

fn game(trace: &Trace, kind: &str) -> Vec<Vec<String>> {
    trace
        .records()
        .iter()
        .filter(|r| r.kind == TraceKind::Game && r.fields[0] == kind)
        .map(|r| r.fields[1..].to_vec())
        .collect()
}

#[test]
fn banker_opens_once_then_refuses() {
    let w = World::new();
    let t = w.run(vec![
        (1, "request", "banker", "openAccount"),
        (3, "request", "banker", "openAccount"),
    ]);
    let r = received(&t);
    assert_eq!(r.len(), 2, "{r:?}");
    assert_eq!((r[0].0, r[0].1.as_str()), (2, "inform"));
    let opened = parse_term(&r[0].3).unwrap();
    assert_eq!(opened.functor(), Some("openedAccount"));
    assert_eq!(opened.args()[1].as_int(), Some(10000));
    assert_eq!(
        (r[1].1.as_str(), r[1].3.as_str()),
        ("refuse", "alreadyOpen")
    );
    assert_eq!(w.balance(), Some(10000));
    let ledger = game(&t, "LEDGER");
    assert_eq!(ledger.len(), 1, "only the grant is posted");
}

#[test]
fn banker_reports_balance_or_no_account() {
    let w = World::new();
    let t = w.run(vec![(1, "query", "banker", "balance")]);
    assert_eq!(replies(&t), ["failure noAccount"]);

    let w = World::new();
    w.account(9950);
    let t = w.run(vec![(1, "query", "banker", "balance")]);
    assert_eq!(replies(&t), ["inform balance(9950)"]);
}

#[test]
fn broker_buy_then_sell() {
    let w = World::new();
    w.account(1000);
    w.set_price("acme", 17);
    let t = w.run(vec![
        (1, "request", "broker", "buy(acme,10)"),
        (3, "accept-proposal", "broker", "accept(acme,10,170)"),
    ]);
    assert_eq!(
        replies(&t),
        ["propose cost(acme,10,170)", "inform purchased(acme,10,170)"]
    );
    assert_eq!(w.balance(), Some(830));
    assert_eq!(w.state.borrow().holding(CLIENT, "acme"), 10);

    w.set_price("acme", 25);
    let t = w.run(vec![
        (1, "request", "broker", "sell(acme,10)"),
        (3, "accept-proposal", "broker", "accept(acme,10,250)"),
    ]);
    assert_eq!(
        replies(&t),
        ["propose proceeds(acme,10,250)", "inform sold(acme,10,250)"]
    );
    assert_eq!(w.balance(), Some(1080));
    assert_eq!(w.state.borrow().holding(CLIENT, "acme"), 0);
}

#[test]
fn broker_failures() {
    let w = World::new();
    w.account(100);
    w.set_price("acme", 17);
    let t = w.run(vec![
        (1, "request", "broker", "buy(acme,10)"),
        (3, "accept-proposal", "broker", "accept(acme,10,170)"),
        (5, "request", "broker", "buy(nope,1)"),
        (7, "request", "broker", "sell(acme,1)"),
    ]);
    assert_eq!(
        replies(&t),
        [
            "propose cost(acme,10,170)",
            "failure insufficientFunds",
            "refuse unknownStock",
            "refuse insufficientHoldings",
        ]
    );
    assert_eq!(w.balance(), Some(100));
}

#[test]
fn out_of_protocol_accept_is_not_understood() {
    let w = World::new();
    w.account(1000);
    let t = w.run(vec![(1, "accept-proposal", "broker", "accept(acme,1,20)")]);
    assert_eq!(replies(&t), ["not-understood accept(acme,1,20)"]);
    let unmatched = t
        .records()
        .iter()
        .any(|r| r.kind == TraceKind::Evt && r.fields[0] == "broker" && r.fields[1] == "unmatched");
    assert!(unmatched);
    assert_eq!(
        game(&t, "NOTUNDERSTOOD"),
        [["broker", CLIENT, "accept-proposal", "accept(acme,1,20)"]]
    );
    assert_eq!(w.balance(), Some(1000));
}

#[test]
fn guru_tips_subscribers_on_schedule() {
    let mut w = World::new();
    w.config.tips = vec![
        TipSpec {
            tick: 5,
            stock: "acme".into(),
            kind: TipKind::Rise,
        },
        TipSpec {
            tick: 8,
            stock: "zinc".into(),
            kind: TipKind::Avoid,
        },
    ];
    let t = w.run(vec![
        (1, "subscribe", "guru", "tips"),
        (2, "subscribe", "guru", "tips"),
    ]);
    let r: Vec<(Tick, String)> = received(&t)
        .into_iter()
        .map(|(t, p, _, c)| (t, format!("{p} {c}")))
        .collect();
    assert_eq!(
        r,
        [
            (2, "agree tips".to_string()),
            (3, "refuse alreadySubscribed".to_string()),
            (5, "inform tip(acme,rise)".to_string()),
            (8, "inform tip(zinc,avoid)".to_string()),
        ]
    );
}

fn auction_world(balance: i64) -> World {
    let mut w = World::new();
    w.config.auctions = vec![AuctionSpec {
        tick: 3,
        property: "villa".into(),
    }];
    w.state.borrow_mut().min_property_price = 1500;
    w.account(balance);
    w
}

#[test]
fn single_bid_wins_at_the_ask() {
    let w = auction_world(5000);
    let t = w.run(vec![
        (1, "subscribe", "auctioneer", "auctions"),
        (4, "propose", "auctioneer", "bid(villa,2000)"),
    ]);
    assert_eq!(
        replies(&t),
        [
            "agree auctions",
            "inform announce(villa,2000)",
            "cfp bid(villa,2000)",
            "accept-proposal bid(villa,2000)",
            "inform sold(villa,2000)",
        ]
    );
    assert_eq!(w.balance(), Some(3000));
    assert_eq!(w.state.borrow().owner_of("villa"), Some(CLIENT));
    assert_eq!(
        game(&t, "AUCTION").last().unwrap(),
        &["villa", "sold", "client:2000"]
    );
}

#[test]
fn auction_without_bids_goes_unsold() {
    let w = auction_world(5000);
    let t = w.run(vec![(1, "subscribe", "auctioneer", "auctions")]);
    assert_eq!(replies(&t).last().unwrap(), "inform unsold(villa)");
    assert_eq!(w.state.borrow().owner_of("villa"), None);

    let w = auction_world(5000);
    let t = w.run(vec![]);
    assert_eq!(
        game(&t, "AUCTION"),
        [["villa", "open", "2000"], ["villa", "unsold", "-"]]
    );
}

#[test]
fn underfunded_winner_gets_failure() {
    let w = auction_world(1000);
    let t = w.run(vec![
        (1, "subscribe", "auctioneer", "auctions"),
        (4, "propose", "auctioneer", "bid(villa,2000)"),
    ]);
    assert_eq!(replies(&t).last().unwrap(), "failure insufficientFunds");
    assert_eq!(w.balance(), Some(1000));
    assert_eq!(w.state.borrow().owner_of("villa"), None);
}

fn bidder_world(factor: i64) -> World {
    let mut w = World::new();
    w.config.bidders = vec![BidderSpec {
        name: "bidder1".into(),
        factor: [factor, factor],
    }];
    w.account(0);
    let mut st = w.state.borrow_mut();
    let villa = st.properties.get_mut("villa").unwrap();
    villa.owner = Some(CLIENT.into());
    villa.value = 21000;
    drop(st);
    w
}

#[test]
fn bidder_offers_factor_of_value_and_pays() {
    let w = bidder_world(110);
    let t = w.run(vec![
        (1, "cfp", "bidder1", "sellProperty(villa,20000)"),
        (3, "accept-proposal", "bidder1", "offer(villa,23100)"),
    ]);
    assert_eq!(
        replies(&t),
        ["propose offer(villa,23100)", "inform paid(villa,23100)"]
    );
    assert_eq!(w.balance(), Some(23100));
    assert_eq!(w.state.borrow().owner_of("villa"), Some("bidder1"));
}

#[test]
fn bidder_refuses_below_reserve() {
    let w = bidder_world(90);
    let t = w.run(vec![(1, "cfp", "bidder1", "sellProperty(villa,20000)")]);
    assert_eq!(replies(&t), ["refuse sellProperty(villa,20000)"]);
    assert_eq!(w.state.borrow().owner_of("villa"), Some(CLIENT));
}
