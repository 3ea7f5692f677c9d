//! The market ticker and the five kinds of core agent.
//!
//! Core agents answer through their own conversation managers: every
//! incoming message is matched first, and replies that belong to a
//! protocol are sent with `advance`. Anything unmatched gets a
//! `not-understood` reply.

use std::collections::{BTreeSet, VecDeque};

use super::config::{AuctionSpec, BidderSpec, PriceSeries, StockSpec, TipSpec};
use super::state::price_step;
use super::{protocol, Shared};
use crate::agent::EngineHandle;
use crate::conversation::Conversation;
use crate::runtime::{AgentContext, Behavior, BehaviorError, Message, Tick};
use crate::term::Term;

fn c(name: &str) -> Term {
    Term::constant(name)
}

fn f(functor: &str, args: Vec<Term>) -> Term {
    Term::compound(functor, args)
}

fn binding(conv: &Conversation, var: &str) -> Term {
    conv.bindings()
        .get(var)
        .cloned()
        .unwrap_or_else(|| Term::constant("none"))
}

fn int_binding(conv: &Conversation, var: &str) -> Option<i64> {
    conv.bindings().get(var).and_then(Term::as_int)
}

fn const_binding(conv: &Conversation, var: &str) -> Option<String> {
    conv.bindings()
        .get(var)
        .and_then(Term::as_const)
        .map(str::to_string)
}

/// Routes the inbox through `engine`, handing each matched conversation to
/// `on_match` and answering everything else with `not-understood`.
fn dispatch(
    engine: &EngineHandle,
    ctx: &mut AgentContext<'_>,
    mut on_match: impl FnMut(&mut AgentContext<'_>, Conversation) -> Result<(), BehaviorError>,
) -> Result<(), BehaviorError> {
    engine.tick(ctx);
    for m in ctx.take_inbox() {
        let out = engine.receive(ctx, &m);
        match out.cid.and_then(|cid| engine.conversation(&cid)) {
            Some(conv) => on_match(ctx, conv)?,
            None => not_understood(ctx, &m),
        }
    }
    Ok(())
}

fn not_understood(ctx: &mut AgentContext<'_>, m: &Message) {
    if m.performative == "not-understood" || m.performative == "cancel" {
        return;
    }
    let me = ctx.me().name.clone();
    ctx.record_game([
        "NOTUNDERSTOOD".to_string(),
        me,
        m.sender.name.clone(),
        m.performative.clone(),
        m.content.to_string(),
    ]);
    let mut reply = Message::new(
        "not-understood",
        ctx.me().clone(),
        m.sender.clone(),
        m.content.clone(),
    );
    reply.cid_hint = m.cid_hint.clone();
    ctx.send(reply);
}

/// Steps every stock and property once per tick, before any agent acts.
pub struct Market {
    state: Shared,
    stocks: Vec<StockSpec>,
    series: Option<PriceSeries>,
}

impl Market {
    pub fn new(state: Shared, stocks: Vec<StockSpec>, series: Option<PriceSeries>) -> Self {
        Market {
            state,
            stocks,
            series,
        }
    }
}

impl Behavior for Market {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        let tick = ctx.tick();
        for s in &self.stocks {
            let recorded = self.series.as_ref().and_then(|p| p.price(&s.symbol, tick));
            let next = match recorded {
                Some(p) => p,
                None => {
                    let current = self.state.borrow().prices[&s.symbol];
                    let draw = ctx.random(&format!("price:{}", s.symbol), s.step[0], s.step[1])?;
                    price_step(current, draw)
                }
            };
            self.state.borrow_mut().set_price(&s.symbol, next);
        }
        let mut st = self.state.borrow_mut();
        st.grow_properties();
        for r in st.price_records() {
            ctx.record_game(r);
        }
        Ok(())
    }
}

/// Opens accounts and answers balance queries.
pub struct Banker {
    engine: EngineHandle,
    state: Shared,
}

impl Banker {
    pub fn new(engine: EngineHandle, state: Shared) -> Self {
        Banker { engine, state }
    }
}

impl Behavior for Banker {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        let (engine, state) = (&self.engine, &self.state);
        dispatch(engine, ctx, |ctx, conv| {
            let player = conv.counterpart().name.clone();
            let cid = conv.cid();
            match (conv.protocol().id().name.as_str(), conv.state()) {
                ("open", "requested") => {
                    let opened = state.borrow_mut().open_account(ctx, &player);
                    match opened {
                        Some((id, amt)) => {
                            engine.reply(
                                ctx,
                                cid,
                                "inform",
                                f("openedAccount", vec![c(&id), Term::int(amt)]),
                            )?;
                            state.borrow_mut().complete(ctx, &protocol("open"), &player);
                        }
                        None => {
                            // The open protocol has no refusal branch; the
                            // conversation is left to time out.
                            ctx.send(
                                Message::new(
                                    "refuse",
                                    ctx.me().clone(),
                                    conv.counterpart().clone(),
                                    c("alreadyOpen"),
                                )
                                .with_hint(conv.thread()),
                            );
                        }
                    }
                }
                ("enquiry", "queried") => {
                    let balance = state.borrow().balance(&player);
                    match balance {
                        Some(b) => {
                            engine.reply(ctx, cid, "inform", f("balance", vec![Term::int(b)]))?;
                            state
                                .borrow_mut()
                                .complete(ctx, &protocol("enquiry"), &player);
                        }
                        None => engine.reply(ctx, cid, "failure", c("noAccount"))?,
                    }
                }
                _ => {}
            }
            Ok(())
        })
    }
}

/// Quotes prices and executes stock trades.
pub struct Broker {
    engine: EngineHandle,
    state: Shared,
}

impl Broker {
    pub fn new(engine: EngineHandle, state: Shared) -> Self {
        Broker { engine, state }
    }
}

impl Behavior for Broker {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        let (engine, state) = (&self.engine, &self.state);
        dispatch(engine, ctx, |ctx, conv| {
            let player = conv.counterpart().name.clone();
            let cid = conv.cid();
            let pname = conv.protocol().id().name.clone();
            let stock = const_binding(&conv, "stock");
            let qty = int_binding(&conv, "qty");
            let price = stock
                .as_ref()
                .and_then(|s| state.borrow().prices.get(s).copied());
            match (pname.as_str(), conv.state()) {
                ("listing", "queried") => {
                    let symbols = state.borrow().stocks.iter().map(|s| c(s)).collect();
                    engine.reply(ctx, cid, "inform", f("listing", vec![f("stocks", symbols)]))?;
                    state
                        .borrow_mut()
                        .complete(ctx, &protocol("listing"), &player);
                }
                ("price", "queried") => match price {
                    Some(p) => {
                        let content = f("price", vec![binding(&conv, "stock"), Term::int(p)]);
                        engine.reply(ctx, cid, "inform", content)?;
                        state
                            .borrow_mut()
                            .complete(ctx, &protocol("price"), &player);
                    }
                    None => engine.reply(ctx, cid, "refuse", c("unknownStock"))?,
                },
                ("portfolio", "queried") => {
                    if state.borrow().account(&player).is_none() {
                        engine.reply(ctx, cid, "failure", c("noAccount"))?;
                        return Ok(());
                    }
                    let held = state.borrow().portfolio(&player);
                    let holdings = if held.is_empty() {
                        c("none")
                    } else {
                        let items = held
                            .into_iter()
                            .map(|(s, q)| f("holding", vec![c(&s), Term::int(q)]))
                            .collect();
                        f("holdings", items)
                    };
                    engine.reply(ctx, cid, "inform", f("portfolio", vec![holdings]))?;
                    state
                        .borrow_mut()
                        .complete(ctx, &protocol("portfolio"), &player);
                }
                ("broker-buy" | "broker-sell", "requested") => {
                    let selling = pname == "broker-sell";
                    let refusal = match (price, qty) {
                        (None, _) => Some("unknownStock"),
                        (_, None) | (_, Some(..=0)) => Some("badQuantity"),
                        _ if state.borrow().account(&player).is_none() => Some("noAccount"),
                        (Some(_), Some(q))
                            if selling
                                && state
                                    .borrow()
                                    .holding(&player, stock.as_deref().unwrap_or_default())
                                    < q =>
                        {
                            Some("insufficientHoldings")
                        }
                        _ => None,
                    };
                    if let Some(reason) = refusal {
                        engine.reply(ctx, cid, "refuse", c(reason))?;
                        return Ok(());
                    }
                    let (p, q) = (price.unwrap_or_default(), qty.unwrap_or_default());
                    let total = p.saturating_mul(q);
                    let functor = if selling { "proceeds" } else { "cost" };
                    let content = f(
                        functor,
                        vec![binding(&conv, "stock"), Term::int(q), Term::int(total)],
                    );
                    engine.reply(ctx, cid, "propose", content)?;
                }
                ("broker-buy", "accepted") => {
                    let (s, q) = (stock.unwrap_or_default(), qty.unwrap_or_default());
                    let total = int_binding(&conv, "total").unwrap_or_default();
                    let reason = f("buy", vec![c(&s), Term::int(q), Term::int(total)]);
                    let paid = state.borrow_mut().post(ctx, &player, -total, reason);
                    if paid.is_err() {
                        engine.reply(ctx, cid, "failure", c("insufficientFunds"))?;
                        return Ok(());
                    }
                    let held = state.borrow().holding(&player, &s);
                    state.borrow_mut().set_holding(ctx, &player, &s, held + q);
                    let content = f("purchased", vec![c(&s), Term::int(q), Term::int(total)]);
                    engine.reply(ctx, cid, "inform", content)?;
                    state
                        .borrow_mut()
                        .complete(ctx, &protocol("broker-buy"), &player);
                }
                ("broker-sell", "accepted") => {
                    let (s, q) = (stock.unwrap_or_default(), qty.unwrap_or_default());
                    let total = int_binding(&conv, "total").unwrap_or_default();
                    let held = state.borrow().holding(&player, &s);
                    if held < q {
                        engine.reply(ctx, cid, "failure", c("insufficientHoldings"))?;
                        return Ok(());
                    }
                    let reason = f("sell", vec![c(&s), Term::int(q), Term::int(total)]);
                    if state
                        .borrow_mut()
                        .post(ctx, &player, total, reason)
                        .is_err()
                    {
                        engine.reply(ctx, cid, "failure", c("noAccount"))?;
                        return Ok(());
                    }
                    state.borrow_mut().set_holding(ctx, &player, &s, held - q);
                    let content = f("sold", vec![c(&s), Term::int(q), Term::int(total)]);
                    engine.reply(ctx, cid, "inform", content)?;
                    state
                        .borrow_mut()
                        .complete(ctx, &protocol("broker-sell"), &player);
                }
                _ => {}
            }
            Ok(())
        })
    }
}

fn has_other_subscription(engine: &EngineHandle, conv: &Conversation) -> bool {
    engine.manager().active().any(|other| {
        other.cid() != conv.cid()
            && other.protocol().id() == conv.protocol().id()
            && other.counterpart().name == conv.counterpart().name
            && other.state() != "requested"
    })
}

/// Sends scheduled tips to every subscriber.
pub struct Guru {
    engine: EngineHandle,
    state: Shared,
    schedule: Vec<TipSpec>,
    tipped: BTreeSet<String>,
    now: Tick,
}

impl Guru {
    pub fn new(engine: EngineHandle, state: Shared, schedule: Vec<TipSpec>) -> Self {
        Guru {
            engine,
            state,
            schedule,
            tipped: BTreeSet::new(),
            now: 0,
        }
    }
}

impl Behavior for Guru {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        self.now = ctx.tick();
        let engine = &self.engine;
        dispatch(engine, ctx, |ctx, conv| {
            if conv.protocol().id().name == "guru-subscribe" && conv.state() == "requested" {
                if has_other_subscription(engine, &conv) {
                    engine.reply(ctx, conv.cid(), "refuse", c("alreadySubscribed"))?;
                } else {
                    engine.reply(ctx, conv.cid(), "agree", c("tips"))?;
                }
            }
            Ok(())
        })?;

        let due: Vec<TipSpec> = self
            .schedule
            .iter()
            .filter(|t| t.tick == self.now)
            .cloned()
            .collect();
        for tip in due {
            let subscribers: Vec<(String, String)> = engine
                .manager()
                .active()
                .filter(|c| c.protocol().id().name == "guru-subscribe" && c.state() == "subscribed")
                .map(|c| (c.cid().to_string(), c.counterpart().name.clone()))
                .collect();
            for (cid, player) in subscribers {
                let content = f("tip", vec![c(&tip.stock), c(tip.kind.as_str())]);
                engine.reply(ctx, &cid, "inform", content)?;
                if self.tipped.insert(cid) {
                    self.state
                        .borrow_mut()
                        .complete(ctx, &protocol("guru-subscribe"), &player);
                }
            }
        }
        Ok(())
    }

    fn is_idle(&self) -> bool {
        self.schedule.iter().all(|t| t.tick <= self.now)
    }
}

#[derive(Debug, Clone)]
struct RunningAuction {
    property: String,
    ask: i64,
    closes: Tick,
    /// Conversations still in the running.
    participants: Vec<String>,
}

/// Runs scheduled english auctions for subscribers.
pub struct Auctioneer {
    engine: EngineHandle,
    state: Shared,
    queue: VecDeque<AuctionSpec>,
    running: Option<RunningAuction>,
    round_ticks: Tick,
    increment: i64,
}

impl Auctioneer {
    pub fn new(
        engine: EngineHandle,
        state: Shared,
        mut schedule: Vec<AuctionSpec>,
        round_ticks: Tick,
        increment: i64,
    ) -> Self {
        schedule.sort_by_key(|a| a.tick);
        Auctioneer {
            engine,
            state,
            queue: schedule.into(),
            running: None,
            round_ticks,
            increment,
        }
    }

    fn state_of(&self, cid: &str) -> String {
        self.engine
            .conversation(cid)
            .filter(Conversation::is_active)
            .map(|c| c.state().to_string())
            .unwrap_or_default()
    }

    fn open(&mut self, ctx: &mut AgentContext<'_>, spec: AuctionSpec) -> Result<(), BehaviorError> {
        let (owner, value, floor) = {
            let st = self.state.borrow();
            let p = &st.properties[&spec.property];
            (p.owner.clone(), p.value, st.min_property_price)
        };
        if owner.is_some() {
            ctx.record_game(["AUCTION", &spec.property, "skipped", "owned"]);
            return Ok(());
        }
        let ask = value.max(floor);
        let participants: Vec<String> = self
            .engine
            .manager()
            .active()
            .filter(|c| c.protocol().id().name == "auction-subscribe" && c.state() == "subscribed")
            .map(|c| c.cid().to_string())
            .collect();
        ctx.record_game([
            "AUCTION".to_string(),
            spec.property.clone(),
            "open".into(),
            ask.to_string(),
        ]);
        if participants.is_empty() {
            ctx.record_game(["AUCTION", &spec.property, "unsold", "-"]);
            return Ok(());
        }
        for cid in &participants {
            let prop = c(&spec.property);
            self.engine.reply(
                ctx,
                cid,
                "inform",
                f("announce", vec![prop.clone(), Term::int(ask)]),
            )?;
            self.engine
                .reply(ctx, cid, "cfp", f("bid", vec![prop, Term::int(ask)]))?;
        }
        self.running = Some(RunningAuction {
            property: spec.property,
            ask,
            closes: ctx.tick() + self.round_ticks,
            participants,
        });
        Ok(())
    }

    fn close_round(
        &mut self,
        ctx: &mut AgentContext<'_>,
        mut a: RunningAuction,
    ) -> Result<(), BehaviorError> {
        let prop = c(&a.property);
        let (bidders, idle): (Vec<String>, Vec<String>) = a
            .participants
            .iter()
            .cloned()
            .partition(|cid| self.state_of(cid) == "bidding");
        let idle: Vec<String> = idle
            .into_iter()
            .filter(|cid| self.state_of(cid) == "calling")
            .collect();

        if bidders.len() > 1 {
            a.ask += self.increment;
            for cid in &bidders {
                self.engine.reply(
                    ctx,
                    cid,
                    "cfp",
                    f("bid", vec![prop.clone(), Term::int(a.ask)]),
                )?;
            }
            for cid in &idle {
                self.engine
                    .reply(ctx, cid, "inform", f("closed", vec![prop.clone()]))?;
            }
            ctx.record_game([
                "AUCTION".to_string(),
                a.property.clone(),
                "raise".into(),
                a.ask.to_string(),
            ]);
            a.closes = ctx.tick() + self.round_ticks;
            a.participants = bidders;
            self.running = Some(a);
            return Ok(());
        }

        let mut sold_to = None;
        if let Some(cid) = bidders.first() {
            let winner = self
                .engine
                .conversation(cid)
                .map(|c| c.counterpart().name.clone())
                .unwrap_or_default();
            let reason = f("auction", vec![prop.clone(), Term::int(a.ask)]);
            let paid = self.state.borrow_mut().post(ctx, &winner, -a.ask, reason);
            if paid.is_ok() {
                self.engine.reply(
                    ctx,
                    cid,
                    "accept-proposal",
                    f("bid", vec![prop.clone(), Term::int(a.ask)]),
                )?;
                self.state
                    .borrow_mut()
                    .transfer_property(ctx, &a.property, &winner);
                self.engine.reply(
                    ctx,
                    cid,
                    "inform",
                    f("sold", vec![prop.clone(), Term::int(a.ask)]),
                )?;
                self.state
                    .borrow_mut()
                    .complete(ctx, &protocol("auction-subscribe"), &winner);
                sold_to = Some(winner);
            } else {
                self.engine
                    .reply(ctx, cid, "failure", c("insufficientFunds"))?;
            }
        }
        let outcome = if sold_to.is_some() {
            "closed"
        } else {
            "unsold"
        };
        for cid in &idle {
            self.engine
                .reply(ctx, cid, "inform", f(outcome, vec![prop.clone()]))?;
        }
        match sold_to {
            Some(w) => ctx.record_game([
                "AUCTION".to_string(),
                a.property,
                "sold".into(),
                format!("{w}:{}", a.ask),
            ]),
            None => ctx.record_game(["AUCTION", &a.property, "unsold", "-"]),
        }
        Ok(())
    }
}

impl Behavior for Auctioneer {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        let engine = self.engine.clone();
        dispatch(&engine, ctx, |ctx, conv| {
            if conv.protocol().id().name == "auction-subscribe" && conv.state() == "requested" {
                if has_other_subscription(&engine, &conv) {
                    engine.reply(ctx, conv.cid(), "refuse", c("alreadySubscribed"))?;
                } else {
                    engine.reply(ctx, conv.cid(), "agree", c("auctions"))?;
                }
            }
            Ok(())
        })?;

        if let Some(a) = self.running.take() {
            if ctx.tick() >= a.closes {
                self.close_round(ctx, a)?;
            } else {
                self.running = Some(a);
            }
        }
        while self.running.is_none() && self.queue.front().is_some_and(|a| a.tick <= ctx.tick()) {
            let spec = self.queue.pop_front().expect("front checked");
            self.open(ctx, spec)?;
        }
        Ok(())
    }

    fn is_idle(&self) -> bool {
        self.running.is_none() && self.queue.is_empty()
    }
}

/// Buys properties from players through contract-net.
pub struct Bidder {
    engine: EngineHandle,
    state: Shared,
    spec: BidderSpec,
}

impl Bidder {
    pub fn new(engine: EngineHandle, state: Shared, spec: BidderSpec) -> Self {
        Bidder {
            engine,
            state,
            spec,
        }
    }
}

impl Behavior for Bidder {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        let (engine, state, spec) = (&self.engine, &self.state, &self.spec);
        dispatch(engine, ctx, |ctx, conv| {
            if conv.protocol().id().name != "bidder-sell" {
                return Ok(());
            }
            let player = conv.counterpart().name.clone();
            let property = const_binding(&conv, "property").unwrap_or_default();
            let cid = conv.cid();
            match conv.state() {
                "called" => {
                    let reserve = int_binding(&conv, "reserve").unwrap_or(i64::MAX);
                    let value = {
                        let st = state.borrow();
                        st.properties
                            .get(&property)
                            .filter(|p| p.owner.as_deref() == Some(&player))
                            .map(|p| p.value)
                    };
                    let refuse = f(
                        "sellProperty",
                        vec![c(&property), binding(&conv, "reserve")],
                    );
                    let Some(value) = value else {
                        engine.reply(ctx, cid, "refuse", refuse)?;
                        return Ok(());
                    };
                    let factor = ctx.random(
                        &format!("bidder:{}", spec.name),
                        spec.factor[0],
                        spec.factor[1],
                    )?;
                    let offer = value.saturating_mul(factor) / 100;
                    if offer >= reserve {
                        engine.reply(
                            ctx,
                            cid,
                            "propose",
                            f("offer", vec![c(&property), Term::int(offer)]),
                        )?;
                    } else {
                        engine.reply(ctx, cid, "refuse", refuse)?;
                    }
                }
                "accepted" => {
                    let amount = int_binding(&conv, "amount").unwrap_or_default();
                    let owns = state.borrow().owner_of(&property) == Some(player.as_str());
                    if !owns {
                        engine.reply(ctx, cid, "failure", c("notOwner"))?;
                        return Ok(());
                    }
                    let reason = f("sale", vec![c(&property), Term::int(amount)]);
                    if state
                        .borrow_mut()
                        .post(ctx, &player, amount, reason)
                        .is_err()
                    {
                        engine.reply(ctx, cid, "failure", c("noAccount"))?;
                        return Ok(());
                    }
                    state
                        .borrow_mut()
                        .transfer_property(ctx, &property, &ctx.me().name.clone());
                    engine.reply(
                        ctx,
                        cid,
                        "inform",
                        f("paid", vec![c(&property), Term::int(amount)]),
                    )?;
                    state
                        .borrow_mut()
                        .complete(ctx, &protocol("bidder-sell"), &player);
                }
                _ => {}
            }
            Ok(())
        })
    }
}
