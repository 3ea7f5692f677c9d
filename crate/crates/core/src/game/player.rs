//! Player behaviors.
//!
//! The reference player does everything through its conversation manager.
//! The naive and partial players are deliberately written the way
//! hand-rolled message handlers tend to be: they react to performative and
//! content, address the core agents by hard-coded name and address, and
//! (naive) never look at who sent a message or whether it was expected.
//! They exist so the probe has something to find.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::protocol;
use crate::agent::EngineHandle;
use crate::conversation::{Conversation, ConversationManager};
use crate::repository::Repository;
use crate::runtime::{
    AgentContext, AgentId, Behavior, BehaviorError, Message, Tick, LOCAL_ADDRESS,
};
use crate::term::Term;

/// Who the player should talk to for each service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contacts {
    pub banker: AgentId,
    pub broker: AgentId,
    pub guru: AgentId,
    pub auctioneer: AgentId,
    pub bidders: Vec<AgentId>,
}

impl Contacts {
    /// The standard roster, everyone at [`LOCAL_ADDRESS`].
    pub fn standard(bidders: &[String]) -> Self {
        Contacts {
            banker: AgentId::local("banker"),
            broker: AgentId::local("broker"),
            guru: AgentId::local("guru"),
            auctioneer: AgentId::local("auctioneer"),
            bidders: bidders.iter().map(AgentId::local).collect(),
        }
    }
}

/// Knobs shared by the scripted players.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strategy {
    /// Ticks to hold a stock before selling it.
    pub hold_ticks: Tick,
    /// Stop buying stock once the balance reaches this.
    pub target: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlayerKind {
    Reference,
    Naive,
    Partial,
    Idle,
}

impl PlayerKind {
    pub const ALL: [PlayerKind; 4] = [
        PlayerKind::Reference,
        PlayerKind::Naive,
        PlayerKind::Partial,
        PlayerKind::Idle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlayerKind::Reference => "reference",
            PlayerKind::Naive => "naive",
            PlayerKind::Partial => "partial",
            PlayerKind::Idle => "idle",
        }
    }

    /// Builds the behavior. Engine-backed players also hand back a handle
    /// on their conversation manager.
    pub fn build(
        self,
        contacts: Contacts,
        repository: Arc<Repository>,
        strategy: Strategy,
    ) -> (Box<dyn Behavior>, Option<EngineHandle>) {
        let me = AgentId::local("player");
        match self {
            PlayerKind::Reference => {
                let engine = EngineHandle::new(ConversationManager::new(me, repository));
                let player = ReferencePlayer::new(engine.clone(), contacts, strategy);
                (Box::new(player), Some(engine))
            }
            PlayerKind::Naive => (
                Box::new(ScriptedPlayer::new(contacts, strategy, false)),
                None,
            ),
            PlayerKind::Partial => (
                Box::new(ScriptedPlayer::new(contacts, strategy, true)),
                None,
            ),
            PlayerKind::Idle => (Box::new(IdlePlayer), None),
        }
    }
}

impl fmt::Display for PlayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlayerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!("unknown player {s:?} (expected reference, naive, partial or idle)")
            })
    }
}

fn c(name: &str) -> Term {
    Term::constant(name)
}

fn f(functor: &str, args: Vec<Term>) -> Term {
    Term::compound(functor, args)
}

fn get_int(conv: &Conversation, var: &str) -> i64 {
    conv.bindings()
        .get(var)
        .and_then(Term::as_int)
        .unwrap_or_default()
}

fn get_const(conv: &Conversation, var: &str) -> String {
    conv.bindings()
        .get(var)
        .and_then(Term::as_const)
        .unwrap_or_default()
        .to_string()
}

/// Sends nothing, ever.
pub struct IdlePlayer;

impl Behavior for IdlePlayer {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        ctx.take_inbox();
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Position {
    stock: String,
    qty: i64,
    cost: i64,
    since: Tick,
}

/// Plays the whole task chain in order, entirely through the engine:
/// open an account, look around, follow the guru's rise tips with
/// buy-hold-sell cycles until the auction floor is affordable, buy a
/// property at auction, then sell it to the best bidder.
pub struct ReferencePlayer {
    engine: EngineHandle,
    contacts: Contacts,
    strategy: Strategy,
    opening: Option<String>,
    account: Option<String>,
    balance: i64,
    looked_around: bool,
    stocks: Vec<String>,
    prices: BTreeMap<String, i64>,
    priced: bool,
    rise: Option<String>,
    position: Option<Position>,
    trade: Option<String>,
    profitable_sells: u32,
    check_portfolio: bool,
    auction: Option<String>,
    property: Option<(String, i64)>,
    offers: Vec<String>,
    accepted: Option<String>,
    finished: bool,
}

impl ReferencePlayer {
    pub fn new(engine: EngineHandle, contacts: Contacts, strategy: Strategy) -> Self {
        ReferencePlayer {
            engine,
            contacts,
            strategy,
            opening: None,
            account: None,
            balance: 0,
            looked_around: false,
            stocks: Vec::new(),
            prices: BTreeMap::new(),
            priced: false,
            rise: None,
            position: None,
            trade: None,
            profitable_sells: 0,
            check_portfolio: false,
            auction: None,
            property: None,
            offers: Vec::new(),
            accepted: None,
            finished: false,
        }
    }

    fn is_live(&self, cid: &Option<String>) -> bool {
        cid.as_deref()
            .and_then(|c| self.engine.conversation(c))
            .is_some_and(|c| c.is_active())
    }

    fn on_update(
        &mut self,
        ctx: &mut AgentContext<'_>,
        conv: Conversation,
    ) -> Result<(), BehaviorError> {
        let cid = conv.cid().to_string();
        match (conv.protocol().id().name.as_str(), conv.state()) {
            ("open", "done") => {
                self.account = Some(get_const(&conv, "id"));
                self.balance = get_int(&conv, "amt");
            }
            ("enquiry", "done") => self.balance = get_int(&conv, "amt"),
            ("listing", "done") => {
                if let Some(t) = conv.bindings().get("stocks") {
                    self.stocks = t
                        .args()
                        .iter()
                        .filter_map(Term::as_const)
                        .map(str::to_string)
                        .collect();
                }
            }
            ("price", "done") => {
                self.prices
                    .insert(get_const(&conv, "stock"), get_int(&conv, "price"));
            }
            ("guru-subscribe", "subscribed") if conv.history().len() > 2 => {
                let stock = get_const(&conv, "stock");
                match get_const(&conv, "kind").as_str() {
                    "rise" => self.rise = Some(stock),
                    _ if self.rise.as_deref() == Some(stock.as_str()) => self.rise = None,
                    _ => {}
                }
            }
            ("broker-buy", "proposed") => {
                let (stock, qty, total) = (
                    get_const(&conv, "stock"),
                    get_int(&conv, "qty"),
                    get_int(&conv, "total"),
                );
                let terms = vec![c(&stock), Term::int(qty), Term::int(total)];
                if total <= self.balance {
                    self.engine
                        .reply(ctx, &cid, "accept-proposal", f("accept", terms))?;
                } else {
                    self.prices
                        .insert(stock, (total + qty.max(1) - 1) / qty.max(1));
                    self.engine
                        .reply(ctx, &cid, "reject-proposal", f("reject", terms))?;
                }
            }
            ("broker-buy", "done") => {
                let total = get_int(&conv, "total");
                self.balance -= total;
                self.position = Some(Position {
                    stock: get_const(&conv, "stock"),
                    qty: get_int(&conv, "qty"),
                    cost: total,
                    since: ctx.tick(),
                });
                self.check_portfolio = true;
            }
            ("broker-sell", "proposed") => {
                let terms = vec![
                    conv.bindings()
                        .get("stock")
                        .cloned()
                        .unwrap_or_else(|| c("none")),
                    Term::int(get_int(&conv, "qty")),
                    Term::int(get_int(&conv, "total")),
                ];
                self.engine
                    .reply(ctx, &cid, "accept-proposal", f("accept", terms))?;
            }
            ("broker-sell", "done") => {
                let (qty, total) = (get_int(&conv, "qty"), get_int(&conv, "total"));
                self.balance += total;
                if let Some(p) = self.position.take() {
                    if total > p.cost {
                        self.profitable_sells += 1;
                    }
                }
                self.prices
                    .insert(get_const(&conv, "stock"), total / qty.max(1));
            }
            ("auction-subscribe", "calling") => {
                let ask = get_int(&conv, "ask");
                if self.property.is_none() && self.balance >= ask {
                    let content = f(
                        "bid",
                        vec![c(&get_const(&conv, "property")), Term::int(ask)],
                    );
                    self.engine.reply(ctx, &cid, "propose", content)?;
                } else if self.property.is_none() {
                    // Out of reach: keep trading until the next auction.
                    self.strategy.target = self.strategy.target.max(ask);
                }
            }
            ("auction-subscribe", "done") => {
                let price = get_int(&conv, "price");
                self.balance -= price;
                self.property = Some((get_const(&conv, "property"), price));
            }
            ("bidder-sell", "done") => {
                self.balance += get_int(&conv, "amount");
                self.property = None;
                self.finished = true;
            }
            _ => {}
        }
        Ok(())
    }

    fn act(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        let banker = self.contacts.banker.clone();
        let broker = self.contacts.broker.clone();
        if self.account.is_none() {
            if !self.is_live(&self.opening) {
                let cid = self.engine.start(
                    ctx,
                    &protocol("open"),
                    &banker,
                    "request",
                    c("openAccount"),
                )?;
                self.opening = Some(cid);
            }
            return Ok(());
        }
        if !self.looked_around {
            self.looked_around = true;
            self.engine
                .start(ctx, &protocol("enquiry"), &banker, "query", c("balance"))?;
            self.engine
                .start(ctx, &protocol("listing"), &broker, "query", c("listing"))?;
            let guru = self.contacts.guru.clone();
            self.engine.start(
                ctx,
                &protocol("guru-subscribe"),
                &guru,
                "subscribe",
                c("tips"),
            )?;
        }
        if !self.stocks.is_empty() && !self.priced {
            self.priced = true;
            for s in self.stocks.clone() {
                self.engine.start(
                    ctx,
                    &protocol("price"),
                    &broker,
                    "query",
                    f("price", vec![c(&s)]),
                )?;
            }
        }
        if std::mem::take(&mut self.check_portfolio) {
            self.engine.start(
                ctx,
                &protocol("portfolio"),
                &broker,
                "query",
                c("portfolio"),
            )?;
        }

        if self.property.is_none() && !self.finished && !self.is_live(&self.trade) {
            self.trade = None;
            if let Some(p) = &self.position {
                if ctx.tick() >= p.since + self.strategy.hold_ticks {
                    let content = f("sell", vec![c(&p.stock), Term::int(p.qty)]);
                    let cid = self.engine.start(
                        ctx,
                        &protocol("broker-sell"),
                        &broker,
                        "request",
                        content,
                    )?;
                    self.trade = Some(cid);
                }
            } else if self.balance < self.strategy.target {
                if let Some(stock) = self.rise.clone() {
                    match self.prices.get(&stock) {
                        Some(&price) => {
                            // Leave headroom for the price rising before the quote.
                            let qty = self.balance * 9 / 10 / price.max(1);
                            if qty >= 1 {
                                let content = f("buy", vec![c(&stock), Term::int(qty)]);
                                let cid = self.engine.start(
                                    ctx,
                                    &protocol("broker-buy"),
                                    &broker,
                                    "request",
                                    content,
                                )?;
                                self.trade = Some(cid);
                            }
                        }
                        None => {
                            let content = f("price", vec![c(&stock)]);
                            let cid = self.engine.start(
                                ctx,
                                &protocol("price"),
                                &broker,
                                "query",
                                content,
                            )?;
                            self.trade = Some(cid);
                        }
                    }
                }
            }
        }

        if self.profitable_sells > 0
            && self.property.is_none()
            && !self.finished
            && !self.is_live(&self.auction)
        {
            let auctioneer = self.contacts.auctioneer.clone();
            let cid = self.engine.start(
                ctx,
                &protocol("auction-subscribe"),
                &auctioneer,
                "subscribe",
                c("auctions"),
            )?;
            self.auction = Some(cid);
        }

        if let Some((property, paid)) = self.property.clone() {
            self.run_sale(ctx, &property, paid)?;
        }
        Ok(())
    }

    /// Contract-net the property to every bidder, accept the best offer.
    fn run_sale(
        &mut self,
        ctx: &mut AgentContext<'_>,
        property: &str,
        reserve: i64,
    ) -> Result<(), BehaviorError> {
        if let Some(cid) = &self.accepted {
            if !self.is_live(&Some(cid.clone())) {
                // The accepted offer fell through; start over.
                self.accepted = None;
                self.offers.clear();
            }
            return Ok(());
        }
        if self.offers.is_empty() {
            for b in self.contacts.bidders.clone() {
                let content = f("sellProperty", vec![c(property), Term::int(reserve)]);
                let cid = self
                    .engine
                    .start(ctx, &protocol("bidder-sell"), &b, "cfp", content)?;
                self.offers.push(cid);
            }
            return Ok(());
        }
        let convs: Vec<Conversation> = self
            .offers
            .iter()
            .filter_map(|cid| self.engine.conversation(cid))
            .collect();
        if convs.iter().any(|c| c.is_active() && c.state() == "called") {
            return Ok(());
        }
        let mut proposals: Vec<(i64, String)> = convs
            .iter()
            .filter(|c| c.is_active() && c.state() == "proposed")
            .map(|c| (get_int(c, "amount"), c.cid().to_string()))
            .collect();
        if proposals.is_empty() {
            self.offers.clear();
            return Ok(());
        }
        // Highest offer wins; earliest conversation breaks ties.
        let best = proposals
            .iter()
            .enumerate()
            .max_by_key(|(i, (amt, _))| (*amt, std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
            .expect("nonempty");
        let (amount, winner) = proposals.remove(best);
        let offer = |amt: i64| f("offer", vec![c(property), Term::int(amt)]);
        self.engine
            .reply(ctx, &winner, "accept-proposal", offer(amount))?;
        for (amt, cid) in proposals {
            self.engine
                .reply(ctx, &cid, "reject-proposal", offer(amt))?;
        }
        self.accepted = Some(winner);
        Ok(())
    }
}

impl Behavior for ReferencePlayer {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        self.engine.tick(ctx);
        for m in ctx.take_inbox() {
            let out = self.engine.receive(ctx, &m);
            // Unmatched messages are already in the trace; nothing else to do.
            if let Some(conv) = out.cid.and_then(|cid| self.engine.conversation(&cid)) {
                self.on_update(ctx, conv)?;
            }
        }
        if !self.finished {
            self.act(ctx)?;
        }
        Ok(())
    }

    fn is_idle(&self) -> bool {
        self.finished
    }
}

/// Hand-rolled player without an engine. With `check_some_senders` it
/// checks the sender's name on half of its handlers (the "partial"
/// fixture); without, on none (the "naive" fixture).
pub struct ScriptedPlayer {
    contacts: Contacts,
    strategy: Strategy,
    check_some_senders: bool,
    started: bool,
    balance: i64,
    prices: BTreeMap<String, i64>,
    sells: Vec<(Tick, String, i64)>,
    subscribed: bool,
    selling: Option<String>,
    sold: bool,
}

/// Core agents as a hand-written player would address them: fixed name,
/// fixed address.
fn hard_coded(name: &str) -> AgentId {
    AgentId::new(name, vec![LOCAL_ADDRESS.to_string()])
}

impl ScriptedPlayer {
    pub fn new(contacts: Contacts, strategy: Strategy, check_some_senders: bool) -> Self {
        ScriptedPlayer {
            contacts,
            strategy,
            check_some_senders,
            started: false,
            balance: 0,
            prices: BTreeMap::new(),
            sells: Vec::new(),
            subscribed: false,
            selling: None,
            sold: false,
        }
    }

    fn send(ctx: &mut AgentContext<'_>, performative: &str, to: &str, content: Term) {
        let me = ctx.me().clone();
        ctx.send(Message::new(performative, me, hard_coded(to), content));
    }

    fn reply(ctx: &mut AgentContext<'_>, m: &Message, performative: &str, content: Term) {
        let me = ctx.me().clone();
        ctx.send(Message::new(performative, me, m.sender.clone(), content));
    }

    fn request_buy(&self, ctx: &mut AgentContext<'_>, stock: &str, price: i64) {
        let qty = self.balance * 8 / 10 / price.max(1);
        if qty >= 1 {
            Self::send(
                ctx,
                "request",
                "broker",
                f("buy", vec![c(stock), Term::int(qty)]),
            );
        }
    }

    /// The partial fixture's name check.
    fn from(&self, m: &Message, name: &str) -> bool {
        !self.check_some_senders || m.sender.name == name
    }

    fn handle(&mut self, ctx: &mut AgentContext<'_>, m: &Message) {
        let args = m.content.args();
        let int = |i: usize| args.get(i).and_then(Term::as_int).unwrap_or_default();
        let name = |i: usize| {
            args.get(i)
                .and_then(Term::as_const)
                .unwrap_or_default()
                .to_string()
        };
        match (m.performative.as_str(), m.content.functor(), args.len()) {
            // Checked handlers (partial fixture).
            ("inform", Some("openedAccount"), 2) if self.from(m, "banker") => {
                self.balance = int(1);
                Self::send(ctx, "query", "banker", c("balance"));
                Self::send(ctx, "query", "broker", c("listing"));
                Self::send(ctx, "subscribe", "guru", c("tips"));
            }
            ("inform", Some("tip"), 2) if self.from(m, "guru") => {
                if name(1) == "rise" && self.balance < self.strategy.target {
                    let price = self.prices.get(&name(0)).copied().unwrap_or(1);
                    self.request_buy(ctx, &name(0), price);
                }
            }
            ("propose", Some("cost"), 3) if self.from(m, "broker") => {
                if int(2) <= self.balance {
                    Self::reply(ctx, m, "accept-proposal", f("accept", args.to_vec()));
                } else {
                    Self::reply(ctx, m, "reject-proposal", f("reject", args.to_vec()));
                    // Try again at the quoted price.
                    let unit = int(2) / int(1).max(1);
                    self.prices.insert(name(0), unit);
                    self.request_buy(ctx, &name(0), unit);
                }
            }
            ("inform", Some("purchased"), 3) if self.from(m, "broker") => {
                self.balance -= int(2);
                let due = ctx.tick() + self.strategy.hold_ticks;
                self.sells.push((due, name(0), int(1)));
            }
            // Unchecked handlers.
            ("inform", Some("balance"), 1) => self.balance = int(0),
            ("inform", Some("listing"), 1) => {
                for s in args[0].args() {
                    Self::send(ctx, "query", "broker", f("price", vec![s.clone()]));
                }
            }
            ("inform", Some("price"), 2) => {
                self.prices.insert(name(0), int(1));
            }
            ("propose", Some("proceeds"), 3) => {
                Self::reply(ctx, m, "accept-proposal", f("accept", args.to_vec()));
            }
            ("inform", Some("sold"), 3) => {
                self.balance += int(2);
                if self.balance >= self.strategy.target && !self.subscribed {
                    self.subscribed = true;
                    Self::send(ctx, "subscribe", "auctioneer", c("auctions"));
                }
            }
            ("cfp", Some("bid"), 2) => {
                if self.balance >= int(1) && self.selling.is_none() {
                    Self::reply(ctx, m, "propose", m.content.clone());
                }
            }
            ("inform", Some("sold"), 2) => {
                self.balance -= int(1);
                self.selling = Some(name(0));
                for b in self.contacts.bidders.clone() {
                    let me = ctx.me().clone();
                    let content = f("sellProperty", vec![args[0].clone(), Term::int(int(1))]);
                    ctx.send(Message::new("cfp", me, hard_coded(&b.name), content));
                }
            }
            ("propose", Some("offer"), 2) => {
                // First offer wins; later ones are turned down.
                if !self.sold && self.selling.as_deref() == Some(name(0).as_str()) {
                    self.sold = true;
                    Self::reply(ctx, m, "accept-proposal", m.content.clone());
                } else {
                    Self::reply(ctx, m, "reject-proposal", m.content.clone());
                }
            }
            ("inform", Some("paid"), 2) => {
                self.balance += int(1);
                self.selling = None;
            }
            _ => {}
        }
    }
}

impl Behavior for ScriptedPlayer {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        if !self.started {
            self.started = true;
            Self::send(ctx, "request", "banker", c("openAccount"));
        }
        for m in ctx.take_inbox() {
            self.handle(ctx, &m);
        }
        let now = ctx.tick();
        let (due, later): (Vec<_>, Vec<_>) = self.sells.drain(..).partition(|(t, _, _)| *t <= now);
        self.sells = later;
        for (_, stock, qty) in due {
            Self::send(
                ctx,
                "request",
                "broker",
                f("sell", vec![c(&stock), Term::int(qty)]),
            );
        }
        Ok(())
    }

    fn is_idle(&self) -> bool {
        self.started && self.sells.is_empty()
    }
}
