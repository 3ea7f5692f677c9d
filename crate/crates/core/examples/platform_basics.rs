//! The tick platform on its own: two agents, one-tick message latency, a
//! recorded random draw, and a run that stops once nothing is left to do.
//!
//! `cargo run --example platform_basics`

use colloquy::runtime::{AgentContext, AgentId, Behavior, BehaviorError, Message, Platform};
use colloquy::term::Term;

/// Sends three numbered pings, one per tick.
struct Pinger {
    sent: i64,
}

impl Behavior for Pinger {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        for m in ctx.take_inbox() {
            println!(
                "tick {}: pinger got {} {}",
                ctx.tick(),
                m.performative,
                m.content
            );
        }
        if self.sent < 3 {
            self.sent += 1;
            let me = ctx.me().clone();
            let content = Term::compound("ping", vec![Term::int(self.sent)]);
            ctx.send(Message::new(
                "inform",
                me,
                AgentId::local("ponger"),
                content,
            ));
        }
        Ok(())
    }

    fn is_idle(&self) -> bool {
        self.sent >= 3
    }
}

/// Answers each ping with a random number.
struct Ponger;

impl Behavior for Ponger {
    fn step(&mut self, ctx: &mut AgentContext<'_>) -> Result<(), BehaviorError> {
        for m in ctx.take_inbox() {
            let roll = ctx.random("dice", 1, 6)?;
            let me = ctx.me().clone();
            let content =
                Term::compound("pong", vec![m.content.args()[0].clone(), Term::int(roll)]);
            ctx.send(Message::new("inform", me, m.sender, content));
        }
        Ok(())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut platform = Platform::new(42);
    platform.register(AgentId::local("pinger"), Box::new(Pinger { sent: 0 }))?;
    platform.register(AgentId::local("ponger"), Box::new(Ponger))?;
    let report = platform.run(100)?;
    println!(
        "\nstopped after {} ticks (quiescent: {})",
        report.ticks, report.quiescent
    );
    print!("{}", platform.trace().to_text());
    println!("hash {}", report.trace_hash);
    Ok(())
}
