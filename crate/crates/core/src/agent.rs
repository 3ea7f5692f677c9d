//! Glue between a [`ConversationManager`] and the platform.
//!
//! An [`EngineHandle`] routes every send and receive through the agent's
//! manager and copies the resulting events into the trace, so behaviors
//! never have to remember either step. The handle is cheaply clonable; a
//! clone kept outside the platform lets tests and the probe inspect the
//! manager after a run.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::conversation::{Conversation, ConversationManager, Direction, MatchOutcome};
use crate::protocol::ProtocolId;
use crate::runtime::{AgentContext, AgentId, BehaviorError, Message};
use crate::term::Term;

#[derive(Debug, Clone)]
pub struct EngineHandle(Rc<RefCell<ConversationManager>>);

impl EngineHandle {
    pub fn new(manager: ConversationManager) -> Self {
        EngineHandle(Rc::new(RefCell::new(manager)))
    }

    pub fn manager(&self) -> Ref<'_, ConversationManager> {
        self.0.borrow()
    }

    /// A snapshot of one conversation.
    pub fn conversation(&self, cid: &str) -> Option<Conversation> {
        self.0.borrow().inspect(cid).ok().cloned()
    }

    fn flush(&self, ctx: &mut AgentContext<'_>) {
        let events = self.0.borrow_mut().take_events();
        ctx.record_events(&events);
    }

    /// Advances the manager's clock; call once at the top of every step.
    pub fn tick(&self, ctx: &mut AgentContext<'_>) {
        self.0.borrow_mut().tick(ctx.tick());
        self.flush(ctx);
    }

    pub fn receive(&self, ctx: &mut AgentContext<'_>, msg: &Message) -> MatchOutcome {
        let out = self
            .0
            .borrow_mut()
            .process_message(msg, Direction::Incoming);
        self.flush(ctx);
        out
    }

    pub fn start(
        &self,
        ctx: &mut AgentContext<'_>,
        protocol: &ProtocolId,
        receiver: &AgentId,
        performative: &str,
        content: Term,
    ) -> Result<String, BehaviorError> {
        let started =
            self.0
                .borrow_mut()
                .start_conversation(protocol, receiver, performative, content);
        self.flush(ctx);
        let (cid, msg) = started?;
        ctx.send(msg);
        Ok(cid)
    }

    pub fn reply(
        &self,
        ctx: &mut AgentContext<'_>,
        cid: &str,
        performative: &str,
        content: Term,
    ) -> Result<(), BehaviorError> {
        let advanced = self
            .0
            .borrow_mut()
            .advance_conversation(cid, performative, content);
        self.flush(ctx);
        ctx.send(advanced?);
        Ok(())
    }

    /// Sends a message outside any conversation operation. The manager still
    /// sees it, so it may passively start or advance a conversation.
    pub fn send_raw(&self, ctx: &mut AgentContext<'_>, mut msg: Message) -> MatchOutcome {
        msg.sender = ctx.me().clone();
        let out = self
            .0
            .borrow_mut()
            .process_message(&msg, Direction::Outgoing);
        self.flush(ctx);
        ctx.send(msg);
        out
    }

    pub fn cancel(
        &self,
        ctx: &mut AgentContext<'_>,
        cid: &str,
        reason: &str,
    ) -> Result<(), BehaviorError> {
        let cancelled = self.0.borrow_mut().cancel_conversation(cid, reason);
        self.flush(ctx);
        let (_, msg) = cancelled?;
        ctx.send(msg);
        Ok(())
    }
}
