//! Conversation management for message-passing agents.
//!
//! Agents talk in [`term`]s. Each interaction follows a finite-state
//! [`protocol`] fetched from a [`repository`], and a per-agent
//! [`conversation::ConversationManager`] checks every message against the
//! conversations it already has open. Messages that fit nowhere are
//! reported as unmatched and never reach agent logic.
//!
//! The [`runtime`] is a deterministic tick-based platform with a recorded
//! trace and replayable random draws. On top of it, [`game`] runs a small
//! asset-trading economy, [`probe`] attacks a player with forged and
//! out-of-order messages, and [`inspect`] reads recorded traces back.

pub mod agent;
pub mod cli;
pub mod conversation;
pub mod game;
pub mod inspect;
pub mod probe;
pub mod protocol;
pub mod repository;
pub mod runtime;
pub mod term;
