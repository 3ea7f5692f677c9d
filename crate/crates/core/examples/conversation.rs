//! Two conversation managers talking directly, without the platform: the
//! player opens a bank account, then a third party tries to butt in.
//!
//! `cargo run --example conversation`

use std::sync::Arc;

use colloquy::conversation::{ConversationManager, Direction};
use colloquy::game::protocol;
use colloquy::repository::Repository;
use colloquy::runtime::{AgentId, Message};
use colloquy::term::parse_term;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let repo = Arc::new(Repository::bundled());
    let player_id = AgentId::local("player");
    let banker_id = AgentId::local("banker");
    let mut player = ConversationManager::new(player_id.clone(), repo.clone());
    let mut banker = ConversationManager::new(banker_id.clone(), repo);

    // The player starts the conversation; the banker picks it up passively.
    let (cid, request) = player.start_conversation(
        &protocol("open"),
        &banker_id,
        "request",
        parse_term("openAccount")?,
    )?;
    let seen = banker.process_message(&request, Direction::Incoming);
    let banker_cid = seen.cid.expect("the request initiates open");
    println!(
        "player {cid} -> banker {banker_cid}: {} {}",
        request.performative, request.content
    );

    // An eavesdropper claims the account was opened. The player's manager
    // knows the banker is the counterpart and refuses to advance.
    let rogue = AgentId::local("rogue");
    let forged = Message::new(
        "inform",
        rogue,
        player_id.clone(),
        parse_term("openedAccount(acc9,1000000)")?,
    );
    let out = player.process_message(&forged, Direction::Incoming);
    println!("forged reply: {:?} ({:?})", out.kind, out.reason);

    let reply = banker.advance_conversation(
        &banker_cid,
        "inform",
        parse_term("openedAccount(acc1,10000)")?,
    )?;
    player.process_message(&reply, Direction::Incoming);

    let conv = player.inspect(&cid)?;
    println!(
        "{cid}: state {} status {} path {:?}",
        conv.state(),
        conv.status(),
        conv.path()
    );
    println!(
        "bound ?id = {}",
        conv.bindings().get("id").expect("bound on inform")
    );
    for e in player.event_log() {
        println!("  event: {}", e.kind());
    }
    Ok(())
}
