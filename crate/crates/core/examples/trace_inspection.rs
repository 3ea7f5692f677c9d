//! Works from a saved trace only: lists the conversations, walks one of
//! them message by message, and recomputes the score.
//!
//! `cargo run --example trace_inspection`

use colloquy::game::{run_game, score_trace, GameConfig, PlayerKind, RunOptions};
use colloquy::inspect::{explain, explain_text, list_conversations};
use colloquy::repository::Repository;
use colloquy::runtime::Trace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = GameConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/games/default.game"))?;
    let result = run_game(&config, PlayerKind::Reference, RunOptions::default())?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("default.trace");
    result.trace.save(&path)?;

    let trace = Trace::load(&path)?;
    let listing = list_conversations(&trace)?;
    for line in listing.lines().filter(|l| l.starts_with("player-")) {
        println!("{line}");
    }

    let repo = Repository::bundled();
    for cid in ["player-1", "player-4"] {
        println!("\n{cid}:");
        print!("{}", explain_text(&explain(&trace, &repo, cid)?));
    }

    let score = score_trace(&trace)?;
    println!(
        "\nrecomputed capital {} (run reported {})",
        score.capital, result.capital
    );
    Ok(())
}
