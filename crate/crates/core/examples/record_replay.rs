//! Records a game, replays it from the random draws alone, and checks the
//! two traces are byte-identical. A tampered draw is caught as divergence.
//!
//! `cargo run --example record_replay`

use colloquy::game::{run_game, GameConfig, PlayerKind, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = GameConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/games/default.game"))?;
    let recorded = run_game(&config, PlayerKind::Reference, RunOptions::default())?;
    let draws = recorded.trace.draws();
    println!(
        "recorded {} records, {} random draws, hash {}",
        recorded.trace.len(),
        draws.len(),
        recorded.trace_hash()
    );

    let options = RunOptions {
        replay: Some(draws.clone()),
        ..RunOptions::default()
    };
    let replayed = run_game(&config, PlayerKind::Reference, options)?;
    println!("replayed hash {}", replayed.trace_hash());
    assert_eq!(recorded.trace.to_text(), replayed.trace.to_text());

    // Change the bounds of the first draw: the replay notices immediately.
    let mut tampered = draws;
    tampered[0].hi += 1;
    let options = RunOptions {
        replay: Some(tampered),
        ..RunOptions::default()
    };
    match run_game(&config, PlayerKind::Reference, options) {
        Err(e) if e.is_replay_divergence() => println!("tampered replay: {e}"),
        Err(e) => return Err(e.into()),
        Ok(_) => unreachable!("a changed draw request cannot replay"),
    }
    Ok(())
}
