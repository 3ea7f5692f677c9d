//! Runs the bundled default game with each scripted player and prints the
//! summary, including which protocols were completed and when.
//!
//! `cargo run --example trading_game [-- path/to/config.game]`

use colloquy::game::{run_game, GameConfig, PlayerKind, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/games/default.game").to_string());
    let config = GameConfig::load(&path)?;
    for kind in PlayerKind::ALL {
        let result = run_game(&config, kind, RunOptions::default())?;
        println!("== {kind}");
        print!("{}", result.summary());
    }
    Ok(())
}
