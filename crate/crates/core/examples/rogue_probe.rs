//! Probes each scripted player with forged and out-of-sequence messages
//! and with relocated core agents, then prints the reports.
//!
//! `cargo run --example rogue_probe`

use colloquy::game::{GameConfig, PlayerKind};
use colloquy::probe::{explain_report, probe_player, Issue};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = GameConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/games/default.game"))?;
    let checks = Issue::ALL.into_iter().collect();
    for player in [
        PlayerKind::Reference,
        PlayerKind::Partial,
        PlayerKind::Naive,
    ] {
        let report = probe_player(&config, player, &checks)?;
        println!("{}", explain_report(&report));
    }
    Ok(())
}
