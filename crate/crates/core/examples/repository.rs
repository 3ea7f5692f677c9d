//! Loads the bundled protocol repository from disk and looks protocols up
//! by name and version.
//!
//! `cargo run --example repository`

use colloquy::repository::load_repository;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/protocols");
    let repo = load_repository(dir)?;
    println!("{} protocols in {dir}", repo.len());
    for (id, file) in repo.index() {
        println!("  {:<32} {file}", id.to_string());
    }

    let buy = repo.lookup("trading/broker-buy", "1.0")?;
    println!("\n{} starts in {:?}:", buy.id(), buy.initial_state());
    for t in buy.initiating_transitions() {
        println!("  {t}");
    }

    match repo.lookup("trading/broker-buy", "2.0") {
        Ok(_) => unreachable!("only 1.0 is bundled"),
        Err(e) => println!("\n{e}"),
    }
    Ok(())
}
