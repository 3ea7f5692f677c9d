//! Parses a protocol written in the line-oriented DSL, reports its
//! well-formedness diagnostics, and prints the canonical form.
//!
//! `cargo run --example protocol_validation`

use colloquy::protocol::{parse_protocol, serialize_protocol, validate_protocol};

const BROKEN: &str = "\
protocol demo/ask 1.0
state start initial
state asked normal
state answered terminal
state orphan normal
transition start -> asked : query from ?me to ?you content question(?q)
transition asked -> answered : inform from ?you to ?me content answer(?q,?a)
transition answered -> asked : query from ?me to ?you content again
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let protocol = parse_protocol(BROKEN)?;
    println!(
        "{} has {} transitions",
        protocol.id(),
        protocol.transitions().len()
    );
    for d in validate_protocol(&protocol) {
        println!("  {d}");
    }

    let fixed = BROKEN
        .lines()
        .filter(|l| !l.contains("orphan") && !l.starts_with("transition answered"))
        .collect::<Vec<_>>()
        .join("\n");
    let protocol = parse_protocol(&fixed)?;
    assert!(validate_protocol(&protocol).is_empty());
    println!("\nafter fixing:\n{}", serialize_protocol(&protocol));
    Ok(())
}
