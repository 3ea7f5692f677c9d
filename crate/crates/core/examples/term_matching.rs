//! One-way matching of content patterns against ground message content,
//! and the write-once bindings it produces.
//!
//! `cargo run --example term_matching`

use colloquy::term::{match_pattern, parse_term, substitute, BindingSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pattern = parse_term("cost(?stock,?qty,?total)")?;
    let content = parse_term("cost(acme,236,9676)")?;

    let bindings = match_pattern(&pattern, &content, &BindingSet::new()).expect("shapes agree");
    for (name, value) in bindings.iter() {
        println!("?{name} = {value}");
    }
    // Substituting the bindings back gives the content we matched.
    assert_eq!(substitute(&pattern, &bindings), content);

    // Bindings are write-once: once ?stock is acme, zinc cannot match.
    let later = parse_term("purchased(?stock,?qty,?total)")?;
    let wrong = parse_term("purchased(zinc,236,9676)")?;
    println!(
        "purchased(zinc,...) after cost(acme,...): {:?}",
        match_pattern(&later, &wrong, &bindings).map(|_| ())
    );

    // A repeated variable must match the same value in both places.
    let twice = parse_term("pair(?x,?x)")?;
    for ground in ["pair(a,a)", "pair(a,b)"] {
        let ok = match_pattern(&twice, &parse_term(ground)?, &BindingSet::new()).is_some();
        println!(
            "pair(?x,?x) vs {ground}: {}",
            if ok { "match" } else { "no match" }
        );
    }
    Ok(())
}
