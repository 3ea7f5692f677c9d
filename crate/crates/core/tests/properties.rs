use proptest::prelude::*;

use colloquy::game::{price_step, property_step};
use colloquy::probe::Susceptibility;
use colloquy::runtime::{RandomSource, Trace, TraceRecord};
use colloquy::term::{format_term, match_pattern, parse_term, substitute, BindingSet, Term};

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-zA-Z0-9_]{0,6}"
}

fn term(vars: bool) -> impl Strategy<Value = Term> {
    let ground = prop_oneof![
        ident().prop_map(Term::constant),
        any::<i64>().prop_map(Term::int),
        any::<String>().prop_map(Term::string),
    ];
    let leaf = if vars {
        prop_oneof![3 => ground, 1 => "[A-Za-z][a-zA-Z0-9_]{0,4}".prop_map(Term::var)].boxed()
    } else {
        ground.boxed()
    };
    leaf.prop_recursive(4, 32, 4, |inner| {
        (ident(), prop::collection::vec(inner, 1..4)).prop_map(|(f, args)| Term::compound(f, args))
    })
}

/// A pattern plus a ground value for every variable in it.
fn pattern_and_assignment() -> impl Strategy<Value = (Term, BindingSet)> {
    term(true)
        .prop_flat_map(|p| {
            let mut vars: Vec<String> = p.variables().into_iter().map(str::to_string).collect();
            vars.sort();
            vars.dedup();
            let n = vars.len();
            (Just(p), Just(vars), prop::collection::vec(term(false), n))
        })
        .prop_map(|(p, vars, values)| (p, vars.into_iter().zip(values).collect()))
}

proptest! {
    #[test]
    fn terms_round_trip(t in term(true)) {
        let text = format_term(&t);
        let back = parse_term(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(format_term(&back), text);
    }

    #[test]
    fn instances_always_match((p, sigma) in pattern_and_assignment()) {
        let ground = substitute(&p, &sigma);
        prop_assert!(ground.is_ground());
        let found = match_pattern(&p, &ground, &BindingSet::new());
        prop_assert!(found.is_some());
        prop_assert_eq!(substitute(&p, &found.unwrap()), ground);
    }

    #[test]
    fn matching_only_extends_prior_bindings(p in term(true), g in term(false), extra in term(false)) {
        let mut prior = BindingSet::new();
        if let Some(v) = p.variables().first() {
            prior.bind(v, extra).unwrap();
        }
        if let Some(b) = match_pattern(&p, &g, &prior) {
            prop_assert!(b.extends(&prior));
            prop_assert_eq!(substitute(&p, &b), g);
        }
    }

    #[test]
    fn trace_text_round_trips(mut rows in prop::collection::vec((0u64..1000, prop::collection::vec("[!-~ ]{1,12}", 1..5)), 0..20)) {
        rows.sort_by_key(|r| r.0);
        let mut trace = Trace::new();
        for (tick, fields) in rows {
            trace.push(TraceRecord::game(tick, fields));
        }
        let text = trace.to_text();
        let back = Trace::parse(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
        prop_assert_eq!(back.hash(), trace.hash());
    }

    #[test]
    fn stock_prices_only_rise(price in 1i64..1_000_000, draw in 1i64..100) {
        prop_assert!(price_step(price, draw) > price);
    }

    #[test]
    fn property_values_never_fall(value in 0i64..10_000_000, num in 0i64..100, den in 1i64..1000) {
        let next = property_step(value, num, den);
        prop_assert!(next >= value);
        if value > 0 && num > 0 {
            prop_assert!(next > value);
        }
    }

    #[test]
    fn draws_stay_in_range_and_repeat(seed in any::<u64>(), lo in -1000i64..1000, width in 0i64..1000) {
        let hi = lo + width;
        let mut a = RandomSource::seeded(seed);
        let mut b = RandomSource::seeded(seed);
        for tick in 0..20 {
            let x = a.draw(tick, "s", lo, hi).unwrap();
            prop_assert!((lo..=hi).contains(&x));
            // Draws on another stream must not shift this one.
            b.draw(tick, "other", 0, 9).unwrap();
            prop_assert_eq!(b.draw(tick, "s", lo, hi).unwrap(), x);
        }
        let mut replay = RandomSource::replaying(a.drawn().to_vec());
        for (tick, d) in a.drawn().iter().enumerate() {
            prop_assert_eq!(replay.draw(tick as u64, "s", lo, hi).unwrap(), d.value);
        }
        prop_assert!(replay.finish().is_ok());
    }

    #[test]
    fn rubric_partitions_counts(injected in 1usize..10, accepted in 0usize..10) {
        let accepted = accepted.min(injected);
        let class = Susceptibility::classify(accepted, injected);
        let expected = if accepted == 0 {
            Susceptibility::Not
        } else if accepted == injected {
            Susceptibility::Totally
        } else {
            Susceptibility::Somewhat
        };
        prop_assert_eq!(class, expected);
    }
}
