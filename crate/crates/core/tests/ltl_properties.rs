use proptest::prelude::*;

use t2tl::ltl::{
    closure_with, evaluate, holds_on_empty, implies, parse, progress, satisfaction, settle, simplify, Alphabet, Formula,
    ClosureLimits, LabelSet, Settled, TaskRef,
};

const NAMES: [&str; 4] = ["a", "b", "c", "d"];

fn alphabet() -> Alphabet {
    Alphabet::new(NAMES).unwrap()
}

fn formula(depth: u32) -> BoxedStrategy<Formula> {
    let ab = alphabet();
    let props: Vec<Formula> = ab.props().iter().map(Formula::prop).collect();
    let leaf = prop_oneof![
        1 => Just(Formula::True),
        1 => Just(Formula::False),
        6 => proptest::sample::select(props),
    ];
    leaf.prop_recursive(depth, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            inner.clone().prop_map(Formula::next),
            inner.clone().prop_map(Formula::eventually),
            inner.clone().prop_map(Formula::always),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::until(a, b)),
        ]
    })
    .boxed()
}

fn next_free(depth: u32) -> BoxedStrategy<Formula> {
    formula(depth).prop_filter("no X", |f| !f.contains_next()).boxed()
}

fn word(max_len: usize) -> impl Strategy<Value = Vec<LabelSet>> {
    proptest::collection::vec((0u64..16).prop_map(LabelSet::from_bits), 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn progression_preserves_satisfaction(f in formula(4), w in word(8)) {
        for i in 0..w.len() - 1 {
            let lhs = evaluate(&w, i, &f).unwrap();
            let rhs = evaluate(&w, i + 1, &progress(w[i], &f)).unwrap();
            prop_assert_eq!(lhs, rhs, "formula {} at {}", f, i);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3_000))]

    #[test]
    fn simplify_preserves_semantics(f in formula(4), w in word(8)) {
        let g = simplify(&f);
        prop_assert_eq!(holds_on_empty(&f), holds_on_empty(&g), "{} vs {} past the end", f, g);
        for i in 0..w.len() {
            prop_assert_eq!(evaluate(&w, i, &f).unwrap(), evaluate(&w, i, &g).unwrap(), "{} vs {}", f, g);
        }
    }

    #[test]
    fn simplify_is_idempotent(f in formula(4)) {
        let g = simplify(&f);
        prop_assert_eq!(simplify(&g), g);
    }

    #[test]
    fn progress_output_is_canonical(f in formula(4), bits in 0u64..16) {
        let g = progress(LabelSet::from_bits(bits), &f);
        prop_assert_eq!(simplify(&g), g);
    }

    #[test]
    fn format_round_trips(f in formula(4)) {
        let ab = alphabet();
        let canonical = simplify(&f);
        prop_assert_eq!(parse(&canonical.to_string(), &ab).unwrap(), canonical.clone());
        // raw trees round-trip structurally as well
        prop_assert_eq!(parse(&f.to_string(), &ab).unwrap(), f);
    }

    #[test]
    fn implication_check_is_sound(a in formula(3), b in formula(3), w in word(6)) {
        if implies(&a, &b) {
            prop_assert!(!holds_on_empty(&a) || holds_on_empty(&b), "{} should imply {} past the end", a, b);
            for i in 0..w.len() {
                if evaluate(&w, i, &a).unwrap() {
                    prop_assert!(evaluate(&w, i, &b).unwrap(), "{} should imply {}", a, b);
                }
            }
        }
    }

    #[test]
    fn satisfaction_vector_agrees_with_evaluate(f in formula(4), w in word(8)) {
        let v = satisfaction(&w, &f);
        for i in 0..w.len() {
            prop_assert_eq!(v[i], evaluate(&w, i, &f).unwrap());
        }
    }

    #[test]
    fn settled_verdict_matches_word_satisfaction(f in next_free(4), w in word(8)) {
        // Consume the whole word; a satisfied verdict means the word satisfies f.
        let mut residual = f.clone();
        let mut verdict = None;
        for (k, &label) in w.iter().enumerate() {
            match settle(progress(label, &residual)) {
                Settled::Pending(g) => residual = g,
                v => {
                    verdict = Some((k, v));
                    break;
                }
            }
        }
        match verdict {
            Some((k, Settled::Satisfied)) => prop_assert!(evaluate(&w[..=k], 0, &f).unwrap()),
            Some((k, Settled::Falsified)) => {
                prop_assert!(!evaluate(&w[..=k], 0, &f).unwrap());
                prop_assert!(!evaluate(&w, 0, &f).unwrap());
            }
            Some((_, Settled::Pending(_))) => unreachable!(),
            None => prop_assert!(!evaluate(&w, 0, &f).unwrap()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn closure_is_closed(f in formula(3)) {
        let ab = alphabet();
        let limits = ClosureLimits { max_members: 32, ..ClosureLimits::default() };
        if let Ok(ts) = closure_with(&f, &ab, limits) {
            prop_assert_eq!(ts.key(0), simplify(&f).to_string());
            for (i, member) in ts.members().iter().enumerate() {
                prop_assert!(!member.is_constant());
                for label in ab.all_labels() {
                    let next = ts.step(i, label);
                    match settle(progress(label, member)) {
                        Settled::Pending(g) => prop_assert_eq!(next, TaskRef::Active(ts.index_of(&g).unwrap())),
                        Settled::Satisfied => prop_assert_eq!(next, TaskRef::Satisfied),
                        Settled::Falsified => prop_assert_eq!(next, TaskRef::Falsified),
                    }
                }
            }
        }
    }
}
