use super::simplify::simplify;
use super::syntax::{Formula, LabelSet};

/// Residual obligation after consuming one label, in canonical form.
pub fn progress(label: LabelSet, f: &Formula) -> Formula {
    simplify(&progress_raw(label, f))
}

fn progress_raw(label: LabelSet, f: &Formula) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::Prop(p) => {
            if label.contains(p.id()) {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::Not(a) => Formula::not(progress_raw(label, a)),
        Formula::And(a, b) => Formula::and(progress_raw(label, a), progress_raw(label, b)),
        Formula::Or(a, b) => Formula::or(progress_raw(label, a), progress_raw(label, b)),
        Formula::Next(a) => (**a).clone(),
        Formula::Eventually(a) => Formula::or(progress_raw(label, a), f.clone()),
        Formula::Always(a) => Formula::and(progress_raw(label, a), f.clone()),
        Formula::Until(a, b) => Formula::or(
            progress_raw(label, b),
            Formula::and(progress_raw(label, a), f.clone()),
        ),
    }
}

/// Verdict on a residual produced by [`progress`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Settled {
    /// The word consumed so far satisfies the task if it ends here.
    Satisfied,
    /// No continuation can satisfy the task.
    Falsified,
    Pending(Formula),
}

/// Classifies a residual.
///
/// A residual is satisfied when it is `true` or when it only carries
/// obligations that an ending word meets vacuously (`G` conjuncts, negated
/// eventualities). For `X`-free tasks this is exact: the word consumed so far
/// satisfies the original formula iff its residual settles as satisfied.
pub fn settle(residual: Formula) -> Settled {
    match residual {
        Formula::False => Settled::Falsified,
        f if holds_on_empty(&f) => Settled::Satisfied,
        f => Settled::Pending(f),
    }
}

/// Truth value on the empty continuation past the last position: propositions
/// and `X`, `F`, `U` are false there, `G` is vacuously true, booleans compose.
pub fn holds_on_empty(f: &Formula) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Prop(_) => false,
        Formula::Not(a) => !holds_on_empty(a),
        Formula::And(a, b) => holds_on_empty(a) && holds_on_empty(b),
        Formula::Or(a, b) => holds_on_empty(a) || holds_on_empty(b),
        Formula::Next(_) | Formula::Eventually(_) | Formula::Until(..) => false,
        Formula::Always(_) => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{parse, Alphabet};

    #[test]
    fn black_zone_progression() {
        let ab = Alphabet::new(["Black_Zone", "White_Zone", "Red_Zone", "Yellow_Zone"]).unwrap();
        let f = parse("F (Black_Zone & F White_Zone) & G !Red_Zone & G !Yellow_Zone", &ab).unwrap();
        let got = progress(ab.label(["Black_Zone"]).unwrap(), &f);
        let want = simplify(&parse("F White_Zone & G !Red_Zone & G !Yellow_Zone", &ab).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn next_drops_one_step() {
        let ab = Alphabet::new(["a", "b"]).unwrap();
        let inner = parse("a U b", &ab).unwrap();
        let f = Formula::next(inner.clone());
        for label in ab.all_labels() {
            assert_eq!(progress(label, &f), simplify(&inner));
        }
    }

    #[test]
    fn until_unchanged_when_neither_side_fires() {
        let ab = Alphabet::new(["a", "b", "c", "d"]).unwrap();
        let f = simplify(&parse("!c U (a & (!d U b))", &ab).unwrap());
        assert_eq!(progress(ab.label(["b"]).unwrap(), &f), f);
    }

    #[test]
    fn settle_classification() {
        let ab = Alphabet::new(["office", "dec"]).unwrap();
        let f = parse("F office & G !dec", &ab).unwrap();
        assert_eq!(settle(progress(ab.label(["office"]).unwrap(), &f)), Settled::Satisfied);
        assert_eq!(settle(progress(ab.label(["dec"]).unwrap(), &f)), Settled::Falsified);
        assert_eq!(
            settle(progress(LabelSet::EMPTY, &f)),
            Settled::Pending(simplify(&f))
        );
    }
}
