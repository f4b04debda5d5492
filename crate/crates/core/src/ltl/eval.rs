use super::syntax::{Formula, LabelSet};
use super::LtlError;

/// Finite-trace satisfaction `<w, i> |= f`, computed directly from the
/// quantified definitions. `X` is strong: it fails at the last position.
pub fn evaluate(word: &[LabelSet], i: usize, f: &Formula) -> Result<bool, LtlError> {
    if i >= word.len() {
        return Err(LtlError::PositionOutOfRange {
            position: i,
            len: word.len(),
        });
    }
    Ok(holds(word, i, f))
}

fn holds(w: &[LabelSet], i: usize, f: &Formula) -> bool {
    let last = w.len() - 1;
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Prop(p) => w[i].contains(p.id()),
        Formula::Not(a) => !holds(w, i, a),
        Formula::And(a, b) => holds(w, i, a) && holds(w, i, b),
        Formula::Or(a, b) => holds(w, i, a) || holds(w, i, b),
        Formula::Next(a) => i < last && holds(w, i + 1, a),
        Formula::Eventually(a) => (i..=last).any(|j| holds(w, j, a)),
        Formula::Always(a) => (i..=last).all(|j| holds(w, j, a)),
        Formula::Until(a, b) => {
            (i..=last).any(|j| holds(w, j, b) && (i..j).all(|k| holds(w, k, a)))
        }
    }
}

/// Truth value of `f` at every position of `word`, computed backwards in one
/// pass per subformula. Agrees with [`evaluate`]; linear in the word length,
/// so it is the one to use on long traces.
pub fn satisfaction(word: &[LabelSet], f: &Formula) -> Vec<bool> {
    let n = word.len();
    match f {
        Formula::True => vec![true; n],
        Formula::False => vec![false; n],
        Formula::Prop(p) => word.iter().map(|l| l.contains(p.id())).collect(),
        Formula::Not(a) => satisfaction(word, a).into_iter().map(|v| !v).collect(),
        Formula::And(a, b) => zip(satisfaction(word, a), satisfaction(word, b), |x, y| x && y),
        Formula::Or(a, b) => zip(satisfaction(word, a), satisfaction(word, b), |x, y| x || y),
        Formula::Next(a) => {
            let sa = satisfaction(word, a);
            (0..n).map(|i| i + 1 < n && sa[i + 1]).collect()
        }
        Formula::Eventually(a) => backward(satisfaction(word, a), |here, later| here || later, false),
        Formula::Always(a) => backward(satisfaction(word, a), |here, later| here && later, true),
        Formula::Until(a, b) => {
            let sa = satisfaction(word, a);
            let sb = satisfaction(word, b);
            let mut out = vec![false; n];
            let mut later = false;
            for i in (0..n).rev() {
                later = sb[i] || (sa[i] && later);
                out[i] = later;
            }
            out
        }
    }
}

fn zip(a: Vec<bool>, b: Vec<bool>, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect()
}

fn backward(mut v: Vec<bool>, op: impl Fn(bool, bool) -> bool, past_end: bool) -> Vec<bool> {
    let mut later = past_end;
    for x in v.iter_mut().rev() {
        later = op(*x, later);
        *x = later;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{parse, Alphabet};

    #[test]
    fn evaluate_examples() {
        let ab = Alphabet::new(["a", "black", "white", "red"]).unwrap();
        let w = [ab.label(["a"]).unwrap()];
        assert!(evaluate(&w, 0, &parse("a", &ab).unwrap()).unwrap());

        let w = [
            LabelSet::EMPTY,
            ab.label(["black"]).unwrap(),
            ab.label(["white"]).unwrap(),
        ];
        let f = parse("F (black & F white)", &ab).unwrap();
        assert!(evaluate(&w, 0, &f).unwrap());
        // white before black does not count
        let swapped = [w[0], w[2], w[1]];
        assert!(!evaluate(&swapped, 0, &f).unwrap());

        let w = [ab.label(["red"]).unwrap()];
        assert!(!evaluate(&w, 0, &parse("G !red", &ab).unwrap()).unwrap());
    }

    #[test]
    fn next_is_strong_at_the_end() {
        let ab = Alphabet::new(["a"]).unwrap();
        let w = [ab.label(["a"]).unwrap()];
        assert!(!evaluate(&w, 0, &parse("X true", &ab).unwrap()).unwrap());
        assert!(evaluate(&w, 0, &parse("!X a", &ab).unwrap()).unwrap());
    }

    #[test]
    fn position_out_of_range() {
        let ab = Alphabet::new(["a"]).unwrap();
        let f = parse("a", &ab).unwrap();
        assert_eq!(
            evaluate(&[LabelSet::EMPTY], 1, &f),
            Err(LtlError::PositionOutOfRange { position: 1, len: 1 })
        );
        assert!(evaluate(&[], 0, &f).is_err());
    }

    #[test]
    fn satisfaction_vector_matches_definition() {
        let ab = Alphabet::new(["a", "b", "c"]).unwrap();
        let a = ab.label(["a"]).unwrap();
        let b = ab.label(["b"]).unwrap();
        let c = ab.label(["c"]).unwrap();
        let w = [a, a, c, b, LabelSet::EMPTY, a.with(1)];
        for text in ["a U b", "F (c & F b)", "G !b", "X X c", "!(a U (b | c))", "(F a) U c"] {
            let f = parse(text, &ab).unwrap();
            let v = satisfaction(&w, &f);
            for i in 0..w.len() {
                assert_eq!(v[i], evaluate(&w, i, &f).unwrap(), "{text} at {i}");
            }
        }
    }
}
