use super::progress::holds_on_empty;
use super::syntax::Formula;

/// Rewrites a formula into canonical form.
///
/// Every rule preserves the truth value at each position of every word and
/// also on the empty continuation past the last position (see
/// [`holds_on_empty`]), so progressed residuals keep their verdicts. Rules, applied bottom-up until nothing changes: constant folding, double
/// negation, De Morgan (negation only ever sits on propositions or temporal
/// nodes), flattening of `&`/`|` chains, idempotence, complement detection,
/// absorption of operands implied by a sibling, and sorting of operands by
/// their rendered string. Chains are rebuilt right-nested.
pub fn simplify(f: &Formula) -> Formula {
    let mut current = step(f);
    loop {
        let next = step(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

pub fn is_canonical(f: &Formula) -> bool {
    simplify(f) == *f
}

fn step(f: &Formula) -> Formula {
    match f {
        Formula::True | Formula::False | Formula::Prop(_) => f.clone(),
        Formula::Not(a) => negate(&step(a)),
        Formula::And(..) => junction(f, Junction::And),
        Formula::Or(..) => junction(f, Junction::Or),
        Formula::Next(a) => match step(a) {
            Formula::False => Formula::False,
            a => Formula::next(a),
        },
        Formula::Eventually(a) => match step(a) {
            Formula::False => Formula::False,
            Formula::Eventually(inner) => Formula::Eventually(inner),
            a => Formula::eventually(a),
        },
        Formula::Always(a) => match step(a) {
            Formula::True => Formula::True,
            Formula::Always(inner) => Formula::Always(inner),
            a => Formula::always(a),
        },
        Formula::Until(a, b) => match (step(a), step(b)) {
            (_, Formula::False) => Formula::False,
            (Formula::True, b) => Formula::eventually(b),
            (a, b) => Formula::until(a, b),
        },
    }
}

/// Negation of an already simplified formula, pushed through `&`/`|`.
fn negate(f: &Formula) -> Formula {
    match f {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Not(inner) => (**inner).clone(),
        Formula::And(a, b) => junction(
            &Formula::or(negate(a), negate(b)),
            Junction::Or,
        ),
        Formula::Or(a, b) => junction(
            &Formula::and(negate(a), negate(b)),
            Junction::And,
        ),
        _ => Formula::not(f.clone()),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Junction {
    And,
    Or,
}

impl Junction {
    fn unit(self) -> Formula {
        match self {
            Junction::And => Formula::True,
            Junction::Or => Formula::False,
        }
    }

    fn zero(self) -> Formula {
        match self {
            Junction::And => Formula::False,
            Junction::Or => Formula::True,
        }
    }

    fn dual(self) -> Junction {
        match self {
            Junction::And => Junction::Or,
            Junction::Or => Junction::And,
        }
    }

    fn split(self, f: &Formula) -> Option<(&Formula, &Formula)> {
        match (self, f) {
            (Junction::And, Formula::And(a, b)) | (Junction::Or, Formula::Or(a, b)) => Some((a, b)),
            _ => None,
        }
    }

    fn build(self, a: Formula, b: Formula) -> Formula {
        match self {
            Junction::And => Formula::and(a, b),
            Junction::Or => Formula::or(a, b),
        }
    }

    /// True when `redundant` adds nothing next to `kept`.
    fn subsumes(self, kept: &Formula, redundant: &Formula) -> bool {
        match self {
            Junction::And => implies(kept, redundant),
            Junction::Or => implies(redundant, kept),
        }
    }
}

fn flatten(f: &Formula, j: Junction, out: &mut Vec<Formula>) {
    match j.split(f) {
        Some((a, b)) => {
            flatten(a, j, out);
            flatten(b, j, out);
        }
        None => out.push(f.clone()),
    }
}

fn junction(f: &Formula, j: Junction) -> Formula {
    let mut raw = Vec::new();
    flatten(f, j, &mut raw);
    let mut operands = Vec::with_capacity(raw.len());
    for op in raw {
        // operands of a simplified child may themselves be chains
        flatten(&step(&op), j, &mut operands);
    }

    let unit = j.unit();
    let zero = j.zero();
    if operands.contains(&zero) {
        return zero;
    }
    operands.retain(|op| *op != unit);
    if operands.len() > 1 {
        operands = (0..operands.len())
            .map(|i| drop_siblings(&operands, i, j))
            .collect();
        if operands.contains(&zero) {
            return zero;
        }
        operands.retain(|op| *op != unit);
    }

    let mut keyed: Vec<(String, Formula)> = operands.into_iter().map(|f| (f.to_string(), f)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);

    for (_, op) in &keyed {
        if let Formula::Not(inner) = op {
            if keyed.iter().any(|(_, other)| other == &**inner) {
                return zero;
            }
        }
    }

    let mut kept: Vec<(String, Formula)> = Vec::with_capacity(keyed.len());
    for (key, op) in keyed {
        if kept.iter().any(|(_, k)| j.subsumes(k, &op)) {
            continue;
        }
        kept.retain(|(_, k)| !j.subsumes(&op, k));
        kept.push((key, op));
    }

    let mut iter = kept.into_iter().rev().map(|(_, f)| f);
    match iter.next() {
        None => unit,
        Some(last) => iter.fold(last, |acc, f| j.build(f, acc)),
    }
}

/// `A & (B | (A & C))` becomes `A & (B | C)`, and dually for `|`: inside a
/// dual-junction operand, copies of sibling operands are redundant.
fn drop_siblings(operands: &[Formula], i: usize, j: Junction) -> Formula {
    let op = &operands[i];
    let d = j.dual();
    if d.split(op).is_none() {
        return op.clone();
    }
    let siblings: Vec<&Formula> = operands.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, f)| f).collect();
    let mut parts = Vec::new();
    flatten(op, d, &mut parts);
    let mut changed = false;
    let rebuilt: Vec<Formula> = parts
        .into_iter()
        .map(|part| {
            let mut inner = Vec::new();
            flatten(&part, j, &mut inner);
            let before = inner.len();
            inner.retain(|x| !siblings.contains(&x));
            if inner.len() == before {
                return part;
            }
            changed = true;
            let mut it = inner.into_iter().rev();
            match it.next() {
                None => j.unit(),
                Some(last) => it.fold(last, |acc, f| j.build(f, acc)),
            }
        })
        .collect();
    if !changed {
        return op.clone();
    }
    let mut it = rebuilt.into_iter().rev();
    let first = it.next().expect("split yields two parts");
    step(&it.fold(first, |acc, f| d.build(f, acc)))
}

/// Sound, incomplete syntactic check that every (word, position) satisfying
/// `a` also satisfies `b` under finite-trace semantics, including the empty
/// continuation past the end of the word.
pub fn implies(a: &Formula, b: &Formula) -> bool {
    if a == b || *b == Formula::True || *a == Formula::False {
        return true;
    }
    if let Formula::Or(a1, a2) = a {
        return implies(a1, b) && implies(a2, b);
    }
    if let Formula::And(b1, b2) = b {
        return implies(a, b1) && implies(a, b2);
    }
    if let Formula::And(a1, a2) = a {
        if implies(a1, b) || implies(a2, b) {
            return true;
        }
    }
    if let Formula::Or(b1, b2) = b {
        if implies(a, b1) || implies(a, b2) {
            return true;
        }
    }
    match (a, b) {
        (Formula::Not(x), Formula::Not(y)) if implies(y, x) => return true,
        (Formula::Always(x), _) if holds_on_empty(b) && implies(x, b) => return true,
        (Formula::Always(x), Formula::Always(y)) if implies(x, y) => return true,
        (Formula::Next(x), Formula::Next(y)) if implies(x, y) => return true,
        (Formula::Until(x, y), _) if implies(x, b) && implies(y, b) => return true,
        (Formula::Until(x1, y1), Formula::Until(x2, y2)) if implies(x1, x2) && implies(y1, y2) => {
            return true
        }
        _ => {}
    }
    match b {
        Formula::Eventually(y) => {
            (!holds_on_empty(a) && implies(a, y))
                || match a {
                    Formula::Eventually(x) => implies(x, b),
                    Formula::Until(_, y1) => implies(y1, b),
                    _ => false,
                }
        }
        Formula::Until(_, y) => !holds_on_empty(a) && implies(a, y),
        _ => false,
    }
}
