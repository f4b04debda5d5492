use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::LtlError;

/// Largest alphabet a [`LabelSet`] can represent.
pub const MAX_PROPOSITIONS: usize = 64;

/// An atomic proposition bound to its position in an [`Alphabet`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prop {
    id: u16,
    name: Arc<str>,
}

impl Prop {
    pub fn id(&self) -> usize {
        self.id as usize
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn is_reserved(s: &str) -> bool {
    matches!(s, "true" | "false" | "X" | "F" | "G" | "U")
}

/// Ordered set of proposition names. The order fixes each proposition's id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    props: Vec<Prop>,
    index: HashMap<Arc<str>, u16>,
}

impl Alphabet {
    pub fn new<I, S>(names: I) -> Result<Self, LtlError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut props = Vec::new();
        let mut index = HashMap::new();
        for name in names {
            let name = name.as_ref();
            if !is_identifier(name) || is_reserved(name) {
                return Err(LtlError::InvalidProposition(name.to_string()));
            }
            let name: Arc<str> = Arc::from(name);
            if index.contains_key(&name) {
                return Err(LtlError::DuplicateProposition(name.to_string()));
            }
            if props.len() == MAX_PROPOSITIONS {
                return Err(LtlError::AlphabetTooLarge(MAX_PROPOSITIONS));
            }
            let id = props.len() as u16;
            index.insert(name.clone(), id);
            props.push(Prop { id, name });
        }
        Ok(Self { props, index })
    }

    pub fn len(&self) -> usize {
        self.props.len()
    }

    pub fn is_empty(&self) -> bool {
        self.props.is_empty()
    }

    pub fn props(&self) -> &[Prop] {
        &self.props
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.props.iter().map(|p| p.name())
    }

    pub fn get(&self, name: &str) -> Option<&Prop> {
        self.index.get(name).map(|&id| &self.props[id as usize])
    }

    pub fn prop(&self, id: usize) -> &Prop {
        &self.props[id]
    }

    /// Label containing exactly the named propositions.
    pub fn label<I, S>(&self, names: I) -> Result<LabelSet, LtlError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut label = LabelSet::EMPTY;
        for name in names {
            let name = name.as_ref();
            let prop = self
                .get(name)
                .ok_or_else(|| LtlError::UnknownProposition {
                    name: name.to_string(),
                    position: 0,
                })?;
            label = label.with(prop.id());
        }
        Ok(label)
    }

    /// Mask with one bit per proposition of this alphabet.
    pub fn mask(&self) -> u64 {
        if self.props.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.props.len()) - 1
        }
    }

    pub fn contains_label(&self, label: LabelSet) -> bool {
        label.bits() & !self.mask() == 0
    }

    /// Every subset of the alphabet, in increasing bit order.
    pub fn all_labels(&self) -> impl Iterator<Item = LabelSet> {
        assert!(self.props.len() < 64, "label enumeration over 64 propositions");
        (0..(1u64 << self.props.len())).map(LabelSet)
    }

    /// `{a,b}` with names in alphabetical order.
    pub fn format_label(&self, label: LabelSet) -> String {
        let mut names: Vec<&str> = label.ids().map(|id| self.props[id].name()).collect();
        names.sort_unstable();
        format!("{{{}}}", names.join(","))
    }

    /// Inverse of [`Alphabet::format_label`]; whitespace around names is ignored.
    pub fn parse_label(&self, text: &str) -> Result<LabelSet, LtlError> {
        let inner = text
            .trim()
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| LtlError::InvalidLabel(text.to_string()))?;
        let names = inner.split(',').map(str::trim).filter(|s| !s.is_empty());
        self.label(names)
    }
}

/// Set of propositions true at one position of a word.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(u64);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn from_bits(bits: u64) -> Self {
        LabelSet(bits)
    }

    pub fn singleton(id: usize) -> Self {
        LabelSet(1 << id)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn with(self, id: usize) -> Self {
        LabelSet(self.0 | (1 << id))
    }

    pub fn contains(self, id: usize) -> bool {
        id < 64 && self.0 & (1 << id) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn ids(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&id| self.0 & (1 << id) != 0)
    }
}

/// Abstract syntax of an sc-LTL formula. Children are shared, so cloning is cheap.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Prop(Prop),
    Not(Arc<Formula>),
    And(Arc<Formula>, Arc<Formula>),
    Or(Arc<Formula>, Arc<Formula>),
    Next(Arc<Formula>),
    Eventually(Arc<Formula>),
    Always(Arc<Formula>),
    Until(Arc<Formula>, Arc<Formula>),
}

impl Formula {
    pub fn prop(p: &Prop) -> Formula {
        Formula::Prop(p.clone())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Arc::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Arc::new(a), Arc::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Arc::new(a), Arc::new(b))
    }

    pub fn next(f: Formula) -> Formula {
        Formula::Next(Arc::new(f))
    }

    pub fn eventually(f: Formula) -> Formula {
        Formula::Eventually(Arc::new(f))
    }

    pub fn always(f: Formula) -> Formula {
        Formula::Always(Arc::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Formula {
        Formula::Until(Arc::new(a), Arc::new(b))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Formula::True | Formula::False)
    }

    pub fn is_temporal(&self) -> bool {
        matches!(
            self,
            Formula::Next(_) | Formula::Eventually(_) | Formula::Always(_) | Formula::Until(..)
        )
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Prop(_) => 1,
            Formula::Not(a) | Formula::Next(a) | Formula::Eventually(a) | Formula::Always(a) => {
                1 + a.size()
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Prop(_) => 0,
            Formula::Not(a) | Formula::Next(a) | Formula::Eventually(a) | Formula::Always(a) => {
                1 + a.depth()
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// Count of nodes that demand a future position (X, F, U).
    pub fn eventualities(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Prop(_) => 0,
            Formula::Not(a) | Formula::Always(a) => a.eventualities(),
            Formula::Next(a) | Formula::Eventually(a) => 1 + a.eventualities(),
            Formula::And(a, b) | Formula::Or(a, b) => a.eventualities() + b.eventualities(),
            Formula::Until(a, b) => 1 + a.eventualities() + b.eventualities(),
        }
    }

    pub fn contains_next(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Prop(_) => false,
            Formula::Next(_) => true,
            Formula::Not(a) | Formula::Eventually(a) | Formula::Always(a) => a.contains_next(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                a.contains_next() || b.contains_next()
            }
        }
    }

    /// Propositions occurring in the formula, by id, without duplicates.
    pub fn props(&self) -> Vec<Prop> {
        fn walk(f: &Formula, out: &mut Vec<Prop>) {
            match f {
                Formula::True | Formula::False => {}
                Formula::Prop(p) => {
                    if !out.contains(p) {
                        out.push(p.clone());
                    }
                }
                Formula::Not(a) | Formula::Next(a) | Formula::Eventually(a) | Formula::Always(a) => {
                    walk(a, out)
                }
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort_by_key(|p| p.id());
        out
    }
}

/// Fully parenthesized, deterministic rendering. This string is the identity key
/// of a canonical formula.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Prop(p) => f.write_str(p.name()),
            Formula::Not(a) => write!(f, "(! {a})"),
            Formula::Next(a) => write!(f, "(X {a})"),
            Formula::Eventually(a) => write!(f, "(F {a})"),
            Formula::Always(a) => write!(f, "(G {a})"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Until(a, b) => write!(f, "({a} U {b})"),
        }
    }
}
