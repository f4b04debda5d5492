use std::collections::HashMap;

use super::EncoderError;
use crate::ltl::{Alphabet, Formula};

pub const PAD: usize = 0;
pub const AGG: usize = 1;

const FIXED: [&str; 11] = ["[PAD]", "[AGG]", "!", "&", "|", "X", "F", "G", "U", "true", "false"];

/// Token ids for formula serialization: the fixed tokens first, then one id
/// per proposition in alphabet order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub fn new(alphabet: &Alphabet) -> Self {
        Self::from_tokens(FIXED.iter().copied().chain(alphabet.names()).map(str::to_string).collect())
    }

    /// Rebuilds a vocabulary from its token listing (as stored in checkpoints).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Proposition tokens (everything after the fixed prefix).
    pub fn propositions(&self) -> &[String] {
        &self.tokens[FIXED.len().min(self.tokens.len())..]
    }

    /// Prefix-order serialization of `f`, preceded by `[AGG]`.
    pub fn encode(&self, f: &Formula) -> Result<Vec<usize>, EncoderError> {
        let mut out = vec![AGG];
        self.push(f, &mut out)?;
        Ok(out)
    }

    fn push(&self, f: &Formula, out: &mut Vec<usize>) -> Result<(), EncoderError> {
        let fixed = |t: &str| self.index[t];
        match f {
            Formula::True => out.push(fixed("true")),
            Formula::False => out.push(fixed("false")),
            Formula::Prop(p) => out.push(
                self.id(p.name())
                    .ok_or_else(|| EncoderError::UnknownToken(p.name().to_string()))?,
            ),
            Formula::Not(a) => {
                out.push(fixed("!"));
                self.push(a, out)?;
            }
            Formula::Next(a) => {
                out.push(fixed("X"));
                self.push(a, out)?;
            }
            Formula::Eventually(a) => {
                out.push(fixed("F"));
                self.push(a, out)?;
            }
            Formula::Always(a) => {
                out.push(fixed("G"));
                self.push(a, out)?;
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                let op = match f {
                    Formula::And(..) => "&",
                    Formula::Or(..) => "|",
                    _ => "U",
                };
                out.push(fixed(op));
                self.push(a, out)?;
                self.push(b, out)?;
            }
        }
        Ok(())
    }

    /// Right-pads every sequence with `[PAD]` to the longest length.
    pub fn pad_batch(&self, seqs: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let n = seqs.iter().map(Vec::len).max().unwrap_or(0);
        seqs.iter()
            .map(|s| {
                let mut s = s.clone();
                s.resize(n, PAD);
                s
            })
            .collect()
    }

    pub fn render(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::parse;

    fn setup() -> (Alphabet, TokenVocab) {
        let ab = Alphabet::new(["a", "b", "c", "d"]).unwrap();
        let v = TokenVocab::new(&ab);
        (ab, v)
    }

    #[test]
    fn fixed_ids() {
        let (_, v) = setup();
        assert_eq!(v.id("[PAD]"), Some(PAD));
        assert_eq!(v.id("[AGG]"), Some(AGG));
        assert_eq!(v.len(), 15);
        assert_eq!(v.propositions(), ["a", "b", "c", "d"]);
    }

    #[test]
    fn prefix_serialization() {
        let (ab, v) = setup();
        let ids = v.encode(&parse("F a", &ab).unwrap()).unwrap();
        assert_eq!(v.render(&ids), ["[AGG]", "F", "a"]);
        let ids = v.encode(&parse("!c U (a & (!d U b))", &ab).unwrap()).unwrap();
        assert_eq!(v.render(&ids), ["[AGG]", "U", "!", "c", "&", "a", "U", "!", "d", "b"]);
        let ids = v.encode(&parse("true", &ab).unwrap()).unwrap();
        assert_eq!(v.render(&ids), ["[AGG]", "true"]);
    }

    #[test]
    fn unknown_token() {
        let (_, v) = setup();
        let other = Alphabet::new(["z"]).unwrap();
        let f = parse("F z", &other).unwrap();
        assert!(matches!(v.encode(&f), Err(EncoderError::UnknownToken(t)) if t == "z"));
    }

    #[test]
    fn padding() {
        let (_, v) = setup();
        let padded = v.pad_batch(&[vec![1, 6, 11], vec![1, 11]]);
        assert_eq!(padded[1], vec![1, 11, PAD]);
    }

    #[test]
    fn tokens_round_trip() {
        let (_, v) = setup();
        let back = TokenVocab::from_tokens(v.tokens().to_vec());
        assert_eq!(back, v);
    }
}
