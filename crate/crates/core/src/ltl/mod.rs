//! Co-safe LTL over finite words: syntax, parsing, finite-trace semantics,
//! progression and the progression closure of a task.

mod closure;
mod eval;
mod parse;
mod progress;
mod simplify;
mod syntax;

pub use closure::{closure, closure_with, ClosureLimits, TaskRef, TaskSet};
pub use eval::{evaluate, satisfaction};
pub use parse::{parse, tokenize, Spanned, Token};
pub use progress::{holds_on_empty, progress, settle, Settled};
pub use simplify::{implies, is_canonical, simplify};
pub use syntax::{Alphabet, Formula, LabelSet, Prop, MAX_PROPOSITIONS};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LtlError {
    #[error("unexpected character at byte {offset}")]
    Lex { offset: usize },
    #[error("parse error at byte {position}: expected one of [{}], found {found}", expected.join(", "))]
    Parse {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown proposition `{name}` at byte {position}")]
    UnknownProposition { name: String, position: usize },
    #[error("invalid proposition name `{0}`")]
    InvalidProposition(String),
    #[error("duplicate proposition `{0}`")]
    DuplicateProposition(String),
    #[error("alphabet exceeds {0} propositions")]
    AlphabetTooLarge(usize),
    #[error("malformed label `{0}`")]
    InvalidLabel(String),
    #[error("position {position} outside word of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("task closure exceeds {0} members")]
    ClosureExplosion(usize),
    #[error("task simplifies to the constant `{0}`")]
    TerminalRoot(String),
}

/// Parses then canonicalizes.
pub fn parse_canonical(text: &str, alphabet: &Alphabet) -> Result<Formula, LtlError> {
    parse(text, alphabet).map(|f| simplify(&f))
}
