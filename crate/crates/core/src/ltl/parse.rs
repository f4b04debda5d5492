use std::fmt;

use super::syntax::{is_reserved, Alphabet, Formula};
use super::LtlError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    True,
    False,
    Ident(String),
    Not,
    And,
    Or,
    Next,
    Eventually,
    Always,
    Until,
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::True => f.write_str("true"),
            Token::False => f.write_str("false"),
            Token::Ident(s) => f.write_str(s),
            Token::Not => f.write_str("!"),
            Token::And => f.write_str("&"),
            Token::Or => f.write_str("|"),
            Token::Next => f.write_str("X"),
            Token::Eventually => f.write_str("F"),
            Token::Always => f.write_str("G"),
            Token::Until => f.write_str("U"),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
        }
    }
}

/// A token with the byte offset where it starts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Spanned {
    pub token: Token,
    pub offset: usize,
}

pub fn tokenize(text: &str) -> Result<Vec<Spanned>, LtlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let single = match c {
            b'!' => Some(Token::Not),
            b'&' => Some(Token::And),
            b'|' => Some(Token::Or),
            b'(' => Some(Token::LParen),
            b')' => Some(Token::RParen),
            _ => None,
        };
        if let Some(token) = single {
            out.push(Spanned { token, offset: i });
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            let token = match word {
                "true" => Token::True,
                "false" => Token::False,
                "X" => Token::Next,
                "F" => Token::Eventually,
                "G" => Token::Always,
                "U" => Token::Until,
                _ => Token::Ident(word.to_string()),
            };
            out.push(Spanned { token, offset: start });
        } else {
            return Err(LtlError::Lex { offset: i });
        }
    }
    Ok(out)
}

/// Parses the ASCII formula grammar. Precedence, tightest first: unary
/// `! X F G`, then `U` (right associative), then `&`, then `|`.
pub fn parse(text: &str, alphabet: &Alphabet) -> Result<Formula, LtlError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end: text.len(),
        alphabet,
    };
    let f = parser.or_expr()?;
    if parser.pos < tokens.len() {
        return Err(parser.error(&["&", "|", "U", "end of input"]));
    }
    Ok(f)
}

struct Parser<'a> {
    tokens: &'a [Spanned],
    pos: usize,
    end: usize,
    alphabet: &'a Alphabet,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|s| &s.token)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |s| s.offset)
    }

    fn error(&self, expected: &[&str]) -> LtlError {
        LtlError::Parse {
            position: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self
                .peek()
                .map_or_else(|| "end of input".to_string(), |t| t.to_string()),
        }
    }

    fn or_expr(&mut self) -> Result<Formula, LtlError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            let rhs = self.and_expr()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Formula, LtlError> {
        let mut lhs = self.until_expr()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            let rhs = self.until_expr()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until_expr(&mut self) -> Result<Formula, LtlError> {
        let lhs = self.unary()?;
        if self.peek() == Some(&Token::Until) {
            self.pos += 1;
            let rhs = self.until_expr()?;
            return Ok(Formula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, LtlError> {
        let ctor: fn(Formula) -> Formula = match self.peek() {
            Some(Token::Not) => Formula::not,
            Some(Token::Next) => Formula::next,
            Some(Token::Eventually) => Formula::eventually,
            Some(Token::Always) => Formula::always,
            _ => return self.atom(),
        };
        self.pos += 1;
        Ok(ctor(self.unary()?))
    }

    fn atom(&mut self) -> Result<Formula, LtlError> {
        const EXPECTED: &[&str] = &["true", "false", "proposition", "!", "X", "F", "G", "("];
        let offset = self.offset();
        let token = match self.peek() {
            Some(t) => t.clone(),
            None => return Err(self.error(EXPECTED)),
        };
        match token {
            Token::True => {
                self.pos += 1;
                Ok(Formula::True)
            }
            Token::False => {
                self.pos += 1;
                Ok(Formula::False)
            }
            Token::Ident(name) => {
                debug_assert!(!is_reserved(&name));
                let prop = self
                    .alphabet
                    .get(&name)
                    .ok_or(LtlError::UnknownProposition {
                        name: name.clone(),
                        position: offset,
                    })?;
                self.pos += 1;
                Ok(Formula::prop(prop))
            }
            Token::LParen => {
                self.pos += 1;
                let inner = self.or_expr()?;
                if self.peek() != Some(&Token::RParen) {
                    return Err(self.error(&[")", "&", "|", "U"]));
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(self.error(EXPECTED)),
        }
    }
}
