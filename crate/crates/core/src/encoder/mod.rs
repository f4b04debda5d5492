//! Transformer encoder for formula token sequences and for context windows of
//! recent transitions, with an exact reverse-mode backward pass.

mod context;
mod gradcheck;
mod model;
mod vocab;

pub use context::ContextWindow;
pub use gradcheck::{gradient_check, relative_error, CheckInput, TensorCheck, GRADCHECK_FLOOR};
pub use model::{
    attention, positional_embedding, AttentionMap, EncoderConfig, EncoderParams, Encoding, InputLayer, LayerParams,
    LN_EPS,
};
pub use vocab::{TokenVocab, AGG, PAD};

use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("token `{0}` not in vocabulary")]
    UnknownToken(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward pass needs the forward cache")]
    MissingCache,
    #[error("invalid encoder configuration: {0}")]
    Config(String),
}

/// Header of the attention dump format.
pub const ATTENTION_HEADER: &str = "layer\thead\tquery_index\tkey_token\tweight";

/// Writes one tab-separated record per (layer, head, query, key) under
/// [`ATTENTION_HEADER`]. `tokens[j]` names key position `j`.
pub fn write_attention_dump<W: Write>(out: &mut W, maps: &AttentionMap, tokens: &[String]) -> io::Result<()> {
    writeln!(out, "{ATTENTION_HEADER}")?;
    for (l, heads) in maps.layers.iter().enumerate() {
        for (h, m) in heads.iter().enumerate() {
            for q in 0..m.rows {
                for (k, w) in m.row(q).iter().enumerate() {
                    writeln!(out, "{l}\t{h}\t{q}\t{}\t{w:.17e}", tokens[k])?;
                }
            }
        }
    }
    Ok(())
}

/// One parsed line of an attention dump.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub layer: usize,
    pub head: usize,
    pub query: usize,
    pub key_token: String,
    pub weight: f64,
}

pub fn read_attention_dump<R: BufRead>(input: R) -> io::Result<Vec<AttentionRecord>> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h == ATTENTION_HEADER => {}
        _ => return Err(bad("missing attention dump header".into())),
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad(format!("line {}: expected 5 fields", n + 2)));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("line {}: {e}", n + 2)));
        out.push(AttentionRecord {
            layer: num(f[0])?,
            head: num(f[1])?,
            query: num(f[2])?,
            key_token: f[3].to_string(),
            weight: f[4].parse().map_err(|e| bad(format!("line {}: {e}", n + 2)))?,
        });
    }
    Ok(out)
}

/// Largest deviation of a row sum from 1 over all (layer, head, query) rows
/// of a parsed dump.
pub fn dump_row_sum_error(records: &[AttentionRecord]) -> f64 {
    let mut sums: std::collections::BTreeMap<(usize, usize, usize), f64> = Default::default();
    for r in records {
        *sums.entry((r.layer, r.head, r.query)).or_default() += r.weight;
    }
    sums.values().fold(0.0, |m, s| m.max((s - 1.0).abs()))
}

/// Attention received by each key position in `layer`, summed over heads
/// and over the unmasked query positions.
pub fn key_attention_totals(maps: &AttentionMap, layer: usize, mask: &[bool]) -> Vec<f64> {
    let heads = &maps.layers[layer];
    let n = mask.len();
    let mut totals = vec![0.0; n];
    for m in heads {
        for q in (0..n).filter(|&q| !mask[q]) {
            for (t, w) in totals.iter_mut().zip(m.row(q)) {
                *t += w;
            }
        }
    }
    totals
}

/// Formula encoder bundled with its vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct FormulaEncoder {
    pub vocab: TokenVocab,
    pub params: EncoderParams,
}

impl FormulaEncoder {
    pub fn encode(&self, f: &crate::ltl::Formula) -> Result<Encoding, EncoderError> {
        let ids = self.vocab.encode(f)?;
        self.params.forward_tokens(&ids)
    }

    /// Pads the sequences to a common length and encodes each; padded
    /// positions carry no attention weight.
    pub fn encode_batch(&self, seqs: &[Vec<usize>]) -> Result<Vec<Encoding>, EncoderError> {
        self.vocab
            .pad_batch(seqs)
            .iter()
            .map(|ids| self.params.forward_tokens(ids))
            .collect()
    }
}

#[cfg(test)]
mod tests;
